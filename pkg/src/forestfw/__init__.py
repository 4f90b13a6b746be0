"""forestfw: a firewall policy compiler and verifier.

The package turns a topology-independent security policy (``.policyml``)
into per-firewall packet-filter configurations, formally checking the
policy on the way down: rule-overlap counterexamples, canonical
equivalence/inclusion against best-practice bounds, and an in-process
packet simulator that vets the compiled result.
"""

__version__ = "0.1.0"
