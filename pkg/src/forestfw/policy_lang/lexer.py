"""Tokenizer for the policy language.

Comments run from ``//`` to end of line.  String literals accept plain
double quotes and the typographic ````...''`` form; both are stored
normalized (unquoted).
"""

from __future__ import annotations

from dataclasses import dataclass

from forestfw.diagnostics import PolicyError

KEYWORDS = frozenset(
    {
        "import",
        "load_zone_conduit_model",
        "service",
        "service_group",
        "port_group",
        "zone_group",
        "policy_rule",
        "rule_group",
        "reporting_rule",
        "policy",
    }
)

# single- and multi-character punctuation, longest match first
_PUNCT = ("<->", "->", "{", "}", ";", ",", ":", "=", ".", "^", "\\", "-")


@dataclass(frozen=True)
class Token:
    kind: str  # "kw", "ident", "int", "string", "punct", "eof"
    value: str
    line: int
    col: int

    def __repr__(self) -> str:  # compact in parser error traces
        return f"{self.kind}:{self.value!r}@{self.line}:{self.col}"


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(text: str, file: str = "<policy>") -> list[Token]:
    """Tokenize policy source, attaching line/column to every token."""
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def advance(count: int) -> None:
        nonlocal i, line, col
        for _ in range(count):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                advance(1)
            continue
        if ch == '"' or text.startswith("``", i):
            start_line, start_col = line, col
            closer = '"' if ch == '"' else "''"
            advance(1 if ch == '"' else 2)
            buf = []
            while i < n and not text.startswith(closer, i):
                if text[i] == "\n":
                    raise PolicyError("unterminated string", file, start_line, start_col)
                buf.append(text[i])
                advance(1)
            if i >= n:
                raise PolicyError("unterminated string", file, start_line, start_col)
            advance(len(closer))
            tokens.append(Token("string", "".join(buf), start_line, start_col))
            continue
        if ch.isdigit():
            start_line, start_col = line, col
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], start_line, start_col))
            advance(j - i)
            continue
        if _is_ident_start(ch):
            start_line, start_col = line, col
            j = i
            while j < n and _is_ident_char(text[j]):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, start_line, start_col))
            advance(j - i)
            continue
        for punct in _PUNCT:
            if text.startswith(punct, i):
                tokens.append(Token("punct", punct, line, col))
                advance(len(punct))
                break
        else:
            raise PolicyError(f"unexpected character {ch!r}", file, line, col)

    tokens.append(Token("eof", "", line, col))
    return tokens
