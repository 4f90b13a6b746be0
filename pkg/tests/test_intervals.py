import random

from forestfw import intervals


def test_normalize_merges_overlap_and_adjacency():
    assert intervals.normalize([(5, 9), (0, 3), (4, 4)]) == ((0, 9),)
    assert intervals.normalize([(0, 1), (3, 4)]) == ((0, 1), (3, 4))
    assert intervals.normalize([(7, 3)]) == ()


def test_intersect_subtract_union_against_set_oracle():
    rng = random.Random(7)
    for _ in range(300):
        a = intervals.normalize(
            (lambda lo: (lo, rng.randrange(lo, 40)))(rng.randrange(40))
            for _ in range(rng.randint(0, 3)))
        b = intervals.normalize(
            (lambda lo: (lo, rng.randrange(lo, 40)))(rng.randrange(40))
            for _ in range(rng.randint(0, 3)))
        set_a = {v for lo, hi in a for v in range(lo, hi + 1)}
        set_b = {v for lo, hi in b for v in range(lo, hi + 1)}

        def materialize(ranges):
            return {v for lo, hi in ranges for v in range(lo, hi + 1)}

        assert materialize(intervals.intersect(a, b)) == set_a & set_b
        assert materialize(intervals.union(a, b)) == set_a | set_b
        assert materialize(intervals.subtract(a, b)) == set_a - set_b
        assert intervals.is_subset(a, b) == (set_a <= set_b)


def test_contains_and_sample():
    ranges = ((2, 4), (8, 8))
    assert intervals.contains(ranges, 3)
    assert not intervals.contains(ranges, 5)
    assert intervals.sample(ranges) == 2
    assert intervals.size(ranges) == 4
