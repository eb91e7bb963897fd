import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itocomplete.hpartition import (
    STRONG,
    WEAK,
    block_a,
    block_b,
    build_partition,
    epsilon_rank,
    periodic_distance,
    rank_survey,
)


def coverage(part):
    cover = np.zeros((part.n, part.n), dtype=int)
    for b in part.blocks:
        cover[b.rows, b.cols] += 1
    return cover


def test_weak_n16_example():
    part = build_partition(16, WEAK, 4)
    diag = part.diagonal_blocks
    assert len(diag) == 4 and all(b.row_len == 4 and b.row_start == b.col_start for b in diag)
    adm = part.admissible_blocks
    assert sorted({b.row_len for b in adm}) == [4, 8]
    for level in (1, 2):
        side = 16 // 2**level
        assert sum(b.level == level and b.row_len == side for b in adm) == 2**level


def test_degenerate_single_block():
    part = build_partition(8, WEAK, 8)
    assert len(part.blocks) == 1 and not part.blocks[0].admissible
    assert part.admissible_blocks == []


def test_strong_wraparound_is_diagonal():
    part = build_partition(32, STRONG, 8)
    assert part.find(0, 24).tag == "diagonal"
    assert periodic_distance(0, 8, 24, 8, 32) <= 1


def test_periodic_distance():
    assert periodic_distance(0, 4, 0, 4, 16) == 0
    assert periodic_distance(0, 4, 2, 4, 16) == 0
    assert periodic_distance(0, 4, 8, 4, 16) == 5
    assert periodic_distance(0, 4, 12, 4, 16) == 1
    assert periodic_distance(12, 4, 0, 4, 16) == 1


def test_rejects_incompatible_sizes():
    for n, mb in [(24, 8), (12, 8), (16, 1)]:
        with pytest.raises(ValueError):
            build_partition(n, STRONG, mb)
    with pytest.raises(ValueError):
        build_partition(16, "other", 4)


@given(st.sampled_from([16, 32, 64]), st.sampled_from([WEAK, STRONG]), st.sampled_from([2, 4, 8]))
def test_tiling_exact(n, mode, mb):
    part = build_partition(n, mode, mb)
    assert sum(b.area for b in part.blocks) == n * n
    assert (coverage(part) == 1).all()
    assert min(b.row_len for b in part.diagonal_blocks) >= mb


@given(st.sampled_from([32, 64, 128]), st.sampled_from([4, 8]))
def test_strong_tags_follow_distance(n, mb):
    for b in build_partition(n, STRONG, mb).blocks:
        far = periodic_distance(b.row_start, b.row_len, b.col_start, b.col_len, n) >= b.row_len
        assert far == b.admissible


@given(st.sampled_from([32, 64, 128]), st.sampled_from([4, 8]))
def test_strong_rotation_invariance(n, mb):
    part = build_partition(n, STRONG, mb)
    side = np.zeros((n, n), dtype=int)
    for b in part.blocks:
        side[b.rows, b.cols] = b.row_len if b.admissible else -b.row_len
    s = n // 4
    assert np.array_equal(np.roll(side, (s, s), axis=(0, 1)), side)


def test_named_blocks_are_leaves():
    for n in (64, 256):
        part = build_partition(n, STRONG, 8)
        for blk in (block_a(n), block_b(n)):
            leaf = part.find(blk.row_start, blk.col_start, blk.row_len)
            assert leaf.admissible and leaf.col_len == blk.col_len


def test_epsilon_rank_examples():
    assert epsilon_rank(np.zeros((7, 5))) == 0
    assert epsilon_rank(np.eye(10)) == 10
    assert epsilon_rank(np.diag([1.0, 1e-5, 1e-7])) == 2
    with pytest.raises(ValueError):
        epsilon_rank(np.array([[np.inf]]))


@given(st.integers(0, 10**6), st.floats(1e-12, 1.0), st.floats(1e-12, 1.0))
def test_epsilon_rank_antitone(seed, e1, e2):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((12, 9)) * np.logspace(0, -10, 9)
    lo, hi = min(e1, e2), max(e1, e2)
    assert epsilon_rank(m, lo) >= epsilon_rank(m, hi)


@pytest.mark.parametrize("mode", [WEAK, STRONG])
def test_identity_survey(mode):
    part = build_partition(64, mode, 8)
    rep = rank_survey(np.eye(64), part)
    for b, r in zip(part.blocks, rep.ranks):
        on_diagonal = b.row_start == b.col_start
        assert r == (b.row_len if on_diagonal else 0)
    assert rep.max_admissible_rank == 0


def test_partition_csv():
    part = build_partition(16, WEAK, 4)
    lines = part.to_csv().splitlines()
    assert lines[0] == "level,row_start,row_len,col_start,col_len,tag"
    assert len(lines) == 1 + len(part.blocks)
    rep = rank_survey(np.eye(16), part)
    assert rep.to_csv().splitlines()[0].endswith(",eps_rank")
