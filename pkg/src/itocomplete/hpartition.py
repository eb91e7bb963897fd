"""Dyadic block partitions of cyclically indexed ItO matrices and block rank diagnostics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

WEAK = "weak"
STRONG = "strong-periodic"


@dataclass(frozen=True)
class Block:
    """Leaf of the partition tree; row/col ranges are half-open ``(start, length)`` intervals."""

    row_start: int
    row_len: int
    col_start: int
    col_len: int
    tag: str  # "diagonal" | "admissible"
    level: int

    @property
    def rows(self) -> slice:
        return slice(self.row_start, self.row_start + self.row_len)

    @property
    def cols(self) -> slice:
        return slice(self.col_start, self.col_start + self.col_len)

    @property
    def area(self) -> int:
        return self.row_len * self.col_len

    @property
    def admissible(self) -> bool:
        return self.tag == "admissible"

    def take(self, m: np.ndarray) -> np.ndarray:
        return np.asarray(m)[self.rows, self.cols]


@dataclass(frozen=True)
class BlockPartition:
    n: int
    admissibility: str
    min_block: int
    blocks: tuple[Block, ...]

    @property
    def levels(self) -> int:
        return max(b.level for b in self.blocks)

    @property
    def diagonal_blocks(self) -> list[Block]:
        return [b for b in self.blocks if not b.admissible]

    @property
    def admissible_blocks(self) -> list[Block]:
        return [b for b in self.blocks if b.admissible]

    def find(self, row_start: int, col_start: int, size: int | None = None) -> Block:
        """Leaf whose top-left corner is ``(row_start, col_start)``."""
        for b in self.blocks:
            if b.row_start == row_start and b.col_start == col_start and (size is None or b.row_len == size):
                return b
        raise KeyError(f"no leaf block at ({row_start}, {col_start})")

    def to_csv(self, ranks: list[int] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["level", "row_start", "row_len", "col_start", "col_len", "tag"]
        w.writerow(header + (["eps_rank"] if ranks is not None else []))
        for k, b in enumerate(self.blocks):
            row = [b.level, b.row_start, b.row_len, b.col_start, b.col_len, b.tag]
            w.writerow(row + ([ranks[k]] if ranks is not None else []))
        return buf.getvalue()


def periodic_distance(r0: int, rlen: int, c0: int, clen: int, n: int) -> int:
    """Smallest cyclic index distance between two intervals (0 if they overlap)."""
    # forward gap from the end of one interval to the start of the other, both ways round
    d1 = (c0 - (r0 + rlen - 1)) % n
    d2 = (r0 - (c0 + clen - 1)) % n
    if (c0 - r0) % n < rlen or (r0 - c0) % n < clen:
        return 0
    return min(d1, d2)


def build_partition(n: int, admissibility: str = STRONG, min_block: int = 8) -> BlockPartition:
    """Quadtree partition of the n x n index square.

    ``weak`` gives the HODLR tiling: both off-diagonal quadrants of every diagonal block are
    admissible. ``strong-periodic`` marks a block admissible once its periodic distance is at
    least its side; otherwise it is refined until the side reaches ``min_block``.
    """
    if min_block < 2:
        raise ValueError("min_block must be at least 2")
    if admissibility not in (WEAK, STRONG):
        raise ValueError(f"unknown admissibility {admissibility!r}")
    q, r = divmod(n, min_block)
    if r or q < 1 or q & (q - 1):
        raise ValueError(f"n={n} is not a power-of-two multiple of min_block={min_block}")

    blocks: list[Block] = []

    def visit(r0: int, c0: int, size: int, level: int):
        if admissibility == WEAK:
            admissible = r0 != c0
        else:
            admissible = periodic_distance(r0, size, c0, size, n) >= size
        if admissible:
            blocks.append(Block(r0, size, c0, size, "admissible", level))
        elif size <= min_block:
            blocks.append(Block(r0, size, c0, size, "diagonal", level))
        else:
            h = size // 2
            for dr in (0, h):
                for dc in (0, h):
                    visit(r0 + dr, c0 + dc, h, level + 1)

    visit(0, 0, n, 0)
    blocks.sort(key=lambda b: (b.row_start, b.col_start))
    return BlockPartition(n, admissibility, min_block, tuple(blocks))


def epsilon_rank(m: np.ndarray, eps: float = 1e-6) -> int:
    """Number of singular values strictly above the absolute threshold ``eps``."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return int(np.sum(np.linalg.svd(m, compute_uv=False) > eps))


@dataclass(frozen=True)
class RankReport:
    partition: BlockPartition
    ranks: tuple[int, ...]
    eps: float

    @property
    def max_admissible_rank(self) -> int:
        return max((r for r, b in zip(self.ranks, self.partition.blocks) if b.admissible), default=0)

    def to_csv(self) -> str:
        return self.partition.to_csv(list(self.ranks))


def rank_survey(m, partition: BlockPartition, eps: float = 1e-6) -> RankReport:
    m = np.asarray(m)
    if m.shape != (partition.n, partition.n):
        raise ValueError(f"matrix shape {m.shape} does not match partition size {partition.n}")
    ranks = tuple(epsilon_rank(b.take(m), eps) for b in partition.blocks)
    return RankReport(partition, ranks, eps)


def block_a(n: int) -> Block:
    """Opposite-side block: first boundary edge against the third (side n/4)."""
    q = n // 4
    return Block(0, q, 2 * q, q, "admissible", 2)


def block_b(n: int) -> Block:
    """Half-edge block one half-edge away from the diagonal (side n/8)."""
    q = n // 4
    return Block(0, q // 2, q, q // 2, "admissible", 3)
