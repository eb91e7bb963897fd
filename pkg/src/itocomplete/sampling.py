"""Observation masks that fully sample diagonal blocks and subsample admissible ones."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hpartition import Block, BlockPartition

BERNOULLI = "bernoulli"
UNIFORM_M = "uniform-m"
THEOREM = "theorem-budget"


@dataclass(frozen=True)
class BudgetRule:
    """How admissible blocks are subsampled.

    ``p_levels`` overrides ``p`` per tree level in Bernoulli mode, which is how the
    near-diagonal-dense masks are built. ``beta`` only enters the failure-probability
    diagnostic.
    """

    mode: str = BERNOULLI
    p: float = 0.1
    m: int = 0
    rank: int = 5
    C: float = 1.0
    beta: float = 2.1
    p_levels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (BERNOULLI, UNIFORM_M, THEOREM):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        for p in [self.p, *self.p_levels.values()]:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if self.rank < 1 or self.C <= 0 or self.beta <= 2 or self.m < 0:
            raise ValueError("need rank >= 1, C > 0, beta > 2, m >= 0")

    def probability(self, level: int) -> float:
        return float(self.p_levels.get(level, self.p))

    def to_dict(self) -> dict:
        d = dict(mode=self.mode, p=self.p, m=self.m, rank=self.rank, C=self.C, beta=self.beta)
        d["p_levels"] = {str(k): v for k, v in sorted(self.p_levels.items())}
        return d


def theorem_budget(side: int, rank: int = 5, C: float = 1.0) -> int:
    """ceil(C r n^{6/5} log n) samples for an n x n block (natural log)."""
    return int(math.ceil(C * rank * side**1.2 * math.log(side)))


@dataclass
class SamplingMask:
    """Boolean observation pattern plus per-block bookkeeping."""

    observed: np.ndarray
    partition: BlockPartition
    rule: BudgetRule | None = None
    seed: int | None = None
    clamped: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.observed.shape[0]

    @property
    def size(self) -> int:
        return int(self.observed.sum())

    @property
    def per_block(self) -> list[int]:
        return [int(b.take(self.observed).sum()) for b in self.partition.blocks]

    def pairs(self) -> np.ndarray:
        """Sorted (i, j) index pairs of observed entries."""
        return np.argwhere(self.observed)

    def validate(self):
        """Raise if a diagonal block is not fully observed."""
        for k, b in enumerate(self.partition.blocks):
            if not b.admissible and not b.take(self.observed).all():
                raise ValueError(
                    f"diagonal block {k} (rows {b.row_start}+{b.row_len}, cols {b.col_start}+{b.col_len}) "
                    "is not fully sampled"
                )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j"])
        w.writerows(self.pairs().tolist())
        return buf.getvalue()

    def sidecar(self) -> str:
        return json.dumps(
            dict(
                n=self.n,
                admissibility=self.partition.admissibility,
                min_block=self.partition.min_block,
                rule=self.rule.to_dict() if self.rule else None,
                seed=self.seed,
                per_block=self.per_block,
                clamped_blocks=list(self.clamped),
            ),
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_csv(cls, text: str, partition: BlockPartition) -> "SamplingMask":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        obs = np.zeros((partition.n, partition.n), dtype=bool)
        if rows:
            ij = np.array(rows, dtype=int)
            obs[ij[:, 0], ij[:, 1]] = True
        return cls(obs, partition)


def block_streams(partition: BlockPartition, seed: int) -> list[np.random.Generator]:
    """One independent generator per block, fixed by (seed, block index)."""
    children = np.random.SeedSequence(seed).spawn(len(partition.blocks))
    return [np.random.default_rng(s) for s in children]


def sample_block(block: Block, rule: BudgetRule, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Observation pattern of one admissible block and whether the budget was clamped."""
    shape = (block.row_len, block.col_len)
    if rule.mode == BERNOULLI:
        # one uniform per entry, so masks for growing p are nested under a fixed seed
        return rng.random(shape) < rule.probability(block.level), False
    m = rule.m if rule.mode == UNIFORM_M else theorem_budget(block.row_len, rule.rank, rule.C)
    clamped = m > block.area
    m = min(m, block.area)
    out = np.zeros(block.area, dtype=bool)
    out[rng.choice(block.area, size=m, replace=False)] = True
    return out.reshape(shape), clamped


def build_mask(partition: BlockPartition, rule: BudgetRule, seed: int) -> SamplingMask:
    """Full diagonal blocks plus rule-driven samples in each admissible block; deterministic in ``seed``."""
    obs = np.zeros((partition.n, partition.n), dtype=bool)
    clamped = []
    for k, (b, rng) in enumerate(zip(partition.blocks, block_streams(partition, seed))):
        if not b.admissible:
            obs[b.rows, b.cols] = True
            continue
        sub, hit = sample_block(b, rule, rng)
        obs[b.rows, b.cols] = sub
        if hit:
            clamped.append(k)
    if clamped:
        warnings.warn(f"{len(clamped)} block budgets exceed the block area; those blocks are fully sampled")
    return SamplingMask(obs, partition, rule, seed, tuple(clamped))


def mask_density(mask: SamplingMask, partition: BlockPartition | None = None) -> tuple[list[float], float]:
    """Per-block fill ratios and the global ratio |Omega| / n^2."""
    partition = partition or mask.partition
    if mask.n != partition.n:
        raise ValueError("mask and partition sizes differ")
    per = [float(b.take(mask.observed).mean()) for b in partition.blocks]
    return per, mask.size / mask.n**2


def density_by_level(mask: SamplingMask) -> dict[int, float]:
    """Fill ratio of admissible blocks aggregated per tree level."""
    seen: dict[int, list[int]] = {}
    for b in mask.partition.admissible_blocks:
        s = seen.setdefault(b.level, [0, 0])
        s[0] += int(b.take(mask.observed).sum())
        s[1] += b.area
    return {lvl: s[0] / s[1] for lvl, s in sorted(seen.items())}


def budget_accounting(partition: BlockPartition, rank: int = 5, C: float = 1.0) -> dict:
    """Total theorem-budget samples against the r n^{6/5} log n scale of the whole matrix."""
    diag = sum(b.area for b in partition.diagonal_blocks)
    off = sum(min(theorem_budget(b.row_len, rank, C), b.area) for b in partition.admissible_blocks)
    n = partition.n
    scale = rank * n**1.2 * math.log(n)
    return dict(n=n, diagonal=diag, admissible=off, total=diag + off, scale=scale, ratio=(diag + off) / scale)


def failure_probability_bound(partition: BlockPartition, beta: float = 2.1, c: float = 1.0) -> float:
    """c * sum_i n_i^{-beta} over admissible blocks (c is an unknown absolute constant)."""
    return c * sum(b.row_len ** (-beta) for b in partition.admissible_blocks)


def fig8_rule(partition: BlockPartition, p_far: float = 0.1, growth: float = 1.5, p_max: float = 0.6) -> BudgetRule:
    """Bernoulli rule whose probability grows toward the diagonal (deeper tree levels)."""
    levels = sorted({b.level for b in partition.admissible_blocks})
    top = levels[0] if levels else 0
    return BudgetRule(mode=BERNOULLI, p=p_far, p_levels={l: min(p_max, p_far * growth ** (l - top)) for l in levels})
