"""Gradient permutations applied before transmission and exactly inverted at
the base station.

Because phase noise accumulates over a coherence block, late symbols are
noisier than early ones; permuting the gradient changes which coordinates
ride the clean early symbols.  Four kinds are provided:

  identity  original order (input layers first).
  flip      reversed order, so final-layer coordinates go first.
  roll      pair-aligned circular shift that advances every round, so each
            coordinate cycles through every symbol position over D/2 rounds.
  sort      coordinates ordered by descending average absolute value, so the
            largest-magnitude entries are sent earliest.

All maps are bijections on {0..D-1}; inverse(plan, apply(plan, g)) == g
exactly for any vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

IDENTITY = "identity"
FLIP = "flip"
ROLL = "roll"
SORT = "sort"
KINDS = (IDENTITY, FLIP, ROLL, SORT)


@dataclass(frozen=True)
class PermutationPlan:
    """Immutable per-round permutation state.

    kind: one of KINDS.
    dim: vector length D (even).
    round_index: round counter used by roll.
    sorted_indices: for sort, position d carries coordinate sorted_indices[d].
    """

    kind: str
    dim: int
    round_index: int = 0
    sorted_indices: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown permutation kind {self.kind!r}")
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError("dim must be a positive even integer")
        if self.kind == SORT:
            idx = self.sorted_indices
            if idx is None or sorted(idx.tolist()) != list(range(self.dim)):
                raise ValueError("sort plan needs a full index permutation")


def roll_offset(n: int, dim: int) -> int:
    """Pair-aligned roll length for round n: r = 2*(n mod D/2).

    Shifting by an even amount keeps (real, imag) pair boundaries intact,
    and the offset revisits every value exactly once per D/2 rounds.
    """
    if n < 0:
        raise ValueError("round index must be >= 0")
    return 2 * (n % (dim // 2))


def advance_round(plan: PermutationPlan) -> PermutationPlan:
    return replace(plan, round_index=plan.round_index + 1)


def make_sort_plan(abs_gradients: np.ndarray, round_index: int = 0) -> PermutationPlan:
    """Build the sort permutation from per-device absolute gradients (K, D).

    Averages the magnitudes over devices and sorts descending; ties keep the
    original coordinate order so the plan is deterministic.
    """
    abs_gradients = np.atleast_2d(np.asarray(abs_gradients, dtype=float))
    if np.any(abs_gradients < 0):
        raise ValueError("expected absolute gradient values")
    mean_abs = abs_gradients.mean(axis=0)
    indices = np.argsort(-mean_abs, kind="stable")
    return PermutationPlan(kind=SORT, dim=mean_abs.shape[0],
                           round_index=round_index, sorted_indices=indices)


def apply(plan: PermutationPlan, g: np.ndarray) -> np.ndarray:
    """Permute along the last axis: position d of the output carries the
    plan's source coordinate. Pure; the round counter is advanced separately."""
    g = np.asarray(g)
    if g.shape[-1] != plan.dim:
        raise ValueError(f"vector length {g.shape[-1]} != plan dim {plan.dim}")
    if plan.kind == IDENTITY:
        return g.copy()
    if plan.kind == FLIP:
        return g[..., ::-1].copy()
    if plan.kind == ROLL:
        return np.roll(g, -roll_offset(plan.round_index, plan.dim), axis=-1)
    return g[..., plan.sorted_indices]


def inverse(plan: PermutationPlan, g_hat: np.ndarray) -> np.ndarray:
    """Undo apply() with the same plan state: inverse(apply(g)) == g exactly."""
    g_hat = np.asarray(g_hat)
    if g_hat.shape[-1] != plan.dim:
        raise ValueError(f"vector length {g_hat.shape[-1]} != plan dim {plan.dim}")
    if plan.kind == IDENTITY:
        return g_hat.copy()
    if plan.kind == FLIP:
        return g_hat[..., ::-1].copy()
    if plan.kind == ROLL:
        return np.roll(g_hat, roll_offset(plan.round_index, plan.dim), axis=-1)
    out = np.empty_like(g_hat)
    out[..., plan.sorted_indices] = g_hat
    return out
