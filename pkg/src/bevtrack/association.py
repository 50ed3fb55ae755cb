"""Appearance similarity and gated optimal assignment.

Each object carries three appearance embeddings (image ROI, BEV, detection
head). Pairwise similarity is the weighted sum of the three cosine
similarities; the negated similarity matrix feeds a minimum-cost bipartite
assignment with a similarity gate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

# Entries above any reachable cost; used to steer the solver away from
# gated-out pairs, which are dropped from its output afterwards.
_INFEASIBLE_COST = 1e6
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class AppearanceState:
    """Image / BEV / head embeddings of one object, equal dims, finite."""

    e_img: np.ndarray
    e_bev: np.ndarray
    e_head: np.ndarray

    def __post_init__(self):
        for name in ("e_img", "e_bev", "e_head"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=np.float64))
        if not (self.e_img.shape == self.e_bev.shape == self.e_head.shape):
            raise ValueError("appearance embeddings must share one dimension")
        if self.e_img.ndim != 1:
            raise ValueError("appearance embeddings must be 1-D vectors")
        for name in ("e_img", "e_bev", "e_head"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains NaN/Inf")

    def blend(self, other: "AppearanceState", alpha: float) -> "AppearanceState":
        """Exponential smoothing: alpha*self + (1-alpha)*other, per clue."""
        return AppearanceState(
            e_img=alpha * self.e_img + (1.0 - alpha) * other.e_img,
            e_bev=alpha * self.e_bev + (1.0 - alpha) * other.e_bev,
            e_head=alpha * self.e_head + (1.0 - alpha) * other.e_head,
        )


@dataclass(frozen=True)
class ClueWeights:
    w_img: float = 1.0 / 3.0
    w_bev: float = 1.0 / 3.0
    w_head: float = 1.0 / 3.0

    def __post_init__(self):
        if min(self.w_img, self.w_bev, self.w_head) < 0:
            raise ValueError("clue weights must be non-negative")
        if self.w_img + self.w_bev + self.w_head <= 0:
            raise ValueError("clue weights must not all be zero")


@dataclass(frozen=True)
class CostMatrix:
    """values: N x M assignment costs (rows = detections, cols = tracklets);
    gate_mask: True where the pair is admissible."""

    values: np.ndarray
    gate_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "gate_mask", np.asarray(self.gate_mask, dtype=bool))
        if self.values.shape != self.gate_mask.shape or self.values.ndim != 2:
            raise ValueError("values and gate_mask must be equal 2-D shapes")


def normalized_inner_product(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero-norm inputs yield 0 instead of NaN."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < _NORM_EPS or nv < _NORM_EPS:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def multi_clue_similarity(d: AppearanceState, t: AppearanceState,
                          w: ClueWeights) -> float:
    """Weighted sum of the three per-clue cosine similarities."""
    return (w.w_img * normalized_inner_product(d.e_img, t.e_img)
            + w.w_bev * normalized_inner_product(d.e_bev, t.e_bev)
            + w.w_head * normalized_inner_product(d.e_head, t.e_head))


def _unit_rows(vectors: Sequence[np.ndarray]) -> np.ndarray:
    mat = np.array([np.asarray(v, dtype=np.float64) for v in vectors])
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    safe = np.where(norms < _NORM_EPS, 1.0, norms)
    unit = mat / safe
    unit[norms[:, 0] < _NORM_EPS] = 0.0
    return unit


def build_similarity_matrix(dets: Sequence[AppearanceState],
                            trks: Sequence[AppearanceState],
                            w: ClueWeights, sim_gate: float) -> CostMatrix:
    """Negated multi-clue similarity with a >= sim_gate admissibility mask."""
    n, m = len(dets), len(trks)
    if n == 0 or m == 0:
        return CostMatrix(np.zeros((n, m)), np.zeros((n, m), dtype=bool))
    sim = np.zeros((n, m))
    for weight, clue in ((w.w_img, "e_img"), (w.w_bev, "e_bev"),
                         (w.w_head, "e_head")):
        if weight == 0:
            continue
        du = _unit_rows([getattr(d, clue) for d in dets])
        tu = _unit_rows([getattr(t, clue) for t in trks])
        sim += weight * (du @ tu.T)
    return CostMatrix(values=-sim, gate_mask=sim >= sim_gate)


def solve_assignment(c: CostMatrix) -> list[tuple[int, int]]:
    """Minimum-cost bipartite matching restricted to admissible pairs.

    Gated-out pairs carry a cost far above any admissible one, so the
    solver uses as many admissible pairs as possible and minimizes their
    total cost; forced inadmissible pairings are dropped from the result.
    Pairs are returned sorted by detection index.
    """
    values, gate = c.values, c.gate_mask
    if values.size == 0 or not gate.any():
        return []
    padded = np.where(gate, values, _INFEASIBLE_COST)
    rows, cols = linear_sum_assignment(padded)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if gate[i, j]]
    pairs.sort()
    return pairs
