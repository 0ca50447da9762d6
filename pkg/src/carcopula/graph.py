"""Areal adjacency graphs and the Moran's I spatial-autocorrelation test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class ArealGraph:
    """Undirected region adjacency: binary weight matrix W and degree vector.

    Regions are numbered 1..n externally; array indices are 0-based.
    ``edges`` holds the deduplicated 1-based pairs (i < j).
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    W: np.ndarray
    degrees: np.ndarray

    @property
    def M(self) -> np.ndarray:
        """Diagonal matrix of neighbor counts."""
        return np.diag(self.degrees.astype(float))

    @property
    def n_edges(self) -> int:
        return len(self.edges)


class MoranResult(NamedTuple):
    I: float
    z_score: float
    p_value: float


def load_adjacency(source: Iterable[Sequence[int]], n: int) -> ArealGraph:
    """Build an ArealGraph from 1-based undirected edge records.

    Applies symmetric closure, drops duplicate edges, and rejects
    self-loops, out-of-range indices, isolated regions, and disconnected
    graphs (connectivity is required for the rank n-1 intrinsic limit).
    """
    if n < 2:
        raise ValueError(f"need at least 2 regions, got n={n}")
    pairs = set()
    for rec in source:
        i, j = int(rec[0]), int(rec[1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValueError(f"edge ({i},{j}) has index outside [1,{n}]")
        if i == j:
            raise ValueError(f"self-loop at region {i}")
        pairs.add((min(i, j), max(i, j)))
    if not pairs:
        raise ValueError("empty edge set")

    W = np.zeros((n, n))
    for i, j in pairs:
        W[i - 1, j - 1] = 1.0
        W[j - 1, i - 1] = 1.0
    degrees = W.sum(axis=1).astype(np.int64)
    if (degrees == 0).any():
        isolated = [int(k) + 1 for k in np.nonzero(degrees == 0)[0]]
        raise ValueError(f"regions without any neighbor: {isolated}")

    # BFS connectivity check
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        k = stack.pop()
        for j in np.nonzero(W[k])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    if not seen.all():
        missing = [int(k) + 1 for k in np.nonzero(~seen)[0]]
        raise ValueError(f"adjacency graph is disconnected; unreachable regions: {missing}")

    return ArealGraph(n=n, edges=tuple(sorted(pairs)), W=W, degrees=degrees)


def moran_i(values: np.ndarray, graph: ArealGraph) -> MoranResult:
    """Global Moran's I with a two-sided normal-approximation p-value.

    The z-score uses E(I) = -1/(N-1) and the closed-form Var(I) under the
    normality assumption for the observations.
    """
    x = np.asarray(values, dtype=float)
    if x.shape != (graph.n,):
        raise ValueError(f"values must have length {graph.n}, got shape {x.shape}")
    z = x - x.mean()
    den = float(z @ z)
    if den <= 0.0 or not np.isfinite(den):
        raise ValueError("Moran's I undefined for constant (zero-variance) input")

    W = graph.W
    n = graph.n
    s0 = float(W.sum())
    num = float(z @ W @ z)
    i_stat = (n / s0) * num / den

    # Normality-assumption moments: S1 = 2*S0 for symmetric binary weights,
    # S2 = sum_i (2 m_i)^2.
    s1 = 2.0 * float((W * W).sum())
    s2 = float(((W.sum(axis=0) + W.sum(axis=1)) ** 2).sum())
    e_i = -1.0 / (n - 1)
    e_i2 = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / (s0 * s0 * (n * n - 1.0))
    var_i = e_i2 - e_i * e_i
    z_score = (i_stat - e_i) / math.sqrt(var_i)
    p_value = math.erfc(abs(z_score) / math.sqrt(2.0))
    return MoranResult(I=i_stat, z_score=z_score, p_value=p_value)


class AverageMoranResult(NamedTuple):
    mean_I: float
    z_score: float
    p_value: float
    per_year: tuple[MoranResult, ...]


def moran_i_by_year(values: np.ndarray, graph: ArealGraph) -> AverageMoranResult:
    """Per-year Moran's I for an n-by-T panel plus a pooled test.

    Years are treated as independent, so the pooled z-score is the Stouffer
    combination sum(z_t)/sqrt(T).
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2 or vals.shape[0] != graph.n:
        raise ValueError(f"expected an ({graph.n}, T) matrix, got shape {vals.shape}")
    results = tuple(moran_i(vals[:, t], graph) for t in range(vals.shape[1]))
    zs = np.array([r.z_score for r in results])
    z_comb = float(zs.sum() / math.sqrt(len(results)))
    p_comb = math.erfc(abs(z_comb) / math.sqrt(2.0))
    mean_i = float(np.mean([r.I for r in results]))
    return AverageMoranResult(mean_I=mean_i, z_score=z_comb, p_value=p_comb, per_year=results)
