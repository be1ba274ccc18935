"""Principal-component factor extraction and factor-number selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .panel import Panel

CRITERIA = ("IC1", "IC2", "IC3")
DEFAULT_SUBSAMPLE_GRID = (0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_SUBSAMPLE_REPS = 30


@dataclass(frozen=True)
class FactorEstimate:
    """Estimated pseudo factors.

    Attributes
    ----------
    ghat : ndarray, shape (T, r)
        Row t is the estimated factor at time t, normalised so that
        ``ghat.T @ ghat / T`` is the identity.
    phi : ndarray, shape (r,)
        Leading eigenvalues of the T x T matrix ``X.T @ X / (N T)``.
    loadings : ndarray, shape (N, r)
        ``X @ ghat / T``.
    """

    ghat: np.ndarray
    phi: np.ndarray
    loadings: np.ndarray

    @property
    def r(self) -> int:
        return self.ghat.shape[1]

    @property
    def T(self) -> int:
        return self.ghat.shape[0]


@dataclass
class FactorCountReport:
    r_hat: int
    per_criterion: dict
    ic_curves: dict = field(default_factory=dict)
    eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0))
    votes: dict = field(default_factory=dict)
    method: str = "bai-ng"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "r_hat": int(self.r_hat),
            "per_criterion": {k: int(v) for k, v in self.per_criterion.items()},
            "ic_curves": {k: [float(x) for x in v] for k, v in self.ic_curves.items()},
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "votes": {k: {str(r): float(w) for r, w in v.items()} for k, v in self.votes.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _values(panel) -> np.ndarray:
    return panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)


def _fix_signs(W: np.ndarray) -> np.ndarray:
    # largest-|.| entry of each column made positive; magnitudes within 1e-10
    # (relative) of the maximum count as tied and the first of them decides
    A = np.abs(W)
    idx = np.argmax(A >= A.max(axis=0) * (1 - 1e-10), axis=0)
    signs = np.sign(W[idx, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs


def estimate_factors(panel, r: int) -> FactorEstimate:
    """Estimate ``r`` pseudo factors by principal components.

    Uses the thin SVD ``X = U S W^T`` of the N x T data matrix, so the factors
    are ``sqrt(T) * W[:, :r]`` and the eigenvalues ``S**2 / (N T)``.
    """
    X = _values(panel)
    n, t = X.shape
    if not 1 <= r <= min(n, t):
        raise ValidationError(f"r={r} outside 1..min(N, T)={min(n, t)}")
    _, s, wt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0:
        raise NumericalError("panel is identically zero; no factors to extract")
    if s[r - 1] <= s[0] * max(n, t) * np.finfo(float).eps:
        raise NumericalError(f"panel has numerical rank below r={r}")
    W = _fix_signs(wt[:r].T)
    ghat = np.sqrt(t) * W
    phi = s[:r] ** 2 / (n * t)
    loadings = X @ ghat / t
    return FactorEstimate(ghat=ghat, phi=phi, loadings=loadings)


def _spectrum(X: np.ndarray) -> np.ndarray:
    """Eigenvalues of X^T X / (N T), descending, with numerical zeros set to 0."""
    n, t = X.shape
    s = np.linalg.svd(X, compute_uv=False)
    s[s <= s[0] * max(n, t) * np.finfo(float).eps] = 0.0
    return s**2 / (n * t)


def _bai_ng_penalties(n: int, t: int) -> dict:
    nt, npt = n * t, n + t
    c2 = min(n, t)
    return {
        "IC1": (npt / nt) * np.log(nt / npt),
        "IC2": (npt / nt) * np.log(c2),
        "IC3": np.log(c2) / c2,
    }


def _bai_ng_from_spectrum(eig: np.ndarray, n: int, t: int, r_max: int):
    # V(r) = sum of discarded eigenvalues: the PCA residual sum of squares over N T
    tail = np.concatenate([np.cumsum(eig[::-1])[::-1], [0.0]])
    V = tail[: r_max + 1]
    if V[0] <= 0.0:
        raise NumericalError("panel is identically zero")
    # an exact fit gives V = 0; floor it so the curve stays finite and the
    # penalty alone orders the tied ranks
    V = np.maximum(V, V[0] * (max(n, t) * np.finfo(float).eps) ** 2)
    ranks = np.arange(r_max + 1)
    curves = {name: np.log(V) + ranks * p for name, p in _bai_ng_penalties(n, t).items()}
    choice = {name: int(np.argmin(c[1:])) + 1 for name, c in curves.items()}
    return curves, choice


def _check_r_max(r_max: int, n: int, t: int) -> None:
    if not 1 <= r_max <= min(n, t) - 1:
        raise ValidationError(f"r_max={r_max} outside 1..min(N, T)-1={min(n, t) - 1}")


def bai_ng_ic(panel, r_max: int) -> FactorCountReport:
    """Bai and Ng (2002) information criteria IC_p1, IC_p2, IC_p3.

    ``ic_curves[name][r]`` holds ``log V(r) + r * penalty`` for r = 0..r_max,
    where V(r) is the mean squared residual after removing r principal
    components. Each criterion picks its argmin over r >= 1; ``r_hat`` is the
    median of the three picks.
    """
    X = _values(panel)
    n, t = X.shape
    _check_r_max(r_max, n, t)
    eig = _spectrum(X)
    curves, choice = _bai_ng_from_spectrum(eig, n, t, r_max)
    return FactorCountReport(
        r_hat=int(np.median(list(choice.values()))),
        per_criterion=choice,
        ic_curves=curves,
        eigenvalues=eig[: r_max + 1],
    )


def _weighted_mode(weights: dict) -> int:
    best = max(weights.values())
    return min(r for r, w in weights.items() if w == best)


def stable_factor_count(
    panel,
    r_max: int = 8,
    grid: Sequence[float] = DEFAULT_SUBSAMPLE_GRID,
    reps: int = DEFAULT_SUBSAMPLE_REPS,
    seed: int = 0,
) -> FactorCountReport:
    """Factor number that is stable across random sub-panels.

    For every fraction ``k`` in ``grid`` and every replicate, ``floor(k N)``
    series are drawn without replacement together with a contiguous time
    window of length ``floor(k T)``, and the three Bai-Ng criteria are run on
    that sub-panel. Each estimate casts a vote of weight ``k`` so larger
    sub-panels count more; per criterion the heaviest rank wins (ties go to
    the smaller rank) and ``r_hat`` is the median over the three criteria.

    The full-panel curves are returned in ``ic_curves`` for inspection.
    """
    X = _values(panel)
    n, t = X.shape
    _check_r_max(r_max, n, t)
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    grid = [float(k) for k in grid]
    if not grid or any(not 0.0 < k <= 1.0 for k in grid):
        raise ValidationError(f"subsample fractions must lie in (0, 1], got {grid}")
    for k in grid:
        if int(k * n) < 2 or int(k * t) < 4:
            raise ValidationError(
                f"fraction {k} leaves {int(k * n)} series x {int(k * t)} periods; need >= 2 x 4"
            )

    votes = {name: {} for name in CRITERIA}
    for gi, k in enumerate(grid):
        ns, ts = int(k * n), int(k * t)
        rmax_sub = min(r_max, min(ns, ts) - 1)
        for rep in range(reps):
            rng = np.random.default_rng(np.random.SeedSequence([seed, gi, rep]))
            rows = np.sort(rng.choice(n, size=ns, replace=False))
            start = int(rng.integers(0, t - ts + 1))
            sub = X[rows, start : start + ts]
            _, choice = _bai_ng_from_spectrum(_spectrum(sub), ns, ts, rmax_sub)
            for name, r in choice.items():
                votes[name][r] = votes[name].get(r, 0.0) + k

    per_criterion = {name: _weighted_mode(v) for name, v in votes.items()}
    full = bai_ng_ic(X, r_max)
    return FactorCountReport(
        r_hat=int(np.median(list(per_criterion.values()))),
        per_criterion=per_criterion,
        ic_curves=full.ic_curves,
        eigenvalues=full.eigenvalues,
        votes={name: dict(sorted(v.items())) for name, v in votes.items()},
        method="bai-ng-stable",
    )


def eigenvalue_ratio_from_spectrum(eigenvalues, r_max: int) -> tuple[int, np.ndarray]:
    """Argmax over k = 1..r_max of eig[k-1] / eig[k].

    A zero denominator counts as an infinite ratio; the search stops at the
    first one. Ties go to the smallest k. Returns the choice and the ratios
    examined.
    """
    eig = np.asarray(eigenvalues, dtype=float)
    if eig.size < r_max + 1:
        raise ValidationError(f"need {r_max + 1} eigenvalues, got {eig.size}")
    ratios = []
    for k in range(1, r_max + 1):
        if eig[k] == 0.0:
            ratios.append(np.inf)
            return k, np.array(ratios)
        ratios.append(eig[k - 1] / eig[k])
    ratios = np.array(ratios)
    return int(np.argmax(ratios)) + 1, ratios


def eigenvalue_ratio_count(panel, r_max: int = 8) -> FactorCountReport:
    """Ahn-Horenstein style eigenvalue-ratio estimate of the factor number."""
    X = _values(panel)
    n, t = X.shape
    _check_r_max(r_max, n, t)
    eig = _spectrum(X)[: r_max + 1]
    r_hat, ratios = eigenvalue_ratio_from_spectrum(eig, r_max)
    return FactorCountReport(
        r_hat=r_hat,
        per_criterion={"ER": r_hat},
        ic_curves={"ER": ratios},
        eigenvalues=eig,
        method="eigen-ratio",
    )
