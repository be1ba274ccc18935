"""MOSUM scan of the second moments of estimated factors.

The scan compares ``vech(g_t g_t^T)`` summed over the ``gamma`` periods after
``k`` with the sum over the ``gamma`` periods up to ``k``. The difference is
standardised by a Bartlett-kernel long-run covariance and compared with a
Gumbel-type threshold. Change points are the threshold exceedances that are
also local maxima within ``eta * gamma``.

Time is 1-based throughout the public interface: a change point ``k`` means
observation ``k`` is the last one of the old regime.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .errors import NumericalError, ValidationError
from .factor import (
    DEFAULT_SUBSAMPLE_GRID,
    DEFAULT_SUBSAMPLE_REPS,
    FactorCountReport,
    FactorEstimate,
    eigenvalue_ratio_count,
    estimate_factors,
    stable_factor_count,
)
from .panel import Panel, vech_indices, vech_outer, vech_size

Mode = Literal["full", "diagonal"]

RCOND_TOL = 1e-10
RIDGE_SCALE = 1e-10


def _ghat(fe) -> np.ndarray:
    G = fe.ghat if isinstance(fe, FactorEstimate) else np.asarray(fe, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    return G


# --- long-run covariance ----------------------------------------------------


@dataclass(frozen=True)
class LongRunCov:
    """Standardising matrix for the MOSUM statistic.

    In ``"full"`` mode the Cholesky factor is cached on construction; in
    ``"diagonal"`` mode only the diagonal is used and off-diagonals are zero.
    ``ridge`` records any conditioning added before factorisation.
    """

    matrix: np.ndarray
    mode: Mode = "diagonal"
    m: int = 0
    ridge: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        V = np.array(self.matrix, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValidationError(f"long-run covariance must be square, got {V.shape}")
        if np.abs(V - V.T).max() > 1e-10 * max(1.0, np.abs(V).max()):
            raise ValidationError("long-run covariance is not symmetric")
        V = (V + V.T) / 2
        diag = np.diag(V)
        if np.any(diag <= 0.0):
            bad = np.flatnonzero(diag <= 0.0).tolist()
            raise NumericalError(f"long-run covariance has non-positive diagonal entries at {bad}")
        if self.mode == "diagonal":
            V = np.diag(diag)
        elif self.mode == "full":
            chol, ridge = _factorise(V)
            object.__setattr__(self, "_chol", chol)
            object.__setattr__(self, "ridge", ridge)
        else:
            raise ValidationError(f"unknown standardisation mode {self.mode!r}")
        V.setflags(write=False)
        object.__setattr__(self, "matrix", V)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def quadratic_form(self, M: np.ndarray) -> np.ndarray:
        """Row-wise ``M_k^T V^{-1} M_k`` for ``M`` of shape (K, d)."""
        if self.mode == "diagonal":
            return (M**2 / np.diag(self.matrix)).sum(axis=1)
        z = scipy.linalg.solve_triangular(self._chol, M.T, lower=True)
        return (z**2).sum(axis=0)


def _factorise(V: np.ndarray) -> tuple[np.ndarray, float]:
    eig = np.linalg.eigvalsh(V)
    if eig[0] <= RCOND_TOL * eig[-1]:
        raise NumericalError(
            f"long-run covariance is rank deficient (eigenvalue ratio {eig[0] / eig[-1]:.3g}); "
            "use diagonal standardisation"
        )
    try:
        return np.linalg.cholesky(V), 0.0
    except np.linalg.LinAlgError:
        pass
    ridge = RIDGE_SCALE * np.trace(V) / V.shape[0]
    try:
        return np.linalg.cholesky(V + ridge * np.eye(V.shape[0])), ridge
    except np.linalg.LinAlgError:
        raise NumericalError(
            "long-run covariance is not positive definite; use diagonal standardisation"
        ) from None


def hac_long_run_cov(fe, m: int, mode: Mode = "diagonal") -> LongRunCov:
    """Bartlett-kernel estimate of the long-run covariance of vech(g g^T - I).

    ``fe`` may be a :class:`FactorEstimate` or a T x r array of factors.
    Autocovariances use the 1/T scaling and are centred at the identity,
    not at the sample mean.
    """
    G = _ghat(fe)
    t, r = G.shape
    if not 0 <= m <= t - 2:
        raise ValidationError(f"HAC bandwidth m={m} outside 0..T-2={t - 2}")
    Z = vech_outer(G)
    rows, cols = vech_indices(r)
    Z[:, rows == cols] -= 1.0
    V = Z.T @ Z / t
    for lag in range(1, m + 1):
        gamma_l = Z[lag:].T @ Z[:-lag] / t
        V += (1.0 - lag / (m + 1)) * (gamma_l + gamma_l.T)
    return LongRunCov(V, mode=mode, m=m)


def default_hac_bandwidth(T: int) -> int:
    return int(math.floor(T**0.25))


# --- MOSUM profile -----------------------------------------------------------


@dataclass(frozen=True)
class MosumProfile:
    """MOSUM statistics for k = gamma .. T - gamma.

    ``raw[i]`` is the d-vector M(k) and ``stats[i]`` the standardised norm
    T(k) for ``k = ks[i]``.
    """

    gamma: int
    ks: np.ndarray
    stats: np.ndarray
    raw: np.ndarray
    T: int
    r: int
    threshold: float = float("nan")
    alpha: float | None = None
    kappa: float | None = None
    eta: float | None = None

    @property
    def d(self) -> int:
        return vech_size(self.r)

    def stat_at(self, k: int) -> float:
        return float(self.stats[k - self.gamma])

    def normalized(self) -> np.ndarray:
        """Statistic over threshold; NaN when the threshold is not positive,
        since the ratio then has no reference line at 1."""
        if not self.threshold > 0:
            return np.full_like(self.stats, np.nan)
        return self.stats / self.threshold

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "stat", "normalized_stat", "threshold"])
            for k, s, z in zip(self.ks, self.stats, self.normalized()):
                writer.writerow([int(k), repr(float(s)), repr(float(z)), repr(float(self.threshold))])


def mosum_window_difference(Y: np.ndarray, gamma: int) -> np.ndarray:
    """Right-minus-left window sums of the rows of ``Y`` for k = gamma..T-gamma.

    The first difference is summed directly; each later one is obtained from
    its predecessor by adding the entering and removing the leaving terms on
    both sides, i.e. D(k+1) = D(k) + Y_{k+gamma+1} - 2 Y_{k+1} + Y_{k-gamma+1}
    (1-based), accumulated with a cumulative sum.
    """
    t = Y.shape[0]
    first = Y[gamma : 2 * gamma].sum(axis=0) - Y[:gamma].sum(axis=0)
    steps = Y[2 * gamma :] - 2.0 * Y[gamma : t - gamma] + Y[: t - 2 * gamma]
    out = np.empty((t - 2 * gamma + 1, Y.shape[1]))
    out[0] = first
    np.cumsum(steps, axis=0, out=out[1:])
    out[1:] += first
    return out


def mosum_profile(fe, gamma: int, lrcov: LongRunCov) -> MosumProfile:
    """MOSUM statistics of vech(g_t g_t^T) standardised by ``lrcov``."""
    G = _ghat(fe)
    t, r = G.shape
    if not (1 <= gamma and 2 * gamma <= t):
        raise ValidationError(f"bandwidth gamma={gamma} needs 1 <= gamma <= T/2 = {t / 2}")
    if lrcov.d != vech_size(r):
        raise ValidationError(f"long-run covariance has d={lrcov.d}, factors need d={vech_size(r)}")
    M = mosum_window_difference(vech_outer(G), gamma) / math.sqrt(2 * gamma)
    stats = np.sqrt(np.maximum(lrcov.quadratic_form(M), 0.0))
    return MosumProfile(
        gamma=gamma, ks=np.arange(gamma, t - gamma + 1), stats=stats, raw=M, T=t, r=r
    )


# --- threshold ------------------------------------------------------------------


def _scale(x: float) -> float:
    return math.sqrt(2.0 * math.log(x))


def _shift(x: float, d: int) -> float:
    return 2.0 * math.log(x) + d * math.log(math.log(x)) / 2.0 + math.log(0.5) - gammaln(d / 2.0)


def _ratio(T: float, gamma: float) -> float:
    x = T / gamma
    if not x > math.e:
        raise ValidationError(
            f"T/gamma = {x:.4g} must exceed e for the Gumbel threshold; choose a smaller gamma"
        )
    return x


def threshold_gumbel(T: int, gamma: int, d: int, alpha: float = 0.05) -> float:
    """Asymptotic level-``alpha`` critical value for max_k T(k) under no change."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha={alpha} must lie in (0, 1)")
    x = _ratio(T, gamma)
    return (_shift(x, d) - math.log(math.log(1.0 / math.sqrt(1.0 - alpha)))) / _scale(x)


def asymptotic_pvalue(max_stat: float, T: int, gamma: int, d: int) -> float:
    """Gumbel-limit p-value of an observed maximum MOSUM statistic."""
    x = _ratio(T, gamma)
    z = _scale(x) * max_stat - _shift(x, d)
    return float(-math.expm1(-2.0 * math.exp(-z)))


def threshold_inflation(T: int, gamma: int, kappa: float) -> float:
    return max(1.0, math.log(T / gamma)) ** kappa


# --- bandwidth --------------------------------------------------------------------


@dataclass(frozen=True)
class GammaChoice:
    """Bandwidth with the candidates it was chosen from."""

    gamma: int
    branch: Literal["printed", "fallback"]
    printed: int
    fallback: int
    zeta: float

    def to_dict(self) -> dict:
        return asdict(self)


def default_gamma(T: int, N: int, varrho: float = 1.1) -> GammaChoice:
    """Data-driven MOSUM bandwidth.

    First tries ``floor(T**(2 zeta) * log(T)**varrho)`` with
    ``zeta = max(2/5, 1 - log N / log T)``. If that leaves no room for two
    windows (above ``floor(T/2) - 1``) it falls back to
    ``floor(T**zeta * log(T)**varrho)``, capped at ``floor(T/2) - 1``.
    """
    if T < 8 or N < 2:
        raise ValidationError(f"default bandwidth needs T >= 8 and N >= 2, got T={T}, N={N}")
    zeta = max(0.4, 1.0 - math.log(N) / math.log(T))
    logt = math.log(T) ** varrho
    printed = int(math.floor(T ** (2 * zeta) * logt))
    fallback = int(math.floor(T**zeta * logt))
    cap = T // 2 - 1
    if printed <= cap:
        return GammaChoice(max(printed, 1), "printed", printed, fallback, zeta)
    return GammaChoice(max(min(fallback, cap), 1), "fallback", printed, fallback, zeta)


# --- detection ------------------------------------------------------------------


@dataclass
class ChangePointReport:
    estimates: list
    stats: list
    pvalues: list
    threshold: float
    config: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.estimates)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "estimates": [int(k) for k in self.estimates],
            "stats": [float(s) for s in self.stats],
            "pvalues": [float(p) for p in self.pvalues],
            "threshold": float(self.threshold),
            "config": self.config,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def local_maximisers(stats: np.ndarray, radius: int) -> np.ndarray:
    """Indices i with stats[i] >= every value within ``radius`` and strictly
    greater than every earlier value within ``radius``.

    The window is clipped at the ends; the strict condition keeps only the
    first point of a tied plateau.
    """
    n = stats.size
    pad = np.full(radius, -np.inf)
    padded = np.concatenate([pad, stats, pad])
    win = np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1)
    left = win[:, :radius].max(axis=1) if radius else np.full(n, -np.inf)
    right = win[:, radius + 1 :].max(axis=1) if radius else np.full(n, -np.inf)
    return np.flatnonzero((stats > left) & (stats >= right))


def detect_changes(profile: MosumProfile, eta: float = 0.6, threshold: float | None = None) -> ChangePointReport:
    """Change points as eta-local maximisers of the profile above ``threshold``.

    ``threshold`` defaults to the one stored on the profile.
    """
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta={eta} must lie in (0, 1]")
    if threshold is None:
        threshold = profile.threshold
    if not math.isfinite(threshold):
        raise ValidationError("no threshold supplied")
    radius = int(math.floor(eta * profile.gamma))
    idx = local_maximisers(profile.stats, radius)
    idx = idx[profile.stats[idx] > threshold]
    stats = profile.stats[idx]
    pvals = [asymptotic_pvalue(s, profile.T, profile.gamma, profile.d) for s in stats]
    return ChangePointReport(
        estimates=[int(k) for k in profile.ks[idx]],
        stats=[float(s) for s in stats],
        pvalues=pvals,
        threshold=float(threshold),
    )


# --- pipeline -------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorConfig:
    """Tuning of the end-to-end detector. ``None`` means "derive from data"."""

    r: int | None = None
    r_strategy: Literal["fixed", "ic-stable", "eigen-ratio"] = "ic-stable"
    r_max: int = 8
    ic_grid: tuple = DEFAULT_SUBSAMPLE_GRID
    ic_reps: int = DEFAULT_SUBSAMPLE_REPS
    gamma: int | None = None
    varrho: float = 1.1
    m: int | None = None
    alpha: float = 0.05
    eta: float = 0.6
    kappa: float = 0.2
    mode: Mode = "diagonal"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ic_grid", tuple(float(x) for x in self.ic_grid))
        if self.r_strategy not in ("fixed", "ic-stable", "eigen-ratio"):
            raise ValidationError(f"unknown r strategy {self.r_strategy!r}")
        if self.r_strategy == "fixed" and self.r is None:
            raise ValidationError("r strategy 'fixed' needs r")
        if self.r is not None and self.r < 1:
            raise ValidationError("r must be positive")
        if self.mode not in ("full", "diagonal"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ValidationError("eta must lie in (0, 1]")
        if self.kappa < 0:
            raise ValidationError("kappa must be non-negative")
        if self.gamma is not None and self.gamma < 1:
            raise ValidationError("gamma must be positive")
        if self.m is not None and self.m < 0:
            raise ValidationError("m must be non-negative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ic_grid"] = list(self.ic_grid)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "DetectorConfig":
        return cls.from_dict(json.loads(text))

    def with_(self, **changes) -> "DetectorConfig":
        return replace(self, **changes)


@dataclass
class PipelineResult:
    factors: FactorEstimate
    lrcov: LongRunCov
    profile: MosumProfile
    report: ChangePointReport
    gamma_choice: GammaChoice | None
    factor_count: FactorCountReport | None

    def __iter__(self):
        return iter((self.factors, self.profile, self.report))


def choose_r(panel: Panel, config: DetectorConfig) -> tuple[int, FactorCountReport | None]:
    if config.r_strategy == "fixed":
        return config.r, None
    r_max = min(config.r_max, min(panel.N, panel.T) - 1)
    if config.r_strategy == "eigen-ratio":
        rep = eigenvalue_ratio_count(panel, r_max)
    else:
        rep = stable_factor_count(panel, r_max, config.ic_grid, config.ic_reps, config.seed)
    return rep.r_hat, rep


def run_pipeline(panel: Panel, config: DetectorConfig | None = None) -> PipelineResult:
    """Factor extraction, HAC standardisation, MOSUM scan and detection."""
    config = config or DetectorConfig()
    r, count = choose_r(panel, config)
    gamma_choice = None
    gamma = config.gamma
    if gamma is None:
        gamma_choice = default_gamma(panel.T, panel.N, config.varrho)
        gamma = gamma_choice.gamma
    if 2 * gamma > panel.T:
        raise ValidationError(f"gamma={gamma} too large for T={panel.T}")
    m = default_hac_bandwidth(panel.T) if config.m is None else config.m

    fe = estimate_factors(panel, r)
    lrcov = hac_long_run_cov(fe, m, config.mode)
    profile = mosum_profile(fe, gamma, lrcov)
    d = vech_size(r)
    threshold = threshold_gumbel(panel.T, gamma, d, config.alpha) * threshold_inflation(
        panel.T, gamma, config.kappa
    )
    profile = replace(profile, threshold=threshold, alpha=config.alpha, kappa=config.kappa, eta=config.eta)
    report = detect_changes(profile, config.eta, threshold)
    report.config = {**config.to_dict(), "r": r, "gamma": gamma, "m": m, "d": d}
    if threshold <= 0:
        # the Gumbel centring -lgamma(d/2) outgrows 2 log(T/gamma) for large d
        report.warnings.append(
            f"threshold {threshold:.3f} is not positive (d={d}, T/gamma={panel.T / gamma:.2f}); "
            "every eta-local maximum is reported"
        )
    return PipelineResult(fe, lrcov, profile, report, gamma_choice, count)


__all__ = [
    "ChangePointReport",
    "DetectorConfig",
    "GammaChoice",
    "LongRunCov",
    "MosumProfile",
    "PipelineResult",
    "asymptotic_pvalue",
    "default_gamma",
    "default_hac_bandwidth",
    "detect_changes",
    "hac_long_run_cov",
    "local_maximisers",
    "mosum_profile",
    "mosum_window_difference",
    "run_pipeline",
    "threshold_gumbel",
    "threshold_inflation",
]
