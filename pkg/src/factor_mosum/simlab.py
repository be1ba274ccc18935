"""Simulation designs M1-M3, replicate scoring and a seeded Monte Carlo runner.

Every random component of a design draws from its own child stream of
``numpy.random.SeedSequence(seed)``, so changing one component (say the
noise) never shifts the draws of another. Replicate ``i`` of a Monte Carlo run
uses ``SeedSequence([seed, i])``; results are therefore identical for any
number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ValidationError
from .mosum import ChangePointReport, DetectorConfig, default_gamma, run_pipeline
from .panel import Panel

Kind = Literal["M1", "M2", "M3"]

BURN_IN = 200
M1_T, M1_N, M1_R0 = 400, 200, 5
M1_BREAKS = (133, 267)
M1_NOISE_BREAKS = (100, 200, 300)
M1_NOISE_SHARE = 0.1
M1_NOISE_LOADING = math.sqrt(0.5)
NOISE_TOEPLITZ = 0.3
M2_R0 = 3

BUCKETS = ("<=-2", "-1", "0", "+1", ">=+2")


@dataclass(frozen=True)
class DgpSpec:
    """One simulation design.

    ``m2_last_loadings`` selects how the loadings after the third M2 break
    are drawn: ``"fresh"`` (default) draws an independent N x 3 matrix from
    the law of Lambda_0, so the pseudo-factor count rises from 3 to 6;
    ``"rotation"`` uses Lambda_0 C_3 with a random 3 x 3 C_3, which keeps the
    column space of Lambda_0 and leaves three pseudo factors.
    """

    kind: Kind
    T: int = 400
    N: int = 100
    rho_f: float = 0.0
    rho_e: float = 0.0
    seed: int = 0
    m2_last_loadings: Literal["rotation", "fresh"] = "fresh"

    def __post_init__(self):
        if self.kind not in ("M1", "M2", "M3"):
            raise ValidationError(f"unknown design {self.kind!r}")
        if self.kind == "M1" and (self.T, self.N) != (M1_T, M1_N):
            raise ValidationError(f"M1 is fixed at T={M1_T}, N={M1_N}")
        if self.T < 8 or self.N < 2:
            raise ValidationError(f"need T >= 8 and N >= 2, got T={self.T}, N={self.N}")
        if self.kind == "M2" and self.T < 16:
            raise ValidationError("M2 needs T >= 16 to host three change points")
        for name in ("rho_f", "rho_e"):
            if not -1.0 < getattr(self, name) < 1.0:
                raise ValidationError(f"{name} must lie in (-1, 1)")
        if self.m2_last_loadings not in ("rotation", "fresh"):
            raise ValidationError(f"unknown m2_last_loadings {self.m2_last_loadings!r}")

    def with_seed(self, seed: int) -> "DgpSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class SimulatedPanel:
    panel: Panel
    true_changepoints: tuple
    segment_ranks: tuple
    pseudo_factor_count: int
    spec: DgpSpec
    notes: tuple = ()


@lru_cache(maxsize=16)
def _toeplitz_chol(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    L = np.linalg.cholesky(rho ** np.abs(idx[:, None] - idx[None, :]))
    L.setflags(write=False)
    return L


def _streams(seed: int, names: Sequence[str]) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def _ar1(rng, innovations_chol: np.ndarray, T: int, rho: float) -> np.ndarray:
    """T x p stationary-ish AR(1) path after a burn-in, innovations N(0, L L^T)."""
    p = innovations_chol.shape[0]
    eps = rng.standard_normal((T + BURN_IN, p)) @ innovations_chol.T
    if rho == 0.0:
        return eps[BURN_IN:]
    out = np.empty_like(eps)
    out[0] = eps[0]
    for t in range(1, eps.shape[0]):
        out[t] = rho * out[t - 1] + eps[t]
    return out[BURN_IN:]


def _uniform_loadings(rng, n: int, r: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=n * r).reshape((n, r), order="F")


def _normal_loadings(rng, n: int, r: int, scale: float) -> np.ndarray:
    return (scale * rng.standard_normal(n * r)).reshape((n, r), order="F")


def _segments(T: int, breaks: Sequence[int]) -> list[slice]:
    edges = [0, *breaks, T]
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _rank(A: np.ndarray) -> int:
    return int(np.linalg.matrix_rank(A))


def _simulate_m1(spec: DgpSpec) -> SimulatedPanel:
    rng = _streams(spec.seed, ["scale", "loadings", "factors", "noise", "noise_breaks"])
    T, N, r0 = spec.T, spec.N, M1_R0

    idx = np.arange(r0)
    sigma_f = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    dvec = rng["scale"].uniform(0.5, 1.5, size=r0)
    sigma0 = np.outer(dvec, dvec) * sigma_f
    sigma1 = sigma0.copy()
    sigma1[0, 1] = sigma1[1, 0] = 0.9 * math.sqrt(sigma0[0, 0] * sigma0[1, 1])
    sigma1[4, 4] = 1.3**2 * sigma0[4, 4]
    for i in range(4):
        sigma1[i, 4] = sigma1[4, i] = 0.5 ** abs(i - 4) * math.sqrt(sigma0[i, i] * sigma0[4, 4])
    covs = [sigma0, sigma1, sigma1]

    lam0 = _uniform_loadings(rng["loadings"], N, r0)
    lam2 = lam0.copy()
    lam2[:, :2] = _uniform_loadings(rng["loadings"], N, 2)
    loadings = [lam0, lam0, lam2]

    z = rng["factors"].standard_normal((T, r0))
    chi = np.empty((N, T))
    for seg, cov, lam in zip(_segments(T, M1_BREAKS), covs, loadings):
        f = z[seg] @ np.linalg.cholesky(cov).T
        chi[:, seg] = lam @ f.T

    # noise: Toeplitz base correlation; from each noise break on, a fresh 10%
    # of series additionally share a common shock (unit variances preserved)
    base = rng["noise"].standard_normal((T, N)) @ _toeplitz_chol(N, NOISE_TOEPLITZ).T
    shock = rng["noise"].standard_normal(T)
    noise = base.copy()
    n_hit = max(1, int(round(M1_NOISE_SHARE * N)))
    for seg in _segments(T, M1_NOISE_BREAKS)[1:]:
        hit = rng["noise_breaks"].choice(N, size=n_hit, replace=False)
        noise[seg, hit] = math.sqrt(0.5) * base[seg, hit] + math.sqrt(0.5) * shock[seg, None]

    X = chi + M1_NOISE_LOADING * noise.T
    return SimulatedPanel(
        panel=Panel(X),
        true_changepoints=M1_BREAKS,
        segment_ranks=tuple(_rank(lam @ np.linalg.cholesky(c)) for lam, c in zip(loadings, covs)),
        pseudo_factor_count=_rank(np.hstack([lam0, lam2])),
        spec=spec,
        notes=("idiosyncratic covariance breaks at t=100,200,300 use a shared-shock approximation",),
    )


def _simulate_m2(spec: DgpSpec, null: bool) -> SimulatedPanel:
    rng = _streams(spec.seed, ["loadings", "changes", "factors", "noise"])
    T, N, r0 = spec.T, spec.N, M2_R0

    lam0 = _normal_loadings(rng["loadings"], N, r0, 1.0 / math.sqrt(r0))
    f = _ar1(rng["factors"], np.eye(r0), T, spec.rho_f)
    e = _ar1(rng["noise"], _toeplitz_chol(N, NOISE_TOEPLITZ), T, spec.rho_e)

    if null:
        X = lam0 @ f.T + e.T
        return SimulatedPanel(Panel(X), (), (_rank(lam0),), _rank(lam0), spec)

    c = rng["changes"]
    C1 = np.array([[0.5, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.5]])
    C1[1, 0], C1[2, 0], C1[2, 1] = c.standard_normal(3)
    C2 = np.diag([1.0, 1.0, 0.0])
    if spec.m2_last_loadings == "fresh":
        lam3 = _normal_loadings(c, N, r0, 1.0 / math.sqrt(r0))
    else:
        lam3 = lam0 @ (c.standard_normal((r0, r0)) / math.sqrt(r0))
    loadings = [lam0, lam0 @ C1, lam0 @ C2, lam3]

    breaks = tuple(T * j // 4 for j in (1, 2, 3))
    X = e.T.copy()
    for seg, lam in zip(_segments(T, breaks), loadings):
        X[:, seg] += lam @ f[seg].T
    return SimulatedPanel(
        panel=Panel(X),
        true_changepoints=breaks,
        segment_ranks=tuple(_rank(lam) for lam in loadings),
        pseudo_factor_count=_rank(np.hstack(loadings)),
        spec=spec,
    )


def simulate(spec: DgpSpec) -> SimulatedPanel:
    """Draw one panel from design ``spec`` (not demeaned)."""
    if spec.kind == "M1":
        return _simulate_m1(spec)
    return _simulate_m2(spec, null=spec.kind == "M3")


# --- scoring ---------------------------------------------------------------------


def bucket_label(diff: int) -> str:
    if diff <= -2:
        return "<=-2"
    if diff >= 2:
        return ">=+2"
    return {-1: "-1", 0: "0", 1: "+1"}[diff]


@dataclass(frozen=True)
class ReplicateRecord:
    seed: int
    r_hat: int
    n_estimates: int
    bucket: str
    hits: tuple
    estimates: tuple


def evaluate(report: ChangePointReport | Sequence[int], truth: SimulatedPanel | Sequence[int], T: int | None = None) -> ReplicateRecord:
    """Score one replicate.

    ``hits[j]`` is 1 when some estimate lies within log(T) of the j-th true
    change point. ``report`` and ``truth`` may also be plain sequences, in
    which case ``T`` is required.
    """
    estimates = tuple(report.estimates if isinstance(report, ChangePointReport) else report)
    if isinstance(truth, SimulatedPanel):
        true_k, T = truth.true_changepoints, truth.panel.T
        seed = truth.spec.seed
    else:
        true_k, seed = tuple(truth), -1
        if T is None:
            raise ValidationError("T is required when truth is a plain sequence")
    radius = math.log(T)
    est = np.asarray(estimates, dtype=float)
    hits = tuple(int(est.size > 0 and np.abs(est - k).min() <= radius) for k in true_k)
    r_used = -1
    if isinstance(report, ChangePointReport):
        r_used = int(report.config.get("r", -1))
    return ReplicateRecord(
        seed=seed,
        r_hat=r_used,
        n_estimates=len(estimates),
        bucket=bucket_label(len(estimates) - len(true_k)),
        hits=hits,
        estimates=estimates,
    )


@dataclass
class EvalSummary:
    """Aggregate of replicate records, in replicate order."""

    histogram: dict
    accuracy: list
    reps: int
    r_hat_counts: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Sequence[ReplicateRecord], meta: dict | None = None) -> "EvalSummary":
        n = len(records)
        if n == 0:
            raise ValidationError("no replicate records")
        hist = {b: sum(rec.bucket == b for rec in records) / n for b in BUCKETS}
        n_true = len(records[0].hits)
        accuracy = [sum(rec.hits[j] for rec in records) / n for j in range(n_true)]
        counts = {}
        for rec in records:
            counts[rec.r_hat] = counts.get(rec.r_hat, 0) + 1
        return cls(hist, accuracy, n, dict(sorted(counts.items())), list(records), dict(meta or {}))

    def to_dict(self, include_records: bool = False) -> dict:
        out = {
            "reps": self.reps,
            "histogram": self.histogram,
            "accuracy": self.accuracy,
            "r_hat_counts": {str(k): v for k, v in self.r_hat_counts.items()},
            "meta": self.meta,
        }
        if include_records:
            out["records"] = [asdict(r) for r in self.records]
        return out

    def to_json(self, include_records: bool = False) -> str:
        return json.dumps(self.to_dict(include_records), indent=2)

    def table_row(self) -> dict:
        m = self.meta
        row = {
            "design": m.get("kind", ""),
            "T": m.get("T", ""),
            "N": m.get("N", ""),
            "rho_f": m.get("rho_f", ""),
            "rho_e": m.get("rho_e", ""),
            "mode": m.get("mode", ""),
            "gamma": m.get("gamma", ""),
            "reps": self.reps,
        }
        for b in BUCKETS:
            row[f"R_hat-R {b}"] = self.histogram[b]
        for j, acc in enumerate(self.accuracy, start=1):
            row[f"accuracy j={j}"] = acc
        return row


def summaries_to_csv(summaries: Sequence[EvalSummary]) -> str:
    rows = [s.table_row() for s in summaries]
    columns = []
    for row in rows:
        columns.extend(c for c in row if c not in columns)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# --- Monte Carlo ---------------------------------------------------------------------


def replicate_seed(seed: int, i: int) -> int:
    """64-bit seed of replicate ``i``, derived from (seed, i)."""
    return int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])


def run_replicate(spec: DgpSpec, config: DetectorConfig, seed: int) -> ReplicateRecord:
    sim = simulate(spec.with_seed(seed))
    result = run_pipeline(sim.panel, config.with_(seed=seed % 2**32))
    return evaluate(result.report, sim)


def table_config(spec: DgpSpec, mode: str = "diagonal", **overrides) -> DetectorConfig:
    """Detector tuning used for the simulation tables.

    The bandwidth comes from :func:`default_gamma` with varrho = 1.1 and is
    fixed once per design so every replicate scans with the same gamma.
    """
    gamma = default_gamma(spec.T, spec.N, 1.1).gamma
    return DetectorConfig(gamma=gamma, mode=mode, **overrides)


def monte_carlo(
    spec: DgpSpec,
    config: DetectorConfig,
    reps: int,
    seed: int,
    workers: int = 1,
    progress=None,
) -> EvalSummary:
    """Simulate, detect and score ``reps`` replicates.

    BLAS is pinned to one thread for the duration so each replicate computes
    the same bits whichever worker runs it. A failing replicate aborts the
    run with its seed in the error message.
    """
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    if workers < 1:
        raise ValidationError("workers must be at least 1")
    seeds = [replicate_seed(seed, i) for i in range(reps)]

    def task(s):
        try:
            rec = run_replicate(spec, config, s)
        except Exception as exc:
            raise RuntimeError(f"replicate with seed {s} failed: {exc}") from exc
        if progress is not None:
            progress()
        return rec

    with threadpool_limits(limits=1):
        if workers == 1:
            records = [task(s) for s in seeds]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(task, seeds))

    meta = {
        "kind": spec.kind,
        "T": spec.T,
        "N": spec.N,
        "rho_f": spec.rho_f,
        "rho_e": spec.rho_e,
        "mode": config.mode,
        "gamma": config.gamma,
        "seed": seed,
        "m2_last_loadings": spec.m2_last_loadings,
    }
    return EvalSummary.from_records(records, meta)


SIMULATION_TABLES = {
    1: [("M1", 400, 200, 0.0, 0.0)],
    2: [("M2", T, N, 0.0, 0.0) for T in (400, 600, 800, 1000) for N in (100, 200, 500)],
    3: [("M2", T, N, 0.7, 0.3) for T in (400, 600, 800, 1000) for N in (100, 200, 500)],
    4: [
        ("M3", T, N, rf, re)
        for T in (400, 600, 800, 1000)
        for N in (100, 200, 500)
        for rf, re in ((0.0, 0.0), (0.7, 0.3))
    ],
}


def table_specs(table: int) -> list[DgpSpec]:
    if table not in SIMULATION_TABLES:
        raise ValidationError(f"no simulation table {table}; choose from {sorted(SIMULATION_TABLES)}")
    return [DgpSpec(kind, T, N, rf, re) for kind, T, N, rf, re in SIMULATION_TABLES[table]]
