import json
import math

import numpy as np
import pytest

from factor_mosum.errors import ValidationError
from factor_mosum.mosum import DetectorConfig, run_pipeline
from factor_mosum.simlab import (
    BUCKETS,
    DgpSpec,
    EvalSummary,
    bucket_label,
    evaluate,
    monte_carlo,
    table_config,
    table_specs,
    replicate_seed,
    run_replicate,
    simulate,
    summaries_to_csv,
)


def test_m2_segment_ranks_and_breaks():
    sim = simulate(DgpSpec("M2", 400, 100, seed=3))
    assert sim.segment_ranks == (3, 3, 2, 3)
    assert sim.true_changepoints == (100, 200, 300)
    assert sim.pseudo_factor_count == 6
    assert sim.panel.values.shape == (100, 400)


def test_m2_rotation_keeps_three_pseudo_factors():
    sim = simulate(DgpSpec("M2", 400, 100, seed=3, m2_last_loadings="rotation"))
    assert sim.segment_ranks == (3, 3, 2, 3)
    assert sim.pseudo_factor_count == 3


def test_m2_breaks_scale_with_t():
    assert simulate(DgpSpec("M2", 600, 100, seed=0)).true_changepoints == (150, 300, 450)


def test_m1_layout():
    sim = simulate(DgpSpec("M1", 400, 200, seed=1))
    assert list(sim.true_changepoints) == [133, 267]
    assert sim.panel.N == 200 and sim.panel.T == 400
    assert sim.pseudo_factor_count == 7
    assert sim.notes


@pytest.mark.parametrize("seed", [0, 1, 99])
def test_m3_has_no_change_points(seed):
    sim = simulate(DgpSpec("M3", 400, 100, seed=seed))
    assert sim.true_changepoints == ()
    assert sim.segment_ranks == (3,)


def test_spec_validation():
    with pytest.raises(ValidationError):
        DgpSpec("M1", 400, 100)
    with pytest.raises(ValidationError):
        DgpSpec("M4")
    with pytest.raises(ValidationError):
        DgpSpec("M2", 6, 100)
    with pytest.raises(ValidationError):
        DgpSpec("M2", rho_f=1.0)


def test_simulation_is_reproducible():
    for kind, T, N in (("M1", 400, 200), ("M2", 400, 100), ("M3", 400, 100)):
        a = simulate(DgpSpec(kind, T, N, 0.7 if kind != "M1" else 0.0, seed=11))
        b = simulate(DgpSpec(kind, T, N, 0.7 if kind != "M1" else 0.0, seed=11))
        assert np.array_equal(a.panel.values, b.panel.values)
        c = simulate(DgpSpec(kind, T, N, seed=12))
        assert not np.array_equal(a.panel.values, c.panel.values)


def test_noise_stream_independent_of_factor_persistence():
    # rho_e = 0 keeps the noise draws; changing rho_f only touches the factors
    a = simulate(DgpSpec("M3", 400, 50, rho_f=0.0, seed=4)).panel.values
    b = simulate(DgpSpec("M3", 400, 50, rho_f=0.5, seed=4)).panel.values
    c = simulate(DgpSpec("M3", 400, 50, rho_f=0.0, rho_e=0.3, seed=4)).panel.values
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_m2_first_segment_factor_covariance():
    from factor_mosum.simlab import _ar1, _streams

    T = 4000
    f = _ar1(_streams(7, ["factors"])["factors"], np.eye(3), T, 0.0)
    assert np.max(np.abs(f.T @ f / T - np.eye(3))) <= 5 / math.sqrt(T)


def test_noise_toeplitz_structure():
    from factor_mosum.simlab import _toeplitz_chol

    L = _toeplitz_chol(6, 0.3)
    S = L @ L.T
    np.testing.assert_allclose(S, 0.3 ** np.abs(np.subtract.outer(np.arange(6), np.arange(6))), atol=1e-14)
    np.testing.assert_allclose(S.sum(axis=1)[0], sum(0.3**j for j in range(6)))


def test_noise_sample_covariance():
    sim = simulate(DgpSpec("M3", 2000, 8, seed=5))
    from factor_mosum.simlab import _ar1, _streams, _toeplitz_chol

    e = _ar1(_streams(5, ["loadings", "factors", "noise"])["noise"], _toeplitz_chol(8, 0.3), 2000, 0.0)
    S = e.T @ e / 2000
    assert np.max(np.abs(S - 0.3 ** np.abs(np.subtract.outer(np.arange(8), np.arange(8))))) <= 5 / math.sqrt(2000)
    assert sim.panel.T == 2000


# --- scoring ---


def test_evaluate_examples():
    rec = evaluate([130, 270], [133, 267], T=400)
    assert rec.hits == (1, 1) and rec.bucket == "0"
    rec = evaluate([], [133, 267], T=400)
    assert rec.hits == (0, 0) and rec.bucket == "<=-2"
    rec = evaluate([50, 133, 267], [133, 267], T=400)
    assert rec.hits == (1, 1) and rec.bucket == "+1"


def test_evaluate_radius_is_natural_log():
    # log(400) = 5.99: distance 5 hits, distance 6 misses
    assert evaluate([138], [133], T=400).hits == (1,)
    assert evaluate([139], [133], T=400).hits == (0,)


def test_evaluate_requires_t():
    with pytest.raises(ValidationError):
        evaluate([1], [2])


@pytest.mark.parametrize("diff, label", [(-5, "<=-2"), (-2, "<=-2"), (-1, "-1"), (0, "0"), (1, "+1"), (2, ">=+2"), (7, ">=+2")])
def test_bucket_label(diff, label):
    assert bucket_label(diff) == label


def test_summary_histogram_partitions():
    recs = [evaluate(e, [100], T=400) for e in ([], [100], [100, 300], [1, 2, 3], [99])]
    s = EvalSummary.from_records(recs)
    assert abs(sum(s.histogram.values()) - 1.0) <= 1e-12
    assert set(s.histogram) == set(BUCKETS)
    assert all(0.0 <= a <= 1.0 for a in s.accuracy)
    assert s.accuracy == [3 / 5]
    with pytest.raises(ValidationError):
        EvalSummary.from_records([])


# --- Monte Carlo ---


def small_run(reps, seed=1, workers=1):
    spec = DgpSpec("M3", 200, 40)
    config = DetectorConfig(r=3, r_strategy="fixed", gamma=30)
    return monte_carlo(spec, config, reps, seed, workers=workers)


def test_reps_one_equals_single_record():
    s = small_run(1, seed=9)
    spec = DgpSpec("M3", 200, 40)
    rec = run_replicate(spec, DetectorConfig(r=3, r_strategy="fixed", gamma=30), replicate_seed(9, 0))
    assert s.records == [rec]
    assert s.histogram[rec.bucket] == 1.0


def test_monte_carlo_deterministic_across_workers():
    a = small_run(6, seed=3)
    b = small_run(6, seed=3)
    c = small_run(6, seed=3, workers=3)
    assert a.to_json(True) == b.to_json(True) == c.to_json(True)


def test_monte_carlo_validation():
    with pytest.raises(ValidationError):
        small_run(0)
    with pytest.raises(ValidationError):
        small_run(1, workers=0)


def test_monte_carlo_failure_reports_seed():
    spec = DgpSpec("M3", 40, 10)
    config = DetectorConfig(r=3, r_strategy="fixed", gamma=19)  # T/gamma < e
    with pytest.raises(RuntimeError, match="seed"):
        monte_carlo(spec, config, 2, 0)


def test_replicate_seed_distinct():
    seeds = {replicate_seed(1, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert replicate_seed(1, 0) != replicate_seed(2, 0)


def test_summary_exports():
    s = small_run(2)
    d = json.loads(s.to_json())
    assert d["reps"] == 2 and d["meta"]["kind"] == "M3"
    csv_text = summaries_to_csv([s, s])
    lines = csv_text.strip().splitlines()
    assert len(lines) == 3
    header = lines[0].split(",")
    assert header[:2] == ["design", "T"]
    assert "R_hat-R 0" in header


def test_table_config_and_grids():
    spec = DgpSpec("M2", 400, 100)
    assert table_config(spec).gamma == 78
    assert len(table_specs(2)) == 12
    assert len(table_specs(4)) == 24
    with pytest.raises(ValidationError):
        table_specs(5)


def test_pipeline_on_m3_panel_runs():
    sim = simulate(DgpSpec("M3", 400, 100, seed=0))
    res = run_pipeline(sim.panel.demean(), table_config(sim.spec, ic_reps=3))
    assert res.report.config["gamma"] == 78
