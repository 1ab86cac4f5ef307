import itertools
import math

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from smallball.errors import InvalidSpecError, SizeLimitExceededError
from smallball.estimator import (
    EstimateRequest,
    GraphWalkProcess,
    corridor_probability,
    estimate_smallball,
    exact_lattice_smallball,
    records_to_csv,
    records_to_jsonl,
    record_from_estimate,
    scaling_study,
    smallball_profile,
    wilson_interval,
    z_for_level,
)
from smallball.graphs import cycle, lattice
from smallball.martingale import (
    FixedAxis,
    MartingaleSpec,
    Tangential,
    standard_suite,
)

from conftest import enumerate_sign_paths


# ---------------------------------------------------------------------------
# Wilson intervals


def test_wilson_edges():
    low, high = wilson_interval(0, 100, 1.96)
    assert low == 0.0
    low, high = wilson_interval(100, 100, 1.96)
    assert high == 1.0


def test_wilson_against_reference():
    low, high = wilson_interval(37, 100, z_for_level(0.95))
    ref_low, ref_high = proportion_confint(37, 100, alpha=0.05, method="wilson")
    assert low == pytest.approx(ref_low, abs=1e-9)
    assert high == pytest.approx(ref_high, abs=1e-9)
    assert wilson_interval(37, 100, 1.96) == pytest.approx((0.2818, 0.4678), abs=5e-4)


def test_wilson_ordering_and_z():
    for successes in (0, 1, 17, 99, 100):
        low, high = wilson_interval(successes, 100, z_for_level(0.99))
        assert 0.0 <= low <= successes / 100 <= high <= 1.0
    assert z_for_level(0.95) == pytest.approx(1.959964, abs=1e-5)


def test_wilson_validation():
    with pytest.raises(InvalidSpecError):
        wilson_interval(5, 0, 1.96)
    with pytest.raises(InvalidSpecError):
        wilson_interval(-1, 10, 1.96)


# ---------------------------------------------------------------------------
# exact DP oracle


def test_dp_1d_small_values():
    # 2 of the 4 two-step sign paths return to 0
    assert exact_lattice_smallball(1, 2, 0.0) == pytest.approx(0.5, abs=1e-15)
    # binomial: P(S_4 = 0) = 6/16, parity excludes |S_4| = 1
    assert exact_lattice_smallball(1, 4, 1.0) == pytest.approx(0.375, abs=1e-15)


def test_dp_1d_matches_binomial():
    for n in (10, 50, 144):
        exact = math.comb(n, n // 2) / 2.0**n
        assert exact_lattice_smallball(1, n, 0.0) == pytest.approx(exact, rel=1e-12)


def test_dp_1d_matches_enumeration():
    # brute force over all 2^8 paths
    paths = np.cumsum(enumerate_sign_paths(8), axis=1)
    for R in (0.0, 1.0, 2.0, 3.5):
        expected = float(np.mean(np.abs(paths[:, -1]) <= math.floor(R + 1e-12)))
        assert exact_lattice_smallball(1, 8, R) == pytest.approx(expected, abs=1e-12)


def _enumerate_lattice2(n):
    """All 4^n draw sequences of the 2-D walk; returns terminal (x, y) arrays."""
    moves = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    terms = []
    for seq in itertools.product(range(4), repeat=n):
        x = y = 0
        for s in seq:
            dx, dy = moves[s]
            x += dx
            y += dy
        terms.append((x, y))
    return np.array(terms)


def test_dp_2d_small_values():
    # 4 of 16 two-step paths return to the origin
    assert exact_lattice_smallball(2, 2, 0.0) == pytest.approx(0.25, abs=1e-15)
    terms = _enumerate_lattice2(3)
    l1 = np.abs(terms).sum(axis=1)
    expected = float(np.mean(l1 <= 1))
    assert exact_lattice_smallball(2, 3, 1.0) == pytest.approx(expected, abs=1e-12)


def test_dp_2d_metric_modes_differ():
    # after 2 steps, (1,1)-type corners have L1 = 2 but L2 = sqrt(2)
    r = math.sqrt(2.0)
    graph_p = exact_lattice_smallball(2, 2, r, metric="graph")
    euclid_p = exact_lattice_smallball(2, 2, r, metric="euclidean")
    terms = _enumerate_lattice2(2)
    assert graph_p == pytest.approx(float(np.mean(np.abs(terms).sum(axis=1) <= 1)), abs=1e-12)
    assert euclid_p == pytest.approx(
        float(np.mean((terms**2).sum(axis=1) <= 2)), abs=1e-12
    )
    assert euclid_p > graph_p


def test_dp_size_caps():
    with pytest.raises(SizeLimitExceededError):
        exact_lattice_smallball(1, 5000, 1.0)
    with pytest.raises(SizeLimitExceededError):
        exact_lattice_smallball(2, 600, 1.0)
    with pytest.raises(InvalidSpecError):
        exact_lattice_smallball(3, 10, 1.0)


# ---------------------------------------------------------------------------
# Monte Carlo estimates


def _srw1d_spec(n):
    return MartingaleSpec.unit(FixedAxis(0), n, dim=1)


def test_estimate_srw_matches_dp():
    req = EstimateRequest(process=_srw1d_spec(4), n=4, replicas=100_000,
                          master_seed=7, R=1.0)
    est = estimate_smallball(req)
    assert est.ci_low <= 0.375 <= est.ci_high
    assert abs(est.p_hat - 0.375) < 0.01


def test_estimate_certain_event():
    spec = MartingaleSpec.unit(standard_suite(6)["time-switched"], 6, dim=2)
    req = EstimateRequest(process=spec, n=6, replicas=500, master_seed=1, R=10.0)
    assert estimate_smallball(req).p_hat == 1.0


def test_estimate_spiral_never_small():
    spec = MartingaleSpec.unit(Tangential(), 100, dim=2)
    req = EstimateRequest(process=spec, n=100, replicas=2000, master_seed=3, R=1.0)
    assert estimate_smallball(req).p_hat == 0.0


def test_profile_monotone_in_R():
    spec = MartingaleSpec.unit(standard_suite(16)["time-switched"], 16, dim=2)
    req = EstimateRequest(process=spec, n=16, replicas=20_000, master_seed=11, R=1.0)
    estimates = smallball_profile(req, [0.5, 1.0, 2.0, 3.0, 4.0])
    p = [e.p_hat for e in estimates]
    assert p == sorted(p)


def test_worker_counts_identical():
    spec = MartingaleSpec.unit(standard_suite(64)["radial-outward"], 64, dim=2)
    results = []
    for workers in (1, 2, 8):
        req = EstimateRequest(process=spec, n=64, replicas=40_000, master_seed=5,
                              R=1.0, workers=workers)
        results.append(estimate_smallball(req))
    assert results[0] == results[1] == results[2]


def test_request_validation():
    spec = _srw1d_spec(4)
    with pytest.raises(InvalidSpecError):
        EstimateRequest(process=spec, n=4, replicas=10, master_seed=0)  # no R/epsilon
    with pytest.raises(InvalidSpecError):
        EstimateRequest(process=spec, n=4, replicas=10, master_seed=0, R=1.0, epsilon=0.1)
    with pytest.raises(InvalidSpecError):
        EstimateRequest(process=spec, n=4, replicas=0, master_seed=0, R=1.0)


def test_epsilon_radius_resolution():
    req = EstimateRequest(process=_srw1d_spec(100), n=100, replicas=10,
                          master_seed=0, epsilon=0.1)
    assert req.radius == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# graph-mode estimates


def test_graph_mode_bipartite_parity():
    # odd t, ball radius < 1: the event {Z_t = Z_0} is impossible by parity
    proc = GraphWalkProcess(graph=cycle(4), mode="graph")
    req = EstimateRequest(process=proc, n=3, replicas=2000, master_seed=9, epsilon=0.3)
    assert req.radius < 1.0
    assert estimate_smallball(req).p_hat == 0.0


def test_graph_mode_lattice_matches_dp():
    proc = GraphWalkProcess(graph=lattice(2), mode="graph")
    req = EstimateRequest(process=proc, n=4, replicas=100_000, master_seed=21, R=1.0)
    est = estimate_smallball(req)
    exact = exact_lattice_smallball(2, 4, 1.0, metric="graph")
    assert est.ci_low <= exact <= est.ci_high


def test_embedded_mode_cycle8():
    proc = GraphWalkProcess(graph=cycle(8), mode="embedded")
    req = EstimateRequest(process=proc, n=4, replicas=5000, master_seed=2, R=100.0)
    assert estimate_smallball(req).p_hat == 1.0
    req = EstimateRequest(process=proc, n=10, replicas=10, master_seed=2, R=1.0)
    from smallball.errors import HorizonExceededError

    with pytest.raises(HorizonExceededError):
        estimate_smallball(req)


def test_embedded_lattice_uses_euclidean_metric():
    proc = GraphWalkProcess(graph=lattice(2), mode="embedded")
    req = EstimateRequest(process=proc, n=2, replicas=200_000, master_seed=31,
                          R=math.sqrt(2.0))
    est = estimate_smallball(req)
    exact = exact_lattice_smallball(2, 2, math.sqrt(2.0), metric="euclidean")
    assert est.ci_low <= exact <= est.ci_high


# ---------------------------------------------------------------------------
# corridor probability


def test_corridor_srw_n4_exact_enumeration():
    # brute force the 16 sign paths against the corridor event
    paths = np.cumsum(enumerate_sign_paths(4), axis=1)
    hits = 0
    for row in paths:
        walk = np.concatenate([[0.0], row])
        ok = abs(walk[4]) <= 1.0 and all(
            abs(walk[4 - t]) <= t**0.625 + 1.0 for t in range(5)
        )
        hits += ok
    expected = hits / 16.0
    assert expected == 0.375  # all returning paths satisfy the corridor
    est = corridor_probability(_srw1d_spec(4), 1.0, 4, 100_000, 13)
    assert est.ci_low <= expected <= est.ci_high
    assert est.bound_value == pytest.approx(0.5, abs=1e-12)  # 1/sqrt(4), informative


def test_corridor_spiral_zero():
    spec = MartingaleSpec.unit(Tangential(), 100, dim=2)
    est = corridor_probability(spec, 1.0, 100, 2000, 3)
    assert est.p_hat == 0.0
    assert est.bound_value == pytest.approx(0.1, abs=1e-12)


def test_corridor_trivial_n0():
    spec = MartingaleSpec.unit(FixedAxis(0), 4, dim=2, x0=(0.5, 0.0))
    est = corridor_probability(spec, 1.0, 0, 100, 0)
    assert est.p_hat == 1.0


def test_corridor_matches_indicator_on_paths():
    from smallball import rng
    from smallball.bounds import corridor_indicator
    from smallball.martingale import simulate_batch, simulate_path

    spec = MartingaleSpec.unit(standard_suite(12)["time-switched"], 12, dim=2)
    bits = rng.coin_bit_matrix(55, 0, 64, 12)
    res = simulate_batch(spec, 12, bits, corridor_lambda=1.5)
    for i in range(64):
        path = simulate_path(spec, 12, rng.seed_sequence(55, i))
        assert corridor_indicator(path, 1.5) == bool(res.corridor_ok[i])


# ---------------------------------------------------------------------------
# scaling studies


def test_scaling_study_rows_and_exact():
    proc = GraphWalkProcess(graph=lattice(2), mode="graph")
    study = scaling_study(proc, [0.5], [1.0], replicas=20_000, master_seed=17)
    assert len(study.rows) == 2  # monte-carlo row + exact-dp row
    mc, dp = study.rows
    assert mc.method == "monte-carlo" and dp.method == "exact-dp"
    assert mc.t == 4 and dp.t == 4
    assert dp.p_hat == pytest.approx(exact_lattice_smallball(2, 4, 0.5 * 2.0), rel=1e-12)
    assert study.c_hat >= dp.p_hat / 0.5


def test_scaling_lattice1_local_clt_constant():
    proc = GraphWalkProcess(graph=lattice(1), mode="graph")
    study = scaling_study(proc, [0.1], [1.0], replicas=50_000, master_seed=23)
    dp = [r for r in study.rows if r.method == "exact-dp"][0]
    assert dp.t == 100
    exact = math.comb(100, 50) / 2.0**100
    assert dp.p_hat == pytest.approx(exact, rel=1e-12)
    assert dp.ratio == pytest.approx(exact / 0.1, rel=1e-12)
    mc = [r for r in study.rows if r.method == "monte-carlo"][0]
    assert mc.ci_low <= exact <= mc.ci_high


def test_scaling_validation():
    proc = GraphWalkProcess(graph=lattice(1), mode="graph")
    with pytest.raises(InvalidSpecError):
        scaling_study(proc, [0.0], [1.0], 10, 0)
    with pytest.raises(InvalidSpecError):
        scaling_study(proc, [0.5], [0.5], 10, 0)  # t would violate t >= 1/eps^2


# ---------------------------------------------------------------------------
# calibration: MC intervals cover the DP value


def test_wilson_coverage_calibration():
    exact = exact_lattice_smallball(1, 16, 1.0)
    covered = 0
    trials = 100
    for i in range(trials):
        req = EstimateRequest(process=_srw1d_spec(16), n=16, replicas=2000,
                              master_seed=1000 + i, R=1.0)
        est = estimate_smallball(req)
        covered += est.ci_low <= exact <= est.ci_high
    assert covered >= 98


# ---------------------------------------------------------------------------
# output formats


def test_csv_fixed_header_and_roundtrip():
    req = EstimateRequest(process=_srw1d_spec(4), n=4, replicas=1000, master_seed=7, R=1.0)
    est = estimate_smallball(req)
    row = record_from_estimate(est, n=4, R=1.0, seed=7)
    text = records_to_csv([row], provenance={"seed": 7, "replicas": 1000, "method": est.method})
    lines = text.strip().split("\n")
    assert lines[0].startswith("# provenance: ")
    assert lines[1] == "epsilon,t,n,R,p_hat,ci_low,ci_high,ratio,method,bound_value"
    fields = lines[2].split(",")
    assert fields[2] == "4" and float(fields[4]) == est.p_hat
    # identical inputs give identical bytes
    assert text == records_to_csv([row], provenance={"seed": 7, "replicas": 1000, "method": est.method})


def test_jsonl_records_carry_provenance():
    import json

    req = EstimateRequest(process=_srw1d_spec(4), n=4, replicas=1000, master_seed=7, R=1.0)
    est = estimate_smallball(req)
    row = record_from_estimate(est, n=4, R=1.0, seed=7)
    parsed = json.loads(records_to_jsonl([row]).strip())
    assert parsed["seed"] == 7 and parsed["replicas"] == 1000 and parsed["method"] == "monte-carlo"
