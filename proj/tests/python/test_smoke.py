import json
import math

import pytest

import robust_push as rp


def test_push_sum_reaches_average():
    t = rp.Topology.cycle(4, True)
    b = rp.FaultBounds(1, 0, 1, 1.0, 0.0)
    x0 = [1.0, 2.0, 3.0, 6.0]
    r = rp.push_sum(t, b, x0, 1, 300)
    last = r["z"][-4:]
    assert all(abs(v - 3.0) < 1e-9 for v in last)


def test_faulty_push_sum_verifies():
    t = rp.Topology.random(4, 0.5, seed=3)
    b = rp.FaultBounds(3, 3, 3, 0.5, 0.3)
    report = rp.verify_push_sum(t, b, [0.5, -1.0, 2.0, 4.0], 1, 200, seed=9)
    assert "sum_chi" in report
    assert all(first < 0 for (_, _, first) in report.values())


def test_quadratic_optimum_and_hinge():
    assert rp.quadratic_optimum([1.0, 3.0], [0.0, 4.0], 1) == pytest.approx([3.0])
    assert rp.smoothed_hinge(2.0) == 0.0
    assert rp.smoothed_hinge(-1.0) == pytest.approx(1.5)


def test_contraction_bound_constants():
    c = rp.contraction_bound(2, 2)
    assert 0.0 < c["lambda"] < 1.0
    assert not c["vacuous"]
    assert rp.contraction_bound(50, 17)["vacuous"]


def test_aggregation_median_of_two_batches():
    s = [float(k) for k in range(201)]
    out = rp.aggregate_series([s, [3 * v for v in s]], 1)
    assert out["k"] == [100, 200]
    assert out["median"] == [101.0, 301.0]


def test_rasgp_paired_run(tmp_path):
    cfg = {
        "topology": {"kind": "cycle", "n": 3, "bidirectional": True},
        "objective": {"kind": "quadratic", "mu": [1.0, 2.0, 3.0], "centers": [[0.0], [1.0], [2.0]]},
        "noise_width": 0.0,
        "horizon": 2000,
        "output_dir": str(tmp_path),
    }
    r = rp.rasgp(cfg)
    assert r["z_star"] == pytest.approx([8.0 / 6.0])
    assert len(r["e_dist"]) == 2001
    assert r["e_dist"][-1] < 1e-4
    assert all(math.isfinite(v) and v >= 0 for v in r["e_c"])


def test_config_errors_are_value_errors():
    with pytest.raises(ValueError):
        rp.rasgp(json.dumps({"horizon": 10, "unknown": 1}))
    with pytest.raises(ValueError):
        rp.FaultBounds(0, 0, 1)
