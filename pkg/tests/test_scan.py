import json
import math

import numpy as np
import pytest

from ppsmeter.config import GRange, RunConfig
from ppsmeter.errors import NoConvergence
from ppsmeter.scan import (
    METRIC_COLUMNS,
    OBJECTIVES,
    READOUT_COLUMNS,
    grid_seed,
    refine_extremum,
    scan_angles,
    scan_g,
    search_maximum,
    worker_count,
)
from ppsmeter.stern_gerlach import sg_momentum_max, sg_position_max

SG = {"delta": 1.0, "g": 0.01}


def test_worker_count(monkeypatch):
    monkeypatch.setenv("PPSMETER_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("PPSMETER_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("PPSMETER_THREADS", "many")
    assert worker_count() >= 1


def test_row_count_and_order():
    cfg = RunConfig(g=0.01, theta_steps=7, phi_steps=5)
    table = scan_angles(cfg, READOUT_COLUMNS)
    assert len(table) == 35
    theta, phi = table.axis_values()
    assert theta[0] == theta[4] == 0.0 and theta[5] > 0  # theta-major
    assert phi[1] > phi[0]


def test_fig1_argmax():
    table = scan_angles(RunConfig(g=0.01, theta_steps=181, phi_steps=360), READOUT_COLUMNS)
    report = table.argmax_report()
    assert report["dp"]["theta"] == pytest.approx(math.pi / 2, abs=math.radians(2))
    assert report["dp"]["phi"] == pytest.approx(math.pi, abs=math.radians(2))
    assert report["dp"]["value"] / 0.01 == pytest.approx(50, rel=0.02)


def test_metric_columns_at_fig3_coupling():
    table = scan_angles(RunConfig(g=0.01, theta_steps=361, phi_steps=720), METRIC_COLUMNS)
    assert table.argmax("ip_2")[1] == pytest.approx(53.7, rel=0.01)
    assert table.argmax("ep_2")[1] == pytest.approx(28, rel=0.02)


def test_error_rows_are_flagged():
    table = scan_angles(RunConfig(g=1e-8, theta_steps=181, phi_steps=360), READOUT_COLUMNS)
    flagged = [i for i, e in enumerate(table.errors) if e]
    assert flagged
    assert all(table.errors[i] == "VanishingPostselection" for i in flagged)
    theta, phi = table.axis_values()
    i = 90 * 360 + 180
    assert (theta[i], phi[i]) == pytest.approx((math.pi / 2, math.pi))
    assert i in flagged
    # NaN appears only in flagged rows
    for col in READOUT_COLUMNS:
        nan_rows = set(np.flatnonzero(np.isnan(table.data[col])))
        assert nan_rows <= set(flagged)
    csv_rows = table.to_csv().splitlines()
    assert csv_rows[1 + i].endswith(",VanishingPostselection")
    assert len(csv_rows) == 1 + len(table)


def test_argmax_first_found():
    table = scan_angles(RunConfig(g=0.01, theta_steps=5, phi_steps=4), READOUT_COLUMNS)
    table.data["P"][:] = 0.25
    assert table.argmax("P") == (0, 0.25)


def test_csv_format():
    text = scan_angles(RunConfig(g=0.01, theta_steps=3, phi_steps=2), ["dp"]).to_csv()
    lines = text.split("\n")
    assert lines[0] == "theta,phi,dp,error"
    assert "\r" not in text and text.endswith("\n")
    assert lines[-2].startswith("3.1415926535897931,")


def test_json_envelope():
    cfg = RunConfig(g=0.01, theta_steps=3, phi_steps=4)
    env = json.loads(scan_angles(cfg, READOUT_COLUMNS).to_json())
    assert env["metadata"]["model"] == "stern-gerlach"
    assert env["metadata"]["delta"] == 1.0 and env["metadata"]["g"] == 0.01
    assert {"version", "timestamp"} <= set(env["metadata"])
    assert len(env["rows"]) == 12


def test_scan_g_fig2_limits():
    table = scan_g(RunConfig(g_range=GRange(1e-3, 10.0, 41)))
    gs = table.axes[0][1]
    ratio = table.data["dp_max_over_g"]
    assert ratio[0] == pytest.approx(1 / (2 * gs[0]), rel=1e-3)
    assert ratio[-1] == pytest.approx(1.0, rel=1e-12)
    assert table.data["dz_max"][0] == pytest.approx(1.0, rel=1e-3)
    assert table.data["dz_max"][-1] < 1e-80
    assert table.data["p_max_over_2d2g2"][0] == pytest.approx(1.0, rel=0.01)
    assert not any(table.errors)


def test_scan_g_linear():
    table = scan_g(RunConfig(g_range=GRange(0.1, 1.0, 10, "linear")))
    np.testing.assert_allclose(np.diff(table.axes[0][1]), 0.1, rtol=1e-12)


def test_refine_sg_momentum():
    res = search_maximum("sg.dp", SG, math.radians(1))
    assert res.value == pytest.approx(sg_momentum_max(1.0, 0.01).dp_max, rel=1e-6)
    assert not res.flat


def test_refine_sg_position():
    res = search_maximum("sg.dz", SG, math.radians(1))
    assert res.value == pytest.approx(sg_position_max(1.0, 0.01).dz_max, rel=1e-6)


def test_refine_ip1():
    assert search_maximum("sg.ip_1", SG, math.radians(1)).value == pytest.approx(1.038, abs=0.005)


def test_grid_below_refined_below_closed_form():
    seed, seed_value = grid_seed("sg.dp", SG, math.radians(2))
    res = refine_extremum("sg.dp", seed, SG)
    closed = sg_momentum_max(1.0, 0.01).dp_max
    assert seed_value <= res.value <= closed + 1e-9


def test_flat_objective():
    params = {"delta": 1.0, "g": 0.1, "a1": 1.0, "a2": 1.0}
    res = refine_extremum("qubit.dp", (0.3, 0.2, 1.0, 0.5), params)
    assert res.flat
    assert res.argmax == (0.3, 0.2, 1.0, 0.5)
    assert res.value == pytest.approx(0.1)


def test_no_convergence():
    with pytest.raises(NoConvergence) as info:
        refine_extremum("sg.dp", (1.0, 3.0), SG, max_evals=5)
    assert info.value.best_value > 0
    assert len(info.value.best_point) == 2


def test_refine_rejects_bad_start():
    with pytest.raises(ValueError):
        refine_extremum("sg.dp", (4.0, 1.0), SG)
    with pytest.raises(ValueError):
        refine_extremum("sg.dp", (1.0,), SG)


def test_refine_stays_in_domain():
    res = refine_extremum("sg.P", (0.1, 0.1), SG)
    lo_hi = OBJECTIVES["sg.P"].bounds
    assert all(lo <= x <= hi for x, (lo, hi) in zip(res.argmax, lo_hi))
    assert res.value == pytest.approx((1 + math.exp(-2e-4)) / 2, rel=1e-10)


def test_qubit_objectives_agree_with_extremes():
    params = {"delta": 1.0, "g": 0.05, "a1": 1.0, "a2": -1.0}
    res = search_maximum("qubit.dp", params, math.radians(9))
    assert res.value == pytest.approx(sg_momentum_max(1.0, 0.05).dp_max, rel=1e-6)
