"""Smoke tests over golden fixtures (a frozen tiny auction sweep)."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from rmac_plots.figures import PlotJob, plot_bounds, plot_strategies, plot_sweep, plot_types

FIXTURES = Path(__file__).parent / "fixtures" / "out"


def job(kind, out_dir, **kw):
    return PlotJob(kind=kind, results_csv=FIXTURES / "results.csv",
                   runs_dir=FIXTURES, out_dir=out_dir, **kw)


def _check_outputs(result, tmp_path, stem):
    assert sorted(Path(p).suffix for p in result.paths) == [".png", ".svg"]
    for p in result.paths:
        assert Path(p).exists() and Path(p).stat().st_size > 0
    assert "scenario=fig_fixture" in result.caption
    assert "eps=[" in result.caption and "seed=" in result.caption


def test_bounds_renders_with_metadata(tmp_path):
    res = plot_bounds(job("bounds", tmp_path))
    _check_outputs(res, tmp_path, "bounds")
    # one ribbon per epsilon plus the point line
    assert set(res.points) == {0.0, 0.02, "point"}
    for eps in (0.0, 0.02):
        pess, opt = res.points[eps]["pess"], res.points[eps]["opt"]
        assert all(p <= o + 1e-9 for p, o in zip(pess, opt))


def test_bounds_requires_both_bound_modes(tmp_path):
    import csv

    trimmed = tmp_path / "trimmed.csv"
    with open(FIXTURES / "results.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    keep = [r for r in rows if r["mode"] != "optimistic"]
    with open(trimmed, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(keep)
    with pytest.raises(ValueError, match="optimistic"):
        plot_bounds(PlotJob(kind="bounds", results_csv=trimmed,
                            runs_dir=FIXTURES, out_dir=tmp_path))


def test_types_scatter_pessimistic_below_diagonal(tmp_path):
    # restrict to the identity-reserve counterfactual (the Fig-3 analogue)
    res = plot_types(PlotJob(kind="types", runs_dir=FIXTURES, out_dir=tmp_path))
    _check_outputs(res, tmp_path, "types")
    sub = tmp_path / "sub"
    sub.mkdir()
    for f in FIXTURES.glob("fig_fixture_sp_r0.0_0.02_pessimistic_*.json"):
        shutil.copy(f, sub / f.name)
    res_p = plot_types(PlotJob(kind="types", runs_dir=sub, out_dir=tmp_path / "p"))
    true_vals, est_vals = res_p.points["pessimistic"]
    assert len(true_vals) > 0
    assert all(e <= t + 1e-9 for t, e in zip(true_vals, est_vals))


def test_types_skips_runs_without_truth(tmp_path):
    sub = tmp_path / "noTruth"
    sub.mkdir()
    f = next(FIXTURES.glob("*point_0.json"))
    payload = json.loads(f.read_text())
    payload["true_type_values"] = None
    (sub / f.name).write_text(json.dumps(payload))
    res = plot_types(PlotJob(kind="types", runs_dir=sub, out_dir=tmp_path / "o"))
    assert res.paths == []
    assert len(res.warnings) == 1


def test_strategies_ribbons(tmp_path):
    res = plot_strategies(job("strategies", tmp_path))
    _check_outputs(res, tmp_path, "strategies")
    for mode, curves in res.points.items():
        assert len(curves["mean"]) == 20


def test_strategies_high_reserve_has_wider_low_type_band(tmp_path):
    def band_width(tag):
        sub = tmp_path / tag
        sub.mkdir()
        for f in FIXTURES.glob(f"fig_fixture_{tag}_0.02_*istic_*.json"):
            shutil.copy(f, sub / f.name)
        res = plot_strategies(PlotJob(kind="strategies", runs_dir=sub,
                                      out_dir=tmp_path / f"o{tag}"))
        import numpy as np

        lo_bins = slice(0, 8)  # types below the 0.5 reserve
        widths = []
        for mode in ("pessimistic", "optimistic"):
            arr_hi = np.array(res.points[mode]["p90"][lo_bins])
            arr_lo = np.array(res.points[mode]["p10"][lo_bins])
            sel = ~np.isnan(arr_hi)
            widths.append(float(np.nanmean(arr_hi[sel] - arr_lo[sel])))
        return max(widths)

    assert band_width("sp_r0.5") >= band_width("sp_r0.0") - 1e-9


def test_sweep_renders(tmp_path):
    res = plot_sweep(job("sweep", tmp_path))
    _check_outputs(res, tmp_path, "sweep")


def test_single_replicate_zero_width_band(tmp_path):
    sub = tmp_path / "single"
    sub.mkdir()
    f = next(FIXTURES.glob("*sp_r0.0_0.02_pessimistic_0.json"))
    shutil.copy(f, sub / f.name)
    res = plot_strategies(PlotJob(kind="strategies", runs_dir=sub, out_dir=tmp_path / "o"))
    import numpy as np

    pts = res.points["pessimistic"]
    sel = ~np.isnan(np.array(pts["mean"]))
    assert np.allclose(np.array(pts["p10"])[sel], np.array(pts["p90"])[sel])


def test_cli_end_to_end(tmp_path):
    cmd = [sys.executable, "-m", "rmac_plots.cli", "bounds",
           "--in", str(FIXTURES), "--out", str(tmp_path)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "bounds.png").exists()
    assert (tmp_path / "bounds.svg").exists()


def test_cli_bad_kind_fails():
    cmd = [sys.executable, "-m", "rmac_plots.cli", "nope", "--in", "x", "--out", "y"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode != 0
