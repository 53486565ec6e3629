"""Figure builders.

Four kinds: ``bounds`` (ribbons between pessimistic/optimistic means against
the counterfactual variant, with a standard-error band around the point
estimate), ``types`` (estimated vs true type scatter per mode), ``strategies``
(type to mean counterfactual action curves with 10/90 percentile ribbons
across replicates), and ``sweep`` (value against epsilon per mode). Every
figure embeds the scenario name, epsilon list, and seed range in its caption.
Rendering is read-only over the inputs and overwrites outputs in place.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import load_runs, read_results, require_columns

FIGSIZE = (7.0, 4.6)
MODE_COLORS = {"point": "#333333", "pessimistic": "#b2182b", "optimistic": "#2166ac"}


@dataclass
class PlotJob:
    kind: str  # bounds | types | strategies | sweep
    results_csv: str | Path | None = None
    runs_dir: str | Path | None = None
    out_dir: str | Path = "figures"
    group_by: str = "counterfactual_tag"

    def __post_init__(self) -> None:
        if self.kind not in ("bounds", "types", "strategies", "sweep"):
            raise ValueError(f"unknown figure kind {self.kind!r}")


@dataclass
class PlotResult:
    paths: list[str]
    caption: str
    warnings: list[str] = field(default_factory=list)
    points: dict = field(default_factory=dict)


def _caption(scenarios, epsilons, seeds) -> str:
    eps = ", ".join(repr(e) for e in sorted(set(epsilons)))
    seeds = sorted(set(seeds))
    seed_txt = f"{seeds[0]}" if len(seeds) == 1 else f"{seeds[0]}..{seeds[-1]}"
    return (f"scenario={'/'.join(sorted(set(scenarios)))} | eps=[{eps}] | "
            f"seed={seed_txt}")


def _save(fig, out_dir: Path, stem: str, caption: str) -> list[str]:
    fig.text(0.01, 0.005, caption, fontsize=7, ha="left", va="bottom")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("png", "svg"):
        p = out_dir / f"{stem}.{ext}"
        fig.savefig(p, dpi=120)
        paths.append(str(p))
    plt.close(fig)
    return paths


def _tag_position(tag: str) -> float | None:
    m = re.search(r"(\d+(?:\.\d+)?)\s*$", tag)
    return float(m.group(1)) if m else None


def plot_bounds(job: PlotJob) -> PlotResult:
    """Pessimistic/optimistic ribbons per epsilon across counterfactuals."""
    rows = read_results(job.results_csv)
    require_columns(rows, ["mode", "epsilon", "v_value", job.group_by], job.results_csv)
    modes_present = {r["mode"] for r in rows}
    missing = {"pessimistic", "optimistic"} - modes_present
    if missing:
        raise ValueError(f"bounds figure needs both bound modes; absent: {sorted(missing)}")
    tags = sorted({r[job.group_by] for r in rows})
    pos = [_tag_position(t) for t in tags]
    xs = [p if p is not None else float(i) for i, p in enumerate(pos)]
    order = np.argsort(xs)
    xs = np.asarray(xs)[order]
    tags = [tags[i] for i in order]
    epsilons = sorted({r["epsilon"] for r in rows})

    def series(eps, mode, stat):
        vals = []
        for t in tags:
            grp = [r["v_value"] for r in rows
                   if r[job.group_by] == t and r["mode"] == mode and r["epsilon"] == eps]
            if not grp:
                vals.append(np.nan)
            elif stat == "mean":
                vals.append(float(np.mean(grp)))
            else:
                vals.append(float(np.std(grp, ddof=1) / np.sqrt(len(grp))) if len(grp) > 1 else 0.0)
        return np.asarray(vals)

    fig, ax = plt.subplots(figsize=FIGSIZE)
    points = {}
    for k, eps in enumerate(epsilons):
        pess = series(eps, "pessimistic", "mean")
        opt = series(eps, "optimistic", "mean")
        alpha = 0.18 + 0.5 * (k + 1) / len(epsilons)
        ax.fill_between(xs, pess, opt, alpha=min(alpha, 0.6), label=f"eps={eps!r}")
        points[eps] = {"pess": pess.tolist(), "opt": opt.tolist()}
    if "point" in modes_present:
        pt = series(epsilons[0], "point", "mean")
        se = series(epsilons[0], "point", "se")
        ax.plot(xs, pt, color=MODE_COLORS["point"], lw=1.5, label="point")
        ax.fill_between(xs, pt - se, pt + se, color="#999999", alpha=0.5)
        points["point"] = pt.tolist()
    ax.set_xlabel(job.group_by if any(p is None for p in pos) else "counterfactual parameter")
    ax.set_ylabel(rows[0]["valuation"])
    ax.legend(fontsize=8)
    caption = _caption([r["scenario"] for r in rows], epsilons, [r["seed"] for r in rows])
    paths = _save(fig, Path(job.out_dir), "bounds", caption)
    return PlotResult(paths, caption, points=points)


def plot_types(job: PlotJob) -> PlotResult:
    """Estimated vs true type scatter per mode, with the identity line."""
    runs = load_runs(job.runs_dir)
    warnings_, pts = [], {}
    used = []
    for payload in runs:
        true_vals = payload.get("true_type_values")
        if true_vals is None:
            warnings_.append(f"{payload['_path']}: no true types; skipped")
            continue
        est = payload.get("estimated_types")
        if est is None or isinstance(est[0], str) or isinstance(true_vals[0], str):
            warnings_.append(f"{payload['_path']}: non-numeric types; skipped")
            continue
        mode = payload["mode"]
        pts.setdefault(mode, [[], []])
        pts[mode][0].extend(float(t) for t in true_vals)
        pts[mode][1].extend(float(e) for e in est)
        used.append(payload)
    if not used:
        return PlotResult([], "", warnings_ or ["no usable runs"], {})
    fig, ax = plt.subplots(figsize=FIGSIZE)
    lo = min(min(v[0]) for v in pts.values())
    hi = max(max(v[0]) for v in pts.values())
    ax.plot([lo, hi], [lo, hi], "k--", lw=1, label="truth")
    for mode, (tv, ev) in sorted(pts.items()):
        ax.scatter(tv, ev, s=8, alpha=0.5, label=mode,
                   color=MODE_COLORS.get(mode, None))
    ax.set_xlabel("true type")
    ax.set_ylabel("estimated type")
    ax.legend(fontsize=8)
    caption = _caption([p["scenario"] for p in used],
                       [p["epsilon"] for p in used],
                       [p["result"]["seed"] for p in used])
    paths = _save(fig, Path(job.out_dir), "types", caption)
    return PlotResult(paths, caption, warnings_, {m: (v[0], v[1]) for m, v in pts.items()})


def _strategy_points(payload) -> tuple[np.ndarray, np.ndarray] | None:
    tv = payload.get("type_values")
    av = payload.get("action_values")
    if tv is None or av is None or isinstance(tv[0], str) or isinstance(av[0], str):
        return None
    tv = np.asarray(tv, dtype=float)
    av = np.asarray(av, dtype=float)
    xs, ys = [], []
    for mix in payload["result"]["mixtures"]:
        mix = np.asarray(mix, dtype=float)
        w = mix[:, 2]
        xs.append(float(tv[mix[:, 0].astype(int)] @ w / w.sum()))
        ys.append(float(av[mix[:, 1].astype(int)] @ w / w.sum()))
    return np.asarray(xs), np.asarray(ys)


def plot_strategies(job: PlotJob) -> PlotResult:
    """Type to mean counterfactual action, 10/90 ribbons across replicates."""
    runs = load_runs(job.runs_dir)
    warnings_ = []
    per_mode: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    used = []
    for payload in runs:
        got = _strategy_points(payload)
        if got is None:
            warnings_.append(f"{payload['_path']}: label spaces; skipped")
            continue
        per_mode.setdefault(payload["mode"], []).append(got)
        used.append(payload)
    if not used:
        return PlotResult([], "", warnings_ or ["no usable runs"], {})
    bins = np.linspace(0, 1, 21)
    centers = 0.5 * (bins[:-1] + bins[1:])
    fig, ax = plt.subplots(figsize=FIGSIZE)
    points = {}
    for mode, series in sorted(per_mode.items()):
        per_rep = []
        for xs, ys in series:
            idx = np.clip(np.digitize(xs, bins) - 1, 0, len(centers) - 1)
            curve = np.full(len(centers), np.nan)
            for b in range(len(centers)):
                sel = idx == b
                if sel.any():
                    curve[b] = ys[sel].mean()
            per_rep.append(curve)
        arr = np.asarray(per_rep)
        import warnings as _warnings

        with _warnings.catch_warnings():
            # bins with no players in any replicate stay NaN and are not drawn
            _warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(arr, axis=0)
            p10 = np.nanpercentile(arr, 10, axis=0)
            p90 = np.nanpercentile(arr, 90, axis=0)
        color = MODE_COLORS.get(mode, None)
        ax.plot(centers, mean, lw=1.6, label=mode, color=color)
        ax.fill_between(centers, p10, p90, alpha=0.25, color=color)
        points[mode] = {"mean": mean.tolist(), "p10": p10.tolist(), "p90": p90.tolist()}
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("estimated type")
    ax.set_ylabel("mean counterfactual action")
    ax.legend(fontsize=8)
    caption = _caption([p["scenario"] for p in used],
                       [p["epsilon"] for p in used],
                       [p["result"]["seed"] for p in used])
    paths = _save(fig, Path(job.out_dir), "strategies", caption)
    return PlotResult(paths, caption, warnings_, points)


def plot_sweep(job: PlotJob) -> PlotResult:
    """Value against epsilon, one line per mode, one panel per counterfactual."""
    rows = read_results(job.results_csv)
    require_columns(rows, ["mode", "epsilon", "v_value", job.group_by], job.results_csv)
    tags = sorted({r[job.group_by] for r in rows})
    modes = sorted({r["mode"] for r in rows})
    fig, axes = plt.subplots(1, len(tags), figsize=(FIGSIZE[0] * max(1, len(tags)) / 1.6, FIGSIZE[1]),
                             squeeze=False, sharey=True)
    points = {}
    for ax, tag in zip(axes[0], tags):
        for mode in modes:
            eps_vals = sorted({r["epsilon"] for r in rows
                               if r[job.group_by] == tag and r["mode"] == mode})
            means = [float(np.mean([r["v_value"] for r in rows
                                    if r[job.group_by] == tag and r["mode"] == mode
                                    and r["epsilon"] == e])) for e in eps_vals]
            ax.plot(eps_vals, means, marker="o", ms=3, label=mode,
                    color=MODE_COLORS.get(mode, None))
            points[(tag, mode)] = (eps_vals, means)
        ax.set_title(tag, fontsize=9)
        ax.set_xlabel("epsilon")
    axes[0][0].set_ylabel(rows[0]["valuation"])
    axes[0][-1].legend(fontsize=8)
    caption = _caption([r["scenario"] for r in rows],
                       [r["epsilon"] for r in rows], [r["seed"] for r in rows])
    paths = _save(fig, Path(job.out_dir), "sweep", caption)
    return PlotResult(paths, caption, points={str(k): v for k, v in points.items()})


def render(job: PlotJob) -> PlotResult:
    fn = {"bounds": plot_bounds, "types": plot_types,
          "strategies": plot_strategies, "sweep": plot_sweep}[job.kind]
    return fn(job)
