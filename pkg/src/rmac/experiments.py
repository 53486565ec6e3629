"""Experiment driver: scenario specs, sweeps, replicate statistics, file IO.

A JSON spec describes one original game, one or more counterfactual variants,
a type distribution, and the epsilon/mode/replicate sweep. ``run`` fans the
sweep cells out over a worker pool (each cell fully determined by its derived
seed), emits one CSV row per (epsilon, mode, replicate, counterfactual), and
writes a self-contained per-run JSON next to the CSV. Re-running an identical
spec reproduces byte-identical CSV bodies apart from the wall_time_ms column.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, PairMixture
from .datagen import Scenario, StrategyMap, equilibrium_strategy, generate_dataset
from .dists import FiniteDistribution, point_mass, uniform
from .mechanisms import (
    MechanismSpec,
    ValuationSpec,
    mechanism_from_json,
    mechanism_to_json,
    valuation_of_mixture,
)
from .revelation import regret_table
from .rfp import MODES, RfpConfig, RfpResult, rfp_solve
from .rng import derive_seed
from .spaces import Grid

SCHEMA_VERSION = 1

RESULT_COLUMNS = [
    "scenario", "counterfactual_tag", "valuation", "epsilon", "mode", "replicate",
    "seed", "v_value", "v_original", "delta_v", "iterations", "converged",
    "max_revelation_loss", "eps_gen", "wall_time_ms",
]

SUMMARY_COLUMNS = [
    "scenario", "counterfactual_tag", "valuation", "epsilon", "mode", "n",
    "v_mean", "v_std", "v_p10", "v_p90",
    "delta_mean", "delta_std", "delta_p10", "delta_p90",
]

_TOP_LEVEL_FIELDS = {
    "schema_version", "name", "original", "counterfactual", "counterfactuals",
    "type_distribution", "n_data", "valuation", "epsilons", "modes",
    "replicates", "base_seed", "solver", "outputs",
}

_SOLVER_FIELDS = {"max_iters", "conv_tol", "conv_window", "mc_samples", "cert_tol"}


class SpecValidationError(ValueError):
    """All schema violations of a spec file, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid experiment spec:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    original: MechanismSpec
    counterfactuals: tuple[tuple[str, MechanismSpec], ...]
    type_distribution: FiniteDistribution
    n_data: int
    valuation: str
    epsilons: tuple[float, ...]
    modes: tuple[str, ...]
    replicates: int
    base_seed: int
    solver: dict
    outputs: str

    def scenario(self, tag_idx: int) -> Scenario:
        tag, cf = self.counterfactuals[tag_idx]
        return Scenario(self.name, self.original, cf, self.type_distribution, self.n_data)


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    counterfactual_tag: str
    valuation: str
    epsilon: float
    mode: str
    replicate: int
    seed: int
    v_value: float
    v_original: float
    delta_v: float
    iterations: int
    converged: bool
    max_revelation_loss: float
    eps_gen: float
    wall_time_ms: float

    def as_csv_values(self) -> list[str]:
        return [
            self.scenario, self.counterfactual_tag, self.valuation,
            repr(self.epsilon), self.mode, str(self.replicate), str(self.seed),
            repr(self.v_value), repr(self.v_original), repr(self.delta_v),
            str(self.iterations), "true" if self.converged else "false",
            repr(self.max_revelation_loss), repr(self.eps_gen),
            repr(self.wall_time_ms),
        ]


def _type_dist_from_json(d: dict, space, errors: list[str]) -> FiniteDistribution | None:
    kind = d.get("kind")
    if kind == "uniform":
        return uniform(space)
    if kind == "point_mass":
        value = d.get("value")
        if isinstance(space, Grid):
            if not isinstance(value, (int, float)):
                errors.append("type_distribution.point_mass needs a numeric 'value' on a grid")
                return None
            return point_mass(space, space.nearest_index(float(value)))
        try:
            return point_mass(space, space.index_of(str(value)))
        except KeyError:
            errors.append(f"type_distribution.point_mass value {value!r} not in the type space")
            return None
    if kind == "weights":
        w = d.get("weights")
        if not isinstance(w, list) or len(w) != len(space):
            errors.append(f"type_distribution.weights must list {len(space)} weights")
            return None
        return FiniteDistribution(space, np.asarray(w, dtype=float))
    errors.append(f"unknown type_distribution kind {kind!r}")
    return None


def _type_dist_to_json(F: FiniteDistribution) -> dict:
    w = F.weights
    if np.allclose(w, w[0]):
        return {"kind": "uniform"}
    sup = F.support()
    if len(sup) == 1:
        v = F.space.value(int(sup[0]))
        return {"kind": "point_mass", "value": v}
    return {"kind": "weights", "weights": [float(x) for x in w]}


def spec_from_dict(raw: dict) -> ExperimentSpec:
    """Validate a raw spec dict strictly; all violations are enumerated."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise SpecValidationError(["spec must be a JSON object"])
    unknown = sorted(set(raw) - _TOP_LEVEL_FIELDS)
    for f in unknown:
        errors.append(f"unknown field {f!r}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version must be {SCHEMA_VERSION}")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        errors.append("name must be a nonempty string")
        name = "unnamed"

    original = None
    try:
        original = mechanism_from_json(raw.get("original") or {})
    except (ValueError, KeyError, TypeError) as exc:
        errors.append(f"original: {exc}")

    cf_raw = raw.get("counterfactuals")
    if cf_raw is None and "counterfactual" in raw:
        cf_raw = [dict(raw["counterfactual"], tag=raw["counterfactual"].get("tag", "cf"))]
    counterfactuals: list[tuple[str, MechanismSpec]] = []
    if not isinstance(cf_raw, list) or not cf_raw:
        errors.append("counterfactuals must be a nonempty list")
    else:
        seen = set()
        for i, entry in enumerate(cf_raw):
            if not isinstance(entry, dict):
                errors.append(f"counterfactuals[{i}] must be an object")
                continue
            tag = entry.get("tag", f"cf{i}")
            if tag in seen:
                errors.append(f"duplicate counterfactual tag {tag!r}")
            seen.add(tag)
            body = {k: v for k, v in entry.items() if k != "tag"}
            try:
                counterfactuals.append((tag, mechanism_from_json(body)))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(f"counterfactuals[{i}] ({tag}): {exc}")

    n_data = raw.get("n_data")
    if not isinstance(n_data, int) or n_data < 2:
        errors.append("n_data must be an integer >= 2")
        n_data = 2

    F = None
    if original is not None:
        td = raw.get("type_distribution")
        if not isinstance(td, dict):
            errors.append("type_distribution must be an object")
        else:
            F = _type_dist_from_json(td, original.type_space, errors)

    valuation = raw.get("valuation")
    if valuation is None:
        errors.append("valuation is required")
    elif original is not None and counterfactuals:
        for mech in [original] + [cf for _, cf in counterfactuals]:
            try:
                ValuationSpec(valuation, mech)
            except ValueError as exc:
                errors.append(f"valuation {valuation!r}: {exc}")
                break

    epsilons = raw.get("epsilons")
    if (not isinstance(epsilons, list) or not epsilons
            or any(not isinstance(e, (int, float)) or e < 0 for e in epsilons)):
        errors.append("epsilons must be a nonempty list of reals >= 0")
        epsilons = [0.0]
    elif any(b < a for a, b in zip(epsilons, epsilons[1:])):
        errors.append("epsilons must be sorted ascending")

    modes = raw.get("modes")
    if (not isinstance(modes, list) or not modes
            or any(m not in MODES for m in modes) or len(set(modes)) != len(modes)):
        errors.append(f"modes must be a nonempty duplicate-free subset of {list(MODES)}")
        modes = ["point"]

    replicates = raw.get("replicates")
    if not isinstance(replicates, int) or replicates < 1:
        errors.append("replicates must be an integer >= 1")
        replicates = 1

    base_seed = raw.get("base_seed")
    if not isinstance(base_seed, int):
        errors.append("base_seed must be an integer")
        base_seed = 0

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        errors.append("solver must be an object")
        solver = {}
    else:
        for f in sorted(set(solver) - _SOLVER_FIELDS):
            errors.append(f"unknown solver field {f!r}")

    outputs = raw.get("outputs", "results")
    if not isinstance(outputs, str):
        errors.append("outputs must be a string path")
        outputs = "results"

    if errors or original is None or F is None or not counterfactuals:
        raise SpecValidationError(errors or ["spec is incomplete"])
    if original.n_types != counterfactuals[0][1].n_types:
        raise SpecValidationError(["original and counterfactual games must share a type space"])
    return ExperimentSpec(
        name=name, original=original, counterfactuals=tuple(counterfactuals),
        type_distribution=F, n_data=n_data, valuation=valuation,
        epsilons=tuple(float(e) for e in epsilons), modes=tuple(modes),
        replicates=replicates, base_seed=base_seed, solver=dict(solver),
        outputs=outputs,
    )


def parse_spec(path: str | Path) -> ExperimentSpec:
    p = Path(path)
    if not p.exists():
        raise SpecValidationError([f"spec file not found: {p}"])
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SpecValidationError([f"invalid JSON at line {exc.lineno}: {exc.msg}"]) from exc
    return spec_from_dict(raw)


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------

def _solver_config(spec: ExperimentSpec, Gp: MechanismSpec, eps: float, mode: str,
                   seed: int) -> RfpConfig:
    kw = dict(spec.solver)
    return RfpConfig(epsilon=eps, mode=mode, v_spec=ValuationSpec(spec.valuation, Gp),
                     seed=seed, **kw)


def _baseline_mixture(point: RfpResult, D: Dataset, G: MechanismSpec) -> PairMixture:
    """Estimated-type mixture paired with the logged actions (common baseline)."""
    counts = np.zeros((G.n_types, G.n_actions))
    for j, mix in enumerate(point.mixtures):
        d_j = D.entries[j]
        for (t, _a), k in mix.items():
            counts[t, d_j] += k
    return PairMixture(counts, total=point.rounds * len(point.mixtures))


def run_cell(spec: ExperimentSpec, rep: int, tag_idx: int,
             strategy: StrategyMap | None = None):
    """All runs for one (replicate, counterfactual) cell.

    Returns (rows, payloads): payloads are (filename, json dict) pairs for the
    per-run result files. The point-mode run doubles as the delta baseline and
    is computed once regardless of the requested epsilon list.
    """
    tag, Gp = spec.counterfactuals[tag_idx]
    G = spec.original
    if strategy is None:
        strategy = equilibrium_strategy(G, spec.type_distribution)
    data_seed = derive_seed(spec.base_seed, "data", rep)
    D = generate_dataset(spec.scenario(tag_idx), data_seed, strategy=strategy)
    table = regret_table(G, D)

    point_seed = derive_seed(spec.base_seed, "solve", tag, "point", rep)
    point_cfg = _solver_config(spec, Gp, 0.0, "point", point_seed)
    point_res = rfp_solve(point_cfg, G, Gp, D, table=table)
    v_original = float(valuation_of_mixture(
        ValuationSpec(spec.valuation, G), _baseline_mixture(point_res, D, G)))

    rows: list[ResultRow] = []
    payloads: list[tuple[str, dict]] = []

    def emit(eps: float, mode: str, res: RfpResult) -> None:
        rows.append(ResultRow(
            scenario=spec.name, counterfactual_tag=tag, valuation=spec.valuation,
            epsilon=eps, mode=mode, replicate=rep, seed=res.seed,
            v_value=res.v_value, v_original=v_original,
            delta_v=res.v_value - v_original, iterations=res.iterations,
            converged=res.converged,
            max_revelation_loss=res.certification.max_loss,
            eps_gen=strategy.eps_gen,
            wall_time_ms=res.wall_time_s * 1000.0,
        ))
        fname = f"{spec.name}_{tag}_{eps!r}_{mode}_{rep}.json"
        payloads.append((fname, _run_json(spec, tag, Gp, eps, mode, rep, data_seed,
                                          D, strategy, res, v_original)))

    for eps in spec.epsilons:
        for mode in spec.modes:
            if mode == "point":
                emit(eps, mode, point_res)
                continue
            seed = derive_seed(spec.base_seed, "solve", tag, mode, rep,
                               repr(float(eps)))
            try:
                cfg = _solver_config(spec, Gp, float(eps), mode, seed)
                res = rfp_solve(cfg, G, Gp, D, table=table)
            except Exception as exc:  # record the failure, keep sweeping
                rows.append(ResultRow(
                    scenario=spec.name, counterfactual_tag=tag,
                    valuation=spec.valuation, epsilon=eps, mode=mode,
                    replicate=rep, seed=seed, v_value=float("nan"),
                    v_original=v_original, delta_v=float("nan"),
                    iterations=0, converged=False,
                    max_revelation_loss=float("nan"),
                    eps_gen=strategy.eps_gen, wall_time_ms=0.0))
                payloads.append((f"{spec.name}_{tag}_{eps!r}_{mode}_{rep}_error.json",
                                 {"error": f"{type(exc).__name__}: {exc}"}))
                continue
            emit(eps, mode, res)
    return rows, payloads


def _run_json(spec, tag, Gp, eps, mode, rep, data_seed, D, strategy, res, v_original) -> dict:
    G = spec.original

    def space_vals(space):
        return [float(v) for v in space.values] if isinstance(space, Grid) else list(space.labels)

    true_types = None
    if D.true_types is not None:
        true_types = [
            (float(G.type_space.value(t)) if isinstance(G.type_space, Grid)
             else G.type_space.value(t))
            for t in D.true_types
        ]
    est = res.estimated_types
    if isinstance(Gp.type_space, Grid):
        estimated = [float(x) for x in est]
    else:
        estimated = [Gp.type_space.value(int(x)) for x in est]
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": spec.name,
        "counterfactual_tag": tag,
        "valuation": spec.valuation,
        "epsilon": eps,
        "mode": mode,
        "replicate": rep,
        "data_seed": data_seed,
        "eps_gen": strategy.eps_gen,
        "original": mechanism_to_json(G),
        "counterfactual": mechanism_to_json(Gp),
        "type_distribution": _type_dist_to_json(spec.type_distribution),
        "n_data": spec.n_data,
        "dataset_actions": list(D.entries),
        "dataset_true_types": list(D.true_types) if D.true_types else None,
        "type_values": space_vals(Gp.type_space),
        "action_values": space_vals(Gp.action_space),
        "estimated_types": estimated,
        "true_type_values": true_types,
        "v_original": v_original,
        "result": res.to_json_dict(),
    }


def _cell_worker(args):
    spec, rep, tag_idx = args
    return run_cell(spec, rep, tag_idx)


def run(spec: ExperimentSpec, out_dir: str | Path, jobs: int = 1,
        trace: bool = False) -> list[ResultRow]:
    """Execute the sweep; rows and per-run JSON files land under ``out_dir``.

    Cells (replicate x counterfactual) are independent given their derived
    seeds; with jobs > 1 they run on a process pool and are written back in
    canonical order, so the CSV body is identical at any worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(rep, tag_idx)
             for tag_idx in range(len(spec.counterfactuals))
             for rep in range(spec.replicates)]
    all_rows: list[ResultRow] = []
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        fh.flush()

        def consume(rows, payloads):
            for fname, payload in payloads:
                (out / fname).write_text(json.dumps(payload))
                if trace and "result" in payload:
                    tname = fname.rsplit(".", 1)[0] + "_trace.csv"
                    with open(out / tname, "w", newline="") as tfh:
                        tw = csv.writer(tfh)
                        tw.writerow(["iteration", "v"])
                        for i, v in enumerate(payload["result"]["v_trace"]):
                            tw.writerow([i, repr(v)])
            for row in rows:
                writer.writerow(row.as_csv_values())
                all_rows.append(row)
            fh.flush()

        if jobs <= 1:
            strategy = equilibrium_strategy(spec.original, spec.type_distribution)
            for rep, tag_idx in cells:
                rows, payloads = run_cell(spec, rep, tag_idx, strategy=strategy)
                consume(rows, payloads)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_cell_worker, (spec, rep, tag_idx))
                           for rep, tag_idx in cells]
                for fut in futures:  # in submission order, not completion order
                    rows, payloads = fut.result()
                    consume(rows, payloads)
    write_summary(all_rows, out / "summary.csv")
    return all_rows


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def summarize(rows: list[ResultRow]) -> list[dict]:
    """Replicate statistics per (scenario, tag, valuation, epsilon, mode).

    Percentiles use linear interpolation between closest ranks (numpy's
    default convention).
    """
    groups: dict[tuple, list[ResultRow]] = {}
    order: list[tuple] = []
    for row in rows:
        key = (row.scenario, row.counterfactual_tag, row.valuation, row.epsilon, row.mode)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in sorted(order):
        rs = groups[key]
        v = np.array([r.v_value for r in rs])
        d = np.array([r.delta_v for r in rs])
        out.append({
            "scenario": key[0], "counterfactual_tag": key[1], "valuation": key[2],
            "epsilon": key[3], "mode": key[4], "n": len(rs),
            "v_mean": float(v.mean()),
            "v_std": float(v.std(ddof=1)) if len(rs) > 1 else 0.0,
            "v_p10": float(np.percentile(v, 10)),
            "v_p90": float(np.percentile(v, 90)),
            "delta_mean": float(d.mean()),
            "delta_std": float(d.std(ddof=1)) if len(rs) > 1 else 0.0,
            "delta_p10": float(np.percentile(d, 10)),
            "delta_p90": float(np.percentile(d, 90)),
        })
    return out


def write_summary(rows: list[ResultRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summarize(rows):
            w.writerow([
                s["scenario"], s["counterfactual_tag"], s["valuation"],
                repr(s["epsilon"]), s["mode"], str(s["n"]),
                repr(s["v_mean"]), repr(s["v_std"]), repr(s["v_p10"]), repr(s["v_p90"]),
                repr(s["delta_mean"]), repr(s["delta_std"]),
                repr(s["delta_p10"]), repr(s["delta_p90"]),
            ])


def read_results_csv(path: str | Path) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                scenario=rec["scenario"], counterfactual_tag=rec["counterfactual_tag"],
                valuation=rec["valuation"], epsilon=float(rec["epsilon"]),
                mode=rec["mode"], replicate=int(rec["replicate"]), seed=int(rec["seed"]),
                v_value=float(rec["v_value"]), v_original=float(rec["v_original"]),
                delta_v=float(rec["delta_v"]), iterations=int(rec["iterations"]),
                converged=rec["converged"] == "true",
                max_revelation_loss=float(rec["max_revelation_loss"]),
                eps_gen=float(rec["eps_gen"]), wall_time_ms=float(rec["wall_time_ms"]),
            ))
    return rows


# ---------------------------------------------------------------------------
# re-verification of stored runs
# ---------------------------------------------------------------------------

def verify_result_file(path: str | Path) -> tuple[bool, str]:
    """Re-certify a per-run JSON from scratch; returns (ok, message)."""
    from .rfp import certify_mixtures

    payload = json.loads(Path(path).read_text())
    G = mechanism_from_json(payload["original"])
    Gp = mechanism_from_json(payload["counterfactual"])
    D = Dataset(tuple(payload["dataset_actions"]),
                tuple(payload["dataset_true_types"]) if payload.get("dataset_true_types") else None)
    res = payload["result"]
    mixtures = [
        {(int(t), int(a)): int(k) for t, a, k in mix} for mix in res["mixtures"]
    ]
    eps = res["config"]["epsilon"] if res["config"]["mode"] != "point" else 0.0
    cert_tol = res["config"].get("cert_tol", 1e-6)
    report = certify_mixtures(mixtures, G, Gp, D, eps, cert_tol)
    if report.passed:
        return True, (f"certified: max revelation loss {report.max_loss:.3e} "
                      f"<= eps {eps} + tol {cert_tol}")
    return False, (f"certification FAILED: max loss {report.max_loss:.6g} > eps {eps} "
                   f"+ tol {cert_tol}; offending players {report.offenders[:10]}")
