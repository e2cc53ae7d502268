"""Scenario runner and verification CLI.

``sfcalc run <scenario.json>`` executes the engines and index solver a
scenario requests, writes one CSV row per engine and s-grid point plus a
human-readable run log, and exits 0 only when every agreement assertion in
the scenario holds.  ``sfcalc verify <suite>`` runs the seeded property
suites.  Scenario documents are the reproducibility unit: identical
scenario and seed give identical result values.
"""

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .apsindex import SuspensionProblem, aps_index
from .engines import CHI_PROFILES, sf_appendix, sf_crossing, sf_integral, sf_phillips
from .errors import NumericError, SfcalcError, ValidationError
from .generators import (involution_path, random_block_model, random_path,
                         rng_from_seed, single_crossing_path)
from .geometry import standard_metric_paths, trivialized_path, engine_model
from .path import OperatorPath, flatten_endpoints
from .tracemodel import AffineSymbol, BlockHermitian, FrequencyModel, WeightedBlockModel
from .verify import SUITES, format_table, run_suite

CSV_COLUMNS = ("scenario", "engine", "parameter_s", "value",
               "error_estimate", "runtime_ms", "seed")
SCHEMA_VERSION = 1
ENGINES = ("crossing", "phillips", "integral", "appendix")


class ScenarioError(ValidationError):
    pass


@dataclass
class RunRecord:
    """Everything one scenario run produced."""

    scenario: str
    engine_results: dict = field(default_factory=dict)
    aps_index: float = None
    agreement: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__
    seed: object = None
    assertion_failures: list = field(default_factory=list)


def _require(cond, message):
    if not cond:
        raise ScenarioError(message)


def load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    validate_scenario(doc)
    return doc


def validate_scenario(doc):
    _require(isinstance(doc, dict), "scenario must be a JSON object")
    _require(doc.get("schema") == SCHEMA_VERSION,
             f"field 'schema' must equal {SCHEMA_VERSION}")
    _require(isinstance(doc.get("name"), str) and doc["name"],
             "field 'name' must be a nonempty string")
    model = doc.get("model")
    _require(isinstance(model, dict) and "type" in model,
             "field 'model' must be an object with a 'type'")
    _require(model["type"] in ("weighted_blocks", "frequency", "circle_metric"),
             f"model.type {model.get('type')!r} unknown")
    path = doc.get("path")
    _require(isinstance(path, dict) and "type" in path,
             "field 'path' must be an object with a 'type'")
    _require(path["type"] in ("generator", "explicit", "affine_frequency",
                              "metric_path"),
             f"path.type {path.get('type')!r} unknown")
    if path["type"] == "generator":
        _require(path.get("name") in _GENERATORS,
                 f"path.name {path.get('name')!r}: unknown generator")
        if path.get("name").startswith("random"):
            _require(isinstance(doc.get("seed"), int),
                     "random generators require an integer 'seed'")
    engines = doc.get("engines", [])
    _require(isinstance(engines, list) and all(e in ENGINES for e in engines),
             f"field 'engines' must be a sublist of {ENGINES}")
    params = doc.get("engine_params", {})
    for s in params.get("s_grid", [1.0]):
        _require(isinstance(s, (int, float)) and s > 0,
                 "engine_params.s_grid entries must be positive")
    for chi in _chi_list(params):
        _require(chi in CHI_PROFILES,
                 f"engine_params.chi {chi!r} not a known profile")
    window = params.get("window", 0.5)
    _require(isinstance(window, (int, float)) and window > 0,
             "engine_params.window must be positive")
    depth = params.get("phillips_depth", 20)
    _require(isinstance(depth, int) and depth >= 1,
             "engine_params.phillips_depth must be a positive integer")
    aps = doc.get("aps", {})
    if aps.get("enabled"):
        _require(isinstance(aps.get("M", 200), int) and aps.get("M", 200) >= 16,
                 "aps.M must be an integer >= 16")
        _require(aps.get("scheme", "forward-upwind") in ("forward-upwind",
                                                         "implicit-midpoint"),
                 "aps.scheme unknown")
        _require(aps.get("geometry", "interval-APS") in ("interval-APS",
                                                         "cylinder"),
                 "aps.geometry unknown")
        theta = aps.get("theta", 1e-7)
        _require(isinstance(theta, (int, float)) and theta > 0,
                 "aps.theta must be positive")


def _chi_list(params):
    chi = params.get("chi", ["sine"])
    return [chi] if isinstance(chi, str) else list(chi)


# ---------------------------------------------------------------------------
# model / path construction

def _build_model(doc):
    cfg = doc["model"]
    kind = cfg["type"]
    if kind == "weighted_blocks":
        _require(isinstance(cfg.get("blocks"), list) and cfg["blocks"],
                 "model.blocks must be a nonempty list of [dim, weight]")
        return WeightedBlockModel([(int(n), float(w)) for n, w in cfg["blocks"]])
    if kind == "frequency":
        return FrequencyModel(rho=float(cfg.get("rho", 1.0 / (2 * math.pi))),
                              xi_max=float(cfg.get("xi_max", 50.0)))
    metrics = standard_metric_paths(n=int(cfg.get("n", 16)))
    profile = cfg.get("profile", "cos_ramp")
    _require(profile in metrics, f"model.profile {profile!r} unknown; "
             f"choose from {sorted(metrics)}")
    return metrics[profile]


def _decode_matrix(entries, dim):
    mat = np.zeros((dim, dim), dtype=complex)
    arr = np.asarray(entries, dtype=float)
    _require(arr.shape in ((dim, dim), (dim, dim, 2)),
             f"explicit sample must be {dim}x{dim} (optionally [re, im] pairs)")
    if arr.ndim == 3:
        mat = arr[..., 0] + 1j * arr[..., 1]
    else:
        mat = arr.astype(complex)
    return mat


_GENERATORS = ("single_crossing", "involution", "random_invertible",
               "random_flat")


def _build_path(doc, model, seed):
    cfg = doc["path"]
    kind = cfg["type"]
    if kind == "metric_path":
        return trivialized_path(model), engine_model(model.n)
    if kind == "affine_frequency":
        _require(isinstance(model, FrequencyModel),
                 "affine_frequency paths need a frequency model")
        u0 = float(cfg.get("offset_start", -1.0))
        u1 = float(cfg.get("offset_end", 1.0))
        ts = np.linspace(0.0, 1.0, int(cfg.get("num_samples", 5)))
        samples = [(float(t), AffineSymbol(offset=u0 + t * (u1 - u0))) for t in ts]
        return OperatorPath(model, samples), model
    if kind == "explicit":
        _require(isinstance(model, WeightedBlockModel),
                 "explicit paths need a weighted block model")
        samples = []
        for item in cfg.get("samples", []):
            samples.append((float(item["u"]),
                            BlockHermitian(model, _decode_matrix(item["matrix"],
                                                                 model.dim))))
        return OperatorPath(model, samples,
                            interpolation=cfg.get("interpolation", "linear"),
                            endpoint_flat=bool(cfg.get("endpoint_flat", False))), model
    # generators
    name = cfg["name"]
    params = cfg.get("params", {})
    if name == "single_crossing":
        path = single_crossing_path(num_samples=int(params.get("num_samples", 9)))
        return path, path.model
    if name == "involution":
        _require(isinstance(model, WeightedBlockModel),
                 "involution paths need a weighted block model")
        minus = params.get("minus_dims")
        _require(isinstance(minus, list) and len(minus) == len(model.blocks),
                 "path.params.minus_dims must list one entry per block")
        rng = rng_from_seed(seed) if seed is not None else None
        path, expected = involution_path(model, [int(m) for m in minus], rng=rng)
        if params.get("flatten", True):
            path = flatten_endpoints(path, margin=0.12, num_samples=41)
        return path, path.model
    if name in ("random_invertible", "random_flat"):
        _require(isinstance(model, WeightedBlockModel),
                 "random paths need a weighted block model")
        rng = rng_from_seed(seed)
        path = random_path(rng, model,
                           num_samples=int(params.get("num_samples", 7)),
                           endpoint_flat=(name == "random_flat"))
        return path, model
    raise ScenarioError(f"unknown generator {name!r}")


# ---------------------------------------------------------------------------
# execution

def _run_engine(name, path, params, tolerance_scale):
    rows = []
    results = {}
    if name == "crossing":
        t0 = time.perf_counter()
        res = sf_crossing(path, window=float(params.get("window", 0.5)))
        ms = 1000 * (time.perf_counter() - t0)
        results["crossing"] = res
        rows.append(("crossing", "", res.value, 0.0, ms))
    elif name == "phillips":
        t0 = time.perf_counter()
        res = sf_phillips(path, max_depth=int(params.get("phillips_depth", 20)))
        ms = 1000 * (time.perf_counter() - t0)
        results["phillips"] = res
        rows.append(("phillips", "",
                     res.value, res.diagnostics.get("quadrature_error", 0.0), ms))
    elif name == "integral":
        for s in params.get("s_grid", [0.5, 2.0, 8.0]):
            t0 = time.perf_counter()
            res = sf_integral(path, float(s))
            ms = 1000 * (time.perf_counter() - t0)
            results[f"integral[s={s:g}]"] = res
            rows.append(("integral", f"{s:g}", res.value,
                         res.diagnostics["quadrature_error"], ms))
    elif name == "appendix":
        for chi_name in _chi_list(params):
            chi = CHI_PROFILES[chi_name]()
            t0 = time.perf_counter()
            res = sf_appendix(path, chi, rescale=True,
                              min_endpoint_gap=float(params.get("min_endpoint_gap", 1e-8)))
            ms = 1000 * (time.perf_counter() - t0)
            results[f"appendix[{chi_name}]"] = res
            rows.append((f"appendix:{chi_name}", "", res.value,
                         res.diagnostics["quadrature_error"], ms))
    return rows, results


def run_scenario(doc, out_dir=".", threads=1, tolerance_scale=1.0):
    """Execute one scenario document.  Returns (record, exit_code)."""
    seed = doc.get("seed")
    env_seed = os.environ.get("SFCALC_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    record = RunRecord(scenario=doc["name"], seed=seed)
    started = time.perf_counter()

    model = _build_model(doc)
    path, engine_model_obj = _build_path(doc, model, seed)

    params = doc.get("engine_params", {})
    engine_names = doc.get("engines", [])
    rows = []
    def run_named(name):
        try:
            return _run_engine(name, path, params, tolerance_scale)
        except NumericError as exc:
            raise NumericError(f"sf_{name}: {exc}", partial=exc.partial) from exc

    if threads > 1 and len(engine_names) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_named, name) for name in engine_names]
            outputs = [f.result() for f in futures]  # fixed merge order
    else:
        outputs = [run_named(name) for name in engine_names]
    for engine_rows, results in outputs:
        rows.extend(engine_rows)
        record.engine_results.update(results)

    aps_cfg = doc.get("aps", {})
    if aps_cfg.get("enabled"):
        t0 = time.perf_counter()
        prob = SuspensionProblem(
            path=path,
            grid_size=int(aps_cfg.get("M", 200)),
            scheme=aps_cfg.get("scheme", "forward-upwind"),
            geometry=aps_cfg.get("geometry", "interval-APS"),
            cylinder_length=aps_cfg.get("L"),
            kernel_threshold=float(aps_cfg.get("theta", 1e-7)),
        )
        try:
            record.aps_index = aps_index(prob)
        except NumericError as exc:
            raise NumericError(f"aps_index: {exc}", partial=exc.partial) from exc
        rows.append(("aps_index", "", record.aps_index, 0.0,
                     1000 * (time.perf_counter() - t0)))

    values = {name: res.value for name, res in record.engine_results.items()}
    if record.aps_index is not None:
        values["aps_index"] = record.aps_index
    names = sorted(values)
    record.agreement = [
        (a, b, values[a] - values[b]) for i, a in enumerate(names)
        for b in names[i + 1:]]

    _check_assertions(doc, record, values, tolerance_scale)
    record.wall_clock = time.perf_counter() - started
    _write_outputs(doc, record, rows, out_dir)
    return record, (0 if not record.assertion_failures else 1)


def _check_assertions(doc, record, values, tolerance_scale):
    asserts = doc.get("assertions", {})
    failures = record.assertion_failures
    agree_tol = asserts.get("pairwise_agreement")
    if agree_tol is not None:
        tol = float(agree_tol) * tolerance_scale
        engine_vals = {k: v for k, v in values.items() if k != "aps_index"}
        for a, b, diff in record.agreement:
            if a in engine_vals and b in engine_vals and abs(diff) > tol:
                failures.append(f"engines {a} and {b} disagree by {diff:.3e} > {tol:.1e}")
    expected = asserts.get("expected_value")
    if expected is not None:
        tol = float(asserts.get("value_tolerance", 1e-9)) * tolerance_scale
        for name, val in values.items():
            if abs(val - float(expected)) > tol:
                failures.append(
                    f"{name} = {val!r} differs from expected {expected} by more than {tol:.1e}")
    if asserts.get("aps_matches_crossing"):
        if record.aps_index is None or "crossing" not in values:
            failures.append("aps_matches_crossing requires the crossing engine and aps.enabled")
        elif record.aps_index != values["crossing"]:
            failures.append(
                f"aps index {record.aps_index} != crossing flow {values['crossing']}")


def _format_value(x):
    if x == "":
        return ""
    return repr(float(x))


def _write_outputs(doc, record, rows, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    output = doc.get("output", {})
    csv_name = output.get("csv", f"{doc['name']}.csv")
    log_name = output.get("log", f"{doc['name']}.log")
    seed_text = "" if record.seed is None else str(record.seed)
    lines = [",".join(CSV_COLUMNS)]
    for engine, s, value, err, ms in rows:
        lines.append(",".join([
            doc["name"], engine, _format_value(s) if s != "" else "",
            _format_value(value), _format_value(err), f"{ms:.3f}", seed_text]))
    with open(os.path.join(out_dir, csv_name), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    log = [f"scenario: {record.scenario}",
           f"library version: {record.version}",
           f"seed: {seed_text or '(none)'}",
           f"wall clock: {record.wall_clock:.3f} s",
           "engine results:"]
    for name, res in record.engine_results.items():
        log.append(f"  {name}: {res.value!r} (raw {res.raw!r})")
    if record.aps_index is not None:
        log.append(f"  aps_index: {record.aps_index!r}")
    log.append("pairwise differences:")
    for a, b, diff in record.agreement:
        log.append(f"  {a} - {b} = {diff:.3e}")
    if record.assertion_failures:
        log.append("ASSERTION FAILURES:")
        log.extend(f"  {msg}" for msg in record.assertion_failures)
    else:
        log.append("all assertions passed")
    with open(os.path.join(out_dir, log_name), "w", encoding="utf-8") as fh:
        fh.write("\n".join(log) + "\n")


# ---------------------------------------------------------------------------
# entry points

def _scenario_dir():
    return os.path.join(os.path.dirname(__file__), "scenarios")


def list_scenarios():
    names = sorted(f for f in os.listdir(_scenario_dir()) if f.endswith(".json"))
    return names


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sfcalc",
        description="Spectral flow engines and suspension-index computations")
    parser.add_argument("--threads", type=int, default=1,
                        help="run independent engine computations concurrently")
    parser.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="scale factor applied to scenario assertion tolerances")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario", help="scenario JSON file (or a bundled name)")
    p_run.add_argument("--out", default=".", help="output directory")

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("suite", help=f"one of {sorted(SUITES)} or 'all'")

    sub.add_parser("list-scenarios", help="list bundled scenario files")

    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name in list_scenarios():
            print(name)
        return 0

    if args.command == "verify":
        try:
            results, elapsed = run_suite(args.suite)
        except KeyError:
            print(f"unknown suite {args.suite!r}; choose from "
                  f"{sorted(SUITES) + ['all']}", file=sys.stderr)
            return 2
        print(format_table(results))
        print(f"elapsed: {elapsed:.1f} s")
        return 0 if all(ok for _, ok, _ in results) else 1

    # run
    scenario_path = args.scenario
    if not os.path.exists(scenario_path):
        bundled = os.path.join(_scenario_dir(), scenario_path)
        if os.path.exists(bundled):
            scenario_path = bundled
        elif os.path.exists(bundled + ".json"):
            scenario_path = bundled + ".json"
    try:
        doc = load_scenario(scenario_path)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    try:
        record, code = run_scenario(doc, out_dir=args.out, threads=args.threads,
                                    tolerance_scale=args.tolerance_scale)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error in {doc['name']}: {exc}", file=sys.stderr)
        return 3
    except SfcalcError as exc:
        print(f"error in {doc['name']}: {exc}", file=sys.stderr)
        return 2
    for failure in record.assertion_failures:
        print(f"assertion failed: {failure}", file=sys.stderr)
    print(f"{doc['name']}: "
          + ("ok" if code == 0 else f"{len(record.assertion_failures)} assertion(s) failed")
          + f" ({record.wall_clock:.2f} s)")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
