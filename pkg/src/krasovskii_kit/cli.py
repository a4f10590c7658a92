"""Batch interface: strict JSON experiment configs, deterministic reports.

`krasovskii-kit run <config> --out <dir>` executes one task and writes
report.json plus task-specific CSVs; `krasovskii-kit validate <config>`
reports diagnostics without executing.  Exit codes: 0 pass/feasible,
1 fail/infeasible, 2 usage or validation error.  Outputs are byte-identical
across runs for the same config and seed; all randomness flows from the
config seed through counter-based generator streams.
"""
import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import histories, lkf, lmi, solver, transfer
from .histories import (ConstantDelay, ConstantHistory, DelaySignal,
                        PiecewiseLinearHistory, PiecewiseLinearPeriodicDelay,
                        PowerComparison, SawtoothDelay, SinusoidDelay,
                        make_rough_history, make_triangle_history,
                        uniform_norm, w_norm)
from .numerics import sym_eig

__all__ = ["main", "run", "validate", "build_experiment", "load_config"]

CONFIG_VERSION = 1

# named sub-streams of the config seed (counter-based generators)
STREAM_SYNTHESIS = 1
STREAM_LIPSCHITZ = 2

TASKS = ("certify", "simulate", "lkf-check", "smoothing-check",
         "delay-sweep", "norms-demo")


def rng_stream(seed, stream):
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


class _Diags(list):
    def add(self, path, message):
        self.append(f"{path}: {message}")


def _check_keys(block, allowed, required, path, diags):
    if not isinstance(block, dict):
        diags.add(path, "must be an object")
        return False
    ok = True
    for key in block:
        if key not in allowed:
            diags.add(f"{path}.{key}", "unknown key")
            ok = False
    for key in required:
        if key not in block:
            diags.add(f"{path}.{key}", "missing required key")
            ok = False
    return ok


def _number(block, key, path, diags, positive=False, default=None):
    if key not in block:
        return default
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        diags.add(f"{path}.{key}", "must be a number")
        return None
    val = float(val)
    if not np.isfinite(val):
        diags.add(f"{path}.{key}", "must be finite")
        return None
    if positive and val <= 0:
        diags.add(f"{path}.{key}", "must be > 0")
        return None
    return val


def _matrix(block, key, dim, path, diags):
    raw = block.get(key)
    try:
        mat = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        diags.add(f"{path}.{key}", "must be a numeric matrix")
        return None
    if mat.shape != (dim, dim):
        diags.add(f"{path}.{key}", f"must be {dim}x{dim}")
        return None
    if not np.all(np.isfinite(mat)):
        diags.add(f"{path}.{key}", "must be finite")
        return None
    return mat


def _build_delay_component(spec, h_max, path, diags):
    if not isinstance(spec, dict) or "kind" not in spec:
        diags.add(path, "must be an object with a 'kind'")
        return None
    kind = spec["kind"]
    try:
        if kind == "constant":
            if not _check_keys(spec, {"kind", "value"}, {"kind", "value"},
                               path, diags):
                return None
            return ConstantDelay(float(spec["value"]))
        if kind == "sinusoid":
            keys = {"kind", "center", "amplitude", "frequency", "phase"}
            if not _check_keys(spec, keys, keys - {"phase"}, path, diags):
                return None
            return SinusoidDelay(float(spec["center"]),
                                 float(spec["amplitude"]),
                                 float(spec["frequency"]),
                                 float(spec.get("phase", 0.0)))
        if kind == "sawtooth":
            keys = {"kind", "low", "high", "period", "offset"}
            if not _check_keys(spec, keys, keys - {"offset"}, path, diags):
                return None
            return SawtoothDelay(float(spec["low"]), float(spec["high"]),
                                 float(spec["period"]),
                                 float(spec.get("offset", 0.0)))
        if kind == "pwl-periodic":
            keys = {"kind", "times", "values", "offset"}
            if not _check_keys(spec, keys, {"kind", "times", "values"},
                               path, diags):
                return None
            return PiecewiseLinearPeriodicDelay(
                spec["times"], spec["values"], float(spec.get("offset", 0.0)))
    except (TypeError, ValueError) as exc:
        diags.add(path, str(exc))
        return None
    diags.add(f"{path}.kind", f"unknown delay preset {kind!r}")
    return None


def _build_ic(spec, h_max, dim, path, diags):
    if not isinstance(spec, dict) or "kind" not in spec:
        diags.add(path, "must be an object with a 'kind'")
        return None
    kind = spec.get("kind")
    direction = spec.get("direction")
    if direction is None and kind in ("triangle", "sqrt-kink", "t-sin-inv-t",
                                      "cantor-approx"):
        direction = [1.0] + [0.0] * (dim - 1)
    try:
        if kind == "constant":
            if not _check_keys(spec, {"kind", "value"}, {"kind", "value"},
                               path, diags):
                return None
            value = np.asarray(spec["value"], dtype=float)
            if value.shape != (dim,):
                diags.add(f"{path}.value", f"must have length {dim}")
                return None
            return ConstantHistory(value, h_max)
        if kind == "triangle":
            keys = {"kind", "m", "direction"}
            if not _check_keys(spec, keys, {"kind", "m"}, path, diags):
                return None
            return make_triangle_history(int(spec["m"]), h_max, direction)
        if kind in ("sqrt-kink", "t-sin-inv-t", "cantor-approx"):
            keys = {"kind", "direction", "levels"}
            if not _check_keys(spec, keys, {"kind"}, path, diags):
                return None
            return make_rough_history(kind, h_max, direction,
                                      levels=int(spec.get("levels", 8)))
        if kind == "nodes":
            keys = {"kind", "values", "interpolation"}
            if not _check_keys(spec, keys, {"kind", "values"}, path, diags):
                return None
            values = np.asarray(spec["values"], dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[1] != dim:
                diags.add(f"{path}.values", f"must have {dim} columns")
                return None
            interp = spec.get("interpolation", "linear")
            taus = np.linspace(-h_max, 0.0, len(values))
            taus[-1] = 0.0
            if interp == "linear":
                return PiecewiseLinearHistory(taus, values)
            diags.add(f"{path}.interpolation", f"unknown kind {interp!r}")
            return None
    except (TypeError, ValueError) as exc:
        diags.add(path, str(exc))
        return None
    diags.add(f"{path}.kind", f"unknown ic preset {kind!r}")
    return None


def _build_kernel(spec, dim, path, diags):
    if not isinstance(spec, dict) or "kind" not in spec:
        diags.add(path, "must be an object with a 'kind'")
        return None
    kind = spec["kind"]
    try:
        if kind == "constant":
            if not _check_keys(spec, {"kind", "matrix"}, {"kind", "matrix"},
                               path, diags):
                return None
            mat = _matrix(spec, "matrix", dim, path, diags)
            return None if mat is None else solver.ConstantKernel(mat)
        if kind == "polynomial":
            if not _check_keys(spec, {"kind", "coefficients"},
                               {"kind", "coefficients"}, path, diags):
                return None
            return solver.PolynomialKernel(
                [np.asarray(c, dtype=float) for c in spec["coefficients"]])
        if kind == "sampled":
            keys = {"kind", "thetas", "matrices"}
            if not _check_keys(spec, keys, keys, path, diags):
                return None
            return solver.SampledKernel(spec["thetas"], spec["matrices"])
    except (TypeError, ValueError) as exc:
        diags.add(path, str(exc))
        return None
    diags.add(f"{path}.kind", f"unknown kernel kind {kind!r}")
    return None


def _build_nonlinearity(spec, dim, path, diags):
    if spec is None:
        return None, None
    if not isinstance(spec, dict) or "kind" not in spec:
        diags.add(path, "must be null or an object with a 'kind'")
        return None, None
    growth_spec = spec.get("growth")
    growth = None
    if not isinstance(growth_spec, dict):
        diags.add(f"{path}.growth", "growth certificate required")
    elif _check_keys(growth_spec, {"alpha", "beta", "gamma"},
                     {"alpha", "beta", "gamma"}, f"{path}.growth", diags):
        try:
            growth = solver.GrowthCertificate(float(growth_spec["alpha"]),
                                              float(growth_spec["beta"]),
                                              float(growth_spec["gamma"]))
        except (TypeError, ValueError) as exc:
            diags.add(f"{path}.growth", str(exc))
    kind = spec["kind"]
    try:
        if kind == "cubic":
            keys = {"kind", "scale", "growth"}
            if not _check_keys(spec, keys, {"kind", "growth"}, path, diags):
                return None, None
            return solver.CubicNonlinearity(float(spec.get("scale", 1.0))), \
                growth
        if kind == "polynomial":
            keys = {"kind", "powers", "coefficients", "growth"}
            if not _check_keys(spec, keys, keys, path, diags):
                return None, None
            return solver.ComponentwisePolynomial(
                spec["powers"],
                np.asarray(spec["coefficients"], dtype=float)), growth
    except (TypeError, ValueError) as exc:
        diags.add(path, str(exc))
        return None, None
    diags.add(f"{path}.kind", f"unknown nonlinearity {kind!r}")
    return None, None


def build_experiment(data):
    """Strict construction of all experiment objects.

    Returns (objects, diagnostics); objects is None whenever diagnostics is
    non-empty.  `run` exits 2 exactly when diagnostics is non-empty.
    """
    diags = _Diags()
    top_keys = {"version", "seed", "model", "delays", "ic", "solver", "task"}
    if not _check_keys(data, top_keys, top_keys, "config", diags):
        return None, diags
    if data.get("version") != CONFIG_VERSION:
        diags.add("config.version", f"must be {CONFIG_VERSION}")
    seed = data.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        diags.add("config.seed", "must be a non-negative integer")
        seed = 0

    model_block = data.get("model", {})
    model_keys = {"dim", "a", "pointwise", "distributed", "nonlinearity"}
    model = None
    dim = None
    if _check_keys(model_block, model_keys, {"dim", "a"}, "model", diags):
        dim = model_block.get("dim")
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
            diags.add("model.dim", "must be a positive integer")
            dim = None
    if dim is not None:
        a = _matrix(model_block, "a", dim, "model", diags)
        pointwise = []
        for i, item in enumerate(model_block.get("pointwise", [])):
            path = f"model.pointwise[{i}]"
            if not _check_keys(item, {"matrix", "delay"}, {"matrix", "delay"},
                               path, diags):
                continue
            mat = _matrix(item, "matrix", dim, path, diags)
            idx = item.get("delay")
            if isinstance(idx, bool) or not isinstance(idx, int) or idx < 0:
                diags.add(f"{path}.delay", "must be a delay component index")
                continue
            if mat is not None:
                pointwise.append((mat, idx))
        distributed = []
        for i, item in enumerate(model_block.get("distributed", [])):
            path = f"model.distributed[{i}]"
            if not _check_keys(item, {"kernel", "delay"}, {"kernel", "delay"},
                               path, diags):
                continue
            ker = _build_kernel(item.get("kernel"), dim, f"{path}.kernel",
                                diags)
            idx = item.get("delay")
            if isinstance(idx, bool) or not isinstance(idx, int) or idx < 0:
                diags.add(f"{path}.delay", "must be a delay component index")
                continue
            if ker is not None:
                distributed.append((ker, idx))
        nonlin, growth = _build_nonlinearity(model_block.get("nonlinearity"),
                                             dim, "model.nonlinearity", diags)

    delays_block = data.get("delays", {})
    zeta = None
    h_max = None
    if _check_keys(delays_block, {"h_max", "components"},
                   {"h_max", "components"}, "delays", diags):
        h_max = _number(delays_block, "h_max", "delays", diags, positive=True)
        comps = []
        comp_list = delays_block.get("components")
        if not isinstance(comp_list, list) or not comp_list:
            diags.add("delays.components", "must be a non-empty list")
        elif h_max is not None:
            for i, item in enumerate(comp_list):
                comp = _build_delay_component(item, h_max,
                                              f"delays.components[{i}]",
                                              diags)
                if comp is not None:
                    comps.append(comp)
            if len(comps) == len(comp_list):
                try:
                    zeta = DelaySignal(h_max, comps)
                except ValueError as exc:
                    diags.add("delays", str(exc))

    if dim is not None and h_max is not None and not diags:
        try:
            model = solver.SystemModel(a, pointwise, distributed, nonlin,
                                       growth, window=h_max)
        except ValueError as exc:
            diags.add("model", str(exc))

    x0 = None
    if dim is not None and h_max is not None:
        x0 = _build_ic(data.get("ic"), h_max, dim, "ic", diags)

    solver_block = data.get("solver", {})
    solver_keys = {"dt", "horizon", "blow_up", "overlap_iterations"}
    dt = horizon = blow_up = overlap = None
    if _check_keys(solver_block, solver_keys, {"dt", "horizon"}, "solver",
                   diags):
        dt = _number(solver_block, "dt", "solver", diags, positive=True)
        horizon = _number(solver_block, "horizon", "solver", diags,
                          positive=True)
        blow_up = _number(solver_block, "blow_up", "solver", diags,
                          positive=True, default=solver.DEFAULT_BLOW_UP)
        overlap = solver_block.get("overlap_iterations",
                                   solver.DEFAULT_OVERLAP_ITERS)
        if isinstance(overlap, bool) or not isinstance(overlap, int) \
                or overlap < 1:
            diags.add("solver.overlap_iterations",
                      "must be a positive integer")

    task_block = data.get("task")
    task = None
    if not isinstance(task_block, dict) or "name" not in task_block:
        diags.add("task", "must be an object with a 'name'")
    elif task_block["name"] not in TASKS:
        diags.add("task.name", f"unknown task {task_block['name']!r} "
                  f"(expected one of {', '.join(TASKS)})")
    else:
        task = task_block

    if model is not None and zeta is not None:
        for idx in model.delay_indices():
            if idx >= zeta.arity:
                diags.add("model", f"delay index {idx} exceeds the "
                          f"{zeta.arity} delay component(s)")
    if task is not None and task["name"] in ("certify", "delay-sweep",
                                             "lkf-check"):
        if model is not None and (len(model.pointwise) != 1
                                  or model.distributed):
            diags.add("model", f"task {task['name']!r} needs exactly one "
                      "pointwise term and no distributed terms")
        if task["name"] == "lkf-check" and model is not None \
                and model.nonlinearity is not None:
            diags.add("model", "task 'lkf-check' requires a linear model")

    if diags:
        return None, diags
    return {"seed": seed, "model": model, "zeta": zeta, "x0": x0, "dt": dt,
            "horizon": horizon, "blow_up": blow_up, "overlap": overlap,
            "h_max": h_max, "task": task}, diags


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def validate(path):
    """Full validation without execution; empty list iff run would not
    exit 2."""
    try:
        data = load_config(path)
    except OSError as exc:
        return [f"config: unreadable ({exc})"]
    except json.JSONDecodeError as exc:
        return [f"config: malformed JSON at line {exc.lineno}: {exc.msg}"]
    _, diags = build_experiment(data)
    return list(diags)


def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _write_report(outdir, payload):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _atomic_write(os.path.join(outdir, "report.json"), text)


def _single_delay_matrices(exp):
    model = exp["model"]
    return model.a, model.pointwise[0][0]


def _task_certify(exp, outdir):
    m, n = _single_delay_matrices(exp)
    task = exp["task"]
    margin = float(task.get("margin", lmi.FEASIBILITY_MARGIN))
    if "certificate" in task:
        cert = lmi.LmiCertificate.from_dict(task["certificate"])
        synth = None
    else:
        res = lmi.synthesize_certificate(
            m, n, exp["h_max"], restarts=int(task.get("restarts", 12)),
            max_iters=int(task.get("iterations", 400)),
            seed=_derived_seed(exp, STREAM_SYNTHESIS))
        cert = res.certificate
        synth = res
    data = {"h_max": exp["h_max"]}
    if cert is None:
        data["feasible"] = False
        data["best_objective"] = synth.best_objective
        _write_report(outdir, _payload(exp, "certify", False, data))
        return 1
    report = lmi.check_certificate(m, n, exp["h_max"], cert, margin)
    data["feasible"] = report.feasible
    data["certificate"] = cert.to_dict()
    data["check"] = report.to_dict()
    if exp["model"].nonlinearity is not None and report.feasible:
        region = lmi.nonlinear_region(m, n, exp["h_max"], cert,
                                      exp["model"].growth)
        data["nonlinear_region"] = {
            "epsilon": region.epsilon, "delta": region.delta,
            "eta": region.eta, "H": region.H}
    _write_report(outdir, _payload(exp, "certify", report.feasible, data))
    return 0 if report.feasible else 1


def _task_simulate(exp, outdir):
    traj = solver.integrate(exp["model"], exp["zeta"], exp["x0"],
                            exp["horizon"], exp["dt"], exp["blow_up"],
                            exp["overlap"])
    solver.trajectory_to_csv(traj, os.path.join(outdir, "trajectory.csv"))
    final = traj.Y[-1]
    data = {
        "status": traj.status,
        "t_final": float(traj.knots[-1]),
        "blow_up_time": traj.t_f,
        "final_norm": float(np.sqrt(final @ final)),
        "sup_norm": traj.sup_norm(-traj.h_M, traj.T),
    }
    passed = traj.status == "complete"
    _write_report(outdir, _payload(exp, "simulate", passed, data))
    return 0 if passed else 1


def _task_lkf_check(exp, outdir):
    m, n = _single_delay_matrices(exp)
    res = lmi.synthesize_certificate(m, n, exp["h_max"],
                                     seed=_derived_seed(exp,
                                                        STREAM_SYNTHESIS))
    if not res.feasible:
        _write_report(outdir, _payload(exp, "lkf-check", False,
                                       {"feasible": False,
                                        "best_objective":
                                            res.best_objective}))
        return 1
    cert = res.certificate
    traj = solver.integrate(exp["model"], exp["zeta"], exp["x0"],
                            exp["horizon"], exp["dt"], exp["blow_up"],
                            exp["overlap"])
    task = exp["task"]
    eta0 = -sym_eig(lmi.assemble_theta(m, n, exp["h_max"], cert)).lambda_max
    omega3 = PowerComparison(eta0 / 2.0, 2.0)
    samples = int(task.get("samples", lkf.DEFAULT_SAMPLES))
    trace, diss = lkf.dissipation_check(traj, cert, omega3, samples=samples)
    sand = lkf.sandwich_check(traj, cert, samples=samples)
    lkf.lkf_trace_to_csv(trace, os.path.join(outdir, "lkf_trace.csv"))
    passed = diss.passed and sand.passed
    data = {
        "certificate": cert.to_dict(),
        "omega3_coeff": eta0 / 2.0,
        "dissipation": {"passed": diss.passed, "kind": diss.kind,
                        "max_residual": diss.max_residual,
                        "tolerance": diss.tolerance},
        "sandwich": {"passed": sand.passed,
                     "max_lower_violation": sand.max_lower_violation,
                     "max_upper_violation": sand.max_upper_violation},
    }
    _write_report(outdir, _payload(exp, "lkf-check", passed, data))
    return 0 if passed else 1


def _task_smoothing_check(exp, outdir):
    seed = _derived_seed(exp, STREAM_LIPSCHITZ)
    smooth = transfer.smoothing_check(exp["model"], exp["zeta"], exp["x0"],
                                      exp["dt"], seed=seed)
    gron = transfer.gronwall_check(exp["model"], exp["zeta"], exp["x0"],
                                   exp["dt"], seed=seed)
    passed = smooth.passed and gron.passed
    data = {"smoothing": smooth.to_dict(), "gronwall": gron.to_dict()}
    _write_report(outdir, _payload(exp, "smoothing-check", passed, data))
    return 0 if passed else 1


def _task_delay_sweep(exp, outdir):
    m, n = _single_delay_matrices(exp)
    task = exp["task"]
    res = lmi.max_feasible_delay(
        m, n, h_lo=float(task.get("h_lo", 1e-3)),
        h_hi=float(task.get("h_hi", 10.0)),
        tol=float(task.get("tol", 1e-3)),
        seed=_derived_seed(exp, STREAM_SYNTHESIS))
    data = {"found": res.found, "feasible_at_lo": res.feasible_at_lo,
            "probes": [[h, bool(f)] for h, f in res.probes]}
    if res.found:
        data["h_star"] = res.h_star
        data["certificate"] = res.certificate.to_dict()
    _write_report(outdir, _payload(exp, "delay-sweep", res.found, data))
    return 0 if res.found else 1


def _task_norms_demo(exp, outdir):
    task = exp["task"]
    m = int(task.get("m", 10))
    h_max = exp["h_max"]
    direction = np.zeros(exp["model"].n)
    direction[0] = 1.0
    phi = make_triangle_history(m, h_max, direction)
    data = {
        "m": m,
        "h_max": h_max,
        "uniform_norm": uniform_norm(phi),
        "w_norm": w_norm(phi),
        "w_norm_closed_form": 2.0 * m / float(np.sqrt(h_max)),
        "embedding_constant": 1.0 + float(np.sqrt(h_max)),
    }
    _write_report(outdir, _payload(exp, "norms-demo", True, data))
    return 0


def _payload(exp, name, passed, data):
    return {"version": CONFIG_VERSION, "task": name, "seed": exp["seed"],
            "passed": bool(passed), "data": data}


def _derived_seed(exp, stream):
    return (exp["seed"] * 1000003 + stream) % (1 << 63)


_TASK_RUNNERS = {
    "certify": _task_certify,
    "simulate": _task_simulate,
    "lkf-check": _task_lkf_check,
    "smoothing-check": _task_smoothing_check,
    "delay-sweep": _task_delay_sweep,
    "norms-demo": _task_norms_demo,
}


def run(config_path, outdir):
    """Execute one task; returns the process exit code."""
    try:
        data = load_config(config_path)
    except OSError as exc:
        print(f"config: unreadable ({exc})", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config: malformed JSON at line {exc.lineno}: {exc.msg}",
              file=sys.stderr)
        return 2
    exp, diags = build_experiment(data)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        return 2
    os.makedirs(outdir, exist_ok=True)
    runner = _TASK_RUNNERS[exp["task"]["name"]]
    return runner(exp, outdir)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="krasovskii-kit",
        description="Stability certification and simulation for retarded "
                    "differential equations with time-varying delays.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config and write reports")
    p_run.add_argument("config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_val = sub.add_parser("validate", help="validate a config")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out)
    diags = validate(args.config)
    for d in diags:
        print(d, file=sys.stderr)
    return 0 if not diags else 2


if __name__ == "__main__":
    sys.exit(main())
