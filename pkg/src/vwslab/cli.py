"""Experiment runner: JSON configs in, JSON verdicts and CSV norm series out.

Defaults (applied by parse_config):
  grid        n=1, M=64, L=8
  model       preset="free", params={}
  mollifier   kind="gaussian", moment_order=4
  scale       kind="loglog", k=1
  ladder      [2^-3, 2^-4, 2^-5, 2^-6, 2^-7]
  data        kind="gaussian", width=1.0, amplitude=1.0
  evolution   T=0.5, dt="auto", s=[0.0], N=2
  experiment  kind from the subcommand, q=3, tolerances {}
  output      directory="out", stride=0 (no snapshots)
  seed        0
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .coeffs import check_hypotheses, preset, regularise
from .doi import (DoiParams, SymbolGrid, assemble_a2, build_d, build_q,
                  calibrate_K, check_doi, check_escape, dual_xi)
from .evolve import EvolutionProblem, Forcing, smoothing_report, solve
from .grid import Field, GridSpec, make_grid, plane_wave
from .mollify import (Mollifier, ScaleFn, derivative_bound_probe, scale_omega,
                      sobolev_boost_probe)
from .vwsnet import (NetParams, consistency_run, delta_field, gaussian_field,
                     moderateness_fit, rough_field, run_net, uniqueness_probe)

EXPERIMENT_KINDS = ("validate-hypotheses", "doi-check", "solve", "net",
                    "uniqueness", "consistency", "mollifier-bench")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing

_SCHEMA = {
    "grid": {"n": int, "M": int, "L": (int, float)},
    "model": {"preset": str, "params": dict},
    "mollifier": {"kind": str, "moment_order": int},
    "scale": {"kind": str, "k": (int, float)},
    "ladder": list,
    "data": {"kind": str, "width": (int, float), "amplitude": (int, float),
             "k": list, "s": (int, float)},
    "evolution": {"T": (int, float), "dt": (int, float, str), "s": list,
                  "N": int},
    "experiment": {"kind": str, "q": int, "tolerances": dict},
    "output": {"directory": str, "stride": int},
    "seed": int,
}

_DEFAULTS = {
    "grid": {"n": 1, "M": 64, "L": 8.0},
    "model": {"preset": "free", "params": {}},
    "mollifier": {"kind": "gaussian", "moment_order": 4},
    "scale": {"kind": "loglog", "k": 1.0},
    "ladder": [2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7],
    "data": {"kind": "gaussian", "width": 1.0, "amplitude": 1.0,
             "k": [1], "s": 0.0},
    "evolution": {"T": 0.5, "dt": "auto", "s": [0.0], "N": 2},
    "experiment": {"kind": None, "q": 3, "tolerances": {}},
    "output": {"directory": "out", "stride": 0},
    "seed": 0,
}


def _check_keys(section: dict, schema: dict, path: str) -> None:
    for key, value in section.items():
        if key not in schema:
            raise ConfigError(f"unknown key {path}.{key}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.{key} must be an object")
            _check_keys(value, expected, f"{path}.{key}")
        elif not isinstance(value, expected):
            raise ConfigError(f"{path}.{key} has wrong type "
                              f"{type(value).__name__}")


def _merge(defaults, given):
    if not isinstance(defaults, dict):
        return given
    out = dict(defaults)
    for key, value in given.items():
        out[key] = _merge(defaults.get(key), value) if isinstance(value, dict) \
            else value
    return out


def parse_config(text: str, kind: str | None = None) -> dict:
    """Validate a JSON experiment config and fill documented defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _check_keys(raw, _SCHEMA, "config")
    cfg = _merge(_DEFAULTS, raw)
    if kind is not None:
        stated = cfg["experiment"]["kind"]
        if stated is not None and stated != kind:
            raise ConfigError(f"config.experiment.kind={stated!r} conflicts "
                              f"with subcommand {kind!r}")
        cfg["experiment"]["kind"] = kind
    if cfg["experiment"]["kind"] not in EXPERIMENT_KINDS:
        raise ConfigError(f"config.experiment.kind must be one of "
                          f"{EXPERIMENT_KINDS}")

    M = cfg["grid"]["M"]
    if M < 2 or (M & (M - 1)) != 0:
        raise ConfigError("config.grid.M must be a power of two")
    if cfg["grid"]["n"] not in (1, 2):
        raise ConfigError("config.grid.n must be 1 or 2")
    if cfg["grid"]["L"] <= 0:
        raise ConfigError("config.grid.L must be positive")

    ladder = cfg["ladder"]
    if any(not isinstance(e, (int, float)) or not 0 < e <= 1 for e in ladder):
        raise ConfigError("config.ladder entries must be numbers in (0, 1]")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("config.ladder must be strictly decreasing")
    if len(ladder) < 4 and cfg["experiment"]["kind"] not in (
            "solve", "mollifier-bench"):
        raise ConfigError("config.ladder needs at least 4 epsilon values")

    if cfg["evolution"]["T"] <= 0:
        raise ConfigError("config.evolution.T must be positive")
    dt = cfg["evolution"]["dt"]
    if isinstance(dt, str) and dt != "auto":
        raise ConfigError('config.evolution.dt must be a number or "auto"')
    if isinstance(dt, (int, float)) and dt <= 0:
        raise ConfigError("config.evolution.dt must be positive")
    for name, tol in cfg["experiment"]["tolerances"].items():
        if not isinstance(tol, (int, float)) or tol <= 0:
            raise ConfigError(f"config.experiment.tolerances.{name} "
                              "must be a positive number")
    if cfg["experiment"]["q"] < 1:
        raise ConfigError("config.experiment.q must be >= 1")
    if cfg["output"]["stride"] < 0:
        raise ConfigError("config.output.stride must be >= 0")
    return cfg


# ---------------------------------------------------------------------------
# config -> objects


def _grid(cfg) -> GridSpec:
    g = cfg["grid"]
    return make_grid(g["n"], g["M"], float(g["L"]))


def _model(cfg):
    return preset(cfg["model"]["preset"], n=cfg["grid"]["n"],
                  **cfg["model"]["params"])


def _data(cfg, spec: GridSpec) -> Field:
    d = cfg["data"]
    if d["kind"] == "gaussian":
        return gaussian_field(spec, d["width"], d["amplitude"])
    if d["kind"] == "delta":
        return delta_field(spec)
    if d["kind"] == "plane-wave":
        return plane_wave(spec, tuple(int(k) for k in d["k"]))
    if d["kind"] == "rough":
        return rough_field(spec, float(d["s"]), seed=cfg["seed"])
    raise ConfigError(f"config.data.kind {d['kind']!r} not recognised")


def _net_params(cfg, spec: GridSpec, mollify_data: bool = True) -> NetParams:
    ev = cfg["evolution"]
    dt = None if ev["dt"] == "auto" else float(ev["dt"])
    m = cfg["mollifier"]
    return NetParams(
        spec=spec,
        eps_ladder=tuple(cfg["ladder"]),
        scale=ScaleFn(cfg["scale"]["kind"], k=float(cfg["scale"]["k"])),
        T=float(ev["T"]),
        dt=dt,
        s_list=tuple(float(s) for s in ev["s"]),
        N_weight=ev["N"],
        data_mollifier=Mollifier(m["kind"], order=m["moment_order"]),
        mollify_data=mollify_data,
    )


# ---------------------------------------------------------------------------
# experiment pipelines (each returns a JSON-able verdict dict)


def _run_validate_hypotheses(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    model = _model(cfg)
    moll = Mollifier("gaussian")
    scale = ScaleFn(cfg["scale"]["kind"], k=float(cfg["scale"]["k"]))
    sets = [regularise(model, moll, e, scale, spec) for e in cfg["ladder"]]
    report = check_hypotheses(sets, nu=max(model.nu, 0.05),
                              c0=max(model.c0, 0.05), N=model.N)
    d = report.to_dict()
    d["pass"] = d.pop("passed")
    return d


def _doi_one(cs, xi, C1):
    a2 = assemble_a2(cs, xi)
    mu = float(np.sqrt(np.max(np.linalg.svd(
        cs.matrix_at().reshape(-1, cs.n, cs.n), compute_uv=False))))
    q = build_q(cs, C1, mu, xi)
    return a2, q


def _run_doi_check(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    model = _model(cfg)
    moll = Mollifier("gaussian")
    scale = ScaleFn(cfg["scale"]["kind"], k=float(cfg["scale"]["k"]))
    C1 = 4.0
    N = cfg["evolution"]["N"]
    sets = [regularise(model, moll, e, scale, spec) for e in cfg["ladder"]]
    xi = dual_xi(spec)
    pairs = [_doi_one(cs, xi, C1) for cs in sets]
    K = calibrate_K([q for _, q in pairs])
    params = DoiParams(C1=C1, K=K, N=N)
    per_eps, c2s, cstars = [], [], []
    for eps, (a2, q) in zip(cfg["ladder"], pairs):
        esc = check_escape(q, a2, C1)
        d = build_d(q, params)
        doi = check_doi(d, a2, N)
        per_eps.append({"eps": eps, **esc, **doi})
        c2s.append(esc["C2"])
        cstars.append(doi["C_star"])
    def variation(vals):
        vals = np.asarray(vals)
        mid = np.mean(np.abs(vals))
        return float(np.ptp(vals) / mid) if mid > 0 else 0.0
    v2, vs = variation(c2s), variation(cstars)
    ok = bool(np.all(np.isfinite(c2s)) and np.all(np.isfinite(cstars))
              and v2 < 0.10 and vs < 0.10)
    f = params.f
    ts = np.linspace(0.0, f.t_max, 257)
    fprime_ok = bool(np.all(f.derivative(ts) >= f.lam(ts / f.K - 10.0) - 1e-12))
    return {
        "pass": ok and f(0.0) == 0.0 and fprime_ok,
        "K": K, "C1": C1,
        "per_eps": per_eps,
        "C2_variation": v2,
        "C_star_variation": vs,
        "f_zero_at_zero": f(0.0) == 0.0,
        "f_derivative_dominates": fprime_ok,
    }


def _write_series(out: Path, eps: float, series) -> None:
    path = out / f"norms-eps-{eps:g}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "norm", "smooth_integrand", "smooth_integral"])
        for s in sorted(series.norms):
            for i, t in enumerate(series.t):
                w.writerow([f"{t:.12g}", f"{s:g}",
                            f"{series.norms[s][i]:.12g}",
                            f"{series.integrand[s][i]:.12g}",
                            f"{series.integral[s][i]:.12g}"])


def _write_snapshots(out: Path, eps: float, states, stride: int) -> None:
    if stride <= 0 or states is None:
        return
    snaps = [[ [float(z.real), float(z.imag)] for z in np.ravel(u)]
             for u in states[::stride]]
    (out / f"snapshots-eps-{eps:g}.json").write_text(
        json.dumps(snaps), encoding="utf-8")


def _run_solve(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    model = _model(cfg)
    u0 = _data(cfg, spec)
    moll = Mollifier("gaussian")
    scale = ScaleFn(cfg["scale"]["kind"], k=float(cfg["scale"]["k"]))
    ev = cfg["evolution"]
    dt = None if ev["dt"] == "auto" else float(ev["dt"])
    stride = cfg["output"]["stride"]

    def job(eps):
        cs = regularise(model, moll, eps, scale, spec)
        prob = EvolutionProblem(cs, u0, Forcing(), T=float(ev["T"]), dt=dt,
                                s_list=tuple(float(s) for s in ev["s"]),
                                N_weight=ev["N"])
        return eps, solve(prob, record_states=stride > 0)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = dict(pool.map(job, cfg["ladder"]))
    sups = {}
    for eps in cfg["ladder"]:
        res = results[eps]
        _write_series(out, eps, res.series)
        _write_snapshots(out, eps, res.states, stride)
        sups[str(eps)] = {str(s): res.series.sup_norm(s)
                          for s in res.series.norms}
    finite = all(np.isfinite(v) for per in sups.values() for v in per.values())
    return {"pass": bool(finite), "sup_norms": sups}


def _run_net(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    model = _model(cfg)
    u0 = _data(cfg, spec)
    params = _net_params(cfg, spec)
    net = run_net(model, u0, params)
    tol = cfg["experiment"]["tolerances"]
    fits = {}
    for eps, member in net.members.items():
        _write_series(out, eps, member["result"].series)
    for s in params.s_list:
        fits[str(s)] = moderateness_fit(
            net, s, n_cap=tol.get("n_cap", 10.0),
            resid_cap=tol.get("residual", 0.5)).to_dict()
    return {
        "pass": all(f["passed"] for f in fits.values()),
        "hypotheses": net.hypothesis_report.to_dict(),
        "moderateness": fits,
    }


def _run_uniqueness(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    fit = uniqueness_probe(_model(cfg), cfg["experiment"]["q"],
                           _data(cfg, spec), _net_params(cfg, spec))
    d = fit.to_dict()
    d["pass"] = d.pop("passed")
    return d


def _run_consistency(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    tol = cfg["experiment"]["tolerances"].get("final_error", 1e-4)
    params = _net_params(cfg, spec)
    if params.data_mollifier.kind == "gaussian":
        params = _net_params(cfg, spec)
        params.data_mollifier = Mollifier("vanishing-moment",
                                          order=cfg["mollifier"]["moment_order"])
    fit = consistency_run(_model(cfg), _data(cfg, spec), params, tol=tol)
    d = fit.to_dict()
    d["pass"] = d.pop("passed")
    return d


def _run_mollifier_bench(cfg, out: Path, workers: int) -> dict:
    spec = _grid(cfg)
    scale = ScaleFn("power", k=1.0)
    eps = [2.0**-j for j in range(2, 8)]
    x0 = spec.x_mesh()[0]
    jump = Field(spec, np.where(np.sin(np.pi * x0 / spec.L) >= 0, 1.0, -1.0)
                 .astype(complex))
    probes = {
        "jump_beta1": derivative_bound_probe(jump, (1,) + (0,) * (spec.n - 1),
                                             scale, eps),
        "delta_boost_l1": sobolev_boost_probe(delta_field(spec), -1.0, 1,
                                              scale, eps),
        "delta_boost_l2": sobolev_boost_probe(delta_field(spec), -1.0, 2,
                                              scale, eps),
    }
    rows = []
    for name, pr in probes.items():
        key = "sup_norms" if "sup_norms" in pr else "norms"
        for om, v in zip(pr["omegas"], pr[key]):
            rows.append([name, f"{om:.12g}", f"{v:.12g}", f"{pr['slope']:.12g}"])
    with (out / "mollifier-bench.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["probe", "omega", "sup_norm", "slope"])
        w.writerows(rows)
    ok = (abs(probes["jump_beta1"]["slope"] + 1.0) < 0.2
          and abs(probes["delta_boost_l1"]["slope"] + 1.0) < 0.2
          and abs(probes["delta_boost_l2"]["slope"] + 2.0) < 0.2)
    return {"pass": bool(ok),
            "slopes": {k: pr["slope"] for k, pr in probes.items()}}


_PIPELINES = {
    "validate-hypotheses": _run_validate_hypotheses,
    "doi-check": _run_doi_check,
    "solve": _run_solve,
    "net": _run_net,
    "uniqueness": _run_uniqueness,
    "consistency": _run_consistency,
    "mollifier-bench": _run_mollifier_bench,
}


def _collect_pass_flags(obj) -> list:
    flags = []
    if isinstance(obj, dict):
        for key, value in obj.items():
            if key in ("pass", "passed") and isinstance(value, bool):
                flags.append(value)
            else:
                flags.extend(_collect_pass_flags(value))
    elif isinstance(obj, list):
        for item in obj:
            flags.extend(_collect_pass_flags(item))
    return flags


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def run(cfg: dict, out_dir: str | None = None, workers: int = 1,
        seed: int | None = None, verbose: bool = False) -> int:
    """Execute the configured experiment; returns the process exit status."""
    if seed is not None:
        cfg = {**cfg, "seed": seed}
    out = Path(out_dir if out_dir is not None else cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["experiment"]["kind"]
    t0 = time.perf_counter()
    try:
        verdict = _PIPELINES[kind](cfg, out, workers)
    except Exception as exc:
        verdict = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
    elapsed = time.perf_counter() - t0
    flags = _collect_pass_flags(verdict)
    all_pass = bool(flags) and all(flags)
    report = {
        "config": _jsonable(cfg),
        "verdict": _jsonable(verdict),
        "all_pass": all_pass,
        "timings": {"wall_seconds": elapsed},
        "version": __version__,
    }
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    if verbose:
        print(json.dumps(report["verdict"], indent=2, sort_keys=True))
    print(f"{kind}: {'PASS' if all_pass else 'FAIL'} "
          f"({elapsed:.2f}s, report in {out / 'report.json'})")
    return 0 if all_pass else 1


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vws",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind)
        p.add_argument("config", help="path to the JSON experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text, kind=args.kind)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg, out_dir=args.out, workers=args.workers, seed=args.seed,
               verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
