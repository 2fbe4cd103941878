"""Command-line surface.

Subcommands: simulate, direct, adjoint, fd-check, report.  Every run writes
CSV/JSON artifacts plus a provenance sidecar carrying the full effective
configuration, so identical invocations reproduce identical files.

Exit codes: 0 success, 1 numerical failure, 2 validation/usage failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import adjoint as adjoint_mod
from . import gallery
from .direct import direct_gradient, simulate
from .integrate import IntegratorConfig
from .oracle import fd_cost_sensitivity


class CliError(Exception):
    pass


def _parse_params(pairs, rho0):
    values = rho0.rho.copy()
    labels = list(rho0.labels)
    for pair in pairs or ():
        if "=" not in pair:
            raise CliError(f"--params expects name=value, got '{pair}'")
        name, _, raw = pair.partition("=")
        if name not in labels:
            raise CliError(f"unknown parameter '{name}'; available: {labels}")
        try:
            values[labels.index(name)] = float(raw)
        except ValueError as exc:
            raise CliError(f"parameter '{name}' value '{raw}' is not a number") from exc
    return values


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc


def _effective(args) -> dict:
    """File config overridden by explicit CLI flags."""
    cfg = _load_config_file(args.config)
    for key in ("model", "cost", "t0", "tf", "rtol", "atol", "event_tol", "seed",
                "format", "h_rel"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "params", None):
        cfg.setdefault("params", []).extend(args.params)
    cfg.setdefault("model", "five-bar")
    cfg.setdefault("t0", 0.0)
    cfg.setdefault("format", "csv")
    return cfg


def _setup(cfg):
    registry = gallery.register_gallery()
    name = cfg["model"]
    if name not in registry:
        raise CliError(f"unknown model '{name}'; available: {sorted(registry)}")
    problem = registry[name]()
    rho = _parse_params(cfg.get("params"), problem.rho0)
    cost = problem.cost(cfg.get("cost"))
    t0 = float(cfg.get("t0", problem.t_span[0]))
    tf = float(cfg.get("tf", problem.t_span[1]))
    icfg = IntegratorConfig(
        rtol=float(cfg.get("rtol", problem.config.rtol)),
        atol=float(cfg.get("atol", problem.config.atol)),
        event_tol=float(cfg.get("event_tol", problem.config.event_tol)),
    )
    return problem, cost, rho, (t0, tf), icfg


def _outdir(args) -> Path:
    out = Path(args.out or "runout")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_sidecar(path: Path, cfg, extra=None):
    doc = {"config": cfg}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_table(out: Path, stem: str, header, rows, fmt: str):
    """Write a time-series table as CSV (default) or a JSON column bundle."""
    if fmt == "json":
        doc = {"columns": list(header),
               "rows": [[float(x) for x in row] for row in rows]}
        with open(out / f"{stem}.json", "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")
    else:
        _write_csv(out / f"{stem}.csv", header, rows)


def _state_header(dims):
    return (["t"] + [f"q{i+1}" for i in range(dims.n)]
            + [f"v{i+1}" for i in range(dims.n)]
            + [f"z{i+1}" for i in range(dims.nc)])


def _sample_times(traj, per_segment=200):
    times = []
    for seg in traj.segments:
        times.append(np.linspace(seg.t_start, seg.t_end,
                                 max(2, int(per_segment * (seg.t_end - seg.t_start)
                                            / max(traj.tF - traj.t0, 1e-12)) + 2)))
    return np.unique(np.concatenate(times))


def _events_json(traj):
    return [rec.to_json_dict() for rec in traj.events]


def cmd_simulate(args):
    cfg = _effective(args)
    problem, cost, rho, t_span, icfg = _setup(cfg)
    out = _outdir(args)
    traj = simulate(problem.dynamics, cost, problem.events, rho, t_span, icfg)
    times = _sample_times(traj)
    rows = [[t] + list(np.concatenate(traj.state_at(t))) for t in times]
    fmt = cfg.get("format", "csv")
    _write_table(out, "trajectory", _state_header(traj.dims), rows, fmt)
    with open(out / "events.json", "w") as fh:
        json.dump(_events_json(traj), fh, indent=2)
        fh.write("\n")
    res = traj.residuals
    _write_table(out, "residuals", ["t", "pos_residual", "vel_residual"],
                 list(zip(res.times, res.pos, res.vel)), fmt)
    _write_sidecar(out / "run.meta.json", cfg, {
        "command": "simulate",
        "events": len(traj.events),
        "max_pos_residual": res.max_pos(),
        "max_vel_residual": res.max_vel(),
    })
    print(f"simulate: {len(traj.events)} events, residuals "
          f"pos<={res.max_pos():.3e} vel<={res.max_vel():.3e} -> {out}")
    return 0


def _sensitivity_rows(traj, times):
    rows = []
    for t in times:
        X = traj.sensitivity_at(t)
        rows.append([t] + list(X.Q.ravel()) + list(X.V.ravel()) + list(X.Z.ravel()))
    return rows


def _sensitivity_header(dims):
    cols = ["t"]
    cols += [f"Q{i+1}_{j+1}" for i in range(dims.n) for j in range(dims.p)]
    cols += [f"V{i+1}_{j+1}" for i in range(dims.n) for j in range(dims.p)]
    cols += [f"Z{i+1}_{j+1}" for i in range(dims.nc) for j in range(dims.p)]
    return cols


def cmd_direct(args):
    cfg = _effective(args)
    problem, cost, rho, t_span, icfg = _setup(cfg)
    out = _outdir(args)
    grad, traj, XF = direct_gradient(problem.dynamics, cost, problem.events,
                                     rho, t_span, icfg)
    times = _sample_times(traj)
    _write_table(out, "sensitivity_direct", _sensitivity_header(traj.dims),
                 _sensitivity_rows(traj, times), cfg.get("format", "csv"))
    with open(out / "events.json", "w") as fh:
        json.dump(_events_json(traj), fh, indent=2)
        fh.write("\n")
    doc = {"cost": cost.name, "parameters": list(problem.rho0.labels),
           "direct": grad.tolist()}
    with open(out / "gradient.json", "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    _write_sidecar(out / "run.meta.json", cfg, {"command": "direct"})
    print(f"direct: dpsi/drho = {grad.ravel()} -> {out}")
    return 0


def cmd_adjoint(args):
    cfg = _effective(args)
    problem, cost, rho, t_span, icfg = _setup(cfg)
    out = _outdir(args)
    grad_dir, traj, _ = direct_gradient(problem.dynamics, cost, problem.events,
                                        rho, t_span, icfg)
    sol = adjoint_mod.propagate_adjoint(traj, cost)
    dims = traj.dims
    header = (["t"] + [f"lamQ{i+1}_{j+1}" for i in range(dims.n) for j in range(cost.nc)]
              + [f"lamV{i+1}_{j+1}" for i in range(dims.n) for j in range(cost.nc)]
              + [f"lamG{i+1}_{j+1}" for i in range(dims.p) for j in range(cost.nc)])
    fmt = cfg.get("format", "csv")
    rows_back = [[t] + list(row) for t, row in zip(sol.times, sol.series)]
    _write_table(out, "adjoint_backward", header, rows_back, fmt)
    tf_order, series_f = sol.forward_order()
    _write_table(out, "adjoint_forward", header,
                 [[t] + list(row) for t, row in zip(tf_order, series_f)], fmt)
    rel = np.max(np.abs(sol.gradient - grad_dir)
                 / np.maximum(1.0, np.abs(grad_dir)))
    doc = {"cost": cost.name, "parameters": list(problem.rho0.labels),
           "direct": grad_dir.tolist(), "adjoint": sol.gradient.tolist(),
           "max_rel_diff": float(rel)}
    with open(out / "gradient.json", "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    _write_sidecar(out / "run.meta.json", cfg, {"command": "adjoint"})
    print(f"adjoint: dpsi/drho = {sol.gradient.ravel()} "
          f"(direct/adjoint max rel diff {rel:.3e}) -> {out}")
    return 0


def cmd_fd_check(args):
    cfg = _effective(args)
    problem, cost, rho, t_span, icfg = _setup(cfg)
    out = _outdir(args)
    h_rel = float(cfg.get("h_rel", 1e-6))

    def run_direct():
        return direct_gradient(problem.dynamics, cost, problem.events, rho, t_span, icfg)

    def run_fd():
        return fd_cost_sensitivity(problem.dynamics, cost, problem.events,
                                   rho, t_span, icfg, h_rel=h_rel)

    # the perturbed simulations are independent; join order is by task, not
    # completion, so output is deterministic
    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_dir = pool.submit(run_direct)
        fut_fd = pool.submit(run_fd)
        grad_dir, traj, _ = fut_dir.result()
        grad_fd = fut_fd.result()
    sol = adjoint_mod.propagate_adjoint(traj, cost)

    table = []
    for j, label in enumerate(problem.rho0.labels):
        d, a, f = grad_dir[:, j], sol.gradient[:, j], grad_fd[:, j]
        scale = np.maximum(1.0, np.abs(d))
        table.append({
            "parameter": label,
            "direct": d.tolist(),
            "adjoint": a.tolist(),
            "fd": f.tolist(),
            "max_rel_diff": float(max(np.max(np.abs(a - d) / scale),
                                      np.max(np.abs(f - d) / scale))),
        })
    with open(out / "fd_check.json", "w") as fh:
        json.dump({"cost": cost.name, "h_rel": h_rel, "table": table}, fh, indent=2)
        fh.write("\n")
    _write_sidecar(out / "run.meta.json", cfg, {"command": "fd-check"})
    worst = max(row["max_rel_diff"] for row in table)
    for row in table:
        print(f"  {row['parameter']:>10}: direct={row['direct']} adjoint={row['adjoint']} "
              f"fd={row['fd']} max_rel_diff={row['max_rel_diff']:.3e}")
    print(f"fd-check: worst max_rel_diff {worst:.3e} -> {out}")
    return 0


def cmd_report(args):
    out = _outdir(args)
    meta_path = out / "run.meta.json"
    if not meta_path.exists():
        raise CliError(f"no stored run at {out} (missing run.meta.json)")
    with open(meta_path) as fh:
        meta = json.load(fh)
    print(json.dumps(meta, indent=2, sort_keys=True))
    for name in ("gradient.json", "fd_check.json", "events.json"):
        path = out / name
        if path.exists():
            with open(path) as fh:
                print(f"--- {name} ---")
                print(fh.read().rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridsens",
        description="Hybrid multibody simulation with direct/adjoint sensitivities",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, needs_model=True):
        if needs_model:
            sp.add_argument("--model", help="gallery model name")
            sp.add_argument("--cost", help="cost name from the model's menu")
            sp.add_argument("--config", help="JSON config file (flags override)")
            sp.add_argument("--t0", type=float)
            sp.add_argument("--tf", type=float)
            sp.add_argument("--rtol", type=float)
            sp.add_argument("--atol", type=float)
            sp.add_argument("--event-tol", type=float, dest="event_tol")
            sp.add_argument("--params", action="append", metavar="NAME=VALUE")
            sp.add_argument("--format", choices=("csv", "json"))
            sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (default runout/)")

    for name, fn in (("simulate", cmd_simulate), ("direct", cmd_direct),
                     ("adjoint", cmd_adjoint)):
        sp = sub.add_parser(name)
        add_common(sp)
        sp.set_defaults(fn=fn)
    sp = sub.add_parser("fd-check")
    add_common(sp)
    sp.add_argument("--h-rel", type=float, dest="h_rel")
    sp.set_defaults(fn=cmd_fd_check)
    sp = sub.add_parser("report")
    add_common(sp, needs_model=False)
    sp.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical failures: singularities, integration
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
