"""Command-line entry point: ``smcf {simulate,compare,verify,oracle,energies}``.

Failures print a one-line JSON error record to stderr and exit nonzero
(2 for invalid input, 3 for runtime failures).  ``SMCF_THREADS`` caps the
thread pools of the linear-algebra backends.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import flow, geometry as geo, grassmann, io, oracles, shapes, uniqueness
from .errors import ConfigurationError, CutLocus, SMCFError

log = logging.getLogger("smcf")

SCHEMA_HELP = """\
config file (JSON):
  flow:     t_end (required), mode smcf|perturbed, epsilon >= 0, dt > 0 or
            cfl in (0, 0.5], k in 0..3, delta in (0,1), output_every >= 1,
            checkpoint_every >= 0, energy_ceiling > 1, filter_strength >= 0
  initial:  {builtin: circle, sizes: [N], r, center}
            {builtin: perturbed_circle, sizes: [N], r, m, amp, lift}
            {builtin: clifford_torus, sizes: [N1, N2], a, b}
            {builtin: perturbed_torus, sizes: [N1, N2], a, b, amp, m}
            {from_snapshot: path}
            grid sizes are even and >= 16
  outputs:  csv (trace path), snapshot_dir
unknown keys are rejected.
"""


def _emit_error(exc, code):
    record = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("field", "node", "max_angle"):
        val = getattr(exc, attr, None)
        if val is not None:
            record[attr] = val
    print(json.dumps(record), file=sys.stderr)
    return code


def _out(path):
    return sys.stdout if path in (None, "-") else path


def cmd_simulate(args):
    config = io.load_config(args.config)
    state0 = io.initial_state(config)
    fc = io.flow_config(config)
    trace = flow.run(state0, fc)
    k = fc.k if fc.k is not None else geo.critical_order(state0.n)
    outputs = config.get("outputs", {})
    csv_path = args.csv or outputs.get("csv")
    io.write_csv(_out(csv_path), io.trace_columns(k), io.trace_rows(trace))
    snap_dir = args.snapshot_dir or outputs.get("snapshot_dir")
    if snap_dir:
        d = Path(snap_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, st in enumerate(trace.checkpoints):
            io.write_snapshot(st, d / f"snapshot_{i:06d}.json")
        io.write_snapshot(trace.final_state, d / "final.json")
    if trace.status != flow.COMPLETED:
        log.warning("run ended with status %s: %s", trace.status, trace.message)
    return 0


def _parse_samples(text, t_end):
    if text is None:
        return tuple(np.linspace(0.0, t_end, 11))
    vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise ConfigurationError("no sample times given", field="samples")
    return tuple(vals)


def cmd_compare(args):
    ca, cb = io.load_config(args.config_a), io.load_config(args.config_b)
    sa, sb = io.initial_state(ca), io.initial_state(cb)
    if sa.grid.sizes != sb.grid.sizes:
        raise ConfigurationError("the two configs use different grids", field="initial.sizes")
    fa, fb = io.flow_config(ca), io.flow_config(cb)
    t_end = min(fa.t_end, fb.t_end)
    samples = _parse_samples(args.samples, t_end)
    fa = io.flow_config(ca, t_end=t_end, sample_times=samples, monitor_energy=False)
    fb = io.flow_config(cb, t_end=t_end, sample_times=samples, monitor_energy=False)
    ta, tb = flow.run(sa, fa), flow.run(sb, fb)
    bg = uniqueness.Background.from_state(sa)
    rows, good_t, good_L = [], [], []
    for t in samples:
        A, B = ta.samples.get(t), tb.samples.get(t)
        if A is None or B is None:
            rows.append([t, None, None, None, None, None, "run_failed"])
            continue
        try:
            v = uniqueness.L_functional(A, B, bg)
        except CutLocus:
            rows.append([t, None, None, None, None, None, "cut_locus"])
            continue
        rows.append([t, v.L1, v.L2, v.L3, v.total, None, "ok"])
        good_t.append(t)
        good_L.append(v.total)
    if len(good_t) >= 2:
        rate, *_ = uniqueness.fit_envelope(good_t, good_L)
        rows[-1][5] = rate
    io.write_csv(_out(args.out), ["t", "L1", "L2", "L3", "L_total", "fitted_C", "status"], rows)
    return 0


def cmd_verify(args):
    config = io.load_config(args.config)
    init = config["initial"]
    if "builtin" not in init:
        raise ConfigurationError("verify needs a builtin initial condition", field="initial")
    eps = config["flow"].get("epsilon", 0.0)
    base = init["sizes"]
    ladder = [[max(16, s // 4) for s in base], [max(16, s // 2) for s in base], list(base)]

    def build(sizes):
        return io.initial_state({**config, "initial": {**init, "sizes": sizes}})

    rows = []
    prev = None
    for sizes in ladder:
        state = build(sizes)
        ev = flow.verify_evolution_equations(state, eps, args.dt_probe)
        vals = [
            ev.metric,
            ev.volume,
            grassmann.gauss_flow_residual(state, eps, args.dt_probe),
            grassmann.gauss_energy(state, 1).gap,
        ]
        orders = [None] * 4 if prev is None else [_order(p, v) for p, v in zip(prev, vals)]
        rows.append(["x".join(map(str, sizes)), *[x for pair in zip(vals, orders) for x in pair]])
        prev = vals
    header = ["N"]
    for name in ("metric_residual", "volume_residual", "gauss_residual", "gauss_energy_gap"):
        header += [name, name.replace("residual", "order").replace("gap", "gap_order")]
    io.write_csv(_out(args.out), header, rows)
    return 0


def _order(a, b):
    if not (a > 0 and b > 0) or a < 1e-12:
        return None
    return float(np.log2(a / b))


def _oracle_sphere_product(params):
    st = oracles.SphereProductState(int(params.get("p", 1)), int(params.get("q", 1)), float(params.get("a", 1.0)), float(params.get("b", 1.0)))
    t_end = float(params.get("t_end", 1.0))
    orient = int(params.get("orientation", 1))
    ceiling = params.get("energy_ceiling")
    tr = oracles.sphere_product_ode(st, t_end, orient, None if ceiling is None else float(ceiling))
    stop = tr.t[-1]
    ts = np.linspace(0.0, stop, int(params.get("samples", 101)))
    a, b = tr.radii_at(ts)
    E = [oracles.sphere_product_energy(st.p, st.q, x, y) for x, y in zip(a, b)]
    closed = oracles.sphere_product_blowup_time(st.p, st.q, st.a, st.b, orient)
    header = ["t", "a", "b", "E", "blowup_time", "closed_form_blowup_time", "ceiling_time"]
    rows = [[t, x, y, e, tr.blowup_time, closed, tr.ceiling_time] for t, x, y, e in zip(ts, a, b, E)]
    return header, rows


def _oracle_circle(params):
    r = float(params.get("r", 1.0))
    eps = float(params.get("epsilon", 0.0))
    t_end = float(params.get("t_end", 1.0))
    rows = []
    for t in np.linspace(0.0, t_end, int(params.get("samples", 11))):
        st = oracles.circle_exact(r, eps, t, 16)
        c, rad, _ = shapes.circle_fit(st)
        rows.append([t, rad, c[2]])
    return ["t", "radius", "center_z"], rows


ORACLES = {"sphere_product": _oracle_sphere_product, "circle_exact": _oracle_circle}


def cmd_oracle(args):
    if args.name not in ORACLES:
        raise ConfigurationError(f"unknown oracle {args.name!r}; available: {', '.join(sorted(ORACLES))}", field="name")
    params = {}
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigurationError(f"parameter {item!r} is not key=value", field="param")
        params[key] = val
    header, rows = ORACLES[args.name](params)
    io.write_csv(_out(args.out), header, rows)
    return 0


def cmd_energies(args):
    state = io.read_snapshot(args.snapshot)
    rep = geo.energy(state, args.k, args.delta)
    io.write_csv(_out(args.out), io.trace_columns(rep.k), [io.energy_row(state.time, rep, "snapshot")])
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="smcf", description="Skew mean curvature flow toolkit.", epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the flow from a config", epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("config")
    s.add_argument("--csv", help="trace CSV path (default: config outputs.csv or stdout)")
    s.add_argument("--snapshot-dir")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="distance functional between two runs")
    c.add_argument("config_a")
    c.add_argument("config_b")
    c.add_argument("--samples", help="comma-separated sample times (default: 11 uniform)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="evolution-identity residuals on a refinement ladder")
    v.add_argument("config")
    v.add_argument("--dt-probe", type=float, default=1e-4)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help=f"reference solutions ({', '.join(sorted(ORACLES))})")
    o.add_argument("name")
    o.add_argument("--param", action="append", metavar="KEY=VALUE")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("energies", help="energy report of a snapshot")
    e.add_argument("snapshot")
    e.add_argument("-k", type=int, default=None)
    e.add_argument("--delta", type=float, default=0.5)
    e.add_argument("--out")
    e.set_defaults(func=cmd_energies)
    return p


def _thread_limit():
    raw = os.environ.get("SMCF_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"SMCF_THREADS must be a positive integer, got {raw!r}", field="SMCF_THREADS") from None
    if n < 1:
        raise ConfigurationError("SMCF_THREADS must be >= 1", field="SMCF_THREADS")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=_thread_limit()):
            return args.func(args)
    except ConfigurationError as exc:
        return _emit_error(exc, 2)
    except (SMCFError, FloatingPointError) as exc:
        return _emit_error(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
