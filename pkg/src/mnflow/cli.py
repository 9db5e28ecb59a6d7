"""Command-line harness: degrade, estimate, compensate, evaluate, bench, synth.

Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time

import numpy as np

from mnflow.hos import INTENSITY, RESIDUAL, GammaParams
from mnflow.imagecore import Image, PgmError, check_same_size, load_pgm, motion_compensate, save_pgm
from mnflow.mnsolver import MODES, DivergenceError, SolverConfig
from mnflow.noiselab import FAMILIES, NoiseSpec, degrade_to_snr, parse_family, snr_between
from mnflow.pelrec import PREDICTIONS, FloError, PelRecConfig, estimate_flow, read_flo, save_flow_color, write_flo

BENCH_COLUMNS = ["noise", "snr_target", "snr_achieved", "mode", "psnr_compensated",
                 "mean_gamma", "mean_iters", "runtime_ms"]
EVAL_COLUMNS = ["mse", "psnr_db", "snr_db"]

_KURTOSIS_MODES = {"residual": RESIDUAL, "intensity": INTENSITY, INTENSITY: INTENSITY}


class UsageError(Exception):
    pass


def _noise_arg(text):
    try:
        return parse_family(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("SNR targets must be finite numbers")
    return vals


def _mode_list(text):
    modes = [t.strip() for t in text.split(",") if t.strip()]
    bad = [m for m in modes if m not in MODES]
    if not modes or bad:
        raise argparse.ArgumentTypeError(f"modes must be drawn from {','.join(MODES)}")
    return modes


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def _add_solver_flags(p, with_mode=True):
    d = SolverConfig()
    pd = PelRecConfig()
    if with_mode:
        p.add_argument("--mode", choices=MODES, default=d.mode)
    p.add_argument("--window", type=int, default=pd.window, help="neighborhood side (odd for centered)")
    p.add_argument("--window-shape", choices=("centered", "causal"), default=pd.window_shape)
    p.add_argument("--dmax", type=float, default=pd.d_max, help="displacement clamp in pixels")
    p.add_argument("--umax", type=float, default=pd.u_max, help="per-pixel update cap in pixels (0: off)")
    p.add_argument("--prediction", choices=PREDICTIONS, default=pd.prediction)
    p.add_argument("--beta0", type=float, default=d.beta0)
    p.add_argument("--gamma-c", type=float, default=d.gamma_params.c)
    p.add_argument("--gamma-A", type=float, default=d.gamma_params.A)
    p.add_argument("--kurtosis-mode", choices=sorted(_KURTOSIS_MODES), default="residual")
    p.add_argument("--kurtosis-window", type=int, default=d.kurtosis_window)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--tol", type=float, default=d.tol)


def _config(args, mode=None) -> PelRecConfig:
    try:
        solver = SolverConfig(
            beta0=args.beta0,
            gamma_params=GammaParams(args.gamma_c, args.gamma_A),
            mode=mode or args.mode,
            max_iters=args.max_iters,
            tol=args.tol,
            kurtosis_mode=_KURTOSIS_MODES[args.kurtosis_mode],
            kurtosis_window=args.kurtosis_window,
        )
        return PelRecConfig(window=args.window, window_shape=args.window_shape, d_max=args.dmax,
                            u_max=args.umax, prediction=args.prediction, solver=solver)
    except ValueError as exc:
        raise UsageError(str(exc))


def _config_lines(cfg: PelRecConfig):
    s = cfg.solver
    return [
        f"window={cfg.window} window_shape={cfg.window_shape} d_max={cfg.d_max:g} u_max={cfg.u_max:g} "
        f"prediction={cfg.prediction}",
        f"beta0={s.beta0:g} eps={s.eps:g} gamma_c={s.gamma_params.c:g} gamma_A={s.gamma_params.A:g} "
        f"kurtosis_mode={s.kurtosis_mode} kurtosis_window={s.kurtosis_window} "
        f"max_iters={s.max_iters} tol={s.tol:g} max_halvings={s.max_halvings}",
    ]


# -- commands -------------------------------------------------------------------

def cmd_degrade(args, out):
    image = load_pgm(args.input)
    noisy, spec = degrade_to_snr(image, args.noise, args.snr, args.seed)
    report = snr_between(image, noisy)
    save_pgm(noisy, args.output)
    print(f"noise={spec.label} target_snr_db={args.snr:g} achieved_snr_db={_fmt(report.snr_db)} "
          f"noise_variance={report.noise_variance:.6g}", file=out)


def cmd_estimate(args, out):
    cfg = _config(args)
    frame_k = load_pgm(args.frame_k)
    frame_km1 = load_pgm(args.frame_km1)
    check_same_size(frame_k, frame_km1)
    flow, diag = estimate_flow(frame_k, frame_km1, cfg)
    write_flo(flow, args.output)
    if args.viz:
        save_flow_color(flow, args.viz)
    mag = np.hypot(flow.u, flow.v)
    print(f"mode={cfg.solver.mode} mean_abs_d={_fmt(float(mag.mean()))} mean_iters={_fmt(diag.mean_iters)} "
          f"mean_gamma={_fmt(diag.mean_gamma)} mean_abs_dfd_before={_fmt(diag.dfd_before)} "
          f"mean_abs_dfd_after={_fmt(diag.dfd_after)}", file=out)


def cmd_compensate(args, out):
    frame = load_pgm(args.frame_km1)
    flow = read_flo(args.flow)
    comp = motion_compensate(frame, flow)
    save_pgm(comp, args.output)


def cmd_evaluate(args, out):
    ref = load_pgm(args.ref)
    test = load_pgm(args.test)
    rep = snr_between(ref, test)
    w = csv.writer(out, lineterminator="\n")
    if args.header:
        w.writerow(EVAL_COLUMNS)
    w.writerow([_fmt(rep.mse), _fmt(rep.psnr_db), _fmt(rep.snr_db)])


def _cell_seed(seed: int, *key) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def run_bench(frame_k: Image, frame_km1: Image, noises, snrs, modes, seed: int, base: PelRecConfig,
              degrade_both=False, out_dir=None):
    """Run the degradation / estimation / compensation grid; returns a list of row dicts.

    The current frame is degraded (and the previous one too with
    ``degrade_both``); the flow is estimated between them, the previous
    frame used for estimation is backward-warped, and the result is
    scored against the clean current frame.
    """
    check_same_size(frame_k, frame_km1)
    rows = []
    for i, noise in enumerate(noises):
        for j, snr in enumerate(snrs):
            noisy_k, _ = degrade_to_snr(frame_k, noise, snr, _cell_seed(seed, i, j, 0))
            achieved = snr_between(frame_k, noisy_k).snr_db
            prev = frame_km1
            if degrade_both:
                prev, _ = degrade_to_snr(frame_km1, noise, snr, _cell_seed(seed, i, j, 1))
            tag = f"{noise.label.replace(':', '-').replace(',', '_')}_{snr:g}dB"
            if out_dir:
                save_pgm(noisy_k, os.path.join(out_dir, f"noisy_{tag}.pgm"))
            for mode in modes:
                cfg = PelRecConfig(base.window, base.window_shape, base.d_max, base.u_max, base.prediction,
                                   SolverConfig(**{**base.solver.__dict__, "mode": mode}))
                t0 = time.perf_counter()
                flow, diag = estimate_flow(noisy_k, prev, cfg)
                runtime_ms = (time.perf_counter() - t0) * 1e3
                comp = motion_compensate(prev, flow)
                if out_dir:
                    save_pgm(comp, os.path.join(out_dir, f"comp_{tag}_{mode}.pgm"))
                rows.append({
                    "noise": noise.label,
                    "snr_target": snr,
                    "snr_achieved": achieved,
                    "mode": mode,
                    "psnr_compensated": snr_between(frame_k, comp).psnr_db,
                    "mean_gamma": diag.mean_gamma,
                    "mean_iters": diag.mean_iters,
                    "runtime_ms": runtime_ms,
                })
    return rows


def format_bench_csv(rows, meta_lines=()) -> str:
    buf = io.StringIO()
    for line in meta_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([
            r["noise"], f"{r['snr_target']:g}", _fmt(r["snr_achieved"]), r["mode"],
            _fmt(r["psnr_compensated"]), _fmt(r["mean_gamma"]), _fmt(r["mean_iters"]),
            f"{r['runtime_ms']:.1f}",
        ])
    return buf.getvalue()


def cmd_bench(args, out):
    base = _config(args, mode="adaptive")
    noises = []
    for item in args.noise:
        parts = [item] if item.lower().startswith("mix:") else item.split(",")
        for part in parts:
            if part.strip():
                try:
                    noises.append(parse_family(part))
                except ValueError as exc:
                    raise UsageError(str(exc))
    if not noises:
        raise UsageError("at least one noise family is required")
    frame_k = load_pgm(args.frames[0])
    frame_km1 = load_pgm(args.frames[1])
    check_same_size(frame_k, frame_km1)
    os.makedirs(args.out, exist_ok=True)
    rows = run_bench(frame_k, frame_km1, noises, args.snr, args.modes, args.seed, base,
                     args.degrade_both, args.out)
    meta = [
        "mnflow bench",
        f"frames={args.frames[0]} {args.frames[1]} seed={args.seed} degrade_both={int(args.degrade_both)}",
        *_config_lines(base),
    ]
    text = format_bench_csv(rows, meta)
    with open(os.path.join(args.out, "bench.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    out.write(text)


def cmd_synth(args, out):
    from mnflow.synthetic import shifted_pair

    frame_k, frame_km1 = shifted_pair((args.size, args.size), args.shift, args.seed)
    save_pgm(frame_k, args.frame_k)
    save_pgm(frame_km1, args.frame_km1)


def _shift_arg(text):
    try:
        sx, sy = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("shift must be two integers, e.g. 1,0")
    return sx, sy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="add SNR-targeted noise to a frame")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--noise", type=_noise_arg, required=True,
                   help=f"{'|'.join(FAMILIES)}|mix:a,family1,b,family2")
    p.add_argument("--snr", type=float, required=True, help="target SNR in dB")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("estimate", help="estimate dense flow between two frames")
    p.add_argument("frame_k", help="current frame")
    p.add_argument("frame_km1", help="previous frame")
    p.add_argument("output", help="flow file to write")
    p.add_argument("--viz", help="optional color visualization (PPM)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compensate", help="backward-warp the previous frame along a flow")
    p.add_argument("frame_km1")
    p.add_argument("flow")
    p.add_argument("output")
    p.set_defaults(func=cmd_compensate)

    p = sub.add_parser("evaluate", help="print mse, psnr_db, snr_db as one CSV row")
    p.add_argument("ref")
    p.add_argument("test")
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="noise x SNR x mode comparison grid")
    p.add_argument("--frames", nargs=2, required=True, metavar=("FRAME_K", "FRAME_KM1"))
    p.add_argument("--noise", nargs="+", default=["gaussian,laplacian,uniform"])
    p.add_argument("--snr", type=_float_list, default=[30.0, 20.0])
    p.add_argument("--modes", type=_mode_list, default=list(MODES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--degrade-both", action="store_true", help="corrupt the previous frame as well")
    _add_solver_flags(p, with_mode=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic textured pair with integer motion")
    p.add_argument("frame_k")
    p.add_argument("frame_km1")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--shift", type=_shift_arg, default=(1, 0))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args, out)
    except UsageError as exc:
        print(f"mnflow {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, PgmError, FloError, DivergenceError, ValueError) as exc:
        print(f"mnflow {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
