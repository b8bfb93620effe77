"""Config-driven batch front end.

Subcommands:
    simulate     synthesise the Tx waveform and both branch traces
    train        estimate the channel from simulated traces
    reconstruct  run phase retrieval against traces and an estimate
    sweep        run a configured parameter sweep end to end
    report       render figures and a text summary from an output directory
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evalkit, io, pipeline, plotting
from .config import ExperimentConfig, load_config, save_config
from .txchain import QamConstellation


def _parse_seeds(arg: str | None, cfg: ExperimentConfig) -> list[int]:
    if arg is None:
        return list(cfg.seeds)
    return [int(s) for s in arg.split(",") if s.strip()]


def _outdir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.output or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds, cfg)
    out = _outdir(args, cfg)
    files = []
    for seed in seeds:
        layout, tx, traces = pipeline.simulate(cfg, seed)
        names = [
            f"tx_seed{seed}.bin",
            f"trace_b1_seed{seed}.bin",
            f"trace_b2_seed{seed}.bin",
        ]
        io.write_waveform(out / names[0], tx)
        io.write_trace(out / names[1], traces[0])
        io.write_trace(out / names[2], traces[1])
        files.extend(names)
    save_config(cfg, out / "config.yaml")
    files.append("config.yaml")
    io.write_manifest(
        out, cfg.config_hash(), seeds, files,
        extra={"stage": "simulate", "samples_per_symbol": cfg.frame.sps},
    )
    print(f"simulated {len(seeds)} frame(s) into {out}")
    return 0


def _load_traces(directory: Path, seed: int):
    t1 = io.read_trace(directory / f"trace_b1_seed{seed}.bin")
    t2 = io.read_trace(directory / f"trace_b2_seed{seed}.bin")
    return t1, t2


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds, cfg)
    src = Path(args.input or cfg.output_dir)
    io.check_manifest_hash(src, cfg.config_hash())
    out = _outdir(args, cfg)
    files = []
    for seed in seeds:
        traces = _load_traces(src, seed)
        layout = pipeline.build_layout(cfg, seed)
        est = pipeline.train(cfg, traces, layout)
        est_name = f"estimate_seed{seed}.json"
        report_name = f"training_report_seed{seed}.txt"
        io.save_channel_estimate(out / est_name, est)
        io.write_training_report(out / report_name, est)
        files.extend([est_name, report_name])
        print(f"seed {seed}: trained estimate written to {out / est_name}")
    io.write_manifest(out, cfg.config_hash(), seeds, files, extra={"stage": "train"})
    return 0


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds, cfg)
    src = Path(args.input or cfg.output_dir)
    io.check_manifest_hash(src, cfg.config_hash())
    est_dir = Path(args.estimates or src)
    out = _outdir(args, cfg)
    constellation = QamConstellation(cfg.order)
    rows, files = [], []
    for seed in seeds:
        traces = _load_traces(src, seed)
        layout = pipeline.build_layout(cfg, seed)
        est = io.load_channel_estimate(est_dir / f"estimate_seed{seed}.json")
        result, ber, gmi = pipeline.recover(cfg, traces, layout, est)
        net, rate = evalkit.net_rate_from_ber(
            ber, cfg.frame.pilot_ratio, cfg.frame.symbol_rate_baud, cfg.order
        )
        rows.append([
            seed, f"{ber:.6e}", f"{gmi:.4f}", result.iterations_used,
            result.converged, f"{net:.6e}", f"{rate:.4f}",
        ])
        diag_name = f"iterations_seed{seed}.csv"
        io.write_csv(
            out / diag_name,
            ["iteration", "amp_error", "resets", "ber"],
            [
                [i + 1, f"{amp:.8e}", result.resets_per_iteration[i],
                 f"{result.per_iteration_ber[i]:.6e}" if result.per_iteration_ber else ""]
                for i, amp in enumerate(result.per_iteration_amp_error)
            ],
        )
        const_name = f"constellation_seed{seed}.csv"
        io.write_csv(
            out / const_name,
            ["real", "imag"],
            [[f"{s.real:.8e}", f"{s.imag:.8e}"] for s in result.recovered_symbols],
        )
        files.extend([diag_name, const_name])
        print(f"seed {seed}: BER={ber:.3e} GMI={gmi:.3f} iters={result.iterations_used}")
    io.write_csv(
        out / "results.csv",
        ["seed", "pre_fec_ber", "gmi_bits_per_symbol", "iterations_used",
         "converged", "net_rate_bps", "code_rate"],
        rows,
    )
    files.append("results.csv")
    io.write_manifest(out, cfg.config_hash(), seeds, files, extra={"stage": "reconstruct"})
    return 0


_SWEEP_HEADER = [
    "axis", "axis_value", "seed", "config_hash", "pre_fec_ber",
    "gmi_bits_per_symbol", "iterations_used", "converged", "net_rate_bps",
    "code_rate", "error",
]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep is None or not cfg.sweep.points:
        print("config has no sweep section with points", file=sys.stderr)
        return 2
    seeds = _parse_seeds(args.seeds, cfg)
    out = _outdir(args, cfg)
    sweep_path = out / "sweep.csv"

    done: set[tuple[float, int]] = set()
    existing_rows: list[list[str]] = []
    if args.resume and sweep_path.exists():
        _, existing_rows = io.read_csv(sweep_path)
        done = {(float(r[1]), int(r[2])) for r in existing_rows if not r[10]}

    points = [p for p in cfg.sweep.points]
    pending_seeds = [s for s in seeds]
    if cfg.sweep.axis == "iterations":
        pending = [s for s in pending_seeds
                   if not all((float(p), s) in done for p in points)]
        result = evalkit.run_sweep(
            cfg.sweep.axis, cfg, points, pending, threads=args.threads
        ) if pending else evalkit.SweepResult(cfg.sweep.axis, [float(p) for p in points])
    else:
        todo = [(p, s) for p in points for s in pending_seeds if (float(p), s) not in done]
        result = evalkit.SweepResult(cfg.sweep.axis, [float(p) for p in points])
        if todo:
            # group by point to keep run_sweep's contract simple
            for p in points:
                seeds_here = [s for (pp, s) in todo if pp == p]
                if not seeds_here:
                    continue
                part = evalkit.run_sweep(cfg.sweep.axis, cfg, [p], seeds_here,
                                         threads=args.threads)
                result.points.extend(part.points)

    rows = list(existing_rows)
    failures = 0
    for pt in result.points:
        if pt.error:
            failures += 1
        rows.append([
            cfg.sweep.axis, repr(pt.axis_value), pt.seed, pt.config_hash,
            f"{pt.pre_fec_ber:.6e}", f"{pt.gmi_bits_per_symbol:.4f}",
            pt.iterations_used, pt.converged, f"{pt.net_rate_bps:.6e}",
            f"{pt.code_rate:.4f}", pt.error,
        ])
    rows.sort(key=lambda r: (float(r[1]), int(r[2])))
    io.write_csv(sweep_path, _SWEEP_HEADER, rows)
    save_config(cfg, out / "config.yaml")
    io.write_manifest(
        out, cfg.config_hash(), seeds, ["sweep.csv", "config.yaml"],
        extra={"stage": "sweep", "axis": cfg.sweep.axis},
    )
    print(f"sweep over {cfg.sweep.axis} written to {sweep_path}")
    return 1 if failures else 0


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    src = Path(args.input or cfg.output_dir)
    out = _outdir(args, cfg)
    made = []

    sweep_path = src / "sweep.csv"
    if sweep_path.exists():
        header, rows = io.read_csv(sweep_path)
        axis = rows[0][0] if rows else "axis"
        by_seed: dict[int, dict[float, float]] = {}
        values = sorted({float(r[1]) for r in rows})
        for r in rows:
            if r[10]:
                continue
            by_seed.setdefault(int(r[2]), {})[float(r[1])] = float(r[4])
        curves = {
            seed: [pts.get(v, float("nan")) for v in values]
            for seed, pts in by_seed.items()
        }
        made.append(plotting.plot_ber_curve(values, curves, axis, out / "ber_curve.png"))
        if axis == "pilot_ratio":
            net = [float(np.mean([float(r[8]) for r in rows
                                  if float(r[1]) == v and not r[10]])) / 1e9
                   for v in values]
            code = [float(np.max([float(r[9]) for r in rows
                                  if float(r[1]) == v and not r[10]], initial=0.0))
                    for v in values]
            made.append(plotting.plot_net_rate(values, net, code, out / "net_rate.png"))

    for diag in sorted(src.glob("iterations_seed*.csv")):
        header, rows = io.read_csv(diag)
        amp = [float(r[1]) for r in rows]
        bers = [float(r[3]) for r in rows if r[3]]
        made.append(
            plotting.plot_iteration_curve(amp, bers, out / (diag.stem + ".png"))
        )
    for const in sorted(src.glob("constellation_seed*.csv")):
        header, rows = io.read_csv(const)
        symbols = np.array([float(r[0]) + 1j * float(r[1]) for r in rows])
        made.append(
            plotting.plot_constellation(symbols, out / (const.stem + ".png"),
                                        title=const.stem)
        )
    if not made:
        print(f"nothing to report on in {src}", file=sys.stderr)
        return 2
    for path in made:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prdsp",
        description="carrierless intensity-only link simulator with a "
                    "distortion-aware phase-retrieval receiver",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment YAML")
    common.add_argument("--output", help="output directory (default from config)")
    common.add_argument("--seeds", help="comma-separated seed list override")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--resume", action="store_true",
                        help="skip sweep points already in the output")

    sub.add_parser("simulate", parents=[common]).set_defaults(func=cmd_simulate)
    p_train = sub.add_parser("train", parents=[common])
    p_train.add_argument("--input", help="directory with simulated traces")
    p_train.set_defaults(func=cmd_train)
    p_rec = sub.add_parser("reconstruct", parents=[common])
    p_rec.add_argument("--input", help="directory with simulated traces")
    p_rec.add_argument("--estimates", help="directory with channel estimates")
    p_rec.set_defaults(func=cmd_reconstruct)
    sub.add_parser("sweep", parents=[common]).set_defaults(func=cmd_sweep)
    p_rep = sub.add_parser("report", parents=[common])
    p_rep.add_argument("--input", help="directory with result tables")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
