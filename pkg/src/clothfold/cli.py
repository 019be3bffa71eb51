"""Command-line entry point: ``clothfold {run,bench,mask-ensemble,calibrate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import records
from .config import load_episode_config, load_suite_config, output_dir
from .errors import ClothFoldError
from .harness import EpisodeConfig, run_benchmark, run_episode
from .mask_ensemble import ColorSpec, ensemble, read_image, read_mask, write_mask

log = logging.getLogger("clothfold")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_run(args):
    cfg = load_episode_config(args.config) if args.config else EpisodeConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.policy:
        cfg = replace(cfg, policy=args.policy)
    out = output_dir(args.out)
    result = run_episode(cfg, snapshot=args.snapshots)
    paths = records.write_episode(result, out)
    row = [cfg.policy, cfg.planner.horizon, "default", cfg.params.stiffness,
           cfg.params.elasticity, cfg.seed, result.final_iou, int(result.failed),
           len(result.rows), result.bottom_slip]
    paths.append(records.write_results([row], out))
    status = "FAILED " + result.error if result.failed else "ok"
    print(f"{cfg.policy} seed={cfg.seed} final_iou={result.final_iou:.4f} "
          f"steps={len(result.rows)} {status} ({result.wall_seconds:.1f}s)")
    for p in paths:
        print(f"wrote {p}")
    return 1 if result.failed else 0


def cmd_bench(args):
    suite = load_suite_config(args.suite)
    if args.workers:
        suite = replace(suite, workers=args.workers)
    out = output_dir(args.out)

    def progress(ep):
        c = ep.config
        log.info("%s H=%d seed=%d iou=%.4f%s", c.policy, c.planner.horizon, c.seed,
                 ep.final_iou, " FAILED" if ep.failed else "")

    rows, summary, episodes = run_benchmark(suite, progress)
    for row, ep in zip(rows, episodes):
        records.write_episode(ep, out / "episodes",
                              records.episode_stem(ep.config, row[1], row[2]))
    records.write_results(rows, out)
    records.write_summary(summary, out)
    for policy, horizon, cloth, n, mean, std in summary:
        print(f"{policy:<10} H={horizon:<3} {cloth:<8} n={n:<3} IoU {mean:.3f} +- {std:.3f}")
    print(f"wrote {out / 'results.csv'} and {out / 'summary.csv'}")
    return 0


def cmd_mask_ensemble(args):
    rgb = read_image(args.image)
    masks = [read_mask(p) for p in args.masks]
    color = tuple(int(c) for c in args.color.split(","))
    spec = ColorSpec(color, args.r, args.theta)
    full, bottom, upper = ensemble(masks, rgb, spec)
    out = output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, mask in (("full", full), ("bottom", bottom), ("upper", upper)):
        write_mask(mask, out / f"{name}.pgm")
        print(f"{name}: {mask.count} px -> {out / (name + '.pgm')}")
    return 0


def cmd_calibrate(args):
    """Final Triangular IoU over a grid of spring-constant scales."""
    base = load_episode_config(args.config) if args.config else EpisodeConfig()
    base = replace(base, policy="Triangular")
    rows = []
    for ks in _floats(args.stiffness_scales):
        for kb in _floats(args.bend_scales):
            cfg = replace(base, sim=replace(base.sim, stiffness_scale=ks, bend_scale=kb))
            res = run_episode(cfg)
            ok = args.low <= res.final_iou <= args.high
            rows.append([ks, kb, res.final_iou, res.bottom_slip, int(res.failed), int(ok)])
            print(f"stiffness_scale={ks:<8g} bend_scale={kb:<8g} iou={res.final_iou:.4f} "
                  f"slip={res.bottom_slip * 100:.2f}cm {'in range' if ok else ''}")
    path = records.write_rows(output_dir(args.out) / "calibrate.csv",
                              ["stiffness_scale", "bend_scale", "final_iou", "bottom_slip",
                               "failed", "in_range"], rows)
    print(f"wrote {path}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="clothfold", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single episode")
    p.add_argument("config", nargs="?", help="episode config file (INI)")
    p.add_argument("--policy", choices=["AdaFold", "AdaFoldOL", "Triangular", "Random"])
    p.add_argument("--seed", type=int)
    p.add_argument("--snapshots", action="store_true", help="also write per-step particle CSVs")
    p.add_argument("--out", help="output directory (default $CLOTHFOLD_OUTPUT_DIR or ./out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("suite", help="suite config file (INI)")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("mask-ensemble", help="combine candidate masks into full/bottom/upper")
    p.add_argument("image", help="RGB image (P6)")
    p.add_argument("masks", nargs="+", help="candidate masks (P5, 0/255)")
    p.add_argument("--color", default="0,0,0", help="target bottom color R,G,B")
    p.add_argument("--r", type=float, default=40.0, help="per-channel color threshold")
    p.add_argument("--theta", type=float, default=0.5, help="vote fraction")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mask_ensemble)

    p = sub.add_parser("calibrate", help="sweep spring scales against the Triangular fold")
    p.add_argument("config", nargs="?")
    p.add_argument("--stiffness-scales", default="0.05")
    p.add_argument("--bend-scales", default="0.002,0.005,0.01,0.02")
    p.add_argument("--low", type=float, default=0.3)
    p.add_argument("--high", type=float, default=0.6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ClothFoldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
