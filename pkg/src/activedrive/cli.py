"""Command line entry point: ``activedrive run|sweep|map|presets``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis
from .config import PRESETS, ConfigError, RunConfig, load, parse_assignment
from .sim import EpisodeError, run_batch, run_sweep

log = logging.getLogger("activedrive")


def _config(args) -> RunConfig:
    cfg = load(args.config)
    overrides = dict(parse_assignment(s) for s in args.set)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    return cfg.with_overrides(overrides) if overrides else cfg


def _outdir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or Path("runs") / (cfg.name or cfg.scenario))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return out


def _progress(r):
    log.info("run %d done", r)


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _outdir(args, cfg)
    res = run_batch(cfg, _progress)
    for i, tr in enumerate(res.traces):
        tr.write(out / f"trace_{i:03d}.csv")
    (out / "stats.csv").write_text(analysis.stats_csv(res.stats))
    (out / "summary.csv").write_text(analysis.summary_csv([({}, res.summary)]))
    for k, v in res.summary.items():
        print(f"{k:>18}: {v['mean']:.4g}  [{v['ci_low']:.4g}, {v['ci_high']:.4g}]")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _outdir(args, cfg)
    cells = run_sweep(cfg, _progress)
    stats = []
    for j, (cell, res) in enumerate(cells):
        stats.append(analysis.stats_csv(res.stats, {"cell": j, **cell}))
        for i, tr in enumerate(res.traces):
            tr.write(out / f"trace_c{j:02d}_{i:03d}.csv")
    header, *_ = stats[0].splitlines()
    body = [line for s in stats for line in s.splitlines()[1:]]
    (out / "stats.csv").write_text("\n".join([header, *body]) + "\n")
    (out / "summary.csv").write_text(analysis.summary_csv([(c, r.summary) for c, r in cells]))
    for cell, res in cells:
        s = res.summary
        print(cell, f"speed {s['mean_speed']['mean']:.3f}",
              f"glance {s['glance_duration']['mean']:.3f}s x{s['glance_count']['mean']:.1f}")
    return 0


def cmd_map(args) -> int:
    cfg = _config(args)
    if cfg.scenario != "occlusion":
        raise ConfigError("map is defined for the occlusion scenario")
    model = cfg.model()
    particles = model.init_belief(n=cfg.n_particles).particles
    xs = np.arange(args.x[0], args.x[1] + 1e-9, args.step)
    ys = np.arange(args.y[0], args.y[1] + 1e-9, args.step)
    field = analysis.epistemic_map(model, particles, xs, ys)
    text = analysis.map_csv(analysis.map_rows(field, xs, ys))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_presets(args) -> int:
    for name, doc in PRESETS.items():
        print(f"{name:<12} {doc['scenario']:<10} {yaml.safe_dump(doc.get('scene', {}), default_flow_style=True).strip()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="activedrive", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="preset name or YAML config path")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key by dotted path, e.g. scene.lane_width=2.5")

    r = sub.add_parser("run", help="run a batch of episodes")
    common(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--runs", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every cell of the config's sweep grid")
    common(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--runs", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("map", help="export the epistemic value map of the initial belief")
    common(m)
    m.add_argument("--x", type=float, nargs=2, default=(0.0, 40.0))
    m.add_argument("--y", type=float, nargs=2, default=(-1.5, 1.5))
    m.add_argument("--step", type=float, default=0.5)
    m.add_argument("--out")
    m.set_defaults(func=cmd_map)

    sub.add_parser("presets", help="list embedded presets").set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EpisodeError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
