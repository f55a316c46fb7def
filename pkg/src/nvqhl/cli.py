"""Command-line entry point: ``nvqhl <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_value
from .pipeline import benchmark_for_config, make_truth, run_experiment
from .report import OutputSet, format_json, format_table, write_run, write_truth
from .validation import run_checks

log = logging.getLogger("nvqhl")


def _parse_set(items: list[str]) -> dict[str, object]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def _directions(text: str) -> tuple[str, ...]:
    t = text.replace("+", ",").replace(" ", "")
    parts = [p for p in t.split(",") if p] if "," in t else list(t)
    return tuple(p.upper() for p in parts)


def resolve_config(args) -> ExperimentConfig:
    overrides = _parse_set(args.set or [])
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.frames is not None:
        overrides["run.frames"] = args.frames
    if getattr(args, "directions", None):
        overrides["grid.directions"] = _directions(args.directions)
    return load_config(args.config, overrides)


def _progress(quiet: bool):
    if quiet:
        return None
    t0 = time.time()
    return lambda msg: print(f"[{time.time() - t0:7.1f}s] {msg}", file=sys.stderr, flush=True)


def cmd_generate_truth(args) -> int:
    cfg = resolve_config(args)
    truth = make_truth(cfg)
    with OutputSet(args.out_dir) as out:
        write_truth(out, truth)
        out.write("truth_meta.json", format_json({"config": cfg.to_dict(), **truth.metadata()}))
    print(f"wrote {len(truth.frames)} truth frames to {args.out_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    result = run_experiment(cfg, progress=_progress(args.quiet))
    write_run(args.out_dir, result, "run")
    last = result.summaries[-1]
    print(f"frame {last.frame}: rmse={last.rmse_T:.4e} T dice={last.dice:.4f} "
          f"J={last.J_mean_Hz:.1f}+-{last.J_std_Hz:.1f} Hz")
    return 0


SCANS = (("H", ("H",)), ("V", ("V",)), ("H+V", ("H", "V")))


def compare_scans(cfg: ExperimentConfig, progress=None) -> dict[str, list]:
    """Run H-only, V-only and H+V on one shared truth sequence."""
    truth = make_truth(cfg)
    out = {}
    for name, dirs in SCANS:
        sub = cfg.with_overrides({"grid.directions": dirs})
        out[name] = run_experiment(sub, truth, progress).summaries
    return out


def cmd_compare_scans(args) -> int:
    cfg = resolve_config(args)
    res = compare_scans(cfg, _progress(args.quiet))
    rows = [(name, s.frame, s.rmse_T, s.mae_T, s.dice, s.iou)
            for name, summ in res.items() for s in summ]
    with OutputSet(args.out_dir) as out:
        out.write("scan_comparison.csv",
                  format_table(["scan", "frame", "rmse_T", "mae_T", "dice", "iou"], rows))
        out.write("run_meta.json", format_json({"command": "compare-scans",
                                                "code_version": __version__,
                                                "config": cfg.to_dict()}))
    for name, summ in res.items():
        print(f"{name:4s} final rmse={summ[-1].rmse_T:.4e} T mae={summ[-1].mae_T:.4e} T")
    return 0


def cmd_benchmark(args) -> int:
    cfg = resolve_config(args)
    if cfg.grid.window < 2:
        raise ConfigError("benchmark-metrology needs grid.window >= 2")
    bench = benchmark_for_config(cfg)
    with OutputSet(args.out_dir) as out:
        out.write("benchmark.json", format_json(bench.to_dict()))
    for k, v in bench.to_dict().items():
        print(f"{k:24s} {v!r}")
    return 0


def cmd_validate(args) -> int:
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:20s} {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvqhl", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, directions=True):
        sp.add_argument("--config", type=Path, help="key = value config file")
        sp.add_argument("--seed", type=int, help="master seed (run.seed)")
        sp.add_argument("--out-dir", type=Path, default=Path("out"))
        sp.add_argument("--frames", type=int, help="number of frames (run.frames)")
        if directions:
            sp.add_argument("--directions", help="scan directions, e.g. H, V or H,V")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key, e.g. --set particles.n_local=64")
        sp.add_argument("-q", "--quiet", action="store_true")

    common(sub.add_parser("generate-truth", help="write a truth sequence"), directions=False)
    common(sub.add_parser("run", help="run the full experiment"))
    common(sub.add_parser("compare-scans", help="H-only vs V-only vs H+V"), directions=False)
    common(sub.add_parser("benchmark-metrology", help="coupling QFI benchmark"))
    sub.add_parser("validate", help="invariant self-test")
    return p


HANDLERS = {
    "generate-truth": cmd_generate_truth,
    "run": cmd_run,
    "compare-scans": cmd_compare_scans,
    "benchmark-metrology": cmd_benchmark,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"nvqhl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
