"""Output artifacts: CSV/JSON writers and readers.

All floats are written with ``repr`` (shortest round-trip decimal), so every
file reloads bit-exactly.  Each file is written to a temporary sibling and
renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .metrics import FrameSummary
from .rng import STREAMS
from .world import TruthSequence

SUMMARY_COLUMNS = [f.name for f in fields(FrameSummary)]


class OutputError(OSError):
    pass


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


class OutputSet:
    """Tracks written files so a failed run can remove its partial outputs."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.written: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        p = atomic_write(self.out_dir / name, text)
        self.written.append(p)
        return p

    def discard(self) -> None:
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()

    def __enter__(self) -> "OutputSet":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            self.discard()


# -- formatters -------------------------------------------------------------

def format_field(B: np.ndarray, header: dict | None = None) -> str:
    lines = []
    if header:
        lines.append("# " + json.dumps(_plain(header), sort_keys=True))
    for row in np.asarray(B, dtype=float):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_field(text: str) -> tuple[np.ndarray, dict]:
    header: dict = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            header.update(json.loads(line[1:]))
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    return np.array(rows, dtype=float), header


def read_field(path: str | Path) -> tuple[np.ndarray, dict]:
    return parse_field(Path(path).read_text())


def format_summary(rows: Sequence[FrameSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([_num(getattr(r, c)) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def read_summary(path: str | Path) -> list[FrameSummary]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [FrameSummary(int(r["frame"]), *(float(r[c]) for c in SUMMARY_COLUMNS[1:]))
                for r in reader]


def format_jsonl(entries: Iterable[dict]) -> str:
    return "".join(json.dumps(_plain(e)) + "\n" for e in entries)


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _num(v) for v in row])
    return buf.getvalue()


def format_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


# -- artifact sets ----------------------------------------------------------

def truth_header(truth) -> dict:
    return truth.metadata()


def write_truth(out: OutputSet, truth, prefix: str = "truth") -> None:
    meta = truth_header(truth)
    for t, B in enumerate(truth.frames):
        out.write(f"{prefix}_{t}.csv", format_field(B, {**meta, "frame": t}))


def run_metadata(result, command: str) -> dict:
    cfg = result.config
    return {
        "command": command,
        "code_version": __version__,
        "config": cfg.to_dict(),
        "master_seed": cfg.run.seed,
        "streams": STREAMS,
        "strain_rad_s": list(result.strain),
        "window_count": result.window_count,
        "coverage_min": int(result.coverage.min()),
        "uncovered_sites": int((result.coverage == 0).sum()),
        "dice_threshold_T": cfg.dice_threshold,
        "truth": result.truth.metadata(),
    }


def write_run(out_dir: str | Path, result, command: str = "run") -> list[Path]:
    """frame_summary.csv, controls.jsonl, field/truth dumps, coverage,
    benchmark.json and run_meta.json."""
    with OutputSet(out_dir) as out:
        out.write("frame_summary.csv", format_summary(result.summaries))
        out.write("controls.jsonl", format_jsonl(result.control_log))
        for t, B in enumerate(result.reconstructions):
            out.write(f"field_{t}.csv", format_field(B))
        write_truth(out, result.truth)
        out.write("coverage.csv", format_table(
            [f"c{j}" for j in range(result.coverage.shape[1])], result.coverage.tolist()))
        if result.benchmark is not None:
            out.write("benchmark.json", format_json(result.benchmark.to_dict()))
        out.write("run_meta.json", format_json(run_metadata(result, command)))
        return list(out.written)


def read_truth(directory: str | Path, prefix: str = "truth"):
    """Reload a truth sequence written by ``write_truth``."""
    directory = Path(directory)
    frames, meta = [], {}
    t = 0
    while (directory / f"{prefix}_{t}.csv").exists():
        B, meta = read_field(directory / f"{prefix}_{t}.csv")
        frames.append(B)
        t += 1
    if not frames:
        raise OutputError(f"no {prefix}_*.csv files in {directory}")
    incs = [b - a for a, b in zip(frames, frames[1:])]
    return TruthSequence(frames, float(meta["J_true"]), int(meta["seed"]),
                         float(meta["sigma_true"]), float(meta["B_base"]),
                         float(meta["B_amp"]), incs)
