"""Shared plumbing for the experiment scripts: argument parsing and result files."""

import argparse
import json
import logging
import time
from dataclasses import asdict, is_dataclass
from pathlib import Path

from dfslearn.io import write_json
from dfslearn.report import history_csv, manifest, report_tables


def parser(description, default_out):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", type=Path, default=Path("results") / default_out)
    p.add_argument("--full", action="store_true", help="full-scale sizes and epoch counts")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def setup(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.out.mkdir(parents=True, exist_ok=True)
    return time.perf_counter()


def _plain(obj):
    if hasattr(obj, "label") and callable(obj.label):
        return obj.label()
    if is_dataclass(obj):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def save_scan(out, name, scan, extra=None):
    files = [f"{name}.json", f"{name}.txt", f"{name}.csv"]
    data = scan.to_json()
    if extra:
        data["summary"] = _plain(extra)
    write_json(data, out / f"{name}.json")
    (out / f"{name}.txt").write_text(report_tables(scan, "text"))
    (out / f"{name}.csv").write_text(report_tables(scan, "csv"))
    (out / "history").mkdir(exist_ok=True)
    for row in scan.rows:
        if row.report is not None:
            path = f"history/{name}_{row.structure.label()}.csv"
            (out / path).write_text(history_csv(row.report))
            files.append(path)
    print(report_tables(scan, "text"), end="")
    return files


def save_sweep(out, name, res):
    table = {k: res[k] for k in ("columns", "rows", "reference_value", "meta")}
    write_json(table, out / f"{name}.json")
    text = report_tables(table, "text")
    (out / f"{name}.txt").write_text(text)
    (out / f"{name}.csv").write_text(report_tables(table, "csv"))
    print(text, end="")
    return [f"{name}.json", f"{name}.txt", f"{name}.csv"]


def finish(args, command, config, files, started):
    cfg = _plain(config)
    cfg["elapsed_s"] = round(time.perf_counter() - started, 1)
    write_json(manifest(command, cfg, {"seed": args.seed}, files + ["manifest.json"]), args.out / "manifest.json")
    print(f"wrote {len(files)} files to {args.out} in {cfg['elapsed_s']}s")


def dumps(obj):
    return json.dumps(_plain(obj), indent=2)
