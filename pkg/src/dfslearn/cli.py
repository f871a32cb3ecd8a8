"""Command-line front end: ``dfslearn <subcommand> [options]``.

Exit status 0 on success, 2 on configuration errors, 3 on numerical
failures; failures also print a JSON error record to stderr and write it to
``<out>/error.json``. ``DFSLEARN_SEED`` and ``DFSLEARN_OUT`` override the
seed and output directory from a config file; explicit flags override both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from . import experiments as ex
from .algebra import AlgebraStructure, enumerate_structures, hierarchy_dag
from .checks import run_all
from .dynamics import ZeroProbabilityBranch
from .generator import model_propagator, verify_cptp
from .io import read_dataset, read_json, write_dataset, write_json
from .physmodels import TABLE_STRUCTURES, WaveguideParams, waveguide_operators
from .report import history_csv, manifest, report_tables
from .schemas import validate
from .training import ScanResult, TrainingFailed, train

log = logging.getLogger("dfslearn")

COMMANDS = ("gen-data", "enumerate", "hierarchy", "train", "scan", "tradeoff", "restricted",
            "waveguide", "verify", "report")


class ConfigError(Exception):
    pass


def slug(structure):
    """File-name friendly label, e.g. ``1x2_1x1_1x1`` for ``({1,2},{1,1}^2)``."""
    prefix = f"z{structure.n0}_" if structure.n0 else ""
    return prefix + "_".join(f"{n}x{m}" for n, m in structure.blocks)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for scans")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--scale", type=float, default=0.1,
                        help="fraction of the full 60000-measurement budget N*S used by tradeoff (default 0.1)")
    common.add_argument("--full", action="store_true", help="full-scale sizes and epoch counts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dfslearn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def data_opts(sp):
        sp.add_argument("--structure", help="generating structure, e.g. '({1,2},{1,1}^2)'")
        sp.add_argument("--accessible", help="accessible algebra, e.g. 'n0=2;{3,1}' (default: full)")
        sp.add_argument("-S", type=int)
        sp.add_argument("--S-test", type=int, dest="S_test")
        sp.add_argument("-N", type=int)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--postselect", action="store_true", default=None)

    def train_opts(sp):
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--batch-size", type=int, dest="batch_size")
        sp.add_argument("--lr", type=float, dest="learning_rate")

    sp = sub.add_parser("gen-data", parents=[common], help="write train/test datasets")
    data_opts(sp)
    sp.add_argument("--waveguide", action="store_true", help="use the emitter-array model")

    sp = sub.add_parser("enumerate", parents=[common], help="list structures for dimension n")
    sp.add_argument("--n", type=int)
    sp.add_argument("--allow-n0", action="store_true", default=None, dest="allow_n0")

    sp = sub.add_parser("hierarchy", parents=[common], help="embedding DAG as JSON and DOT")
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("train", parents=[common], help="fit one structure")
    data_opts(sp)
    train_opts(sp)
    sp.add_argument("--model", help="structure to fit (default: the generating structure)")
    sp.add_argument("--train-data", dest="train_data")
    sp.add_argument("--test-data", dest="test_data")

    sp = sub.add_parser("scan", parents=[common], help="fit and rank candidate structures")
    data_opts(sp)
    train_opts(sp)
    sp.add_argument("--candidates", nargs="+")

    sp = sub.add_parser("tradeoff", parents=[common], help="chain length vs count at fixed N*S")
    data_opts(sp)
    train_opts(sp)
    sp.add_argument("--lengths", nargs="+", type=int)

    sp = sub.add_parser("restricted", parents=[common], help="training through restricted observables")
    data_opts(sp)
    train_opts(sp)
    sp.add_argument("--n0", nargs="+", type=int, dest="n0_values")

    sp = sub.add_parser("waveguide", parents=[common], help="structure scan on emitter-array data")
    train_opts(sp)
    sp.add_argument("--candidates", nargs="+")
    sp.add_argument("-S", type=int)
    sp.add_argument("-N", type=int)

    sp = sub.add_parser("verify", parents=[common], help="run the numerical self-checks")

    sp = sub.add_parser("report", parents=[common], help="render tables from result JSON")
    sp.add_argument("inputs", nargs="*", type=Path)
    sp.add_argument("--format", choices=("text", "csv"))
    return p


def load_config(args):
    cfg = {}
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file {args.config} does not exist")
        try:
            cfg = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        validate(cfg, "config")
    train_cfg = dict(cfg.pop("train", {}))
    seed = cfg.pop("seed", train_cfg.pop("seed", None))
    train_cfg.pop("seed", None)
    if os.environ.get("DFSLEARN_SEED"):
        seed = int(os.environ["DFSLEARN_SEED"])
    if args.seed is not None:
        seed = args.seed
    out = os.environ.get("DFSLEARN_OUT") or cfg.pop("out", None) or "dfslearn-out"
    if args.out is not None:
        out = args.out
    for key, value in vars(args).items():
        if key in ("config", "seed", "out", "command", "jobs", "scale", "full", "verbose"):
            continue
        if value is None:
            continue
        if key in ("epochs", "restarts", "batch_size", "learning_rate"):
            train_cfg[key] = value
        else:
            cfg[key] = value
    return cfg, train_cfg, 0 if seed is None else int(seed), Path(out)


def parse_structure(text, what):
    try:
        return AlgebraStructure.parse(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad {what} {text!r}: {exc}") from exc


def data_spec(cfg, args, base=ex.DataSpec()):
    spec = ex.FULL_SCAN if args.full else base
    fields = {k: cfg[k] for k in ("S", "S_test", "N", "tau", "model_scale", "unitary_scale",
                                 "granularity", "postselect") if k in cfg}
    try:
        return replace(spec, **fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(train_cfg, seed, args, full_epochs):
    base = ex.DESK_TRAIN
    if args.full:
        base = replace(base, epochs=full_epochs, batch_size=None)
    try:
        return replace(base, seed=seed, **train_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training config: {exc}") from exc


class Outputs:
    def __init__(self, root):
        self.root = root
        self.files = []
        root.mkdir(parents=True, exist_ok=True)

    def json(self, name, obj, schema=None):
        if schema is not None:
            validate(obj, schema)
        self.files.append(name)
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return write_json(obj, path)

    def text(self, name, text):
        self.files.append(name)
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return path


def _scan_outputs(out, scan, extra=None):
    data = scan.to_json()
    if extra:
        data.update(extra)
    out.json("scan.json", {k: data[k] for k in ("reference_value", "rows")}, "scan_result")
    if extra:
        out.json("scan_summary.json", extra)
    out.text("scan.txt", report_tables(scan, "text"))
    out.text("scan.csv", report_tables(scan, "csv"))
    for row in scan.rows:
        if row.report is not None:
            out.text(f"history/{slug(row.structure)}.csv", history_csv(row.report))
    print(report_tables(scan, "text"), end="")


def _sweep_outputs(out, name, res):
    table = {k: res[k] for k in ("columns", "rows", "reference_value", "meta")}
    out.json(f"{name}.json", table, "sweep")
    for key, rep in (res["reports"].items() if isinstance(res["reports"], dict) else enumerate(res["reports"])):
        out.json(f"reports/{name}_{key}.json", rep.to_json(), "train_report")
        out.text(f"history/{name}_{key}.csv", history_csv(rep))
    out.text(f"{name}.txt", report_tables(table, "text")
             + ("" if table["reference_value"] is None else f"F_E/N = {table['reference_value']:.4f}\n"))
    out.text(f"{name}.csv", report_tables(table, "csv"))
    print(report_tables(table, "text"), end="")


def cmd_gen_data(cfg, tcfg, seed, args, out):
    spec = data_spec(cfg, args)
    if cfg.get("waveguide"):
        wp = WaveguideParams(**(cfg["waveguide"] if isinstance(cfg["waveguide"], dict) else {}))
        model = waveguide_operators(wp)
        spec = replace(spec, tau=wp.tau)
    else:
        model = ex.generating_model(parse_structure(cfg.get("structure", "({1,4})"), "structure"), seed, spec)
    n = model.n
    acc = parse_structure(cfg["accessible"], "accessible algebra") if "accessible" in cfg else ex.full_algebra(n)
    if acc.n != n:
        raise ConfigError(f"accessible algebra has n={acc.n}, model has n={n}")
    if acc.n0 and not spec.postselect:
        log.info("recording the zero-block projector as an extra outcome")
    tr, te = ex.make_data(model, acc, spec, seed)
    out.files += ["train.jsonl", "test.jsonl"]
    write_dataset(tr, out.root / "train.jsonl")
    write_dataset(te, out.root / "test.jsonl")
    out.json("model.json", model.to_json())
    print(f"wrote {len(tr)} training and {len(te)} test chains to {out.root}")
    return {"data": seed}


def cmd_enumerate(cfg, tcfg, seed, args, out):
    n = int(cfg.get("n", 4))
    if n < 1:
        raise ConfigError("n must be >= 1")
    allow = bool(cfg.get("allow_n0", False))
    ordered = enumerate_structures(n, allow_n0=allow)
    canon = enumerate_structures(n, up_to_permutation=True, allow_n0=allow)
    out.json("structures.json", {"n": n, "allow_n0": allow,
                                 "ordered": [s.label() for s in ordered],
                                 "canonical": [s.label() for s in canon]})
    print(f"n={n}: {len(ordered)} structures ({len(canon)} up to block permutation)")
    for s in canon:
        print(" ", s.label())
    return {}


def cmd_hierarchy(cfg, tcfg, seed, args, out):
    n = int(cfg.get("n", 4))
    dag = hierarchy_dag(enumerate_structures(n, up_to_permutation=True))
    out.text("hierarchy.dot", dag.to_dot())
    out.json("hierarchy.json", {
        "n": n,
        "nodes": [s.label() for s in dag.topological_order()],
        "edges": sorted([sub.label(), sup.label()] for sub, sup in dag.edges),
    })
    print(dag.to_dot(), end="")
    return {}


def _datasets(cfg, seed, args):
    if "train_data" in cfg or "test_data" in cfg:
        if not ("train_data" in cfg and "test_data" in cfg):
            raise ConfigError("give both --train-data and --test-data")
        for key in ("train_data", "test_data"):
            if not Path(cfg[key]).exists():
                raise ConfigError(f"{cfg[key]} does not exist")
        return None, read_dataset(cfg["train_data"]), read_dataset(cfg["test_data"])
    spec = data_spec(cfg, args)
    nu = parse_structure(cfg.get("structure", "({1,2},{1,1}^2)"), "structure")
    model = ex.generating_model(nu, seed, spec)
    tr, te = ex.make_data(model, ex.full_algebra(nu.n), spec, seed)
    return model, tr, te


def cmd_train(cfg, tcfg, seed, args, out):
    model, tr, te = _datasets(cfg, seed, args)
    label = cfg.get("model") or cfg.get("structure")
    if label is None:
        raise ConfigError("--model is required with external datasets")
    nu = parse_structure(label, "model structure")
    tc = train_config(tcfg, seed, args, ex.FULL_EPOCHS["scan"])
    rep = train(nu, tc, tr, te)
    out.json("report.json", rep.to_json(), "train_report")
    out.text("history.csv", history_csv(rep))
    print(f"{nu.label()}: best test F/N {rep.best_test_value:.4f} at epoch {rep.best_epoch}")
    return {"train": tc.seed}


def cmd_scan(cfg, tcfg, seed, args, out):
    spec = data_spec(cfg, args)
    nu = parse_structure(cfg.get("structure", "({1,4})"), "structure")
    cands = [parse_structure(c, "candidate") for c in cfg["candidates"]] if "candidates" in cfg else None
    tc = train_config(tcfg, seed, args, ex.FULL_EPOCHS["scan6" if nu.n == 6 else "scan"])
    res = ex.run_scan(nu, cands, tc, seed, spec, jobs=args.jobs)
    extra = None
    if "violations" in res:
        extra = {"violations": [[v.complex_structure.label(), v.simple_structure.label(), v.shortfall]
                                for v in res["violations"]],
                 "frontier": None if res["frontier"] is None else res["frontier"].label()}
    _scan_outputs(out, res["scan"], extra)
    return {"data": seed, "train": tc.seed}


def cmd_tradeoff(cfg, tcfg, seed, args, out):
    spec = data_spec(cfg, args, ex.DataSpec())
    nu = parse_structure(cfg.get("structure", "({1,2}^2)"), "structure")
    scale = 1.0 if args.full else args.scale
    product = int(cfg.get("product", round(60000 * scale)))
    lengths = cfg.get("lengths") or [p[0] for p in cfg.get("pairs", [])] or [10, 50, 100, 200]
    test_size = (100, 500) if args.full else (spec.S_test, spec.N)
    tc = train_config(tcfg, seed, args, ex.FULL_EPOCHS["tradeoff"])
    res = ex.run_tradeoff(nu, tc, seed, product, tuple(lengths), spec, test_size)
    _sweep_outputs(out, "tradeoff", res)
    return {"data": seed, "train": tc.seed}


def cmd_restricted(cfg, tcfg, seed, args, out):
    spec = data_spec(cfg, args)
    nu = parse_structure(cfg.get("structure", "({2,2},{1,1})"), "structure")
    n0s = cfg.get("n0_values") or [0, 2]
    if any(not 0 <= k < nu.n for k in n0s):
        raise ConfigError("every n0 must satisfy 0 <= n0 < n")
    tc = train_config(tcfg, seed, args, ex.FULL_EPOCHS["restricted"])
    post = cfg.get("postselect")
    res = ex.run_restricted(nu, tc, seed, tuple(n0s), spec, postselect=True if post is None else post)
    _sweep_outputs(out, "restricted", res)
    return {"data": seed, "train": tc.seed}


def cmd_waveguide(cfg, tcfg, seed, args, out):
    wp = WaveguideParams(**cfg.get("waveguide", {}))
    S = cfg.get("S", 100 if args.full else 50)
    N = cfg.get("N", 100)
    cands = cfg.get("candidates") or (list(TABLE_STRUCTURES) if args.full else ["({1,8})", "({2,1}^4)", "({8,1})"])
    tc = train_config(tcfg, seed, args, ex.FULL_EPOCHS["waveguide"])
    res = ex.run_waveguide(tc, seed, [parse_structure(c, "candidate") for c in cands], wp, S, S, N, args.jobs)
    p = model_propagator(res["operators"], wp.tau)
    _scan_outputs(out, res["scan"], {"cptp": verify_cptp(p).passed, "params": vars(wp)})
    return {"data": seed, "train": tc.seed}


def cmd_verify(cfg, tcfg, seed, args, out):
    results = run_all(seed)
    out.json("verify.json", results)
    for name, r in results.items():
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {name}")
    if not all(r["passed"] for r in results.values()):
        raise FloatingPointError("numerical self-checks failed")
    return {}


def cmd_report(cfg, tcfg, seed, args, out):
    inputs = cfg.get("inputs") or []
    if not inputs:
        raise ConfigError("report needs at least one input JSON file")
    fmt = cfg.get("format", "text")
    for path in map(Path, inputs):
        if not path.exists():
            raise ConfigError(f"{path} does not exist")
        data = read_json(path)
        results = ScanResult.from_json(data) if "rows" in data and "columns" not in data else data
        text = report_tables(results, fmt)
        out.text(f"{path.stem}.{'csv' if fmt == 'csv' else 'txt'}", text)
        print(text, end="")
    return {}


HANDLERS = {
    "gen-data": cmd_gen_data, "enumerate": cmd_enumerate, "hierarchy": cmd_hierarchy,
    "train": cmd_train, "scan": cmd_scan, "tradeoff": cmd_tradeoff, "restricted": cmd_restricted,
    "waveguide": cmd_waveguide, "verify": cmd_verify, "report": cmd_report,
}


def _fail(out_dir, kind, exc):
    code = 2 if kind == "config" else 3
    record = {"error": True, "kind": kind, "message": f"{type(exc).__name__}: {exc}", "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    try:
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_json(record, out_dir / "error.json")
    except OSError:
        pass
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if "inputs" in vars(args) and args.inputs == []:
        args.inputs = None
    out_dir = None
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if not args.scale > 0:
            raise ConfigError("--scale must be positive")
        cfg, tcfg, seed, out_dir = load_config(args)
        if "inputs" in cfg:
            cfg["inputs"] = [str(p) for p in cfg["inputs"]]
        out = Outputs(out_dir)
        seeds = HANDLERS[args.command](cfg, tcfg, seed, args, out)
        config = {"command": args.command, "seed": seed, "scale": args.scale, "full": args.full,
                  "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()},
                  "train": tcfg}
        out.json("manifest.json", manifest(args.command, config, {"seed": seed, **seeds}, out.files + ["manifest.json"]),
                 "manifest")
        return 0
    except (ConfigError, jsonschema.ValidationError, KeyError, TypeError, ValueError, FileNotFoundError) as exc:
        return _fail(out_dir, "config", exc)
    except (TrainingFailed, FloatingPointError, ZeroProbabilityBranch, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail(out_dir, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())
