"""Command-line interface: ``gnndisc {synth,train,discover,eval,check}``.

Settings are resolved as defaults, then the ``[section]`` of an INI config
file given with ``--config``, then command-line flags. Exit codes: 0 on
success, 1 on usage errors (bad flags, missing files), 2 when the pipeline
fails (no net discovered).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- configuration -------------------------------------------------------------

def _coerce(value: str, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def resolve(cls, section: str, config_path: str | None, overrides: dict, extra: dict | None = None):
    """Instance of dataclass ``cls``: defaults <- config file section <- non-None overrides.

    ``extra`` names further settings (with defaults) allowed in the section;
    when given, ``(instance, resolved extras)`` is returned.
    """
    values = {f.name: f.default for f in dataclasses.fields(cls)}
    extras = dict(extra or {})
    if config_path:
        parser = configparser.ConfigParser()
        if not parser.read(config_path, encoding="utf-8"):
            raise UsageError(f"cannot read config file {config_path}")
        if parser.has_section(section):
            for key, raw in parser.items(section):
                name = key.replace("-", "_")
                target = values if name in values else extras if name in extras else None
                if target is None:
                    raise UsageError(f"unknown key {key!r} in [{section}] of {config_path}")
                try:
                    target[name] = _coerce(raw, target[name])
                except ValueError as exc:
                    raise UsageError(f"[{section}] {key}: {exc}") from None
    for name, v in overrides.items():
        if v is not None:
            if name in values:
                values[name] = v
            elif name in extras:
                extras[name] = v
    try:
        obj = cls(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return (obj, extras) if extra is not None else obj


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def _load_net(path: str):
    from .petrinet import from_pnml, load_json

    p = Path(path)
    if not p.exists():
        raise UsageError(f"net file {path} not found")
    if p.suffix in (".pnml", ".xml"):
        return from_pnml(p.read_text(encoding="utf-8"))
    return load_json(p)


def _load_log(path: str, fmt: str | None):
    from .eventlog import load_log

    if not Path(path).exists():
        raise UsageError(f"log file {path} not found")
    return load_log(path, fmt)


# --- subcommands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synthgen import GenConfig, write_dataset

    cfg, extras = resolve(GenConfig, "synth", args.config, {
        "min_leaves": args.min_leaves, "mode_leaves": args.mode_leaves, "max_leaves": args.max_leaves,
        "n_traces": args.traces, "seed": args.seed}, extra={"seed": 0})
    seed = extras["seed"]
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    try:
        write_dataset(args.out, args.n, cfg, seed)
    except OSError as exc:
        raise UsageError(f"cannot write dataset to {args.out}: {exc}") from None
    print(f"wrote {args.n} pairs to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .neural.model import Model
    from .synthgen import read_dataset
    from .training import TrainConfig, fit, prepare_dataset, read_history, split_dataset

    cfg = resolve(TrainConfig, "train", args.config, {
        "epochs": args.epochs, "lr": args.lr, "split": args.split, "seed": args.seed})
    if not Path(args.data).is_dir():
        raise UsageError(f"dataset directory {args.data} not found")
    pairs = read_dataset(args.data)
    if not pairs:
        raise UsageError(f"no instances in {args.data}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_pairs, test_pairs = split_dataset(pairs, cfg.split, cfg.seed)
    train, skipped, injected = prepare_dataset(train_pairs, cfg)
    held_out, skipped_ho, _ = prepare_dataset(test_pairs, cfg)
    print(f"train {len(train)}  held-out {len(held_out)}  skipped {skipped + skipped_ho}  "
          f"injected places {injected}")
    _dump({"command": "train", "data": str(args.data), "train_config": cfg.to_dict(),
           "train_ids": [p[0] for p in train_pairs], "held_out_ids": [p[0] for p in test_pairs],
           "skipped": skipped + skipped_ho, "injected": injected}, out / "manifest.json")
    model, start, opt_state, history = None, 0, None, None
    if args.resume:
        ckpt = Path(args.resume)
        if not ckpt.exists():
            raise UsageError(f"checkpoint {ckpt} not found")
        model = Model.load(ckpt)
        extra = json.loads(ckpt.read_text(encoding="utf-8")).get("extra", {})
        start = extra.get("epoch", 0)
        opt_state = extra.get("optimizer")
        hist_file = ckpt.parent / "history.json"
        history = read_history(hist_file)[:start] if hist_file.exists() else None
    fit(train, cfg, held_out, model=model, out_dir=out, start_epoch=start,
        optimizer_state=opt_state, history=history)
    return EXIT_OK


def cmd_discover(args) -> int:
    from dataclasses import replace

    from .inference import InferConfig, discover
    from .neural.model import Model
    from .petrinet import save_json, to_dot, to_pnml

    cfg = resolve(InferConfig, "discover", args.config, {
        "beam": args.beam, "max_steps": args.max_steps, "max_variants": args.max_variants,
        "min_variants": args.min_variants})
    if not Path(args.model).exists():
        raise UsageError(f"checkpoint {args.model} not found")
    model = Model.load(args.model)
    log = _load_log(args.log, args.format)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    attempts = []
    result = None
    cur = cfg
    while True:
        result = discover(log, model, cur)
        attempts.append({"min_variants": cur.min_variants, "max_variants": cur.max_variants,
                         "variants_used": len(result.log.variants), "nets": len(result.nets),
                         "reason": result.reason})
        if not result.failed or args.no_fallback:
            break
        used = len(result.log.variants)
        if used <= 1:
            break
        new_max = max(1, used // 2)
        cur = replace(cur, max_variants=new_max, min_variants=min(cur.min_variants, new_max))
        print(f"no net found with {used} variants; retrying with at most {new_max}")
    rows = []
    for k, d in enumerate(result.nets):
        stem = f"net_{k:02d}"
        save_json(d.net, out / f"{stem}.json")
        (out / f"{stem}.dot").write_text(to_dot(d.net, stem), encoding="utf-8")
        (out / f"{stem}.pnml").write_text(to_pnml(d.net, stem), encoding="utf-8")
        rows.append({"rank": k, "file": f"{stem}.json", **d.to_dict()})
        print(f"{stem}  logp {d.logp:.4f}  {d.verdict.classification}  places {len(d.net.places)}")
    _dump({"command": "discover", "log": str(args.log), "model": str(args.model),
           "infer_config": cfg.to_dict(), "attempts": attempts, "results": rows,
           "failed": result.failed, "reason": result.reason}, out / "results.json")
    if result.failed:
        print(f"discovery failed: {result.reason}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_eval(args) -> int:
    from .conformance import CSV_FIELDS, evaluate, summarize, write_csv
    from .synthgen import read_dataset

    rows = []
    if args.data:
        if not Path(args.data).is_dir():
            raise UsageError(f"dataset directory {args.data} not found")
        for name, log, net in read_dataset(args.data):
            if args.nets:
                f = Path(args.nets) / f"{name}.net.json"
                if not f.exists():
                    rows.append({"id": name, "simplicity": None, "error": "no discovered net"})
                    continue
                net = _load_net(str(f))
            rows.append({"id": name, **evaluate(net, log).to_dict()})
    else:
        if not (args.net and args.log):
            raise UsageError("eval needs --data DIR or both --net and --log")
        net = _load_net(args.net)
        log = _load_log(args.log, args.format)
        rows.append({"id": Path(args.net).name, **evaluate(net, log).to_dict()})
    for row in rows:
        print(json.dumps(row, ensure_ascii=False))
    summary = summarize(rows)
    print(json.dumps({"summary": summary}, ensure_ascii=False))
    if args.out:
        write_csv(rows, args.out, CSV_FIELDS)
    return EXIT_OK


def cmd_check(args) -> int:
    from .petrinet import check_soundness, is_s_coverable, is_workflow_net

    net = _load_net(args.net)
    diag = is_workflow_net(net)
    verdict = check_soundness(net, state_cap=args.state_cap)
    doc = {"workflow_net": bool(diag), "s_coverable": bool(diag) and is_s_coverable(net),
           **verdict.to_dict()}
    if not diag:
        doc["diagnostics"] = dataclasses.asdict(diag)
    print(verdict.classification)
    print(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    p = _Parser(prog="gnndisc", description="Learned process discovery with graph neural networks.")
    p.add_argument("--version", action="version", version=f"gnndisc {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [synth], [train] and [discover] sections")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a dataset of <log, net> pairs")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--min-leaves", type=int)
    s.add_argument("--mode-leaves", type=int)
    s.add_argument("--max-leaves", type=int)
    s.add_argument("--traces", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train the selection networks")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="run directory for checkpoints and history")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--split", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="last.json of an earlier run")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("discover", parents=[common], help="discover nets for a log")
    d.add_argument("--log", required=True)
    d.add_argument("--format", choices=("csv", "jsonl"))
    d.add_argument("--model", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--beam", type=int)
    d.add_argument("--max-steps", type=int)
    d.add_argument("--min-variants", type=int)
    d.add_argument("--max-variants", type=int)
    d.add_argument("--no-fallback", action="store_true", help="do not retry with fewer variants")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("eval", parents=[common], help="conformance metrics of nets against logs")
    e.add_argument("--data", help="dataset directory (one row per instance)")
    e.add_argument("--nets", help="directory with NNNN.net.json to evaluate instead of the ground truth")
    e.add_argument("--net")
    e.add_argument("--log")
    e.add_argument("--format", choices=("csv", "jsonl"))
    e.add_argument("--out", help="CSV output file")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", parents=[common], help="soundness verdict of a net")
    c.add_argument("--net", required=True)
    c.add_argument("--state-cap", type=int, default=200_000)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) and not Path(args.config).exists():
        print(f"gnndisc: error: config file {args.config} not found", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gnndisc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
