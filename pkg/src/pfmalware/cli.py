"""Command-line interface.

Settings resolve as built-in defaults, then the ``[<command>]`` section of
an optional ``--config`` INI file, then explicit flags. Commands that write
an output directory echo the resolved settings there as
``effective_config.ini``; timestamps only go to the ``run.log`` sidecar so
reports stay byte-identical across reruns.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import SynthConfig, assemble, load_dataset, save_dataset, synthesize
from .exceptions import BadK, PfMalwareError, PrefetchError
from .labeling import build_ground_truth, get_scheme, load_reports_file, load_schemes
from .models import MODEL_NAMES, load_estimator, make_model, save_estimator
from .prefetch import extract_token_sequence, listing_text, parse_prefetch, read_sequence

log = logging.getLogger("pfmalware")

EFFECTIVE_CONFIG = "effective_config.ini"
RUN_LOG = "run.log"

_sidecars: list[logging.Handler] = []


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def _sample_id(path: Path) -> str:
    # "<sha256>.listing.txt" and "<sha256>.pf" both name sample <sha256>
    return path.name.split(".", 1)[0]


def _input_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(f for f in p.iterdir() if f.is_file()))
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    return files


def _prepare_out(args, key="out") -> Path:
    out = Path(getattr(args, key))
    out.mkdir(parents=True, exist_ok=True)
    cfg = configparser.ConfigParser(interpolation=None)
    cfg[args.command] = {k: _format_value(v) for k, v in sorted(vars(args).items())
                         if k not in ("func", "command", "config", "verbose") and v is not None}
    with open(out / EFFECTIVE_CONFIG, "w", encoding="utf-8") as fh:
        cfg.write(fh)
    handler = logging.FileHandler(out / RUN_LOG, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.INFO)
    log.addHandler(handler)
    _sidecars.append(handler)
    return out


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(map(str, v))
    return str(v)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _build_model(args, name=None):
    name = name or args.model
    if name == "crnn":
        return make_model("crnn", args.seed, max_len=args.max_len, epochs=args.epochs,
                          learning_rate=args.learning_rate, momentum=args.momentum,
                          batch_size=args.batch_size, l2_scope=args.l2_scope,
                          l2_lambda=args.l2_lambda)
    if name.startswith("lr"):
        return make_model(name, args.seed, clf__l2_strength=args.l2_strength)
    return make_model(name, args.seed, clf__trees=args.trees, svd__n_components=args.svd_rank)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# commands

def cmd_parse(args) -> int:
    files = _input_files(args.inputs)
    if not files:
        raise UsageError("no input files found")
    out = _prepare_out(args)
    rows, ok = [], 0
    for f in files:
        try:
            if f.suffix.lower() == ".pf":
                artifact = parse_prefetch(f.read_bytes())
                tokens = extract_token_sequence(artifact)
                exe = artifact.executable_name
            else:
                tokens, exe = read_sequence(f), ""
        except (PrefetchError, OSError, UnicodeDecodeError) as exc:
            rows.append((f.name, "error", type(exc).__name__, "", str(exc)))
            log.warning("%s: %s: %s", f, type(exc).__name__, exc)
            continue
        (out / f"{_sample_id(f)}.listing.txt").write_text(listing_text(tokens), encoding="utf-8")
        rows.append((f.name, "ok", "", exe, str(len(tokens))))
        ok += 1
    with open(out / "summary.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("file\tstatus\terror\texecutable\tdetail\n")
        for r in rows:
            fh.write("\t".join(r) + "\n")
    print(f"parsed {ok} of {len(files)} files into {out}")
    return 0 if ok else 1


def _read_years(path) -> dict:
    years = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            sid, year = line.split("\t")[:2]
            years[sid] = int(year)
    return years


def cmd_build_dataset(args) -> int:
    if args.synthetic:
        config = SynthConfig.from_file(args.synth_config) if args.synth_config else SynthConfig()
        dataset = synthesize(config, args.seed)
    else:
        if not (args.listings and args.reports and args.scheme):
            raise UsageError("--listings, --reports and --scheme are required unless --synthetic")
        schemes = load_schemes(args.schemes_file)
        if args.scheme not in schemes:
            raise UsageError(f"unknown scheme {args.scheme!r}; available: {', '.join(sorted(schemes))}")
        scheme = get_scheme(args.scheme, args.schemes_file)
        truth = build_ground_truth(load_reports_file(args.reports), scheme)
        log.info("ground truth: %s", truth.summary())
        sequences = {_sample_id(f): read_sequence(f) for f in _input_files(args.listings)}
        years = dict(truth.years)
        if args.years:
            for sid, year in _read_years(args.years).items():
                years.setdefault(sid, year)
        dataset = assemble(sequences, truth.families, args.min_family_size, years)
        dataset.drop_report.update({sid: reason for sid, reason in truth.dropped.items()
                                    if sid not in dataset.drop_report})
    out = _prepare_out(args)
    save_dataset(dataset, out)
    print(f"{len(dataset)} samples, {dataset.n_classes} families, "
          f"{len(dataset.drop_report)} dropped -> {out}")
    return 0


def cmd_synthesize(args) -> int:
    fields = {f.name for f in dataclasses.fields(SynthConfig)}
    config = SynthConfig(**{k: v for k, v in vars(args).items() if k in fields})
    out = _prepare_out(args)
    dataset = synthesize(config, args.seed)
    save_dataset(dataset, out)
    print(f"{len(dataset)} samples, {dataset.n_classes} families -> {out}")
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    out = _prepare_out(args)
    # family names as labels make the saved model self-describing
    y = np.array([s.family for s in dataset.samples])
    model = _build_model(args).fit(dataset.sequences, y)
    save_estimator(model, out / "model")
    if hasattr(model, "history_"):
        for rec in model.history_.records:
            log.info("epoch %d: loss %.6f, %.3f s", rec.epoch, rec.loss, rec.seconds)
        (out / "history.csv").write_text(model.history_.to_csv(include_seconds=False), encoding="utf-8")
    print(f"trained {args.model} on {len(dataset)} samples -> {out / 'model'}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation.cv import cross_validate, write_cv_reports

    dataset = load_dataset(args.dataset)
    out = _prepare_out(args)
    report = cross_validate(_build_model(args), dataset, args.folds, args.seed, _int_list(args.topk))
    write_cv_reports(report, out)
    print(f"{args.model}: weighted F1 {report.mean():.4f} +/- {report.std():.4f}, "
          f"macro F1 {report.mean('macro'):.4f}, micro F1 {report.mean('micro'):.4f}")
    return 0


def cmd_predict(args) -> int:
    model = load_estimator(args.model_dir)
    n_classes = len(model.classes_)
    if not 1 <= args.k <= n_classes:
        raise BadK(f"k must lie in [1, {n_classes}], got {args.k}")
    files = _input_files(args.inputs)
    failed = 0
    print("file\trank\tfamily\tprobability")
    for f in files:
        try:
            tokens = read_sequence(f)
        except (PrefetchError, OSError, UnicodeDecodeError) as exc:
            print(f"{f}: {type(exc).__name__}: {exc}", file=sys.stderr)
            failed += 1
            continue
        probs = model.predict_proba([tokens])[0]
        for rank, c in enumerate(np.argsort(-probs, kind="stable")[:args.k], 1):
            print(f"{f.name}\t{rank}\t{model.classes_[c]}\t{probs[c]:.6f}")
    return 0 if failed == 0 else 1


def cmd_incremental(args) -> int:
    from .evaluation.incremental import incremental_experiment

    dataset = load_dataset(args.dataset)
    out = _prepare_out(args)
    result = incremental_experiment(dataset, args.cutoff_year, _build_model(args, "crnn"),
                                    epochs=args.epochs, base_epochs=args.base_epochs, seed=args.seed)
    result.write(out)
    summary = result.summary()
    _write_json(out / "incremental_summary.json", summary)
    print(f"early mean F1 (epochs 1-{summary['early_epochs']}): incremental "
          f"{summary['incremental_early_mean_f1']:.4f}, scratch {summary['scratch_early_mean_f1']:.4f}")
    return 0


def cmd_grad_check(args) -> int:
    from .neural.gradcheck import grad_check

    tol = args.tolerance if args.tolerance is not None else (1e-3 if args.dtype == "float32" else 1e-5)
    report = grad_check(tolerance=tol, seed=args.seed, dtype=args.dtype)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def _scalar(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def _parse_grid(specs) -> dict:
    grid = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        if not sep or not values:
            raise UsageError(f"grid entry must look like name=v1,v2: {spec!r}")
        grid[key.strip()] = [_scalar(v.strip()) for v in values.split(",")]
    return grid


def cmd_grid_search(args) -> int:
    from .baselines.grid import default_grid, grid_search

    dataset = load_dataset(args.dataset)
    grid = _parse_grid(args.grid) if args.grid else default_grid(args.model)
    out = _prepare_out(args)
    result = grid_search(_build_model(args), grid, dataset, args.folds, args.seed)
    (out / "grid_search.csv").write_text(result.to_csv(), encoding="utf-8")
    _write_json(out / "best.json", {"params": result.best_params, "mean_f1": result.best_score})
    print(f"best {result.best_params} weighted F1 {result.best_score:.4f}")
    return 0


# --------------------------------------------------------------------------
# argument parsing

def _add_model_args(p, models=MODEL_NAMES):
    p.add_argument("--model", choices=models, default=models[0])
    p.add_argument("--seed", type=int, default=0)
    g = p.add_argument_group("1D-Conv-BiLSTM")
    g.add_argument("--epochs", type=int, default=300)
    g.add_argument("--learning-rate", type=float, default=0.01)
    g.add_argument("--momentum", type=float, default=0.9)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--max-len", type=int, default=256)
    g.add_argument("--l2-lambda", type=float, default=0.02)
    g.add_argument("--l2-scope", choices=("output", "all"), default="output")
    g = p.add_argument_group("baselines")
    g.add_argument("--l2-strength", type=float, default=0.01, help="logistic regression L2 strength")
    g.add_argument("--trees", type=int, default=100)
    g.add_argument("--svd-rank", type=int, default=100)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="pfmalware",
                                     description="Prefetch-based malware family classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="INI file; the [%s] section supplies defaults" % name)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("parse", cmd_parse, "parse .pf files or listings into listing files")
    p.add_argument("inputs", nargs="+", help="files or directories")
    p.add_argument("--out", required=True)

    p = add("build-dataset", cmd_build_dataset, "label listings with scan reports into a dataset")
    p.add_argument("--listings", nargs="+", help="listing or .pf files/directories named <sample id>.*")
    p.add_argument("--reports", help="JSON scan-report file")
    p.add_argument("--scheme", help="vendor whose naming scheme defines the families")
    p.add_argument("--schemes-file", help="custom scheme INI (default: bundled schemes)")
    p.add_argument("--years", help="TSV sidecar: sample id, discovery year")
    p.add_argument("--min-family-size", type=int, default=10)
    p.add_argument("--synthetic", action="store_true", help="generate a synthetic corpus instead")
    p.add_argument("--synth-config", help="INI with a [synthesize] section")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("synthesize", cmd_synthesize, "generate a synthetic labeled corpus")
    for f in dataclasses.fields(SynthConfig):
        kind = float if f.type in ("float", float) else int
        p.add_argument("--" + f.name.replace("_", "-"), type=kind, default=f.default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a model on a whole dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_model_args(p)

    p = add("evaluate", cmd_evaluate, "stratified k-fold cross-validation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--topk", default="1,2,3,5,10,25", help="comma-separated k values")
    _add_model_args(p)

    p = add("predict", cmd_predict, "rank families for .pf files or listings")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--model-dir", required=True)
    p.add_argument("-k", type=int, default=5)

    p = add("incremental", cmd_incremental, "incremental versus from-scratch retraining")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cutoff-year", type=int, default=2016)
    p.add_argument("--base-epochs", type=int)
    _add_model_args(p, ("crnn",))

    p = add("grad-check", cmd_grad_check, "compare analytic and numeric gradients")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int, default=0)

    p = add("grid-search", cmd_grid_search, "baseline hyperparameter grid search")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--grid", action="append",
                   help="name=v1,v2 with pipeline parameter names, e.g. clf__l2_strength=0.1,1")
    _add_model_args(p, ("lr2", "lr3", "rf2", "rf3"))
    return parser, subs


def _apply_config_file(subparser: argparse.ArgumentParser, command: str, path: str) -> None:
    cfg = configparser.ConfigParser(interpolation=None)
    if not cfg.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    values = dict(cfg[command]) if cfg.has_section(command) else dict(cfg.defaults())
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise UsageError(f"{path}: unknown setting {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = cfg.getboolean(command if cfg.has_section(command) else "DEFAULT", key)
        elif action.nargs in ("+", "*"):
            defaults[dest] = raw.split()
        else:
            defaults[dest] = action.type(raw) if action.type else raw
        # a value from the file satisfies a required flag
        action.required = False
    subparser.set_defaults(**defaults)


def _find_config(argv, subs):
    """``(command, config path)`` from a raw argument list, before the full parse."""
    command = next((a for a in argv if a in subs), None)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return command, known.config


def main(argv=None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = _find_config(argv, subs)
    if command and config:
        try:
            _apply_config_file(subs[command], command, config)
        except UsageError as exc:
            parser.error(str(exc))
    args = parser.parse_args(argv)
    # the package logger passes INFO so run.log always gets it; the console
    # shows INFO only with --verbose
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    previous_level, previous_propagate = log.level, log.propagate
    log.setLevel(logging.INFO)
    log.propagate = False
    log.addHandler(console)
    _sidecars.append(console)
    try:
        return args.func(args)
    except (UsageError, BadK) as exc:
        subs[args.command].print_usage(sys.stderr)
        print(f"pfmalware {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (PfMalwareError, OSError) as exc:
        print(f"pfmalware {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        while _sidecars:
            handler = _sidecars.pop()
            log.removeHandler(handler)
            if handler is not console:
                handler.close()
        log.setLevel(previous_level)
        log.propagate = previous_propagate

if __name__ == "__main__":
    sys.exit(main())
