"""Command-line driver: ``elmnet {synth,rank,train,grid,score}``.

Settings may also come from a flat ``key = value`` file passed with
``--config``; keys are the long flag names without dashes (``label-col``,
``combo``, ...) and repeatable flags may repeat. Command-line flags win.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import csv
import logging
import sys

from . import __version__, featsel, model
from .activation import LayerSpec
from .data import (
    CATEGORICAL,
    NUMERIC,
    Preprocessor,
    SYNTH_KINDS,
    load_csv,
    read_split,
    synth_table,
    write_csv,
    write_split,
)
from .errors import ConfigError, DataError, ElmError
from .experiment import (
    DEFAULT_BUDGET,
    ExperimentConfig,
    FeaturePolicy,
    TIMING_COLUMNS,
    load_grid,
    prepare,
    report_csv,
    report_table,
    resolve_path,
    run_grid,
    run_row,
)

log = logging.getLogger("elmnet")

REPEATABLE = {"combo", "features", "col_type"}
DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "block_size": model.BLOCK_SIZE,
    "features": ["all"],
    "label_col": "label",
}


def read_config(path):
    values = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key in REPEATABLE:
                values.setdefault(key, []).append(value)
            else:
                values[key] = value
    return values


def _setting(args, config, key, convert=str):
    v = getattr(args, key, None)
    if v is None and key in config:
        try:
            v = convert(config[key]) if key not in REPEATABLE else [convert(x) for x in config[key]]
        except ValueError:
            raise ConfigError(f"bad value for {key}: {config[key]!r}") from None
    if v is None:
        v = DEFAULTS.get(key)
    return v


def _col_types(items):
    out = {}
    for item in items or []:
        name, sep, kind = item.partition("=")
        if not sep or kind not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"--col-type expects name=numeric|categorical, got {item!r}")
        out[name.strip()] = kind
    return out


def _budget(value):
    if value in (None, "", "off"):
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"budget must be an integer or 'off', got {value!r}") from None


def build_config(args, combos=None, budget=None):
    config = read_config(args.config) if args.config else {}
    data = _setting(args, config, "data")
    if data is None:
        raise ConfigError("--data is required")
    if combos is None:
        texts = _setting(args, config, "combo") or []
        combos = [LayerSpec.parse(t) for t in texts]
    raw = _setting(args, config, "budget")
    if raw == "off":
        budget = None
    elif raw is not None:
        budget = _budget(raw)
    ridge = _setting(args, config, "ridge", float)
    cfg = ExperimentConfig(
        data=data,
        label_col=_setting(args, config, "label_col"),
        combos=combos,
        policies=[FeaturePolicy.parse(p) for p in _setting(args, config, "features")],
        positive_class=_setting(args, config, "positive_class"),
        seed=_setting(args, config, "seed", int),
        ridge=ridge,
        budget=budget,
        col_types=_col_types(_setting(args, config, "col_type")),
        block_size=_setting(args, config, "block_size", int),
    )
    cfg.validate()
    return cfg, config


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_synth(args):
    table = synth_table(args.kind, args.n, args.d, args.seed, offset=args.offset,
                        n_classes=args.classes)
    if args.out in (None, "-"):
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(table.feature_names + ["label"])
        for i in range(table.n_rows):
            w.writerow([table.columns[h][i] for h in table.feature_names] + [table.labels[i]])
    else:
        write_csv(args.out, table)
    return 0


def cmd_rank(args):
    table = load_csv(resolve_path(args.data), args.label_col, _col_types(args.col_type))
    # rank on the whole table; `grid` and `train` rank on training rows only
    X = Preprocessor.fit(table, range(table.n_rows)).transform(table)
    method = args.method or featsel.default_method(table.labels)
    ranking = featsel.rank(X, table.labels, method)
    d = len(table.feature_names)
    k = d if args.k is None else args.k
    top = featsel.select_top_k(ranking, k)
    label = "All Features" if k == d else f"Top {k} Features"
    print(f"{label} {ranking.priority_list(k)}", file=sys.stderr)
    if args.out in (None, "-"):
        featsel.write_ranking_csv(sys.stdout, ranking, table.feature_names)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            featsel.write_ranking_csv(fh, ranking, table.feature_names)
    return 0 if top else 1


def cmd_train(args):
    cfg, config = build_config(args)
    if len(cfg.combos) != 1:
        raise ConfigError("train takes exactly one --combo")
    if len(cfg.policies) != 1:
        raise ConfigError("train takes exactly one --features policy")
    split_in = _setting(args, config, "split_in")
    split = read_split(split_in, cfg.seed) if split_in else None
    prepared = prepare(cfg, split)
    split_out = _setting(args, config, "split_out")
    if split_out:
        write_split(split_out, prepared.dataset.split)
    row, m = run_row(prepared, cfg.policies[0], cfg.combos[0], cfg.seed, cfg.ridge, cfg.block_size)
    model_out = _setting(args, config, "model_out")
    if model_out:
        model.save(m, model_out)
    _write(_setting(args, config, "out"), report_csv([row]))
    print(report_table([row]), file=sys.stderr)
    return 0


def cmd_grid(args):
    config = read_config(args.config) if args.config else {}
    combos, budget = None, None
    grid = _setting(args, config, "grid")
    if grid is not None:
        combos, budget = load_grid(grid)
        extra = _setting(args, config, "combo")
        if extra:
            combos = combos + [LayerSpec.parse(t) for t in extra]
    elif not _setting(args, config, "combo"):
        combos, budget = load_grid("bundled:table4.grid")
    if combos is not None and not combos:
        raise ConfigError(f"grid file {grid} lists no combos")
    cfg, _ = build_config(args, combos=combos, budget=budget)
    jobs = _setting(args, config, "jobs", int)
    rows = run_grid(cfg, jobs=jobs)
    drop = TIMING_COLUMNS if args.no_timing else ()
    _write(_setting(args, config, "out"), report_csv(rows, drop=drop))
    print(report_table(rows), file=sys.stderr)
    return 0


def cmd_score(args):
    m = model.load(args.model)
    if m.preprocess is None:
        raise DataError(f"{args.model} has no stored preprocessing; cannot score raw CSV")
    table = load_csv(resolve_path(args.data), args.label_col, require_label=False)
    X = model.prepare_features(m, table)
    scores = model.predict_scores(m, X)
    labels = [m.classes[i] for i in scores.argmax(axis=1)]

    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", encoding="utf-8", newline="")
    try:
        w = csv.writer(out, lineterminator="\n")
        has_truth = table.labels[0] is not None
        head = ["row", "label"] + [f"score_{c}" for c in m.classes]
        w.writerow(head + (["true_label"] if has_truth else []))
        for i, (lab, s) in enumerate(zip(labels, scores)):
            extra = [table.labels[i]] if has_truth else []
            w.writerow([i, lab] + [repr(float(v)) for v in s] + extra)
    finally:
        if out is not sys.stdout:
            out.close()
    if table.labels[0] is not None:
        correct = sum(a == b for a, b in zip(labels, table.labels))
        print(f"accuracy {correct / len(labels):.6f} on {len(labels)} rows", file=sys.stderr)
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _add_experiment_flags(p, combo_help):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--data", help="labeled CSV (or bundled:NAME)")
    p.add_argument("--label-col", dest="label_col", help="label column name (default: label)")
    p.add_argument("--positive-class", dest="positive_class",
                   help="class counted as positive in TP/FN (default: last class)")
    p.add_argument("--features", action="append",
                   help="all | top:K:f_score | top:K:fisher (repeatable)")
    p.add_argument("--combo", action="append", help=combo_help)
    p.add_argument("--seed", type=int)
    p.add_argument("--ridge", type=float, help="default: 1e-9 * trace(H^T H) / L")
    p.add_argument("--budget", nargs="?", const=str(DEFAULT_BUDGET),
                   help=f"require every combo to total N neurons (bare flag: {DEFAULT_BUDGET}; 'off' disables)")
    p.add_argument("--block-size", dest="block_size", type=int)
    p.add_argument("--col-type", dest="col_type", action="append",
                   help="force a column type, name=numeric|categorical (repeatable)")
    p.add_argument("--out", help="report CSV path (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="elmnet", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"elmnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labeled CSV")
    p.add_argument("--kind", choices=SYNTH_KINDS, default="two_gaussians")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offset", type=float, default=3.0)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rank", help="rank features by F-score or Fisher score")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", dest="label_col", default="label")
    p.add_argument("--method", choices=featsel.METHODS)
    p.add_argument("--k", type=int)
    p.add_argument("--col-type", dest="col_type", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("train", help="fit one layer and report train/test accuracy")
    _add_experiment_flags(p, "layer, e.g. tanh:1000,rbf_l1:1000")
    p.add_argument("--model-out", dest="model_out", help="write the fitted model here")
    p.add_argument("--split-out", dest="split_out", help="write the index,train|test manifest")
    p.add_argument("--split-in", dest="split_in", help="replay a saved split manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="run feature policy x activation combo grids")
    _add_experiment_flags(p, "extra layer appended to the grid (repeatable)")
    p.add_argument("--grid", help="grid file (default: bundled:table4.grid)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-timing", dest="no_timing", action="store_true",
                   help="omit wall_time_ms from the CSV")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("score", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", dest="label_col", default="label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ElmError as exc:
        print(f"elmnet {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"elmnet {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as exc:
        print(f"elmnet {args.command}: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
