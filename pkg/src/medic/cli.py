"""Command-line interface: train, eval, explain, cv, hpo, report.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error. Training
configs are plain ``key = value`` text files; command-line flags override
file values.
"""

from __future__ import annotations

import argparse
import sys

from .errors import DataError, MedicError, ModelError, SchemaError, TrainingError
from .evaluate import (
    cross_validate,
    default_search_space,
    evaluate_model,
    hpo_random_search,
    write_fold_log,
    write_trial_log,
)
from .explain import explain_instance, export_report, render_instance_text
from .model_io import load_model, save_model
from .schema import (
    Dataset,
    apply_impute,
    impute_missing,
    load_dataset,
    load_dataset_with_schema,
    load_schema_spec,
)
from .training import EpochLog, TrainConfig, train_full

USAGE_EXIT = 2
FAILURE_EXIT = 1


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines: bools, ints, floats, strings, [lists]."""

    def parse_scalar(tok: str):
        tok = tok.strip()
        if tok.lower() in ("true", "false"):
            return tok.lower() == "true"
        if len(tok) >= 2 and tok[0] == tok[-1] and tok[0] in ("'", '"'):
            return tok[1:-1]
        try:
            return int(tok)
        except ValueError:
            pass
        try:
            return float(tok)
        except ValueError:
            pass
        return tok

    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise DataError(f"config line {lineno} is incomplete: {raw!r}")
        if value.startswith("[") and value.endswith("]"):
            out[key] = [parse_scalar(t) for t in value[1:-1].split(",") if t.strip()]
        else:
            out[key] = parse_scalar(value)
    return out


def load_train_config(path: str | None, seed: int | None) -> TrainConfig:
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values = parse_config_text(fh.read())
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}")
    cfg = TrainConfig.from_dict(values)
    if seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seed})
    return cfg


def _load_training_data(data_path: str, schema_path: str) -> Dataset:
    spec = load_schema_spec(schema_path)
    return load_dataset(data_path, spec)


def _load_eval_data(data_path: str, model) -> Dataset:
    d = load_dataset_with_schema(data_path, model.schema)
    if d.has_missing():
        if not model.schema.impute_values:
            raise DataError("data has missing cells and the model stores no impute values")
        d = apply_impute(d, model.schema.impute_values)
    return d


def cmd_train(args) -> int:
    d = _load_training_data(args.data, args.schema)
    if d.has_missing():
        d = impute_missing(d)
    cfg = load_train_config(args.config, args.seed)
    log = EpochLog()
    model = train_full(d, cfg, log)
    save_model(model, args.out)
    log_path = args.log if args.log else f"{args.out}.log.csv"
    log.write_csv(log_path)
    result = evaluate_model(model, d)
    print(f"model written to {args.out} (stage {model.stage})")
    print(f"epoch log written to {log_path}")
    print(f"training-set g-mean: {result.gmean:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    if model.stage != 3:
        raise ModelError(f"eval requires a stage-3 model, got stage {model.stage}")
    d = _load_eval_data(args.data, model)
    result = evaluate_model(model, d)
    labels = model.schema.class_labels
    print("confusion matrix (rows true, columns predicted):")
    for i, row in enumerate(result.cm):
        print(f"  {labels[i]}: " + " ".join(f"{int(v):6d}" for v in row))
    for i, r in enumerate(result.recalls):
        print(f"recall[{labels[i]}]: {r:.4f}")
    print(f"g-mean: {result.gmean:.4f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("true\\pred," + ",".join(labels) + "\n")
            for i, row in enumerate(result.cm):
                fh.write(labels[i] + "," + ",".join(str(int(v)) for v in row) + "\n")
        print(f"confusion matrix written to {args.csv}")
    return 0


def cmd_explain(args) -> int:
    model = load_model(args.model)
    d = _load_eval_data(args.data, model)
    if not 0 <= args.row < d.rows:
        raise DataError(f"row {args.row} out of range for {d.rows} rows")
    explanation = explain_instance(model, d.values[args.row], args.top_k)
    print(render_instance_text(explanation, args.row), end="")
    return 0


def cmd_cv(args) -> int:
    d = _load_training_data(args.data, args.schema)
    cfg = load_train_config(args.config, args.seed)
    result = cross_validate(d, cfg, args.folds, cfg.seed)
    for i, s in enumerate(result.fold_gmeans):
        print(f"fold {i} g-mean: {s:.4f}")
    print(f"mean g-mean: {result.mean_gmean:.4f}")
    if args.out:
        write_fold_log(result, args.out)
        print(f"fold log written to {args.out}")
    return 0


def cmd_hpo(args) -> int:
    if args.trials < 1:
        raise DataError(f"--trials must be >= 1, got {args.trials}")
    d = _load_training_data(args.data, args.schema)
    base = load_train_config(args.config, args.seed)
    result = hpo_random_search(
        default_search_space(), args.trials, d, args.folds, base.seed, base
    )
    print(f"best mean g-mean: {result.best_score:.4f}")
    for k in sorted(result.best_params):
        print(f"best {k}: {result.best_params[k]}")
    if args.out:
        write_trial_log(result.trials, args.folds, args.out)
        print(f"trial log written to {args.out}")
    return 0


def cmd_report(args) -> int:
    model = load_model(args.model)
    dataset = None
    instances = None
    if args.rows:
        if not args.data:
            raise DataError("--rows requires --data")
        instances = [int(tok) for tok in args.rows.split(",") if tok.strip()]
    if args.data:
        dataset = _load_eval_data(args.data, model)
    paths = export_report(model, args.out_dir, dataset, instances, top_k=args.top_k)
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medic",
        description="Interpretable prototype-part classifier for tabular medical data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the three-stage training pipeline")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--schema", required=True, help="schema spec JSON")
    p.add_argument("--config", default=None, help="key = value training config")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--log", default=None, help="epoch log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--csv", default=None, help="optional confusion-matrix CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="explain one row of a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--top-k", type=int, default=5, dest="top_k")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="fold log CSV path")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("hpo", help="random hyperparameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--config", default=None, help="base config for unsearched fields")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="trial log CSV path")
    p.set_defaults(func=cmd_hpo)

    p = sub.add_parser("report", help="export interval/prototype/instance reports")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--data", default=None, help="CSV for instance reports")
    p.add_argument("--rows", default=None, help="comma-separated row indices")
    p.add_argument("--top-k", type=int, default=5, dest="top_k")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return USAGE_EXIT
    except (ModelError, TrainingError, MedicError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
