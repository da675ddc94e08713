"""Command-line interface: merge, dedup, aggregate, train, tune-threshold, eval.

Exit codes: 0 success, 1 user error (bad flags or data), 2 provider or
internal failure. Progress and summaries go to stderr; data goes to the
requested output files or stdout. Outputs are written only after the whole
computation succeeds, so failures leave no partial files.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Mapping

from .clustering import ClusterParams
from .encoder import EncoderConfig, init_model
from .errors import DataError, ProviderError, ReclinkError, TrainingError
from .linkage import MergeSpec, aggregate_rows, dedup, merge, tune_threshold
from .metrics import pairwise_f1, top1_accuracy
from .providers import DEFAULT_API_KEY_ENV, BuiltinProvider, parse_model_spec
from .results import read_link_result
from .tabular import ColumnSelector, Table, load_table, write_table
from .train import dataset_from_table, read_kv_file, train, train_config_from_mapping

ENCODER_CONFIG_KEYS = ("ngram_min", "ngram_max", "n_buckets", "embed_dim")


class UsageError(DataError):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


@dataclass
class CommandPlan:
    """A fully validated invocation; executing it is pure file/provider work."""

    subcommand: str
    options: dict[str, object] = field(default_factory=dict)

    def __getitem__(self, key: str) -> object:
        return self.options[key]

    def get(self, key: str, default: object = None) -> object:
        return self.options.get(key, default)


def _build_parser() -> _Parser:
    parser = _Parser(prog="reclink", description="Record linkage by embedding retrieval")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_model(p: _Parser) -> None:
        p.add_argument("--model", required=True,
                       help="builtin:<path> or remote:<model>@<endpoint>")
        p.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV,
                       help="environment variable holding the remote API key")

    def add_on(p: _Parser) -> None:
        p.add_argument("--on", help="comma-separated merge columns (both sides)")
        p.add_argument("--left-on", help="columns on the left side")
        p.add_argument("--right-on", help="columns on the right side")

    p = sub.add_parser("merge", help="link two tables")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    add_on(p)
    p.add_argument("--merge-type", default="m:1", choices=["1:1", "1:m", "m:1", "m:m"])
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--blocking-vars", default=None, help="comma-separated blocking columns")
    add_model(p)
    p.add_argument("--out", default=None, help="merged table (default: csv to stdout)")
    p.add_argument("--audit-out", default=None, help="LinkResult audit jsonl")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("dedup", help="drop semantic duplicates from one table")
    p.add_argument("--input", required=True)
    p.add_argument("--on", required=True)
    add_model(p)
    p.add_argument("--cluster-algorithm", default="slink",
                   choices=["slink", "dbscan", "agglomerative"])
    p.add_argument("--cluster-threshold", type=float, default=0.7,
                   help="cosine-similarity cut; rows at/above it cluster together")
    p.add_argument("--linkage-mode", default="average", choices=["single", "complete", "average"])
    p.add_argument("--eps", type=float, default=0.3, help="dbscan radius (cosine distance)")
    p.add_argument("--min-samples", type=int, default=2)
    p.add_argument("--out", default=None)
    p.add_argument("--audit-out", default=None, help="cluster assignment jsonl")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("aggregate", help="map fine rows to their nearest coarse rows")
    p.add_argument("--left", required=True, help="fine-grained table")
    p.add_argument("--right", required=True, help="coarse table")
    add_on(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--threshold", type=float, default=None)
    add_model(p)
    p.add_argument("--out", default=None)
    p.add_argument("--audit-out", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="fine-tune the builtin encoder")
    p.add_argument("--input", required=True, help="training table (csv/jsonl)")
    p.add_argument("--val", required=True, help="validation table, same format flags")
    p.add_argument("--config", default=None, help="flat key=value training config file")
    p.add_argument("--model", default=None,
                   help="optional builtin:<path> to start from (remote models cannot train)")
    p.add_argument("--left-cols", default=None)
    p.add_argument("--right-cols", default=None)
    p.add_argument("--label-col", default=None)
    p.add_argument("--cluster-id-col", default=None)
    p.add_argument("--cluster-text-cols", default=None)
    p.add_argument("--model-out", required=True, help="where to write the best checkpoint")
    p.add_argument("--report-out", default=None, help="per-epoch report jsonl")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    p = sub.add_parser("tune-threshold", help="pick the F1-maximizing no-match cutoff")
    p.add_argument("--scores", required=True, help="csv/jsonl with score and label columns")
    p.add_argument("--score-col", default="score")
    p.add_argument("--label-col", default="label")
    p.add_argument("--out", default=None, help="write the result as jsonl")

    p = sub.add_parser("eval", help="score a link result or a classifier cutoff")
    p.add_argument("--metric", required=True, choices=["top1", "f1"])
    p.add_argument("--audit", default=None, help="LinkResult jsonl (top1)")
    p.add_argument("--gold", default=None, help="csv with gold query/key ids (top1)")
    p.add_argument("--query-col", default="query")
    p.add_argument("--key-col", default="key")
    p.add_argument("--scores", default=None, help="csv with score and label columns (f1)")
    p.add_argument("--score-col", default="score")
    p.add_argument("--label-col", default="label")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", default=None)
    return parser


def _selector(raw: str | None) -> ColumnSelector | None:
    return ColumnSelector.parse(raw) if raw else None


def parse_and_validate(argv: list[str], env: Mapping[str, str]) -> CommandPlan:
    """Turn argv into a validated CommandPlan. Reads only env, never files."""
    args = _build_parser().parse_args(argv)
    opts = vars(args).copy()
    sub = opts.pop("subcommand")

    if sub in ("merge", "aggregate"):
        if bool(opts["on"]) == bool(opts["left_on"] or opts["right_on"]):
            raise UsageError("give either --on or both --left-on and --right-on")
        if (opts["left_on"] is None) != (opts["right_on"] is None):
            raise UsageError("--left-on and --right-on must be given together")
        if opts["k"] < 1:
            raise UsageError("--k must be >= 1")
        if sub == "merge" and opts["merge_type"] == "1:1" and opts["k"] != 1:
            raise UsageError("--merge-type 1:1 requires --k 1")
        if opts["threshold"] is not None and not (-1.0 <= opts["threshold"] <= 1.0):
            raise UsageError("--threshold must lie in [-1, 1]")
    if sub == "dedup" and not (-1.0 <= opts["cluster_threshold"] <= 1.0):
        raise UsageError("--cluster-threshold is a cosine similarity in [-1, 1]")

    model_spec = opts.get("model")
    if model_spec is not None:
        if model_spec.startswith("remote:"):
            if sub == "train":
                raise UsageError("training requires the builtin provider (--model builtin:<path>)")
            key_env = str(opts.get("api_key_env") or DEFAULT_API_KEY_ENV)
            if not env.get(key_env):
                raise UsageError(
                    f"--model {model_spec}: set the {key_env} environment variable first")
        elif not model_spec.startswith("builtin:"):
            raise UsageError(f"--model must look like builtin:<path> or remote:<model>@<endpoint>, "
                             f"got {model_spec!r}")

    if sub == "train":
        cluster_mode = opts["cluster_id_col"] is not None
        pair_mode = opts["left_cols"] is not None or opts["right_cols"] is not None
        if cluster_mode and pair_mode:
            raise UsageError("--cluster-id-col conflicts with --left-cols/--right-cols")
        if cluster_mode and opts["cluster_text_cols"] is None:
            raise UsageError("--cluster-id-col needs --cluster-text-cols")
        if not cluster_mode and (opts["left_cols"] is None or opts["right_cols"] is None):
            raise UsageError("give --left-cols and --right-cols (or --cluster-id-col)")
    if sub == "eval":
        if args.metric == "top1" and (opts["audit"] is None or opts["gold"] is None):
            raise UsageError("--metric top1 needs --audit and --gold")
        if args.metric == "f1":
            if opts["scores"] is None or opts["threshold"] is None:
                raise UsageError("--metric f1 needs --scores and --threshold")

    return CommandPlan(subcommand=sub, options=opts)


def _provider(plan: CommandPlan):
    return parse_model_spec(str(plan["model"]), str(plan.get("api_key_env") or DEFAULT_API_KEY_ENV))


def _write_or_stdout(table: Table, out: str | None) -> None:
    if out:
        write_table(table, out)
    else:
        import csv as _csv

        writer = _csv.writer(sys.stdout)
        writer.writerow(table.columns)
        for _, row in table.iter_rows():
            writer.writerow([row[c] for c in table.columns])


def _read_scores(plan: CommandPlan) -> tuple[list[float], list[int]]:
    table = load_table(str(plan["scores"]))
    score_col = str(plan["score_col"])
    label_col = str(plan["label_col"])
    for col in (score_col, label_col):
        if col not in table.columns:
            raise DataError(f"{plan['scores']}: missing column {col!r}")
    scores, labels = [], []
    for i, row in table.iter_rows():
        try:
            scores.append(float(row[score_col]))
            labels.append(int(row[label_col]))
        except ValueError:
            raise DataError(f"{plan['scores']} row {i}: bad score/label") from None
    return scores, labels


def _run_merge(plan: CommandPlan) -> int:
    left = load_table(str(plan["left"]))
    right = load_table(str(plan["right"]))
    spec = MergeSpec(
        provider=_provider(plan),
        merge_type=str(plan["merge_type"]),
        on=_selector(plan.get("on")),  # type: ignore[arg-type]
        left_on=_selector(plan.get("left_on")),  # type: ignore[arg-type]
        right_on=_selector(plan.get("right_on")),  # type: ignore[arg-type]
        k=int(plan["k"]),  # type: ignore[arg-type]
        threshold=plan.get("threshold"),  # type: ignore[arg-type]
        blocking=_selector(plan.get("blocking_vars")),  # type: ignore[arg-type]
    )
    merged, result = merge(left, right, spec)
    _write_or_stdout(merged, plan.get("out"))  # type: ignore[arg-type]
    if plan.get("audit_out"):
        result.write_jsonl(str(plan["audit_out"]))
    print(f"merge: {len(result.matches)} matches, {len(result.unmatched)} unmatched "
          f"of {len(left)} x {len(right)} rows", file=sys.stderr)
    return 0


def _run_dedup(plan: CommandPlan) -> int:
    table = load_table(str(plan["input"]))
    params = ClusterParams.from_similarity(
        float(plan["cluster_threshold"]),  # type: ignore[arg-type]
        algorithm=str(plan["cluster_algorithm"]),
        linkage_mode=str(plan["linkage_mode"]),
        eps=float(plan["eps"]),  # type: ignore[arg-type]
        min_samples=int(plan["min_samples"]),  # type: ignore[arg-type]
    )
    deduped, assignment = dedup(table, ColumnSelector.parse(str(plan["on"])), _provider(plan), params)
    _write_or_stdout(deduped, plan.get("out"))  # type: ignore[arg-type]
    if plan.get("audit_out"):
        assignment.write_jsonl(str(plan["audit_out"]))
    print(f"dedup: kept {len(deduped)} of {len(table)} rows "
          f"({len(table) - len(deduped)} duplicates removed)", file=sys.stderr)
    return 0


def _run_aggregate(plan: CommandPlan) -> int:
    fine = load_table(str(plan["left"]))
    coarse = load_table(str(plan["right"]))
    table, result = aggregate_rows(
        fine,
        coarse,
        provider=_provider(plan),
        on=_selector(plan.get("on")),  # type: ignore[arg-type]
        left_on=_selector(plan.get("left_on")),  # type: ignore[arg-type]
        right_on=_selector(plan.get("right_on")),  # type: ignore[arg-type]
        k=int(plan["k"]),  # type: ignore[arg-type]
        threshold=plan.get("threshold"),  # type: ignore[arg-type]
    )
    _write_or_stdout(table, plan.get("out"))  # type: ignore[arg-type]
    if plan.get("audit_out"):
        result.write_jsonl(str(plan["audit_out"]))
    print(f"aggregate: {len(result.matches)} assignments for {len(fine)} fine rows", file=sys.stderr)
    return 0


def _run_train(plan: CommandPlan) -> int:
    mapping = read_kv_file(str(plan["config"])) if plan.get("config") else {}
    encoder_kwargs = {}
    for key in ENCODER_CONFIG_KEYS:
        if key in mapping:
            encoder_kwargs[key] = int(mapping.pop(key))
    config = train_config_from_mapping(mapping)
    if plan.get("seed") is not None:
        config = dataclasses.replace(config, seed=int(plan["seed"]))  # type: ignore[arg-type]

    if plan.get("model"):
        provider = parse_model_spec(str(plan["model"]))
        if not isinstance(provider, BuiltinProvider):
            raise DataError("training requires the builtin provider")
        model = provider.model
    else:
        model = init_model(EncoderConfig(seed=config.seed, **encoder_kwargs))

    def build(path: str):
        return dataset_from_table(
            load_table(path),
            left_cols=_selector(plan.get("left_cols")),  # type: ignore[arg-type]
            right_cols=_selector(plan.get("right_cols")),  # type: ignore[arg-type]
            label_col=plan.get("label_col"),  # type: ignore[arg-type]
            cluster_id_col=plan.get("cluster_id_col"),  # type: ignore[arg-type]
            cluster_text_cols=_selector(plan.get("cluster_text_cols")),  # type: ignore[arg-type]
        )

    train_ds = build(str(plan["input"]))
    val_ds = build(str(plan["val"]))
    best, report = train(model, train_ds, val_ds, config, checkpoint_path=str(plan["model_out"]))
    if plan.get("report_out"):
        report.write_jsonl(str(plan["report_out"]))
    best_line = (f"best epoch {report.best_epoch} (val {report.best_metric:.4f})"
                 if report.best_epoch is not None else "no epochs run")
    print(f"train: {config.epochs} epochs, {best_line}; model -> {plan['model_out']}", file=sys.stderr)
    return 0


def _run_tune_threshold(plan: CommandPlan) -> int:
    scores, labels = _read_scores(plan)
    threshold, f1 = tune_threshold(scores, labels)
    line = f"threshold={threshold:.6f} f1={f1:.6f}"
    print(line)
    if plan.get("out"):
        import json

        with open(str(plan["out"]), "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"threshold": threshold, "f1": f1}, sort_keys=True))
            fh.write("\n")
    return 0


def _run_eval(plan: CommandPlan) -> int:
    if plan["metric"] == "top1":
        result = read_link_result(str(plan["audit"]))
        gold_table = load_table(str(plan["gold"]))
        qcol, kcol = str(plan["query_col"]), str(plan["key_col"])
        for col in (qcol, kcol):
            if col not in gold_table.columns:
                raise DataError(f"{plan['gold']}: missing column {col!r}")
        gold = [(int(row[qcol]), int(row[kcol])) for _, row in gold_table.iter_rows()]
        report = top1_accuracy(result, gold)
    else:
        scores, labels = _read_scores(plan)
        report = pairwise_f1(scores, labels, float(plan["threshold"]))  # type: ignore[arg-type]
    print(report.as_line())
    if plan.get("out"):
        report.write_jsonl(str(plan["out"]))
    return 0


_RUNNERS = {
    "merge": _run_merge,
    "dedup": _run_dedup,
    "aggregate": _run_aggregate,
    "train": _run_train,
    "tune-threshold": _run_tune_threshold,
    "eval": _run_eval,
}


def run(plan: CommandPlan) -> int:
    return _RUNNERS[plan.subcommand](plan)


def main(argv: list[str] | None = None) -> int:
    import os

    argv = sys.argv[1:] if argv is None else argv
    try:
        plan = parse_and_validate(argv, os.environ)
    except UsageError as exc:
        print(f"reclink: {exc}", file=sys.stderr)
        return 1
    try:
        return run(plan)
    except (ProviderError, TrainingError) as exc:
        print(f"reclink: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"reclink: {exc}", file=sys.stderr)
        return 1
    except ReclinkError as exc:
        print(f"reclink: internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
