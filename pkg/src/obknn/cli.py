"""Command-line interface.

Every command echoes its effective configuration to stderr as one JSON line
and, on failure, prints ``{"error": <type>, "message": <text>}`` to stderr and
exits with status 1. Options can also come from ``--config FILE``, an INI-style
file of ``key = value`` lines using the long option names; keys under a
``[<command>]`` section apply to that command only. Command-line flags beat
the file, and the file beats built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .core import InferenceConfig, LabelTable, Metric, check_distribution, softmax
from .datastore import Datastore
from .errors import ObknnError
from .evaluation.bench import BENCH_HEADER, bench
from .evaluation.episodes import DEFAULT_SEEDS, EpisodeSpec
from .evaluation.harness import (
    DEFAULT_K_GRID,
    DEFAULT_LAMBDA_GRID,
    RETRIEVERS,
    SWEEP_HEADER,
    run_eval,
    sweep,
    sweep_table,
)
from .evaluation.io import label_table_for, read_jsonl, read_label_file, resolve, write_csv
from .evaluation.synthetic import generate_synthetic
from .inference import Query, predict

log = logging.getLogger("obknn")

_DEFAULTS = InferenceConfig()


class CliError(ObknnError):
    pass


# -- value parsing ----------------------------------------------------------

def _read_inline_or_file(value: str) -> str:
    if os.path.isfile(value):
        return Path(value).read_text(encoding="utf-8")
    return value


def parse_vector(value: str) -> list[float]:
    """A JSON array, or comma/whitespace separated numbers, inline or in a file."""
    text = _read_inline_or_file(value).strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, list):
        return [float(v) for v in obj]
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise CliError(f"cannot parse a numeric vector from {value!r}") from None


def _float_list(value: str) -> list[float]:
    return [float(tok) for tok in value.replace(",", " ").split()]


def _int_list(value: str) -> list[int]:
    return [int(tok) for tok in value.replace(",", " ").split()]


def _truthy(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise CliError(f"expected a boolean, got {raw!r}")


# -- parser -----------------------------------------------------------------

def _inference_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=_DEFAULTS.k, help="neighbors to retrieve (default 16)")
    p.add_argument("--lambda", dest="lam", type=float, default=_DEFAULTS.lam,
                   help="weight of the neighbor distribution (default 0.2)")
    p.add_argument("--metric", choices=[m.value for m in Metric], default=_DEFAULTS.metric.value)
    p.add_argument("--temperature", type=float, default=_DEFAULTS.temperature)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="training instances (JSON Lines)")
    p.add_argument("--test", help="test instances (JSON Lines)")
    p.add_argument("--labels", help="label names, one per line, in id order")
    p.add_argument("--na-label", help="no-relation label, excluded from micro-F1")
    p.add_argument("--shots", type=int, help="K-shot episodes; omit to use the full training set")
    p.add_argument("--seeds", type=_int_list, default=list(DEFAULT_SEEDS),
                   help="episode seeds (default 0,1,2,3,4)")
    p.add_argument("--retriever", choices=RETRIEVERS, default="embedding")
    p.add_argument("--tfidf-mode", choices=("interpolate", "replace"), default="interpolate")


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand copies of these flags from clobbering top-level values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value defaults file")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="obknn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value defaults file")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"obknn {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("build", parents=[common], help="build a datastore from JSON Lines")
    p.add_argument("--input", help="instances with `embedding` and `label`")
    p.add_argument("--output", help="datastore file to write")
    p.add_argument("--labels", help="label names, one per line, in id order")
    p.add_argument("--na-label")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("inspect", parents=[common], help="summarize a datastore file")
    p.add_argument("--store")
    p.add_argument("--entries", action="store_true", help="also list every entry id and label")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("query", parents=[common], help="predict one instance")
    p.add_argument("--store")
    p.add_argument("--embedding", help="JSON array or comma list, inline or a file path")
    p.add_argument("--base-dist", help="base model probabilities over the label table")
    p.add_argument("--base-scores", help="base model raw scores; softmaxed before use")
    _inference_flags(p)
    p.add_argument("--explain", action="store_true", help="emit neighbors and every distribution")
    p.add_argument("--figure", help="write a probability bar chart here")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("mutate", parents=[common], help="add, relabel or delete datastore entries")
    p.add_argument("--store")
    p.add_argument("--output", help="write here instead of overwriting --store")
    actions = p.add_subparsers(dest="action", metavar="action")
    actions.required = True
    a = actions.add_parser("add")
    a.add_argument("--embedding", required=True)
    a.add_argument("--label", required=True)
    a = actions.add_parser("edit")
    a.add_argument("--id", type=int, required=True)
    a.add_argument("--label", required=True)
    a = actions.add_parser("delete")
    a.add_argument("--id", type=int, required=True)
    p.set_defaults(func=cmd_mutate)

    p = sub.add_parser("eval", parents=[common], help="micro-F1 of retrieval-enhanced predictions")
    _data_flags(p)
    _inference_flags(p)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="F1 over a lambda x k grid")
    _data_flags(p)
    _inference_flags(p)
    p.add_argument("--lambda-grid", type=_float_list, default=list(DEFAULT_LAMBDA_GRID))
    p.add_argument("--k-grid", type=_int_list, default=list(DEFAULT_K_GRID))
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.add_argument("--figure", help="PNG path (default: next to --out)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", parents=[common], help="per-query latency against datastore size")
    p.add_argument("--sizes", type=_int_list, default=[1000, 10000, 70000])
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--k", type=int, default=_DEFAULTS.k)
    p.add_argument("--lambda", dest="lam", type=float, default=_DEFAULTS.lam)
    p.add_argument("--num-labels", type=int, default=42)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.add_argument("--figure", help="PNG path (default: next to --out)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic train/test pair")
    p.add_argument("--out-dir")
    p.add_argument("--num-labels", type=int, default=5)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--per-label", type=int, default=50)
    p.add_argument("--test-per-label", type=int)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--base-quality", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def _subparsers(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def _read_config(path: str) -> configparser.ConfigParser:
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(default_section="obknn", interpolation=None)
    stripped = text.lstrip()
    if not stripped.startswith("["):
        text = "[obknn]\n" + text
    cp.read_string(text, source=path)
    return cp


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    by_key = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_key[opt[2:].replace("-", "_")] = action
    defaults = {}
    for key, raw in values.items():
        action = by_key.get(key.replace("-", "_"))
        if action is None or action.dest in ("help", "config", "version"):
            continue
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = _truthy(raw)
        else:
            # argparse runs `type` on string defaults
            defaults[action.dest] = raw
    sub.set_defaults(**defaults)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        cp = _read_config(known.config)
        subs = _subparsers(parser)
        for name, sub in subs.items():
            values = dict(cp.defaults())
            if cp.has_section(name):
                values.update({k: v for k, v in cp.items(name)})
            _apply_config(sub, values)
    return parser.parse_args(argv)


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise CliError(f"{args.command}: missing required option(s) {flags}")


def _cfg(args: argparse.Namespace) -> InferenceConfig:
    return InferenceConfig(k=args.k, lam=args.lam, metric=args.metric, temperature=args.temperature)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


# -- commands ---------------------------------------------------------------

def cmd_build(args) -> None:
    _require(args, "input", "output")
    raws = read_jsonl(args.input)
    names = read_label_file(args.labels) if args.labels else None
    labels = label_table_for(raws, names=names, na_label=args.na_label)
    split = resolve(args.input, raws, labels, need_embedding=True, need_label=True)
    if len(split) == 0:
        store = Datastore(labels)
    else:
        store = Datastore.build(zip(split.embeddings, split.golds.tolist()), labels)
    store.save(args.output)
    _emit({"entries": len(store), "dim": store.dim, "labels": list(labels.names), "na_label": labels.na_label,
           "output": args.output})


def cmd_inspect(args) -> None:
    _require(args, "store")
    store = Datastore.load(args.store)
    out = {"entries": len(store), "dim": store.dim, "labels": list(store.labels.names),
           "na_label": store.labels.na_label, "next_id": store.next_id}
    if args.entries:
        out["items"] = [{"id": i, "label": store.labels.names[lab]} for i, _, lab in store]
    _emit(out)


def evidence_dict(store: Datastore, pred, cfg: InferenceConfig) -> dict:
    names = store.labels.names
    return {
        "label": names[pred.label],
        "label_id": pred.label,
        "labels": list(names),
        "lambda": cfg.lam,
        "k": cfg.k,
        "metric": cfg.metric.value,
        "temperature": cfg.temperature,
        "neighbors": [{"id": i, "label": names[lab], "label_id": lab, "distance": d}
                      for i, lab, d in pred.neighbors],
        "p_knn": pred.knn_probs.tolist(),
        "p_base": pred.base_probs.tolist(),
        "final": pred.probs.tolist(),
    }


def cmd_query(args) -> None:
    _require(args, "store", "embedding")
    if (args.base_dist is None) == (args.base_scores is None):
        raise CliError("query: give exactly one of --base-dist or --base-scores")
    store = Datastore.load(args.store)
    if args.base_dist is not None:
        base = check_distribution(parse_vector(args.base_dist), len(store.labels))
    else:
        scores = parse_vector(args.base_scores)
        if len(scores) != len(store.labels):
            raise CliError(f"query: {len(scores)} base scores for {len(store.labels)} labels")
        base = softmax(scores)
    cfg = _cfg(args)
    pred = predict(store, Query(parse_vector(args.embedding), base), cfg)
    ev = evidence_dict(store, pred, cfg)
    if args.explain:
        _emit(ev)
    else:
        _emit({"label": ev["label"], "label_id": ev["label_id"], "final": ev["final"]})
    if args.figure:
        from .plotting import plot_case_study

        plot_case_study(ev, args.figure)


def cmd_mutate(args) -> None:
    _require(args, "store")
    store = Datastore.load(args.store)
    labels: LabelTable = store.labels
    if args.action == "add":
        new_id = store.add(parse_vector(args.embedding), labels.id_of(args.label))
        result = {"action": "add", "id": new_id}
    elif args.action == "edit":
        store.edit(args.id, labels.id_of(args.label))
        result = {"action": "edit", "id": args.id, "label": args.label}
    else:
        store.delete(args.id)
        result = {"action": "delete", "id": args.id}
    out = args.output or args.store
    store.save(out)
    result.update(entries=len(store), output=out)
    _emit(result)


def _spec(args) -> EpisodeSpec | None:
    return None if args.shots is None else EpisodeSpec(args.shots, tuple(args.seeds))


def _label_names(args):
    return read_label_file(args.labels) if args.labels else None


def cmd_eval(args) -> None:
    _require(args, "train", "test")
    report = run_eval(args.train, args.test, _cfg(args), _spec(args), retriever=args.retriever,
                      tfidf_mode=args.tfidf_mode, label_names=_label_names(args), na_label=args.na_label)
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _emit(payload)
    print(report.summary(), file=sys.stderr)


def _figure_path(args) -> str | None:
    if args.no_figure:
        return None
    if args.figure:
        return args.figure
    if args.out:
        return str(Path(args.out).with_suffix(".png"))
    return None


def _write_table(path: str | None, header, rows) -> None:
    if path:
        write_csv(path, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_sweep(args) -> None:
    _require(args, "train", "test")
    rows = sweep(args.train, args.test, _cfg(args), args.lambda_grid, args.k_grid, _spec(args),
                 retriever=args.retriever, tfidf_mode=args.tfidf_mode, label_names=_label_names(args),
                 na_label=args.na_label)
    _write_table(args.out, SWEEP_HEADER, sweep_table(rows))
    fig = _figure_path(args)
    if fig:
        from .plotting import plot_sweep

        plot_sweep(rows, fig, k=args.k, lam=args.lam)
        log.info("wrote %s", fig)


def cmd_bench(args) -> None:
    rows = bench(args.sizes, args.dim, args.queries, args.k, num_labels=args.num_labels, lam=args.lam,
                 seed=args.seed, repeats=args.repeats)
    _write_table(args.out, BENCH_HEADER, [r.as_tuple() for r in rows])
    fig = _figure_path(args)
    if fig:
        from .plotting import plot_bench

        plot_bench(rows, fig)
        log.info("wrote %s", fig)


def cmd_synth(args) -> None:
    _require(args, "out_dir")
    train, test = generate_synthetic(args.num_labels, args.dim, args.per_label, args.noise, args.base_quality,
                                     args.seed, args.out_dir, test_per_label=args.test_per_label)
    _emit({"train": str(train), "test": str(test), "labels": str(Path(args.out_dir) / "labels.txt")})


# -- entry point --------------------------------------------------------------

def _echo(args) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("config: " + json.dumps(cfg, default=str), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except (ObknnError, OSError, configparser.Error) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    _echo(args)
    try:
        args.func(args)
    except (ObknnError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
