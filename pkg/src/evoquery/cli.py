"""Command-line front end.

Subcommands: index (corpus file to searchable index), keywords (seed
material to weighted lemma pool), evolve (run the generational loop and
persist its ledger), evaluate (judge orderings against qrels into a
metrics CSV), report (merge metrics CSVs and draw charts), replay
(re-derive a ledger and verify it byte for byte).

Exit codes: 0 success, 1 usage or validation failure, 2 provider or
environment failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from itertools import combinations
from pathlib import Path
from typing import NoReturn, Sequence

from .corpus import (
    DEFAULT_NORMALIZER,
    SuffixNormalizer,
    build_keyword_pool,
    load_corpus,
    load_stop_words,
)
from .errors import (
    ConfigInvalid,
    DivergenceDetected,
    EvoqueryError,
    ProtocolError,
    ProviderUnavailable,
    ZeroEnergySequence,
)
from .evaluation import (
    MetricRow,
    MetricsReport,
    Persona,
    RankedList,
    consensus_map,
    cumulative_dcg_series,
    dcg,
    ideal_ordering,
    load_qrels,
    mean_relevance,
    missing_grades,
    ndcg,
    overlap_percent,
    precision,
    rho12,
)
from .evolution import (
    ProviderSpec,
    RunConfig,
    build_provider,
    make_run_inputs,
    replay,
    run_evolution,
    write_run_ledger,
)
from .ledger import read_final_results_text
from .provider import build_index, save_index
from .report import metrics_csv_text, read_metrics_csv, write_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENVIRONMENT = 2


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for the
    environment, so usage problems exit 1 instead."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _require_file(path: str | Path, what: str) -> Path:
    resolved = Path(path)
    if not resolved.is_file():
        raise ConfigInvalid(f"{what} not found: {resolved}")
    return resolved


def _normalizer_from(stop_words_path: str | None):
    if stop_words_path:
        return SuffixNormalizer(
            stop_words=load_stop_words(_require_file(stop_words_path, "stop words"))
        )
    return DEFAULT_NORMALIZER


def cmd_index(args: argparse.Namespace) -> int:
    corpus_path = _require_file(args.corpus, "corpus")
    docs = load_corpus(corpus_path)
    index = build_index(docs, _normalizer_from(args.stop_words))
    save_index(index, args.out)
    print(f"indexed {index.doc_count} documents, vocabulary {index.vocabulary_size}")
    return EXIT_OK


def cmd_keywords(args: argparse.Namespace) -> int:
    corpus_path = _require_file(args.corpus, "corpus")
    docs = load_corpus(corpus_path)
    pool = build_keyword_pool(docs, args.k, _normalizer_from(args.stop_words))
    for lemma, weight in pool.terms:
        print(f"{lemma}\t{weight:.6f}")
    return EXIT_OK


def cmd_evolve(args: argparse.Namespace) -> int:
    payload = {}
    if args.config:
        config_path = _require_file(args.config, "config")
        try:
            payload = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc.msg}") from exc
    config = RunConfig.from_payload(payload)
    seed_path = _require_file(args.seed_material, "seed material")
    seed_docs = load_corpus(seed_path)

    if args.index:
        index_path = _require_file(args.index, "index")
        spec = ProviderSpec(
            kind="offline", full_body_snippets=config.provider.full_body_snippets
        )
        inputs = make_run_inputs(index_path, seed_path)
    else:
        index_path = None
        spec = ProviderSpec(
            kind="http",
            endpoint=args.endpoint,
            api_key_header=config.provider.api_key_header,
            rate_limit_rps=config.provider.rate_limit_rps,
        )
        inputs = None
    config = dataclasses.replace(config, provider=spec)

    provider = build_provider(spec, index_path)
    ledger = run_evolution(config, provider, seed_docs, inputs=inputs)
    write_run_ledger(args.out, ledger)
    print(f"ledger written to {args.out}")
    print(f"final population fitness: {ledger.generations[-1].population_fitness:.6f}")
    print(f"top {len(ledger.final_results)} results:")
    for i, result in enumerate(ledger.final_results, start=1):
        print(f"  {i:2d}. {result.hit.doc_url}  fitness {result.fitness:.6f}")
    return EXIT_OK


def _ledger_ordering(ledger_dir: Path) -> RankedList:
    payload = json.loads(read_final_results_text(ledger_dir))
    if not isinstance(payload, list):
        raise ConfigInvalid(f"final results in {ledger_dir} must be an array")
    urls = []
    for entry in payload:
        if not isinstance(entry, dict) or not isinstance(entry.get("url"), str):
            raise ConfigInvalid(f"malformed final results entry in {ledger_dir}")
        urls.append(entry["url"])
    return RankedList(ordering_name="evolved", doc_urls=urls)


def _list_ordering(path: Path) -> RankedList:
    urls = []
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            urls.append(stripped)
    return RankedList(ordering_name=path.stem, doc_urls=urls)


def _persona_list(code: str) -> list[Persona]:
    if code == "both":
        return [Persona.SPECIALIST, Persona.NOVICE]
    return [Persona.from_code(code)]


def cmd_evaluate(args: argparse.Namespace) -> int:
    if not args.ledger and not args.list:
        raise ConfigInvalid("need --ledger and/or at least one --list ordering")
    grades = consensus_map(load_qrels(_require_file(args.qrels, "qrels")))

    orderings: list[RankedList] = []
    if args.ledger:
        orderings.append(_ledger_ordering(Path(args.ledger)))
    for list_path in args.list or []:
        orderings.append(_list_ordering(_require_file(list_path, "ordering list")))
    names = [o.ordering_name for o in orderings]
    if len(set(names)) != len(names):
        raise ConfigInvalid(f"ordering names must be distinct, got {names}")

    n = args.n
    personas = _persona_list(args.persona)
    report = MetricsReport()
    for ordering in orderings:
        top = RankedList(ordering.ordering_name, ordering.doc_urls[:n])
        for persona in personas:
            missing = missing_grades(top, grades, persona)
            if missing:
                print(
                    f"note: {missing} of {len(top.doc_urls)} positions in "
                    f"{ordering.ordering_name!r} lack {persona.value} judgments "
                    "(scored 0)",
                    file=sys.stderr,
                )
            name = ordering.ordering_name
            code = persona.value
            report.rows.append(
                MetricRow("mean_relevance", name, code, n, mean_relevance(top, grades, persona))
            )
            report.rows.append(
                MetricRow(
                    "precision", name, code, n, precision(top, grades, persona, args.threshold)
                )
            )
            report.rows.append(MetricRow("dcg", name, code, n, dcg(top, grades, persona, n)))
            report.rows.append(MetricRow("ndcg", name, code, n, ndcg(top, grades, persona, n)))
            ideal = ideal_ordering(top, grades, persona)
            _append_rho12(
                report,
                f"{name}|expert",
                code,
                n,
                cumulative_dcg_series(top, grades, persona, n),
                cumulative_dcg_series(ideal, grades, persona, n),
            )

    for left, right in combinations(orderings, 2):
        pair = f"{left.ordering_name}|{right.ordering_name}"
        left_top = RankedList(left.ordering_name, left.doc_urls[:n])
        right_top = RankedList(right.ordering_name, right.doc_urls[:n])
        report.rows.append(
            MetricRow("overlap_percent", pair, "-", n, overlap_percent(left_top, right_top))
        )
        for persona in personas:
            series_a = cumulative_dcg_series(left_top, grades, persona, n)
            series_b = cumulative_dcg_series(right_top, grades, persona, n)
            shared = min(len(series_a), len(series_b))
            _append_rho12(
                report, pair, persona.value, n, series_a[:shared], series_b[:shared]
            )

    csv_text = metrics_csv_text(report.sorted_rows())
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote {args.out} ({len(report.rows)} rows)")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _append_rho12(
    report: MetricsReport,
    ordering: str,
    persona: str,
    n: int,
    series_a: Sequence[float],
    series_b: Sequence[float],
) -> None:
    try:
        value = rho12(series_a, series_b)
    except ZeroEnergySequence:
        print(
            f"note: skipping rho12 for {ordering!r}/{persona}: a series has zero energy",
            file=sys.stderr,
        )
        return
    report.rows.append(MetricRow("rho12", ordering, persona, n, value))


def cmd_report(args: argparse.Namespace) -> int:
    runs: dict[str, list[MetricRow]] = {}
    for path_text in args.metrics:
        path = _require_file(path_text, "metrics CSV")
        if path.stem in runs:
            raise ConfigInvalid(f"duplicate run name {path.stem!r}; rename an input file")
        runs[path.stem] = read_metrics_csv(path)
    if not any(runs.values()):
        print("warning: inputs hold no metric rows; report will be empty", file=sys.stderr)
    formats = ("csv", "svg") if args.format == "both" else (args.format,)
    for path in write_report(runs, args.out, formats):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    rerun = replay(args.ledger)
    print(f"replay verified: {len(rerun.generations)} generations byte-identical")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="evoquery",
        description="Evolve keyword queries against a search provider and "
        "evaluate the resulting document rankings.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    index_p = sub.add_parser("index", help="build a searchable index from a corpus")
    index_p.add_argument("--corpus", required=True, help="corpus JSONL file")
    index_p.add_argument("--out", required=True, help="index output path")
    index_p.add_argument("--stop-words", help="stop word list, one per line")
    index_p.set_defaults(func=cmd_index)

    keywords_p = sub.add_parser("keywords", help="extract a weighted keyword pool")
    keywords_p.add_argument("--corpus", required=True, help="seed material JSONL file")
    keywords_p.add_argument("--k", type=_positive_int, default=50, help="pool size")
    keywords_p.add_argument("--stop-words", help="stop word list, one per line")
    keywords_p.set_defaults(func=cmd_keywords)

    evolve_p = sub.add_parser("evolve", help="run the query-evolution loop")
    evolve_p.add_argument("--config", help="run config JSON; omit for defaults")
    evolve_p.add_argument("--seed-material", required=True, help="seed documents JSONL")
    source = evolve_p.add_mutually_exclusive_group(required=True)
    source.add_argument("--index", help="offline index path")
    source.add_argument("--endpoint", help="HTTP search API endpoint")
    evolve_p.add_argument("--out", required=True, help="ledger output directory")
    evolve_p.set_defaults(func=cmd_evolve)

    evaluate_p = sub.add_parser("evaluate", help="score orderings against judgments")
    evaluate_p.add_argument("--ledger", help="run ledger directory (ordering 'evolved')")
    evaluate_p.add_argument(
        "--list", action="append", help="ordering file of urls, named by file stem"
    )
    evaluate_p.add_argument("--qrels", required=True, help="judgments TSV")
    evaluate_p.add_argument("--persona", choices=["S", "N", "both"], default="both")
    evaluate_p.add_argument("--n", type=_positive_int, default=20, help="evaluation cutoff")
    evaluate_p.add_argument(
        "--threshold", type=int, choices=[0, 1, 2, 3], default=2,
        help="consensus grade counted as relevant",
    )
    evaluate_p.add_argument("--out", help="metrics CSV path; stdout when omitted")
    evaluate_p.set_defaults(func=cmd_evaluate)

    report_p = sub.add_parser("report", help="merge metrics CSVs and draw charts")
    report_p.add_argument("--metrics", nargs="+", required=True, help="metrics CSV files")
    report_p.add_argument("--out", required=True, help="report output directory")
    report_p.add_argument("--format", choices=["csv", "svg", "both"], default="both")
    report_p.set_defaults(func=cmd_report)

    replay_p = sub.add_parser("replay", help="re-derive a ledger and verify it")
    replay_p.add_argument("--ledger", required=True, help="run ledger directory")
    replay_p.set_defaults(func=cmd_replay)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProviderUnavailable, ProtocolError) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except DivergenceDetected as exc:
        print(
            f"divergence detected at generation {exc.generation}, field {exc.field}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    except (EvoqueryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT


if __name__ == "__main__":
    raise SystemExit(main())
