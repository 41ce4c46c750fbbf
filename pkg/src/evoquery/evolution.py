"""The generational loop: seed, query, score, select, repeat.

run_evolution drives a population of query genomes against a provider for
a fixed number of generations, maintaining the adaptive reference vector,
the per-generation records and the run-wide capped result list. replay
re-executes an offline run from its persisted ledger and verifies the
records byte for byte.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

from .corpus import (
    DEFAULT_NORMALIZER,
    Document,
    Normalizer,
    SuffixNormalizer,
    build_keyword_pool,
    load_corpus,
    load_stop_words,
)
from .errors import (
    ConfigInvalid,
    DivergenceDetected,
    LedgerCorrupt,
    NonReplayableLedger,
)
from .fitness import (
    FitnessWeights,
    ReferenceText,
    ScoredResult,
    aggregate_results,
    merge_into_global,
    population_fitness,
    query_fitness,
    score_query_results,
    update_reference_text,
)
from .genome import (
    Population,
    QueryGenome,
    Variant,
    crossover,
    mutate,
    render_query,
    seed_population,
)
from .ledger import (
    canonical_json,
    file_digest,
    first_divergent_path,
    parse_record_line,
    read_config_payload,
    read_final_results_text,
    read_generation_lines,
    write_ledger_dir,
)
from .provider import (
    OfflineProvider,
    HttpProvider,
    ProviderQueryRecord,
    SearchHit,
    SearchProvider,
    load_index,
)
from .rng import derive_rng

API_KEY_ENV_VAR = "EVOQUERY_API_KEY"
FITNESS_CONSISTENCY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ProviderSpec:
    """Which engine a run talks to and how."""

    kind: str = "offline"  # "offline" | "http"
    endpoint: str | None = None
    api_key_header: str | None = None
    rate_limit_rps: float = 1.0
    full_body_snippets: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("offline", "http"):
            raise ConfigInvalid(f"provider kind must be offline or http, got {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigInvalid("http provider needs an endpoint")
        if self.rate_limit_rps <= 0:
            raise ConfigInvalid("rate_limit_rps must be positive")

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "api_key_header": self.api_key_header,
            "rate_limit_rps": float(self.rate_limit_rps),
            "full_body_snippets": self.full_body_snippets,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> ProviderSpec:
        if not isinstance(payload, dict):
            raise ConfigInvalid("provider must be an object")
        known = {"kind", "endpoint", "api_key_header", "rate_limit_rps", "full_body_snippets"}
        unknown = set(payload) - known
        if unknown:
            raise ConfigInvalid(f"unknown provider keys: {sorted(unknown)}")
        kwargs = dict(payload)
        for name in ("kind",):
            if name in kwargs and not isinstance(kwargs[name], str):
                raise ConfigInvalid(f"provider {name} must be a string")
        for name in ("endpoint", "api_key_header"):
            if name in kwargs and kwargs[name] is not None and not isinstance(kwargs[name], str):
                raise ConfigInvalid(f"provider {name} must be a string or null")
        if "full_body_snippets" in kwargs and not isinstance(kwargs["full_body_snippets"], bool):
            raise ConfigInvalid("provider full_body_snippets must be a boolean")
        if "rate_limit_rps" in kwargs:
            value = kwargs["rate_limit_rps"]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigInvalid("provider rate_limit_rps must be a number")
            kwargs["rate_limit_rps"] = float(value)
        return cls(**kwargs)


# config fields: (json key, type, default). Short names g2/g3/f1..f7/m1/e1
# are the run-parameter vocabulary of the config file format.
_INT_FIELDS = {
    "g2": 8,
    "g3": 6,
    "f1": 20,
    "f2": 20,
    "f3": 20,
    "e1": 10,
    "keyword_pool_size": 50,
    "relevance_threshold": 2,
    "rng_seed": 0,
}
_FLOAT_FIELDS = {
    "f4": 0.75,
    "f5": 0.33,
    "f6": 0.33,
    "f7": 0.34,
    "m1": 1.0,
    "a_factor": 1.0,
}


@dataclass(frozen=True)
class RunConfig:
    """Run parameters; the zero-argument form is the reference setup.

    g2: population size; g3: terms per query; f1/f2/f3: per-query,
    per-population and run-wide result caps; f4: same-host damping;
    f5/f6/f7: rank/crossquery/semantic component weights; m1: mutation
    probability; e1: generation count.
    """

    g2: int = 8
    g3: int = 6
    f1: int = 20
    f2: int = 20
    f3: int = 20
    f4: float = 0.75
    f5: float = 0.33
    f6: float = 0.33
    f7: float = 0.34
    m1: float = 1.0
    e1: int = 10
    a_factor: float = 1.0
    rng_seed: int = 0
    variant: Variant = Variant.LEMMA
    keyword_pool_size: int = 50
    relevance_threshold: int = 2
    freeze_reference: bool = False
    stop_words_path: str | None = None
    provider: ProviderSpec = dc_field(default_factory=ProviderSpec)

    def __post_init__(self) -> None:
        for name in ("g2", "g3", "f1", "f2", "f3", "e1", "keyword_pool_size"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (0.0 <= self.m1 <= 1.0):
            raise ConfigInvalid(f"m1 must be a probability, got {self.m1!r}")
        if not (0.0 <= self.a_factor <= 1.0):
            raise ConfigInvalid(f"a_factor must be in [0, 1], got {self.a_factor!r}")
        if self.relevance_threshold not in (0, 1, 2, 3):
            raise ConfigInvalid(
                f"relevance_threshold must be a 0..3 grade, got {self.relevance_threshold!r}"
            )
        self.fitness_weights()  # validates f4..f7 and the caps

    def fitness_weights(self) -> FitnessWeights:
        return FitnessWeights(
            w_position=self.f5,
            w_crossquery=self.f6,
            w_semantic=self.f7,
            host_coeff=self.f4,
            per_query_cap=self.f1,
            per_population_cap=self.f2,
            global_cap=self.f3,
        )

    def normalizer(self) -> Normalizer:
        if self.stop_words_path:
            return SuffixNormalizer(stop_words=load_stop_words(self.stop_words_path))
        return DEFAULT_NORMALIZER

    def to_payload(self) -> dict:
        payload: dict = {}
        for name in _INT_FIELDS:
            payload[name] = getattr(self, name)
        for name in _FLOAT_FIELDS:
            payload[name] = float(getattr(self, name))
        payload["variant"] = self.variant.value
        payload["freeze_reference"] = self.freeze_reference
        payload["stop_words_path"] = self.stop_words_path
        payload["provider"] = self.provider.to_payload()
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> RunConfig:
        """Build a config from a plain dict; absent keys take defaults."""
        if not isinstance(payload, dict):
            raise ConfigInvalid("config must be a JSON object")
        known = (
            set(_INT_FIELDS)
            | set(_FLOAT_FIELDS)
            | {"variant", "freeze_reference", "stop_words_path", "provider"}
        )
        unknown = set(payload) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for name, default in _INT_FIELDS.items():
            if name in payload:
                value = payload[name]
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ConfigInvalid(f"{name} must be an integer, got {value!r}")
                kwargs[name] = value
        for name in _FLOAT_FIELDS:
            if name in payload:
                value = payload[name]
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigInvalid(f"{name} must be a number, got {value!r}")
                kwargs[name] = float(value)
        if "variant" in payload:
            try:
                kwargs["variant"] = Variant(payload["variant"])
            except ValueError:
                raise ConfigInvalid(
                    f"variant must be lemma or quoted, got {payload['variant']!r}"
                ) from None
        if "freeze_reference" in payload:
            if not isinstance(payload["freeze_reference"], bool):
                raise ConfigInvalid("freeze_reference must be a boolean")
            kwargs["freeze_reference"] = payload["freeze_reference"]
        if "stop_words_path" in payload:
            value = payload["stop_words_path"]
            if value is not None and not isinstance(value, str):
                raise ConfigInvalid("stop_words_path must be a string or null")
            kwargs["stop_words_path"] = value
        if "provider" in payload:
            kwargs["provider"] = ProviderSpec.from_payload(payload["provider"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc


def result_to_payload(result: ScoredResult) -> dict:
    return {
        "url": result.hit.doc_url,
        "host": result.hit.doc_host,
        "title": result.hit.title,
        "snippet": result.hit.snippet,
        "position": result.hit.position,
        "rank": result.rank_component,
        "crossquery": result.crossquery_component,
        "semantic": result.semantic_component,
        "environment": result.environment_factor,
        "fitness": result.fitness,
    }


def payload_to_result(payload: dict) -> ScoredResult:
    hit = SearchHit(
        doc_url=payload["url"],
        doc_host=payload["host"],
        title=payload["title"],
        snippet=payload["snippet"],
        position=payload["position"],
    )
    return ScoredResult(
        hit=hit,
        rank_component=payload["rank"],
        crossquery_component=payload["crossquery"],
        semantic_component=payload["semantic"],
        environment_factor=payload["environment"],
        fitness=payload["fitness"],
    )


@dataclass
class QueryOutcome:
    """One genome's full turn: rendered query, hits, scores, fitness."""

    genome_id: str
    terms: tuple[str, ...]
    variant: Variant
    query_string: str
    provider_name: str
    issued_at: float | None
    query_fitness: float
    results: list[ScoredResult]

    def to_payload(self) -> dict:
        return {
            "genome_id": self.genome_id,
            "terms": list(self.terms),
            "variant": self.variant.value,
            "query_string": self.query_string,
            "provider_name": self.provider_name,
            "issued_at": self.issued_at,
            "query_fitness": self.query_fitness,
            "results": [result_to_payload(r) for r in self.results],
        }


@dataclass
class GenerationRecord:
    generation: int
    queries: list[QueryOutcome]
    population_fitness: float
    reference_digest: str

    def to_payload(self) -> dict:
        return {
            "generation": self.generation,
            "queries": [q.to_payload() for q in self.queries],
            "population_fitness": self.population_fitness,
            "reference_digest": self.reference_digest,
        }

    def check_consistency(self) -> None:
        mean = sum(q.query_fitness for q in self.queries) / len(self.queries)
        if abs(mean - self.population_fitness) > FITNESS_CONSISTENCY_TOLERANCE:
            raise LedgerCorrupt(
                f"generation {self.generation}: population fitness "
                f"{self.population_fitness!r} does not match query mean {mean!r}"
            )


@dataclass
class RunLedger:
    config: RunConfig
    generations: list[GenerationRecord]
    final_results: list[ScoredResult]
    inputs: dict | None = None


@dataclass
class _Evaluation:
    record: ProviderQueryRecord
    results: list[ScoredResult]
    fitness: float


class _QueryEvaluator:
    """Executes and scores queries, with an optional freeze-mode memo.

    In freeze mode every query string is evaluated once and the outcome
    reused verbatim on re-evaluation, so a surviving genome keeps its
    exact fitness no matter how the rest of the population shifts. In
    adaptive mode everything is recomputed against the current reference
    each generation.
    """

    def __init__(
        self,
        provider: SearchProvider,
        weights: FitnessWeights,
        config: RunConfig,
        normalizer: Normalizer,
    ):
        self.provider = provider
        self.weights = weights
        self.config = config
        self.normalizer = normalizer
        self.reference: ReferenceText | None = None
        self._memo: dict[str, _Evaluation] | None = (
            {} if config.freeze_reference else None
        )

    def fetch_hits(self, query_string: str) -> list[SearchHit]:
        if self._memo is not None and query_string in self._memo:
            return self._memo[query_string].record.hits
        return self.provider.execute(query_string, self.config.f1)

    def make_record(self, query_string: str, genome_id: str) -> ProviderQueryRecord:
        return ProviderQueryRecord(
            query_string=query_string,
            genome_id=genome_id,
            hits=self.fetch_hits(query_string),
            provider_name=self.provider.name,
            issued_at=time.time() if self.provider.stamps_time else None,
        )

    def score(
        self, record: ProviderQueryRecord, population_records: Sequence[ProviderQueryRecord]
    ) -> _Evaluation:
        assert self.reference is not None, "reference vector not initialized"
        memo = self._memo
        if memo is not None and record.query_string in memo:
            cached = memo[record.query_string]
            return _Evaluation(record=record, results=cached.results, fitness=cached.fitness)
        results = score_query_results(
            record,
            population_records,
            self.reference,
            self.weights,
            self.config.a_factor,
            self.normalizer,
        )
        evaluation = _Evaluation(record=record, results=results, fitness=query_fitness(results))
        if memo is not None:
            memo[record.query_string] = evaluation
        return evaluation

    def evaluate_single(self, genome: QueryGenome) -> float:
        """Fitness of one genome scored as a population of itself."""
        record = self.make_record(render_query(genome), "challenger")
        return self.score(record, [record]).fitness


def select_survivors(
    population: Population,
    fitnesses: Sequence[float],
    pool,
    config: RunConfig,
    rng,
    evaluate_single: Callable[[QueryGenome], float] | None = None,
) -> Population:
    """Elitist truncation plus tournament-bred offspring.

    The best half (rounded up) survives unchanged, ranked by fitness with
    rendered-query text breaking ties. Remaining slots are filled by
    crossover of pairwise-tournament winners, then mutation. A population
    of one degenerates to hill climbing: a mutated challenger replaces the
    incumbent only on strict improvement.
    """
    genomes = population.genomes
    size = len(genomes)
    if size != len(fitnesses):
        raise ValueError("one fitness per genome required")

    def rank_key(i: int) -> tuple[float, str]:
        return (-fitnesses[i], render_query(genomes[i]))

    order = sorted(range(size), key=rank_key)

    if size == 1:
        if evaluate_single is None:
            raise ValueError("single-genome selection needs an evaluation callback")
        incumbent = genomes[0]
        challenger = mutate(incumbent, pool, config.m1, rng)
        winner = incumbent
        if challenger != incumbent and evaluate_single(challenger) > fitnesses[0]:
            winner = challenger
        return Population(genomes=[winner], generation=population.generation + 1)

    elite_count = math.ceil(size / 2)
    survivors = [genomes[i] for i in order[:elite_count]]

    def tournament() -> QueryGenome:
        i, j = rng.randrange(size), rng.randrange(size)
        return genomes[i] if rank_key(i) <= rank_key(j) else genomes[j]

    offspring: list[QueryGenome] = []
    while len(offspring) < size - elite_count:
        child_a, child_b = crossover(tournament(), tournament(), rng)
        offspring.append(mutate(child_a, pool, config.m1, rng))
        if len(offspring) < size - elite_count:
            offspring.append(mutate(child_b, pool, config.m1, rng))
    return Population(
        genomes=survivors + offspring, generation=population.generation + 1
    )


def run_evolution(
    config: RunConfig,
    provider: SearchProvider,
    seed_material: Sequence[Document],
    inputs: dict | None = None,
) -> RunLedger:
    """Run the full generational loop and return the in-memory ledger."""
    if not seed_material:
        raise ConfigInvalid("seed material must contain at least one document")
    normalizer = config.normalizer()
    weights = config.fitness_weights()
    pool = build_keyword_pool(list(seed_material), config.keyword_pool_size, normalizer)
    reference = ReferenceText.from_seed_documents(seed_material, normalizer=normalizer)
    evaluator = _QueryEvaluator(provider, weights, config, normalizer)
    evaluator.reference = reference
    population = seed_population(
        pool, config.g2, config.g3, config.rng_seed, config.variant
    )

    records: list[GenerationRecord] = []
    global_top: list[ScoredResult] = []
    for generation in range(config.e1):
        query_records = [
            evaluator.make_record(render_query(genome), f"g{idx}")
            for idx, genome in enumerate(population.genomes)
        ]
        evaluations = [evaluator.score(record, query_records) for record in query_records]
        fitnesses = [e.fitness for e in evaluations]
        mean_fitness = population_fitness(fitnesses)

        population_top = aggregate_results(
            [e.results for e in evaluations], weights.per_population_cap
        )
        global_top = merge_into_global(global_top, population_top, weights.global_cap)
        if not config.freeze_reference:
            reference = update_reference_text(
                reference, population_top, generation, normalizer
            )
            evaluator.reference = reference

        outcomes = [
            QueryOutcome(
                genome_id=record.genome_id,
                terms=genome.terms,
                variant=genome.variant,
                query_string=record.query_string,
                provider_name=record.provider_name,
                issued_at=record.issued_at,
                query_fitness=evaluation.fitness,
                results=evaluation.results,
            )
            for genome, record, evaluation in zip(
                population.genomes, query_records, evaluations
            )
        ]
        records.append(
            GenerationRecord(
                generation=generation,
                queries=outcomes,
                population_fitness=mean_fitness,
                reference_digest=reference.digest(),
            )
        )

        if generation < config.e1 - 1:
            rng = derive_rng(config.rng_seed, f"selection/{generation}")
            population = select_survivors(
                population, fitnesses, pool, config, rng, evaluator.evaluate_single
            )

    return RunLedger(
        config=config, generations=records, final_results=global_top, inputs=inputs
    )


def build_provider(spec: ProviderSpec, index_path: str | Path | None = None) -> SearchProvider:
    """Construct the engine a run/replay talks to from its spec."""
    if spec.kind == "offline":
        if index_path is None:
            raise ConfigInvalid("offline provider needs an index path")
        return OfflineProvider(
            index=load_index(index_path), full_body_snippets=spec.full_body_snippets
        )
    return HttpProvider(
        endpoint=spec.endpoint or "",
        api_key_header=spec.api_key_header,
        api_key=os.environ.get(API_KEY_ENV_VAR),
        rate_limit_rps=spec.rate_limit_rps,
    )


def make_run_inputs(index_path: str | Path, seed_material_path: str | Path) -> dict:
    """Input fingerprints stored beside the config for later replay."""
    return {
        "index_path": str(index_path),
        "index_sha256": file_digest(index_path),
        "seed_material_path": str(seed_material_path),
        "seed_material_sha256": file_digest(seed_material_path),
    }


def write_run_ledger(ledger_dir: str | Path, ledger: RunLedger) -> None:
    for record in ledger.generations:
        record.check_consistency()
    config_payload = {"config": ledger.config.to_payload(), "inputs": ledger.inputs}
    write_ledger_dir(
        ledger_dir,
        config_payload,
        [record.to_payload() for record in ledger.generations],
        [result_to_payload(r) for r in ledger.final_results],
    )


def _verify_input_file(path_text: str, recorded_digest: str, label: str) -> None:
    path = Path(path_text)
    if not path.is_file():
        raise LedgerCorrupt(f"recorded {label} {path_text!r} no longer exists")
    actual = file_digest(path)
    if actual != recorded_digest:
        raise LedgerCorrupt(
            f"recorded {label} {path_text!r} changed since the run "
            f"(sha256 {actual} != {recorded_digest})"
        )


def replay(ledger_dir: str | Path) -> RunLedger:
    """Re-execute an offline run and verify its ledger byte for byte."""
    payload = read_config_payload(ledger_dir)
    if "config" not in payload:
        raise LedgerCorrupt("config.json lacks a config section")
    config = RunConfig.from_payload(payload["config"])
    if config.provider.kind != "offline":
        raise NonReplayableLedger(
            f"ledger was produced by the {config.provider.kind!r} provider; "
            "only offline runs re-derive their results"
        )
    inputs = payload.get("inputs")
    if not isinstance(inputs, dict):
        raise LedgerCorrupt("ledger records no input files; cannot replay")
    for key in ("index_path", "index_sha256", "seed_material_path", "seed_material_sha256"):
        if key not in inputs:
            raise LedgerCorrupt(f"ledger inputs lack {key}")
    _verify_input_file(inputs["index_path"], inputs["index_sha256"], "index")
    _verify_input_file(
        inputs["seed_material_path"], inputs["seed_material_sha256"], "seed material"
    )

    provider = build_provider(config.provider, inputs["index_path"])
    seed_material = load_corpus(inputs["seed_material_path"])
    rerun = run_evolution(config, provider, seed_material, inputs=inputs)

    stored_lines = read_generation_lines(ledger_dir)
    fresh_lines = [canonical_json(r.to_payload()) for r in rerun.generations]
    if len(stored_lines) != len(fresh_lines):
        raise DivergenceDetected(
            min(len(stored_lines), len(fresh_lines)),
            "record_count",
            f"ledger holds {len(stored_lines)} generations, rerun produced {len(fresh_lines)}",
        )
    for line_no, (stored, fresh) in enumerate(zip(stored_lines, fresh_lines), start=1):
        if stored != fresh:
            path = first_divergent_path(
                parse_record_line(stored, line_no), parse_record_line(fresh, line_no)
            )
            raise DivergenceDetected(line_no - 1, path or "<bytes>")

    stored_final = read_final_results_text(ledger_dir).strip()
    fresh_final = canonical_json([result_to_payload(r) for r in rerun.final_results])
    if stored_final != fresh_final:
        raise DivergenceDetected(config.e1, "final_results")
    return rerun
