"""Result scoring: per-hit fitness, per-query and population aggregates.

Each hit gets four normalized components: a rank score from its list
position, a cross-query score counting how many of the population's result
lists contain it, a semantic score against an adaptive reference vector,
and a per-run environment factor. The weighted sum, damped per extra
result from the same host, is the quantity the genetic loop maximizes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .corpus import Document, Normalizer, TermVector, DEFAULT_NORMALIZER
from .errors import (
    ComponentOutOfRange,
    ConfigInvalid,
    EmptyDocument,
    PositionOutOfRange,
    WrongPopulationSize,
)
from .provider import ProviderQueryRecord, SearchHit

WEIGHT_SUM_TOLERANCE = 1e-9
REFERENCE_CAPACITY = 256
REFERENCE_DECAY = 0.5
REFERENCE_CONTRIBUTORS = 3


@dataclass(frozen=True)
class FitnessWeights:
    """Component weights, host damping and the three result-list caps."""

    w_position: float = 0.33
    w_crossquery: float = 0.33
    w_semantic: float = 0.34
    host_coeff: float = 0.75
    per_query_cap: int = 20
    per_population_cap: int = 20
    global_cap: int = 20

    def __post_init__(self) -> None:
        total = self.w_position + self.w_crossquery + self.w_semantic
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ConfigInvalid(f"component weights must sum to 1, got {total!r}")
        if min(self.w_position, self.w_crossquery, self.w_semantic) < 0:
            raise ConfigInvalid("component weights must be non-negative")
        if not (0.0 < self.host_coeff <= 1.0):
            raise ConfigInvalid(f"host coefficient must be in (0, 1], got {self.host_coeff!r}")
        for cap in (self.per_query_cap, self.per_population_cap, self.global_cap):
            if cap < 1:
                raise ConfigInvalid("result caps must be positive")


@dataclass
class ScoredResult:
    hit: SearchHit
    rank_component: float
    crossquery_component: float
    semantic_component: float
    environment_factor: float
    fitness: float


@dataclass
class ReferenceText:
    """Adaptive lemma vector standing for the target topic.

    Seeded from expert-provided material; each adaptation round folds in
    the lemma vectors of the current best results at geometrically
    decaying weight, then evicts the lightest lemmas beyond capacity.
    """

    vector: TermVector
    capacity: int = REFERENCE_CAPACITY
    provenance: list[tuple[int, str]] = field(default_factory=list)
    rounds: int = 0

    @classmethod
    def from_seed_documents(
        cls,
        docs: Sequence[Document],
        capacity: int = REFERENCE_CAPACITY,
        normalizer: Normalizer = DEFAULT_NORMALIZER,
    ) -> ReferenceText:
        lemmas: list[str] = []
        for doc in docs:
            lemmas.extend(normalizer.normalize(doc.body))
        if not lemmas:
            raise EmptyDocument("seed material normalizes to zero lemmas")
        vector = TermVector.from_lemmas(lemmas)
        vector = _evict_to_capacity(vector, capacity)
        return cls(vector=vector, capacity=capacity)

    def digest(self) -> str:
        """Stable fingerprint of the vector state, for ledger records."""
        parts = [f"{lemma}:{weight!r}" for lemma, weight in sorted(self.vector.entries.items())]
        return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()


def _evict_to_capacity(vector: TermVector, capacity: int) -> TermVector:
    if len(vector.entries) <= capacity:
        return TermVector.from_weights(vector.entries)
    kept = sorted(vector.entries.items(), key=lambda kv: (-kv[1], kv[0]))[:capacity]
    return TermVector.from_weights(dict(kept))


def position_score(position: int, list_length: int) -> float:
    """Linear decay from 1.0 at the top to 1/L at the bottom."""
    if list_length < 1 or not (1 <= position <= list_length):
        raise PositionOutOfRange(f"position {position} outside 1..{list_length}")
    return (list_length - position + 1) / list_length


def cross_query_score(doc_url: str, population_records: Sequence[ProviderQueryRecord]) -> float:
    """Fraction of the population's result lists that contain the url."""
    if not population_records:
        raise ValueError("need at least one query record")
    containing = sum(1 for record in population_records if doc_url in record.urls())
    return containing / len(population_records)


def hit_text_vector(hit: SearchHit, normalizer: Normalizer = DEFAULT_NORMALIZER) -> TermVector:
    return TermVector.from_lemmas(normalizer.normalize(hit.title + " " + hit.snippet))


def semantic_score(
    hit: SearchHit,
    ref: ReferenceText,
    normalizer: Normalizer = DEFAULT_NORMALIZER,
) -> float:
    """Cosine between the hit's title+snippet vector and the reference."""
    similarity = hit_text_vector(hit, normalizer).cosine(ref.vector)
    return min(1.0, max(0.0, similarity))


def result_fitness(
    rank: float,
    crossquery: float,
    semantic: float,
    environment: float,
    weights: FitnessWeights,
) -> float:
    """Weighted component sum scaled by the environment factor."""
    for name, value in (
        ("rank", rank),
        ("crossquery", crossquery),
        ("semantic", semantic),
        ("environment", environment),
    ):
        if not (0.0 <= value <= 1.0):
            raise ComponentOutOfRange(f"component {name}={value!r} outside [0, 1]")
    return environment * (
        weights.w_position * rank
        + weights.w_crossquery * crossquery
        + weights.w_semantic * semantic
    )


def apply_host_collocation(results: list[ScoredResult], host_coeff: float) -> list[ScoredResult]:
    """Damp repeated hosts: the k-th result from one host keeps coeff^(k-1).

    Expects the input sorted by fitness descending (host order counts in
    that sort order); returns a fresh list re-sorted by damped fitness,
    ties by url ascending.
    """
    seen: dict[str, int] = {}
    adjusted = []
    for result in results:
        k = seen.get(result.hit.doc_host, 0)
        seen[result.hit.doc_host] = k + 1
        if k == 0 or host_coeff == 1.0:
            adjusted.append(replace(result))
        else:
            adjusted.append(replace(result, fitness=result.fitness * host_coeff**k))
    adjusted.sort(key=lambda r: (-r.fitness, r.hit.doc_url))
    return adjusted


def query_fitness(results: Sequence[ScoredResult]) -> float:
    """Mean result fitness of one query; zero when it returned nothing."""
    if not results:
        return 0.0
    return sum(r.fitness for r in results) / len(results)


def population_fitness(query_fitnesses: Sequence[float]) -> float:
    """Mean query fitness across the population, the GA's objective."""
    if not query_fitnesses:
        raise WrongPopulationSize("population fitness of zero queries")
    return sum(query_fitnesses) / len(query_fitnesses)


def score_query_results(
    record: ProviderQueryRecord,
    population_records: Sequence[ProviderQueryRecord],
    ref: ReferenceText,
    weights: FitnessWeights,
    environment_factor: float,
    normalizer: Normalizer = DEFAULT_NORMALIZER,
) -> list[ScoredResult]:
    """Score one query's hits within its population and damp host runs."""
    length = len(record.hits)
    scored = []
    for hit in record.hits:
        rank = position_score(hit.position, length)
        crossquery = cross_query_score(hit.doc_url, population_records)
        semantic = semantic_score(hit, ref, normalizer)
        scored.append(
            ScoredResult(
                hit=hit,
                rank_component=rank,
                crossquery_component=crossquery,
                semantic_component=semantic,
                environment_factor=environment_factor,
                fitness=result_fitness(rank, crossquery, semantic, environment_factor, weights),
            )
        )
    scored.sort(key=lambda r: (-r.fitness, r.hit.doc_url))
    return apply_host_collocation(scored, weights.host_coeff)


def _dedupe_max_by_url(results: Iterable[ScoredResult]) -> list[ScoredResult]:
    best: dict[str, ScoredResult] = {}
    for result in results:
        url = result.hit.doc_url
        if url not in best or result.fitness > best[url].fitness:
            best[url] = result
    return list(best.values())


def _top_by_fitness(results: Iterable[ScoredResult], cap: int) -> list[ScoredResult]:
    ranked = sorted(results, key=lambda r: (-r.fitness, r.hit.doc_url))
    return ranked[:cap]


def aggregate_results(
    per_query_scored: Sequence[Sequence[ScoredResult]],
    per_population_cap: int,
) -> list[ScoredResult]:
    """Population-level top list: url-deduped keeping max fitness, capped."""
    flat = [r for scored in per_query_scored for r in scored]
    return _top_by_fitness(_dedupe_max_by_url(flat), per_population_cap)


def merge_into_global(
    global_results: Sequence[ScoredResult],
    population_top: Sequence[ScoredResult],
    global_cap: int,
) -> list[ScoredResult]:
    """Fold one population's top list into the run-wide capped list."""
    merged = _dedupe_max_by_url(list(global_results) + list(population_top))
    return _top_by_fitness(merged, global_cap)


def update_reference_text(
    ref: ReferenceText,
    top_results: Sequence[ScoredResult],
    generation: int,
    normalizer: Normalizer = DEFAULT_NORMALIZER,
) -> ReferenceText:
    """Fold the best current results into the reference vector.

    The top few distinct-url results contribute their title+snippet lemma
    vectors, all scaled by decay^round so late generations nudge rather
    than overwrite the topic representation. Empty input changes nothing,
    not even the round counter.
    """
    deduped: list[ScoredResult] = []
    seen: set[str] = set()
    for result in top_results:
        if result.hit.doc_url not in seen:
            seen.add(result.hit.doc_url)
            deduped.append(result)
    contributors = deduped[: min(REFERENCE_CONTRIBUTORS, len(deduped))]
    if not contributors:
        return ref
    round_number = ref.rounds + 1
    multiplier = REFERENCE_DECAY**round_number
    merged = dict(ref.vector.entries)
    provenance = list(ref.provenance)
    for result in contributors:
        contribution = hit_text_vector(result.hit, normalizer)
        for lemma, weight in contribution.entries.items():
            merged[lemma] = merged.get(lemma, 0.0) + multiplier * weight
        provenance.append((generation, result.hit.doc_url))
    vector = _evict_to_capacity(TermVector.from_weights(merged), ref.capacity)
    return ReferenceText(
        vector=vector, capacity=ref.capacity, provenance=provenance, rounds=round_number
    )
