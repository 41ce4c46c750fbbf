"""Query genomes and their genetic operators.

A genome is a fixed-length list of distinct keyword lemmas plus a rendering
variant. Operators keep the encoding valid by construction: crossover never
introduces duplicates and mutation replaces exactly one term with a fresh
one, so no repair step exists anywhere.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .corpus import KeywordPool
from .errors import PoolTooSmall, VariantMismatch
from .rng import derive_rng


class Variant(str, Enum):
    """Query formulation: exact quoted terms vs bare lemmas."""

    QUOTED = "quoted"
    LEMMA = "lemma"


@dataclass(frozen=True)
class QueryGenome:
    terms: tuple[str, ...]
    variant: Variant

    def __post_init__(self) -> None:
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("genome terms must be distinct")


@dataclass
class Population:
    genomes: list[QueryGenome]
    generation: int = 0


def _weighted_sample(
    items: list[tuple[str, float]], count: int, rng: random.Random
) -> list[str]:
    """Sample ``count`` distinct lemmas, probability proportional to weight.

    Zero-weight items are only reachable once every positive weight is
    exhausted, at which point the draw degrades to uniform.
    """
    remaining = list(items)
    picked: list[str] = []
    for _ in range(count):
        total = sum(w for _, w in remaining)
        if total <= 0.0:
            idx = rng.randrange(len(remaining))
        else:
            r = rng.random() * total
            acc = 0.0
            idx = len(remaining) - 1
            for i, (_, w) in enumerate(remaining):
                acc += w
                if r < acc:
                    idx = i
                    break
        picked.append(remaining.pop(idx)[0])
    return picked


def seed_population(
    pool: KeywordPool,
    g2: int,
    g3: int,
    rng_seed: int,
    variant: Variant = Variant.LEMMA,
) -> Population:
    """Draw g2 genomes of g3 distinct pool terms, weight-proportionally.

    Each genome gets its own derived stream so seeding order is immaterial.
    """
    if len(pool) < g3:
        raise PoolTooSmall(f"pool has {len(pool)} terms, need {g3}")
    genomes = []
    for i in range(g2):
        rng = derive_rng(rng_seed, f"seed-genome/{i}")
        terms = _weighted_sample(pool.terms, g3, rng)
        genomes.append(QueryGenome(terms=tuple(terms), variant=variant))
    return Population(genomes=genomes, generation=0)


def crossover(
    a: QueryGenome, b: QueryGenome, rng: random.Random
) -> tuple[QueryGenome, QueryGenome]:
    """Uniform term exchange over the parents' symmetric difference.

    Terms both parents carry are pinned into both children; the remaining
    term slots are paired positionally and each pair swaps with probability
    one half. Children therefore always partition the parents' term union
    as far as distinctness allows.
    """
    if a.variant is not b.variant:
        raise VariantMismatch(f"{a.variant.value} vs {b.variant.value}")
    if len(a.terms) != len(b.terms):
        raise ValueError("parents must have equal term counts")
    a_set, b_set = set(a.terms), set(b.terms)
    a_unique = [t for t in a.terms if t not in b_set]
    b_unique = [t for t in b.terms if t not in a_set]
    first: list[str] = []
    second: list[str] = []
    for ta, tb in zip(a_unique, b_unique):
        if rng.random() < 0.5:
            first.append(tb)
            second.append(ta)
        else:
            first.append(ta)
            second.append(tb)
    child_a = [t for t in a.terms if t in b_set] + first
    child_b = [t for t in b.terms if t in a_set] + second
    return (
        QueryGenome(terms=tuple(child_a), variant=a.variant),
        QueryGenome(terms=tuple(child_b), variant=a.variant),
    )


def mutate(
    g: QueryGenome, pool: KeywordPool, m1: float, rng: random.Random
) -> QueryGenome:
    """Replace one uniformly chosen term, with probability m1.

    The replacement is a weight-proportional draw from pool terms not
    already present, so distinctness is preserved.
    """
    candidates = [(t, w) for t, w in pool.terms if t not in g.terms]
    if not candidates:
        raise PoolTooSmall("no replacement terms outside the genome")
    if rng.random() >= m1:
        return g
    position = rng.randrange(len(g.terms))
    replacement = _weighted_sample(candidates, 1, rng)[0]
    terms = list(g.terms)
    terms[position] = replacement
    return QueryGenome(terms=tuple(terms), variant=g.variant)


def render_query(g: QueryGenome) -> str:
    """Genome order preserved; quoted variant wraps each term in double quotes."""
    if g.variant is Variant.QUOTED:
        return " ".join(f'"{t}"' for t in g.terms)
    return " ".join(g.terms)
