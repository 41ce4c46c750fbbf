"""Document ingestion, text normalization, term weighting and keyword pools.

A corpus is a newline-delimited JSON file, one document per line with the
fields ``id``, ``url``, ``host``, ``title`` and ``body``. Normalization turns
raw text into a stream of lemmas via a deliberately small suffix stripper;
anything smarter (a dictionary lemmatizer, say) can be plugged in through the
``Normalizer`` protocol.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence
from urllib.parse import urlsplit

from .errors import DuplicateId, EmptyDocument, ParseError

_DOC_FIELDS = ("id", "url", "host", "title", "body")


@dataclass(frozen=True)
class Document:
    """One corpus item: the search target and the seed-material carrier."""

    id: str
    url: str
    host: str
    title: str
    body: str


class Normalizer(Protocol):
    """Anything that turns raw text into a list of lemma strings."""

    def normalize(self, raw: str) -> list[str]: ...


@dataclass(frozen=True)
class SuffixNormalizer:
    """Default normalizer: lowercase, strip punctuation/digits, suffix-stem.

    Tokens are whitespace-split, lowercased, and stripped of every
    non-letter character. Tokens shorter than two characters are dropped.
    Exactly one suffix rule may then fire, tried in order: strip a trailing
    "ing", else "ed", else "s", each only when the remainder keeps at least
    three characters. Stop words are removed after stemming.
    """

    stop_words: frozenset[str] = frozenset()

    def normalize(self, raw: str) -> list[str]:
        lemmas = []
        for token in raw.split():
            word = "".join(ch for ch in token.lower() if ch.isalpha())
            if len(word) < 2:
                continue
            if word.endswith("ing") and len(word) - 3 >= 3:
                word = word[:-3]
            elif word.endswith("ed") and len(word) - 2 >= 3:
                word = word[:-2]
            elif word.endswith("s") and len(word) - 1 >= 3:
                word = word[:-1]
            if word in self.stop_words:
                continue
            lemmas.append(word)
        return lemmas


DEFAULT_NORMALIZER = SuffixNormalizer()


def normalize_text(raw: str, stop_words: Iterable[str] = ()) -> list[str]:
    """Normalize ``raw`` with the default suffix stemmer.

    ``stop_words`` are removed after stemming; the default list is empty.
    """
    stops = frozenset(stop_words)
    normalizer = DEFAULT_NORMALIZER if not stops else SuffixNormalizer(stops)
    return normalizer.normalize(raw)


def load_stop_words(path: str | Path) -> frozenset[str]:
    """Read a stop-word file: one word per line, ``#`` starts a comment."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word and not word.startswith("#"):
            words.add(word.lower())
    return frozenset(words)


@dataclass
class TermVector:
    """A sparse lemma-to-weight map with its Euclidean norm."""

    entries: dict[str, float]
    norm: float

    @classmethod
    def from_weights(cls, entries: dict[str, float]) -> TermVector:
        norm = math.sqrt(math.fsum(w * w for w in entries.values()))
        return cls(dict(entries), norm)

    @classmethod
    def from_lemmas(cls, lemmas: Sequence[str]) -> TermVector:
        """Length-normalized term frequencies: weights sum to 1."""
        if not lemmas:
            return cls({}, 0.0)
        total = len(lemmas)
        counts = Counter(lemmas)
        return cls.from_weights({t: c / total for t, c in counts.items()})

    def cosine(self, other: TermVector) -> float:
        """Cosine similarity; 0 when either vector is empty."""
        if self.norm == 0.0 or other.norm == 0.0:
            return 0.0
        small, large = self.entries, other.entries
        if len(small) > len(large):
            small, large = large, small
        dot = math.fsum(w * large[t] for t, w in small.items() if t in large)
        return dot / (self.norm * other.norm)


@dataclass
class KeywordPool:
    """Top-weighted lemmas of some seed material, ordered for sampling.

    ``terms`` is strictly sorted by weight descending then lemma ascending
    and never repeats a lemma.
    """

    terms: list[tuple[str, float]]
    source_doc_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.terms)

    def lemmas(self) -> list[str]:
        return [t for t, _ in self.terms]


def term_weights(doc: Document, normalizer: Normalizer = DEFAULT_NORMALIZER) -> TermVector:
    """Length-normalized term-frequency weights of a document body.

    Raises EmptyDocument when the body normalizes to zero lemmas.
    """
    lemmas = normalizer.normalize(doc.body)
    if not lemmas:
        raise EmptyDocument(f"document {doc.id!r} normalizes to zero lemmas")
    return TermVector.from_lemmas(lemmas)


def extract_keywords(vec: TermVector, k: int) -> KeywordPool:
    """Top-``k`` entries by weight descending, ties broken by lemma ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(vec.entries.items(), key=lambda kv: (-kv[1], kv[0]))
    return KeywordPool(terms=ranked[:k])


def build_keyword_pool(
    docs: Sequence[Document],
    k: int,
    normalizer: Normalizer = DEFAULT_NORMALIZER,
) -> KeywordPool:
    """Keyword pool over the concatenated bodies of all seed documents.

    Multi-document seed material is treated as one text: the per-document
    lemma streams are chained before weighting.
    """
    lemmas: list[str] = []
    for doc in docs:
        lemmas.extend(normalizer.normalize(doc.body))
    if not lemmas:
        raise EmptyDocument("seed material normalizes to zero lemmas")
    pool = extract_keywords(TermVector.from_lemmas(lemmas), k)
    pool.source_doc_ids = [doc.id for doc in docs]
    return pool


def _parse_document(record: object, line_no: int) -> Document:
    if not isinstance(record, dict):
        raise ParseError("record is not an object", line_no)
    for name in _DOC_FIELDS:
        if name not in record:
            raise ParseError(f"missing field {name!r}", line_no)
        if not isinstance(record[name], str):
            raise ParseError(f"field {name!r} is not a string", line_no)
    doc_id = record["id"]
    if not doc_id:
        raise ParseError("empty document id", line_no)
    url, host = record["url"], record["host"]
    if url:
        derived = urlsplit(url).netloc
        if not host:
            host = derived
        elif host != derived:
            raise ParseError(
                f"host {host!r} does not match url authority {derived!r}", line_no
            )
    return Document(id=doc_id, url=url, host=host, title=record["title"], body=record["body"])


def load_corpus(path: str | Path) -> list[Document]:
    """Load a newline-delimited corpus file, rejecting duplicate ids."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            doc = _parse_document(record, line_no)
            if doc.id in seen:
                raise DuplicateId(f"duplicate document id {doc.id!r}", line_no)
            seen.add(doc.id)
            docs.append(doc)
    return docs


def dump_corpus(docs: Iterable[Document], path: str | Path) -> None:
    """Write documents in the same newline-delimited format load_corpus reads."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "id": doc.id,
                "url": doc.url,
                "host": doc.host,
                "title": doc.title,
                "body": doc.body,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
