import json
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlsplit

import pytest
from hypothesis import given, settings, strategies as st

from evoquery.corpus import Document
from evoquery.errors import (
    EmptyCorpus,
    EmptyQuery,
    ParseError,
    ProtocolError,
    ProviderUnavailable,
    UnknownDocument,
)
from evoquery.provider import (
    BM25_B,
    BM25_K1,
    HttpProvider,
    OfflineProvider,
    build_index,
    load_index,
    parse_query,
    save_index,
    score_bm25,
)


def doc(doc_id, body, title="t", host="example.org"):
    return Document(
        id=doc_id,
        url=f"https://{host}/{doc_id}",
        host=host,
        title=title,
        body=body,
    )


def naive_bm25(index, terms, doc_id):
    # independent restatement of the scoring formula, for oracle checks
    total = 0.0
    n_docs = len(index.docs)
    dl = index.docs[doc_id].length
    for term in terms:
        plist = index.postings.get(term, {})
        tf = plist.get(doc_id, 0)
        if tf == 0:
            continue
        n_t = len(plist)
        idf = math.log(1 + (n_docs - n_t + 0.5) / (n_t + 0.5))
        denom = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / index.avg_doc_len)
        total += idf * tf * (BM25_K1 + 1) / denom
    return total


class TestBuildIndex:
    def test_hand_counted_postings(self):
        index = build_index([doc("d1", "aa aa bb")])
        assert index.postings["aa"] == {"d1": 2}
        assert index.postings["bb"] == {"d1": 1}
        assert index.avg_doc_len == 3.0

    def test_identical_documents_get_identical_postings(self):
        index = build_index([doc("d1", "aa bb"), doc("d2", "aa bb")])
        assert index.postings["aa"] == {"d1": 1, "d2": 1}

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            build_index([])

    def test_stored_text_whitespace_collapsed(self):
        index = build_index([doc("d1", "word  \n word\tword")])
        assert index.docs["d1"].text == "word word word"

    def test_snippet_truncated_at_query_time(self):
        body = "word " * 100
        provider = OfflineProvider(index=build_index([doc("d1", body)]))
        hits = provider.execute("word", 1)
        assert len(hits[0].snippet) <= 240

    def test_full_body_snippets_flag(self):
        body = "word " * 100
        provider = OfflineProvider(
            index=build_index([doc("d1", body)]), full_body_snippets=True
        )
        hits = provider.execute("word", 1)
        assert len(hits[0].snippet.split()) == 100

    def test_round_trip_through_disk(self, tmp_path):
        index = build_index([doc("d1", "aa bb"), doc("d2", "bb cc")])
        path = tmp_path / "index.json"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.postings == index.postings
        assert loaded.avg_doc_len == index.avg_doc_len
        assert loaded.docs == index.docs

    def test_load_rejects_non_index_file(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"foo": 1}', encoding="utf-8")
        with pytest.raises(ParseError):
            load_index(path)

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ParseError):
            load_index(path)


class TestScoreBm25:
    def test_absent_term_contributes_zero(self):
        index = build_index([doc("d1", "aa bb"), doc("d2", "cc dd")])
        assert score_bm25(index, ["zz"], "d1") == 0.0

    def test_single_doc_idf(self):
        index = build_index([doc("d1", "aa")])
        # N=1, n_t=1: idf = ln(1 + 0.5/1.5); tf=1 at avg length → factor 1.0
        assert score_bm25(index, ["aa"], "d1") == pytest.approx(
            math.log(1 + 0.5 / 1.5), abs=1e-12
        )

    def test_average_length_tf1_equals_idf(self):
        # both docs have length 2 = avg, "aa" appears once in d1
        index = build_index([doc("d1", "aa bb"), doc("d2", "cc dd")])
        n_t, n = 1, 2
        idf = math.log(1 + (n - n_t + 0.5) / (n_t + 0.5))
        assert score_bm25(index, ["aa"], "d1") == pytest.approx(idf, abs=1e-12)

    def test_unknown_document_rejected(self):
        index = build_index([doc("d1", "aa")])
        with pytest.raises(UnknownDocument):
            score_bm25(index, ["aa"], "ghost")

    def test_monotone_in_tf(self):
        docs = [doc(f"d{i}", " ".join(["aa"] * i + ["bb"] * (6 - i))) for i in range(1, 6)]
        index = build_index(docs)
        scores = [score_bm25(index, ["aa"], f"d{i}") for i in range(1, 6)]
        assert scores == sorted(scores)
        assert len(set(scores)) == len(scores)


class TestOfflineProvider:
    def make_provider(self):
        docs = [
            doc("d1", "wear friction metal", host="a.org"),
            doc("d2", "wear wear wear", host="b.org"),
            doc("d3", "oil lubricant", host="c.org"),
        ]
        return OfflineProvider(index=build_index(docs))

    def test_absent_term_yields_empty(self):
        assert self.make_provider().execute("zzz", 10) == []

    def test_limit_one_returns_single_top_hit(self):
        hits = self.make_provider().execute("wear", 1)
        assert len(hits) == 1
        assert hits[0].position == 1

    def test_empty_query_rejected(self):
        with pytest.raises(EmptyQuery):
            self.make_provider().execute("   ", 10)
        with pytest.raises(EmptyQuery):
            self.make_provider().execute('""', 10)

    def test_positions_contiguous_from_one(self):
        hits = self.make_provider().execute("wear oil", 10)
        assert [h.position for h in hits] == list(range(1, len(hits) + 1))

    def test_lemma_variant_is_disjunctive(self):
        hits = self.make_provider().execute("wear oil", 10)
        assert len(hits) == 3  # d1, d2 match "wear"; d3 matches "oil"

    def test_quoted_variant_is_conjunctive(self):
        provider = self.make_provider()
        hits = provider.execute('"wear" "friction"', 10)
        assert [h.doc_url for h in hits] == ["https://a.org/d1"]
        assert provider.execute('"wear" "oil"', 10) == []

    def test_query_terms_not_restemmed(self):
        # "glas" is the stored lemma of "glass"; re-stemming the query
        # would turn it into "gla" and miss the posting
        provider = OfflineProvider(index=build_index([doc("d1", "glass")]))
        hits = provider.execute("glas", 10)
        assert len(hits) == 1

    def test_deterministic_across_calls(self):
        provider = self.make_provider()
        assert provider.execute("wear oil", 10) == provider.execute("wear oil", 10)

    def test_ranking_matches_brute_force_oracle(self):
        docs = [
            doc(f"d{i}", " ".join(["aa"] * (i % 4) + ["bb"] * (i % 3) + ["cc"]))
            for i in range(1, 12)
        ]
        index = build_index(docs)
        provider = OfflineProvider(index=index)
        hits = provider.execute("aa bb", 20)
        matching = [d.id for d in docs if {"aa", "bb"} & set(d.body.split())]
        expected = sorted(
            matching, key=lambda i_: (-naive_bm25(index, ["aa", "bb"], i_), i_)
        )
        assert [h.doc_url.rsplit("/", 1)[1] for h in hits] == expected

    def test_tie_broken_by_doc_id(self):
        index = build_index([doc("d2", "aa"), doc("d1", "aa")])
        hits = OfflineProvider(index=index).execute("aa", 10)
        assert [h.doc_url for h in hits] == [
            "https://example.org/d1",
            "https://example.org/d2",
        ]

    @given(st.integers(min_value=1, max_value=5))
    @settings(max_examples=20)
    def test_limit_respected(self, limit):
        hits = self.make_provider().execute("wear oil lubricant metal", limit)
        assert len(hits) <= limit


class TestParseQuery:
    def test_bare_terms(self):
        assert parse_query("wear friction") == (["wear", "friction"], False)

    def test_quoted_terms(self):
        assert parse_query('"wear" "friction"') == (["wear", "friction"], True)

    def test_case_folded_not_stemmed(self):
        assert parse_query("Wearing") == (["wearing"], False)


class _ProtocolHandler(BaseHTTPRequestHandler):
    """Configurable stub engine for wire-protocol tests."""

    responses: list = []
    requests_seen: list = []
    fail_times = 0

    def do_GET(self):
        cls = type(self)
        parsed = urlsplit(self.path)
        cls.requests_seen.append(
            {
                "query": parse_qs(parsed.query),
                "headers": dict(self.headers),
                "at": time.monotonic(),
            }
        )
        if cls.fail_times > 0:
            cls.fail_times -= 1
            self.send_response(503)
            self.end_headers()
            return
        body, status = cls.responses[min(len(cls.requests_seen) - 1, len(cls.responses) - 1)]
        payload = body if isinstance(body, (bytes, str)) else json.dumps(body)
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_engine():
    server = HTTPServer(("127.0.0.1", 0), _ProtocolHandler)
    _ProtocolHandler.responses = [({"results": []}, 200)]
    _ProtocolHandler.requests_seen = []
    _ProtocolHandler.fail_times = 0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/search", _ProtocolHandler
    server.shutdown()


def fast_provider(endpoint, **kw):
    kw.setdefault("rate_limit_rps", 1000.0)
    kw.setdefault("backoff_base", 0.0)
    return HttpProvider(endpoint=endpoint, **kw)


def result_item(i):
    return {
        "url": f"https://site{i}.org/page",
        "title": f"title {i}",
        "snippet": f"snippet {i}",
    }


class TestHttpProvider:
    def test_hits_preserve_order_and_positions(self, stub_engine):
        endpoint, handler = stub_engine
        handler.responses = [({"results": [result_item(i) for i in range(3)]}, 200)]
        hits = fast_provider(endpoint).execute("wear friction", 10)
        assert [h.position for h in hits] == [1, 2, 3]
        assert [h.doc_host for h in hits] == ["site0.org", "site1.org", "site2.org"]

    def test_truncates_to_limit(self, stub_engine):
        endpoint, handler = stub_engine
        handler.responses = [({"results": [result_item(i) for i in range(8)]}, 200)]
        assert len(fast_provider(endpoint).execute("q", 5)) == 5

    def test_wire_format_of_request(self, stub_engine):
        endpoint, handler = stub_engine
        fast_provider(endpoint).execute("wear & tear", 7)
        seen = handler.requests_seen[0]["query"]
        assert seen["q"] == ["wear & tear"]
        assert seen["count"] == ["7"]

    def test_api_key_header_sent(self, stub_engine):
        endpoint, handler = stub_engine
        provider = fast_provider(
            endpoint, api_key_header="X-Api-Key", api_key="sekrit"
        )
        provider.execute("q", 1)
        assert handler.requests_seen[0]["headers"]["X-Api-Key"] == "sekrit"

    def test_non_json_body_is_protocol_error(self, stub_engine):
        endpoint, handler = stub_engine
        handler.responses = [("this is not json", 200)]
        with pytest.raises(ProtocolError):
            fast_provider(endpoint).execute("q", 1)

    def test_missing_results_field_is_protocol_error(self, stub_engine):
        endpoint, handler = stub_engine
        handler.responses = [({"items": []}, 200)]
        with pytest.raises(ProtocolError):
            fast_provider(endpoint).execute("q", 1)

    def test_malformed_item_is_protocol_error(self, stub_engine):
        endpoint, handler = stub_engine
        handler.responses = [({"results": [{"url": "https://x.org"}]}, 200)]
        with pytest.raises(ProtocolError):
            fast_provider(endpoint).execute("q", 1)

    def test_server_errors_retried_then_succeed(self, stub_engine):
        endpoint, handler = stub_engine
        handler.fail_times = 2
        handler.responses = [({"results": [result_item(0)]}, 200)]
        hits = fast_provider(endpoint).execute("q", 1)
        assert len(hits) == 1
        assert len(handler.requests_seen) == 3

    def test_persistent_failure_is_provider_unavailable(self, stub_engine):
        endpoint, handler = stub_engine
        handler.fail_times = 99
        with pytest.raises(ProviderUnavailable):
            fast_provider(endpoint).execute("q", 1)
        assert len(handler.requests_seen) == 3  # initial + 2 retries

    def test_unreachable_endpoint_is_provider_unavailable(self):
        provider = fast_provider("http://127.0.0.1:1/search", timeout=0.2)
        with pytest.raises(ProviderUnavailable):
            provider.execute("q", 1)

    def test_empty_query_rejected_without_request(self, stub_engine):
        endpoint, handler = stub_engine
        with pytest.raises(EmptyQuery):
            fast_provider(endpoint).execute("  ", 1)
        assert handler.requests_seen == []

    def test_rate_limit_spaces_requests(self, stub_engine):
        endpoint, handler = stub_engine
        handler.responses = [({"results": []}, 200)]
        provider = fast_provider(endpoint, rate_limit_rps=50.0)
        for _ in range(3):
            provider.execute("q", 1)
        times = [r["at"] for r in handler.requests_seen]
        gaps = [b - a for a, b in zip(times, times[1:])]
        assert all(gap >= 0.015 for gap in gaps)  # 50 rps → ≥20ms nominal
