"""Document QA route: retrieval, permission-gated evidence, cited answers.

Search and evidence access are deliberately separate stages with separate
failure modes: snippets come from the search backend, but quoting an exact
deadline requires reading the original document from the object store, which
is gated by its own read capability. Losing that capability degrades the
answer without breaking it.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol

from .router import normalize_query

TOP_K = 3
SNIPPET_MAX = 240  # characters; well under the 512 bound the contract allows
QUOTE_MAX = 200

# Hiragana, katakana (incl. prolonged sound mark), CJK ideographs.
_CJK = "぀-ヿ㐀-䶿一-鿿"
# CJK characters token per character; everything else as alphanumeric runs.
_TOKEN_RE = re.compile(rf"[{_CJK}]|[^\W_{_CJK}]+")

# Deadline/duration expressions: "within N minutes|hours|days|business days"
# plus the Japanese N分以内 / N時間以内 / N営業日以内 forms.
_DURATION_RE = re.compile(
    r"within\s+\d+\s+(?:minutes?|hours?|days?|business\s+days?)"
    r"|\d+\s*(?:分以内|時間以内|営業日以内)",
    re.IGNORECASE,
)
_CLAUSE_END = ".。\n!?！？;；"


class BackendUnavailable(Exception):
    """Search backend could not serve the query; contained upstream."""


class PermissionDenied(Exception):
    """Object store refused the read; the analog of a 403 on the source."""

    status = 403

    def __init__(self, doc_uri: str, reader_identity: str):
        super().__init__(f"{reader_identity!r} may not read {doc_uri!r}")
        self.doc_uri = doc_uri
        self.reader_identity = reader_identity


class ObjectNotFound(Exception):
    """No object stored under the requested URI."""

    def __init__(self, doc_uri: str):
        super().__init__(f"no such object: {doc_uri!r}")
        self.doc_uri = doc_uri


class EvidenceStatus(str, Enum):
    FULL = "full"
    DENIED_FALLBACK = "denied_fallback"
    NOT_FOUND = "not_found"


@dataclass(frozen=True)
class SearchHit:
    doc_uri: str
    snippet: str
    score: float


@dataclass(frozen=True)
class EvidenceDocument:
    uri: str
    full_text: str


@dataclass(frozen=True)
class Citation:
    doc_uri: str
    quote: str
    char_span: tuple[int, int]


@dataclass(frozen=True)
class DocQaAnswer:
    text: str
    citations: tuple[Citation, ...]
    evidence_status: EvidenceStatus


class SearchBackend(Protocol):
    """Retrieval interface. The shipped implementation is the local
    token-overlap index; a managed-search client would implement the same
    call and raise BackendUnavailable on transport problems."""

    def search(self, query: str) -> list[SearchHit]: ...


class ObjectStore(Protocol):
    """Evidence source: full document text gated by a read capability."""

    def fetch(self, doc_uri: str, reader_identity: str) -> str: ...


def tokenize(text: str) -> set[str]:
    """Normalized token set: casefolded alphanumeric runs, CJK runs split
    per character. Adequate for small fixture corpora; no stemming."""
    return set(_TOKEN_RE.findall(normalize_query(text)))


def _make_snippet(text: str) -> str:
    return " ".join(text.split())[:SNIPPET_MAX]


class LocalSearchIndex:
    """In-process token-overlap index over a fixed document corpus.

    Scores |query tokens ∩ doc tokens| / |query tokens|; zero-score
    documents are dropped, ties break by ascending doc URI. Deterministic
    for a given (query, corpus).
    """

    def __init__(self, corpus: Iterable[tuple[str, str]], k: int = TOP_K):
        self.k = k
        self._docs = [
            (uri, tokenize(text), _make_snippet(text)) for uri, text in corpus
        ]

    def search(self, query: str) -> list[SearchHit]:
        query_tokens = tokenize(query)
        if not query_tokens:
            return []
        scored = []
        for uri, doc_tokens, snippet in self._docs:
            overlap = len(query_tokens & doc_tokens)
            if overlap:
                scored.append(SearchHit(doc_uri=uri, snippet=snippet,
                                        score=overlap / len(query_tokens)))
        return heapq.nsmallest(self.k, scored, key=lambda h: (-h.score, h.doc_uri))


def fetch_evidence(doc_uri: str, store: ObjectStore,
                   reader_identity: str) -> EvidenceDocument:
    """Fetch full document text for citation-grade extraction.

    Raises PermissionDenied when the store's ACL does not grant the read
    capability to reader_identity, ObjectNotFound for unknown URIs.
    """
    return EvidenceDocument(uri=doc_uri, full_text=store.fetch(doc_uri, reader_identity))


def _find_deadline(evidence: EvidenceDocument) -> Citation | None:
    match = _DURATION_RE.search(evidence.full_text)
    if match is None:
        return None
    start = match.start()
    limit = min(len(evidence.full_text), start + QUOTE_MAX)
    stop = limit
    for i in range(match.end(), limit):
        if evidence.full_text[i] in _CLAUSE_END:
            stop = i
            break
    end = start + len(evidence.full_text[start:stop].rstrip())
    quote = evidence.full_text[start:end]
    return Citation(doc_uri=evidence.uri, quote=quote, char_span=(start, end))


def _snippet_summary(hits: list[SearchHit]) -> str:
    return " / ".join(f"{h.doc_uri}: {h.snippet}" for h in hits[:2])


def extract_answer(query: str, hits: list[SearchHit],
                   evidence: EvidenceDocument | None,
                   access_denied: bool = False) -> DocQaAnswer:
    """Produce the evidence-backed answer for a deadline-style query.

    With evidence, the first duration expression is quoted verbatim and
    cited with its exact character span. Without evidence the answer
    degrades: to snippets when access was denied, to an explicit
    no-deadline-found text otherwise. Degenerate inputs are encoded in
    evidence_status, never raised.
    """
    if evidence is not None:
        citation = _find_deadline(evidence)
        if citation is not None:
            return DocQaAnswer(
                text=f'According to {evidence.uri}, the deadline is '
                     f'"{citation.quote}".',
                citations=(citation,),
                evidence_status=EvidenceStatus.FULL,
            )
        return DocQaAnswer(
            text=f"No explicit deadline found in the retrieved document "
                 f"({evidence.uri}).",
            citations=(),
            evidence_status=EvidenceStatus.NOT_FOUND,
        )
    if access_denied:
        summary = _snippet_summary(hits) or "no snippets available"
        return DocQaAnswer(
            text="Access to the source document was denied, so this answer "
                 f"is based on search snippets only: {summary}",
            citations=(),
            evidence_status=EvidenceStatus.DENIED_FALLBACK,
        )
    if hits:
        return DocQaAnswer(
            text=f"No explicit deadline found. Closest documents: "
                 f"{_snippet_summary(hits)}",
            citations=(),
            evidence_status=EvidenceStatus.NOT_FOUND,
        )
    return DocQaAnswer(
        text="No matching documents were found, and no explicit deadline "
             "found for this query.",
        citations=(),
        evidence_status=EvidenceStatus.NOT_FOUND,
    )


class DocQaEngine:
    """Glue for the DocQa route: search, always fetch evidence for the top
    hit, extract. Returns the answer together with the hits so the
    structured inspection channel can expose both."""

    def __init__(self, backend: SearchBackend, store: ObjectStore,
                 reader_identity: str):
        self.backend = backend
        self.store = store
        self.reader_identity = reader_identity

    def answer(self, query: str) -> tuple[DocQaAnswer, list[SearchHit]]:
        hits = self.backend.search(query)
        if not hits:
            return extract_answer(query, hits, None), hits
        try:
            evidence = fetch_evidence(hits[0].doc_uri, self.store,
                                      self.reader_identity)
        except PermissionDenied:
            return extract_answer(query, hits, None, access_denied=True), hits
        except ObjectNotFound:
            return extract_answer(query, hits, None), hits
        return extract_answer(query, hits, evidence), hits
