"""Corpus ingestion: tokenization, n-gram candidate enumeration and labeling.

Documents are word-token sequences with a set of gold keyphrases; candidates
are all n-grams up to a maximum length K, labeled positive when their surface
string equals a gold phrase (lowercase, single-space join).
"""

import json
import statistics
import unicodedata
from dataclasses import dataclass, field

from . import CorpusError

DEFAULT_MAX_SEQ_LEN = 512
DEFAULT_MAX_PHRASE_LEN = 5

CORPUS_FORMATS = ("jsonl-openkp", "jsonl-simple")


def tokenize(text):
    """Lowercase and split on whitespace, stripping edge punctuation.

    Punctuation (Unicode category P*) is removed only from token edges, so
    internal hyphens/apostrophes survive; tokens that strip to nothing are
    dropped. Idempotent on its own space-joined output.
    """
    tokens = []
    for raw in text.lower().split():
        token = _strip_edge_punct(raw)
        if token:
            tokens.append(token)
    return tokens


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def _strip_edge_punct(token):
    start = 0
    end = len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def normalize_phrase(text):
    """Normalize a phrase string to its token tuple (lowercase join key)."""
    return tuple(tokenize(text))


@dataclass
class Document:
    """A tokenized document with its gold keyphrases.

    ``gold`` keeps file order (deduplicated); matching code relies on that
    order to break ties deterministically. Surfaces are space-joined tokens.
    """

    id: str
    tokens: list
    gold: list  # list of token tuples

    def gold_surfaces(self):
        return {" ".join(g) for g in self.gold}

    @property
    def has_gold(self):
        return len(self.gold) > 0


@dataclass
class GramSpan:
    """One n-gram occurrence: start index, length k, surface and label."""

    start: int
    k: int
    surface: str
    label: bool = False


def enumerate_ngrams(doc, max_len=DEFAULT_MAX_PHRASE_LEN):
    """All n-gram spans of length 1..max_len, ordered by (k, start).

    Produces exactly sum_{k=1..min(K,n)} (n-k+1) spans, all unlabeled.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    tokens = doc.tokens
    n = len(tokens)
    spans = []
    for k in range(1, min(max_len, n) + 1):
        for start in range(n - k + 1):
            spans.append(GramSpan(start, k, " ".join(tokens[start : start + k])))
    return spans


def label_spans(spans, gold):
    """Mark every span whose surface equals a gold phrase string.

    All occurrences of a matching surface are positive; returns a new list.
    """
    surfaces = {" ".join(g) for g in gold}
    return [
        GramSpan(s.start, s.k, s.surface, s.surface in surfaces) for s in spans
    ]


def _parse_openkp(obj, lineno):
    for key in ("url", "text", "KeyPhrases"):
        if key not in obj:
            raise CorpusError(f"line {lineno}: missing field {key!r}")
    phrases = []
    for item in obj["KeyPhrases"]:
        if not isinstance(item, list):
            raise CorpusError(f"line {lineno}: KeyPhrases entries must be arrays")
        phrases.append(" ".join(str(tok) for tok in item))
    return str(obj["url"]), str(obj["text"]), phrases


def _parse_simple(obj, lineno):
    for key in ("id", "text", "keyphrases"):
        if key not in obj:
            raise CorpusError(f"line {lineno}: missing field {key!r}")
    phrases = [str(p) for p in obj["keyphrases"]]
    return str(obj["id"]), str(obj["text"]), phrases


_PARSERS = {"jsonl-openkp": _parse_openkp, "jsonl-simple": _parse_simple}


def load_corpus(path, fmt="jsonl-openkp", max_seq_len=DEFAULT_MAX_SEQ_LEN):
    """Load a JSON-lines corpus, tokenizing and truncating each document.

    Documents whose text tokenizes to nothing are dropped (they have no
    candidates to score); malformed records raise CorpusError with the line
    number. Gold phrases are normalized and deduplicated preserving order;
    phrases that normalize to nothing are discarded.
    """
    if fmt not in _PARSERS:
        raise CorpusError(f"unknown corpus format {fmt!r}; expected one of {CORPUS_FORMATS}")
    parse = _PARSERS[fmt]
    docs = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"line {lineno}: record must be a JSON object")
            doc_id, text, phrases = parse(obj, lineno)
            if doc_id in seen_ids:
                raise CorpusError(f"line {lineno}: duplicate document id {doc_id!r}")
            seen_ids.add(doc_id)
            tokens = tokenize(text)[:max_seq_len]
            if not tokens:
                continue
            gold = []
            for phrase in phrases:
                norm = normalize_phrase(phrase)
                if norm and norm not in gold:
                    gold.append(norm)
            docs.append(Document(doc_id, tokens, gold))
    return docs


def save_corpus(docs, path, fmt="jsonl-simple"):
    """Write documents back out; load_corpus on the result round-trips."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            if fmt == "jsonl-simple":
                rec = {
                    "id": doc.id,
                    "text": " ".join(doc.tokens),
                    "keyphrases": [" ".join(g) for g in doc.gold],
                }
            elif fmt == "jsonl-openkp":
                rec = {
                    "url": doc.id,
                    "text": " ".join(doc.tokens),
                    "KeyPhrases": [list(g) for g in doc.gold],
                }
            else:
                raise CorpusError(f"unknown corpus format {fmt!r}")
            fh.write(json.dumps(rec) + "\n")


@dataclass
class CorpusStats:
    """Summary statistics of a loaded corpus."""

    n_documents: int
    gold_length_histogram: dict = field(default_factory=dict)
    token_counts: dict = field(default_factory=dict)
    verbatim_gold_fraction: float = 0.0
    n_documents_without_gold: int = 0

    def to_json(self):
        return json.dumps(
            {
                "n_documents": self.n_documents,
                "gold_length_histogram": self.gold_length_histogram,
                "token_counts": self.token_counts,
                "verbatim_gold_fraction": self.verbatim_gold_fraction,
                "n_documents_without_gold": self.n_documents_without_gold,
            },
            indent=2,
            sort_keys=True,
        )


def corpus_stats(docs):
    """Gold-length histogram, token-count distribution, verbatim-gold rate."""
    hist = {}
    total_gold = 0
    verbatim = 0
    lengths = []
    no_gold = 0
    for doc in docs:
        lengths.append(len(doc.tokens))
        if not doc.has_gold:
            no_gold += 1
        text = " ".join(doc.tokens)
        padded = f" {text} "
        for phrase in doc.gold:
            total_gold += 1
            hist[len(phrase)] = hist.get(len(phrase), 0) + 1
            if f" {' '.join(phrase)} " in padded:
                verbatim += 1
    token_counts = {}
    if lengths:
        token_counts = {
            "min": min(lengths),
            "max": max(lengths),
            "mean": statistics.fmean(lengths),
            "median": statistics.median(lengths),
        }
    return CorpusStats(
        n_documents=len(docs),
        gold_length_histogram={str(k): v for k, v in sorted(hist.items())},
        token_counts=token_counts,
        verbatim_gold_fraction=(verbatim / total_gold) if total_gold else 0.0,
        n_documents_without_gold=no_gold,
    )
