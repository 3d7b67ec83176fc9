"""Extraction metrics: P/R/F1 at rank cutoffs, macro-averaged per document.

Matching is exact token-sequence equality or per-token Porter-stem equality.
Each gold phrase can be matched by at most one prediction; predictions claim
golds greedily in rank order (first unmatched gold in file order). Because
both modes compare token-by-token, a match never changes phrase length,
which keeps per-length bucket metrics well defined.
"""

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache

from . import KpjointError
from .corpus import normalize_phrase
from .stemmer import porter_stem

MATCH_MODES = ("exact", "stemmed")
LENGTH_BUCKETS = ("1", "2", "3", "4", "5+")

_stem = lru_cache(maxsize=None)(porter_stem)


def _match_key(phrase, mode):
    if mode == "stemmed":
        return tuple(_stem(tok) for tok in phrase)
    return tuple(phrase)


def phrases_match(a, b, mode="exact"):
    """Whether two token sequences match under the given mode."""
    if mode not in MATCH_MODES:
        raise ValueError(f"mode must be one of {MATCH_MODES}, got {mode!r}")
    a = tuple(tok.lower() for tok in a)
    b = tuple(tok.lower() for tok in b)
    return _match_key(a, mode) == _match_key(b, mode)


def greedy_match(preds, golds, mode):
    """Map each prediction to the first unmatched matching gold (or None).

    ``preds`` in rank order, ``golds`` in file order; one-to-one matching.
    """
    pred_keys = [_match_key(p, mode) for p in preds]
    gold_keys = [_match_key(g, mode) for g in golds]
    taken = [False] * len(golds)
    assignment = []
    for key in pred_keys:
        hit = None
        for j, gkey in enumerate(gold_keys):
            if not taken[j] and gkey == key:
                hit = j
                taken[j] = True
                break
        assignment.append(hit)
    return assignment


def _f1(p, r):
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def _precision_denominator(n_returned, cutoff, strict_at_n):
    return cutoff if strict_at_n else min(cutoff, n_returned)


@dataclass
class EvalReport:
    """Macro-averaged metrics per cutoff plus per-length-bucket F1."""

    mode: str
    strict_at_n: bool
    cutoffs: tuple
    n_documents: int
    n_scored: int
    metrics: dict = field(default_factory=dict)  # cutoff -> {precision, recall, f1}
    length_f1: dict = field(default_factory=dict)  # bucket label -> float | None
    bucket_cutoff: int = 3

    def to_dict(self):
        return {
            "mode": self.mode,
            "strict_at_n": self.strict_at_n,
            "n_documents": self.n_documents,
            "n_scored": self.n_scored,
            "metrics": {str(n): m for n, m in sorted(self.metrics.items())},
            "length_f1_at_" + str(self.bucket_cutoff): self.length_f1,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _normalized_preds(predictions, golds):
    """Validate ids and normalize prediction phrases per document."""
    extra = sorted(set(predictions) - set(golds))
    if extra:
        raise KpjointError(
            f"predictions for unknown document ids: {', '.join(extra[:10])}"
        )
    normalized = {}
    for doc_id in golds:
        phrases = []
        seen = set()
        for surface in predictions.get(doc_id, []):
            phrase = normalize_phrase(surface)
            if phrase in seen:
                raise KpjointError(
                    f"duplicate prediction surface {surface!r} for document {doc_id!r}"
                )
            seen.add(phrase)
            phrases.append(phrase)
        normalized[doc_id] = phrases
    return normalized


def evaluate(predictions, golds, cutoffs=(1, 3, 5), mode="exact",
             strict_at_n=False, bucket_cutoff=3):
    """Score predictions against gold phrases.

    ``predictions`` maps document id to ranked phrase strings; ``golds`` maps
    document id to gold token tuples in file order. Documents without gold
    phrases cannot contribute a recall and are excluded from the averages
    (reported via n_documents vs n_scored). Missing predictions count as
    empty lists.
    """
    if mode not in MATCH_MODES:
        raise ValueError(f"mode must be one of {MATCH_MODES}, got {mode!r}")
    cutoffs = tuple(sorted(set(int(n) for n in cutoffs)))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    preds = _normalized_preds(predictions, golds)

    sums = {n: {"precision": 0.0, "recall": 0.0, "f1": 0.0} for n in cutoffs}
    n_scored = 0
    for doc_id, gold in golds.items():
        if not gold:
            continue
        n_scored += 1
        doc_preds = preds[doc_id]
        for n in cutoffs:
            top = doc_preds[:n]
            matched = sum(1 for hit in greedy_match(top, gold, mode) if hit is not None)
            denom = _precision_denominator(len(top), n, strict_at_n)
            p = matched / denom if denom else 0.0
            r = matched / len(gold)
            sums[n]["precision"] += p
            sums[n]["recall"] += r
            sums[n]["f1"] += _f1(p, r)

    metrics = {}
    for n in cutoffs:
        metrics[n] = {
            key: (sums[n][key] / n_scored if n_scored else 0.0)
            for key in ("precision", "recall", "f1")
        }
    report = EvalReport(
        mode=mode,
        strict_at_n=strict_at_n,
        cutoffs=cutoffs,
        n_documents=len(golds),
        n_scored=n_scored,
        metrics=metrics,
        bucket_cutoff=bucket_cutoff,
    )
    report.length_f1 = length_buckets(predictions, golds, mode=mode, cutoff=bucket_cutoff)
    return report


def bucket_f1(predictions, golds, predicate, mode="exact", cutoff=3):
    """Mean F1@cutoff restricted to phrases satisfying ``predicate``.

    Per document: keep only in-bucket predictions (within the top-cutoff)
    and in-bucket golds, then match one-to-one. Documents with no in-bucket
    gold are excluded; None when no document qualifies.
    """
    preds = _normalized_preds(predictions, golds)
    total = 0.0
    n_docs = 0
    for doc_id, gold in golds.items():
        gold_in = [g for g in gold if predicate(g)]
        if not gold_in:
            continue
        n_docs += 1
        pred_in = [p for p in preds[doc_id][:cutoff] if predicate(p)]
        matched = sum(1 for hit in greedy_match(pred_in, gold_in, mode) if hit is not None)
        p = matched / len(pred_in) if pred_in else 0.0
        r = matched / len(gold_in)
        total += _f1(p, r)
    return (total / n_docs) if n_docs else None


def length_buckets(predictions, golds, mode="exact", cutoff=3):
    """F1@cutoff per gold-phrase token length (1, 2, 3, 4, 5 and longer)."""
    out = {}
    for label in LENGTH_BUCKETS:
        if label.endswith("+"):
            bound = int(label[:-1])
            predicate = lambda phrase, b=bound: len(phrase) >= b
        else:
            want = int(label)
            predicate = lambda phrase, w=want: len(phrase) == w
        out[label] = bucket_f1(predictions, golds, predicate, mode=mode, cutoff=cutoff)
    return out


def lexicon_buckets(predictions, golds, lexicon, mode="exact", cutoff=3):
    """F1@cutoff split by membership of the phrase in a user lexicon."""
    members = {tuple(normalize_phrase(p) if isinstance(p, str) else p) for p in lexicon}
    return {
        "in_lexicon": bucket_f1(
            predictions, golds, lambda phrase: phrase in members, mode=mode, cutoff=cutoff
        ),
        "out_of_lexicon": bucket_f1(
            predictions, golds, lambda phrase: phrase not in members, mode=mode, cutoff=cutoff
        ),
    }


def report_rows(report, lexicon_f1=None):
    """Flatten a report into CSV-ready rows (one per cutoff or bucket)."""
    rows = []
    for n in report.cutoffs:
        m = report.metrics[n]
        rows.append(
            {
                "kind": "cutoff",
                "key": str(n),
                "precision": f"{m['precision']:.6f}",
                "recall": f"{m['recall']:.6f}",
                "f1": f"{m['f1']:.6f}",
            }
        )
    for label, value in report.length_f1.items():
        rows.append(
            {
                "kind": f"length_bucket@{report.bucket_cutoff}",
                "key": label,
                "precision": "",
                "recall": "",
                "f1": "" if value is None else f"{value:.6f}",
            }
        )
    if lexicon_f1:
        for label, value in lexicon_f1.items():
            rows.append(
                {
                    "kind": f"lexicon_bucket@{report.bucket_cutoff}",
                    "key": label,
                    "precision": "",
                    "recall": "",
                    "f1": "" if value is None else f"{value:.6f}",
                }
            )
    return rows


def write_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["kind", "key", "precision", "recall", "f1"])
        writer.writeheader()
        writer.writerows(rows)
