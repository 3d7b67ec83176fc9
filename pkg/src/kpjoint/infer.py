"""Inference: rank a document's distinct phrases by pooled score.

Ties are broken deterministically: earlier first occurrence, then shorter
phrase, then lexicographic surface. Output order is independent of thread
count; worker results are merged in input order.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import FormatError, KpjointError
from .model import global_scores


@dataclass
class Prediction:
    """One ranked phrase: contiguous 1-based rank, nonincreasing scores."""

    rank: int
    phrase: str
    score: float
    first_pos: int
    k: int


def extract(doc, params, provider=None, top_n=5):
    """Top-N distinct phrases of one document by pooled score."""
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    cand, pooled = global_scores(doc, params, provider)
    order = sorted(
        range(cand.n_groups),
        key=lambda g: (
            -pooled[g],
            cand.group_first_pos[g],
            cand.group_k[g],
            cand.group_surface[g],
        ),
    )
    return [
        Prediction(
            rank=i + 1,
            phrase=cand.group_surface[g],
            score=float(pooled[g]),
            first_pos=int(cand.group_first_pos[g]),
            k=int(cand.group_k[g]),
        )
        for i, g in enumerate(order[:top_n])
    ]


def extract_batch(docs, params, provider=None, top_n=5, threads=1):
    """Extract from every document, isolating per-document failures.

    Yields one result dict per input document, in input order: either
    {"id", "predictions"} or {"id", "error"}.
    """

    def one(doc):
        try:
            return {"id": doc.id, "predictions": extract(doc, params, provider, top_n)}
        except KpjointError as exc:
            return {"id": doc.id, "error": str(exc)}

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(one, docs)
    else:
        for doc in docs:
            yield one(doc)


def write_predictions(results, path):
    """Write batch results as JSON-lines with round-trip float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            if "error" in result:
                rec = {"id": result["id"], "error": result["error"]}
            else:
                rec = {
                    "id": result["id"],
                    "predictions": [
                        {"rank": p.rank, "phrase": p.phrase, "score": p.score}
                        for p in result["predictions"]
                    ],
                }
            fh.write(json.dumps(rec) + "\n")


def read_predictions(path):
    """Load a prediction file as {id: ranked phrase strings}; validates records.

    Documents that carry an error record come back with an empty list (they
    were attempted but produced no predictions).
    """
    out = {}
    for rec, lineno in _records(path):
        doc_id = str(rec["id"])
        if doc_id in out:
            raise FormatError(f"{path}: line {lineno}: duplicate id {doc_id!r}")
        if "error" in rec:
            out[doc_id] = []
        else:
            out[doc_id] = [p["phrase"] for p in rec["predictions"]]
    return out


def _records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "id" not in rec:
                raise FormatError(f"{path}: line {lineno}: record must carry an id")
            if ("predictions" in rec) == ("error" in rec):
                raise FormatError(
                    f"{path}: line {lineno}: record needs exactly one of "
                    "'predictions' or 'error'"
                )
            if "predictions" in rec:
                _check_prediction_list(rec["predictions"], path, lineno)
            yield rec, lineno


def _check_prediction_list(preds, path, lineno):
    if not isinstance(preds, list):
        raise FormatError(f"{path}: line {lineno}: predictions must be a list")
    seen = set()
    prev_score = None
    for i, p in enumerate(preds):
        if not isinstance(p, dict) or not {"rank", "phrase", "score"} <= set(p):
            raise FormatError(
                f"{path}: line {lineno}: prediction {i} needs rank/phrase/score"
            )
        if p["rank"] != i + 1:
            raise FormatError(
                f"{path}: line {lineno}: ranks must be contiguous from 1"
            )
        if p["phrase"] in seen:
            raise FormatError(
                f"{path}: line {lineno}: duplicate phrase {p['phrase']!r}"
            )
        seen.add(p["phrase"])
        score = float(p["score"])
        if prev_score is not None and score > prev_score:
            raise FormatError(
                f"{path}: line {lineno}: scores must be nonincreasing with rank"
            )
        prev_score = score


def validate_predictions_file(path):
    """Raise FormatError unless the file is a valid prediction JSON-lines file."""
    for _ in _records(path):
        pass
