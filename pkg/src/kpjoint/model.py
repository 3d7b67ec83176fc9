"""Scoring head and training losses.

Every n-gram occurrence is composed by a per-length filter over the
concatenation of its token embeddings (ReLU), then projected to two scalars:
a localized informativeness score and a chunking logit. Occurrences sharing
a surface string form one phrase group whose document-level score is the max
over occurrences. Training combines a pairwise hinge on group scores
(gold above non-gold by a margin) with mean binary cross-entropy on the
per-occurrence chunking logits; the joint objective is their unweighted sum.

All gradients are hand-derived reverse passes; subgradients at ReLU/hinge
kinks and max-pool ties are taken as 0 / first-occurrence respectively.
"""

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import KpjointError, NumericError, kernels
from .corpus import enumerate_ngrams, label_spans
from .encoder import FileProvider, LookupProvider

DEFAULT_MARGIN = 1.0
DEFAULT_PAIR_CAP = 10_000

OBJECTIVES = ("joint", "rank", "chunk")


@dataclass
class ModelParams:
    """All trainable tensors plus the embedding-provider configuration.

    ``conv_w[k-1]`` has shape (d_out, k*d): the length-k filter applied to
    the concatenated window. ``emb_table``/``vocab`` are present only for
    the trainable lookup provider; row 0 of the table is the OOV row.
    """

    k_max: int
    d: int
    d_out: int
    conv_w: list
    conv_b: list
    score_w: np.ndarray
    score_b: np.ndarray
    chunk_w: np.ndarray
    chunk_b: np.ndarray
    objective: str = "joint"
    provider_kind: str = "lookup"
    vocab: list = None
    emb_table: np.ndarray = None

    def tensor_items(self):
        """(name, array) pairs in canonical (sorted-name) order."""
        named = {
            "score.w": self.score_w,
            "score.b": self.score_b,
            "chunk.w": self.chunk_w,
            "chunk.b": self.chunk_b,
        }
        for k in range(1, self.k_max + 1):
            named[f"conv{k}.w"] = self.conv_w[k - 1]
            named[f"conv{k}.b"] = self.conv_b[k - 1]
        if self.emb_table is not None:
            named["emb.table"] = self.emb_table
        return sorted(named.items())

    def tensors(self):
        return dict(self.tensor_items())

    def set_tensor(self, name, value):
        if name == "score.w":
            self.score_w = value
        elif name == "score.b":
            self.score_b = value
        elif name == "chunk.w":
            self.chunk_w = value
        elif name == "chunk.b":
            self.chunk_b = value
        elif name == "emb.table":
            self.emb_table = value
        elif name.startswith("conv") and name.endswith(".w"):
            self.conv_w[int(name[4:-2]) - 1] = value
        elif name.startswith("conv") and name.endswith(".b"):
            self.conv_b[int(name[4:-2]) - 1] = value
        else:
            raise KeyError(name)

    def copy(self):
        return ModelParams(
            k_max=self.k_max,
            d=self.d,
            d_out=self.d_out,
            conv_w=[w.copy() for w in self.conv_w],
            conv_b=[b.copy() for b in self.conv_b],
            score_w=self.score_w.copy(),
            score_b=self.score_b.copy(),
            chunk_w=self.chunk_w.copy(),
            chunk_b=self.chunk_b.copy(),
            objective=self.objective,
            provider_kind=self.provider_kind,
            vocab=list(self.vocab) if self.vocab is not None else None,
            emb_table=self.emb_table.copy() if self.emb_table is not None else None,
        )


def init_params(provider, k_max, d_out, seed, objective="joint"):
    """Seeded parameter init: uniform fan-balanced filters, zero biases."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    d = provider.dim
    rng = np.random.default_rng(seed)
    conv_w, conv_b = [], []
    for k in range(1, k_max + 1):
        fan_in = k * d
        bound = np.sqrt(6.0 / (fan_in + d_out))
        conv_w.append(rng.uniform(-bound, bound, size=(d_out, fan_in)))
        conv_b.append(np.zeros(d_out))
    head_bound = np.sqrt(6.0 / (d_out + 1))
    score_w = rng.uniform(-head_bound, head_bound, size=d_out)
    chunk_w = rng.uniform(-head_bound, head_bound, size=d_out)
    return ModelParams(
        k_max=k_max,
        d=d,
        d_out=d_out,
        conv_w=conv_w,
        conv_b=conv_b,
        score_w=score_w,
        score_b=np.zeros(1),
        chunk_w=chunk_w,
        chunk_b=np.zeros(1),
        objective=objective,
        provider_kind=provider.kind,
        vocab=getattr(provider, "vocab", None),
        emb_table=provider.table if provider.trainable else None,
    )


def provider_from_params(params):
    """Rebuild the embedding provider stored inside the parameters."""
    if params.provider_kind == "lookup":
        return LookupProvider(params.vocab, params.emb_table)
    raise KpjointError(
        f"provider kind {params.provider_kind!r} holds no parameters; "
        "pass the provider explicitly"
    )


def _resolve_provider(params, provider):
    if provider is not None:
        return provider
    return provider_from_params(params)


# ---------------------------------------------------------------------------
# Candidate structure: spans grouped by surface string
# ---------------------------------------------------------------------------


@dataclass
class PhraseGroup:
    """All occurrences of one surface string with its pooled score."""

    surface: str
    occurrences: list  # indices into the span list
    localized: list
    global_score: float
    label: bool
    first_pos: int
    k: int


@dataclass
class Candidates:
    """Span list plus precomputed grouping arrays for one document."""

    spans: list
    n_tokens: int
    group_ids: np.ndarray
    n_groups: int
    group_label: np.ndarray
    group_first_pos: np.ndarray
    group_k: np.ndarray
    group_surface: list
    span_label: np.ndarray
    pos_groups: np.ndarray
    neg_groups: np.ndarray
    k_blocks: list = field(default_factory=list)  # (k, offset, m) per length


def build_candidates(doc, k_max):
    """Enumerate, label and group all n-gram spans of a document."""
    spans = label_spans(enumerate_ngrams(doc, k_max), doc.gold)
    return group_spans(spans, len(doc.tokens))


def group_spans(spans, n_tokens):
    """Group labeled spans by surface; raises on label inconsistency."""
    by_surface = {}
    group_label, group_first, group_k, group_surface = [], [], [], []
    group_ids = np.empty(len(spans), dtype=np.int64)
    k_blocks = []
    for idx, span in enumerate(spans):
        gid = by_surface.get(span.surface)
        if gid is None:
            gid = len(group_surface)
            by_surface[span.surface] = gid
            group_surface.append(span.surface)
            group_label.append(span.label)
            group_first.append(span.start)
            group_k.append(span.k)
        elif group_label[gid] != span.label:
            raise KpjointError(
                f"inconsistent labels for surface {span.surface!r}: "
                "identical surfaces must share one label"
            )
        group_ids[idx] = gid
        if not k_blocks or k_blocks[-1][0] != span.k:
            k_blocks.append((span.k, idx, 1))
        else:
            k, off, m = k_blocks[-1]
            k_blocks[-1] = (k, off, m + 1)
    label_arr = np.array(group_label, dtype=bool)
    return Candidates(
        spans=spans,
        n_tokens=n_tokens,
        group_ids=group_ids,
        n_groups=len(group_surface),
        group_label=label_arr,
        group_first_pos=np.array(group_first, dtype=np.int64),
        group_k=np.array(group_k, dtype=np.int64),
        group_surface=group_surface,
        span_label=np.array([s.label for s in spans], dtype=np.float64),
        pos_groups=np.nonzero(label_arr)[0],
        neg_groups=np.nonzero(~label_arr)[0],
        k_blocks=k_blocks,
    )


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def _check_finite(arr, what, doc_id):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what} for document {doc_id!r}")


@dataclass
class _Forward:
    h: np.ndarray
    token_ids: np.ndarray
    windows: list
    z: list
    g: list
    scores: np.ndarray
    logits: np.ndarray
    gmax: np.ndarray
    gargmax: np.ndarray


def _forward(doc, params, provider, cand):
    h = np.ascontiguousarray(provider.encode(doc), dtype=np.float64)
    _check_finite(h, "embeddings", doc.id)
    token_ids = provider.token_ids(doc.tokens) if provider.trainable else None
    windows, zs, gs = [], [], []
    score_parts, logit_parts = [], []
    for k, _off, _m in cand.k_blocks:
        xw = kernels.gather_windows(h, k)
        z = xw @ params.conv_w[k - 1].T + params.conv_b[k - 1]
        _check_finite(z, f"conv{k} pre-activation", doc.id)
        g = np.maximum(z, 0.0)
        windows.append(xw)
        zs.append(z)
        gs.append(g)
        score_parts.append(g @ params.score_w + params.score_b[0])
        logit_parts.append(g @ params.chunk_w + params.chunk_b[0])
    scores = np.concatenate(score_parts) if score_parts else np.zeros(0)
    logits = np.concatenate(logit_parts) if logit_parts else np.zeros(0)
    _check_finite(scores, "localized scores", doc.id)
    _check_finite(logits, "chunk logits", doc.id)
    gmax, gargmax = kernels.segment_max(scores, cand.group_ids, cand.n_groups)
    return _Forward(h, token_ids, windows, zs, gs, scores, logits, gmax, gargmax)


# ---------------------------------------------------------------------------
# Public single-piece operations
# ---------------------------------------------------------------------------


def compose(h, k, params):
    """ReLU(W_k . window + b_k) for every length-k window of ``h``.

    Valid convolution: n-k+1 output rows; zero rows when the document is
    shorter than k.
    """
    if not 1 <= k <= params.k_max:
        raise ValueError(f"k must be in 1..{params.k_max}, got {k}")
    h = np.asarray(h, dtype=np.float64)
    xw = kernels.gather_windows(np.ascontiguousarray(h), k)
    if xw.shape[0] == 0:
        return np.zeros((0, params.d_out))
    return np.maximum(xw @ params.conv_w[k - 1].T + params.conv_b[k - 1], 0.0)


def localized_score(g, params):
    """Linear projection of one composed n-gram vector to its score."""
    return float(np.dot(g, params.score_w) + params.score_b[0])


def chunk_logit(g, params):
    """Linear projection of one composed n-gram vector to its chunking logit."""
    return float(np.dot(g, params.chunk_w) + params.chunk_b[0])


def group_phrases(spans, scores):
    """One PhraseGroup per distinct surface; global score = max over occurrences."""
    if len(spans) != len(scores):
        raise ValueError("scores must align 1:1 with spans")
    order = {}
    groups = []
    for idx, (span, score) in enumerate(zip(spans, scores)):
        gid = order.get(span.surface)
        if gid is None:
            order[span.surface] = len(groups)
            groups.append(
                PhraseGroup(
                    surface=span.surface,
                    occurrences=[idx],
                    localized=[float(score)],
                    global_score=float(score),
                    label=span.label,
                    first_pos=span.start,
                    k=span.k,
                )
            )
        else:
            group = groups[gid]
            if group.label != span.label:
                raise KpjointError(
                    f"inconsistent labels for surface {span.surface!r}: "
                    "identical surfaces must share one label"
                )
            group.occurrences.append(idx)
            group.localized.append(float(score))
            if score > group.global_score:
                group.global_score = float(score)
    return groups


def _pair_sample(n_pos, n_neg, pair_cap, pair_seed):
    """Uniform pair subsample (with replacement) when the cross product is large."""
    total = n_pos * n_neg
    if total <= pair_cap:
        return None, None, total
    rng = np.random.default_rng(pair_seed)
    flat = rng.integers(0, total, size=pair_cap)
    return (flat // n_neg).astype(np.int64), (flat % n_neg).astype(np.int64), pair_cap


def _rank_from_scores(pos, neg, margin, pair_cap, pair_seed):
    """Mean hinge over (positive, negative) pairs with its gradients.

    Returns (loss, dpos, dneg, n_pairs, active_mask_bytes); loss is 0 with
    empty gradients when either side is empty.
    """
    n_pos, n_neg = len(pos), len(neg)
    if n_pos == 0 or n_neg == 0:
        return 0.0, np.zeros(n_pos), np.zeros(n_neg), 0, b""
    ip, jn, n_pairs = _pair_sample(n_pos, n_neg, pair_cap, pair_seed)
    if ip is None:
        loss_sum, dpos, dneg = kernels.hinge_terms(pos, neg, margin)
        active = (margin - pos[:, None] + neg[None, :]) > 0.0
        sig = np.packbits(active.ravel()).tobytes()
    else:
        margins = margin - pos[ip] + neg[jn]
        active = margins > 0.0
        loss_sum = float(margins[active].sum())
        dpos = -np.bincount(ip[active], minlength=n_pos).astype(np.float64)
        dneg = np.bincount(jn[active], minlength=n_neg).astype(np.float64)
        sig = np.packbits(active).tobytes()
    scale = 1.0 / n_pairs
    return loss_sum * scale, dpos * scale, dneg * scale, n_pairs, sig


def rank_loss(groups, margin=DEFAULT_MARGIN, pair_cap=DEFAULT_PAIR_CAP, pair_seed=0):
    """Mean pairwise hinge pushing every gold group above every non-gold one."""
    pos = np.array([g.global_score for g in groups if g.label], dtype=np.float64)
    neg = np.array([g.global_score for g in groups if not g.label], dtype=np.float64)
    loss, _, _, _, _ = _rank_from_scores(pos, neg, margin, pair_cap, pair_seed)
    return loss


def _stable_bce(logits, labels):
    """Elementwise binary cross-entropy in log-sum-exp form."""
    return np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))


def chunk_loss(spans, logits):
    """Mean binary cross-entropy of sigmoid(logit) against span labels."""
    if len(spans) != len(logits):
        raise ValueError("logits must align 1:1 with spans")
    if len(spans) == 0:
        return 0.0
    labels = np.array([s.label for s in spans], dtype=np.float64)
    return float(np.mean(_stable_bce(np.asarray(logits, dtype=np.float64), labels)))


@dataclass
class LossBreakdown:
    """Per-document loss decomposition: total = rank + chunk."""

    rank: float
    chunk: float
    total: float
    n_pairs: int
    n_chunk_terms: int


def _pair_seed_for(doc, pair_seed):
    return zlib.crc32(doc.id.encode("utf-8")) ^ pair_seed


def _evaluate(doc, params, provider, margin, pair_cap, pair_seed, need_grads):
    """Shared forward(+backward) engine behind the public loss entry points.

    Returns (breakdown, grads-или-None, kink signature bytes). The signature
    captures every non-smooth decision (ReLU masks, hinge active set,
    max-pool argmax) so finite-difference checks can skip kink crossings.
    """
    provider = _resolve_provider(params, provider)
    cand = build_candidates(doc, params.k_max)
    fwd = _forward(doc, params, provider, cand)

    pos = fwd.gmax[cand.pos_groups]
    neg = fwd.gmax[cand.neg_groups]
    l_rank, dpos, dneg, n_pairs, rank_sig = _rank_from_scores(
        pos, neg, margin, pair_cap, _pair_seed_for(doc, pair_seed)
    )

    n_spans = len(cand.spans)
    if n_spans:
        l_chunk = float(np.mean(_stable_bce(fwd.logits, cand.span_label)))
    else:
        l_chunk = 0.0
    total = l_rank + l_chunk
    if not np.isfinite(total):
        raise NumericError(f"non-finite loss for document {doc.id!r}")
    breakdown = LossBreakdown(l_rank, l_chunk, total, n_pairs, n_spans)

    relu_sig = b"".join(np.packbits((z > 0.0).ravel()).tobytes() for z in fwd.z)
    signature = relu_sig + fwd.gargmax.tobytes() + rank_sig

    if not need_grads:
        return breakdown, None, signature

    grads = {name: np.zeros_like(arr) for name, arr in params.tensor_items()}

    dgmax = np.zeros(cand.n_groups)
    dgmax[cand.pos_groups] = dpos
    dgmax[cand.neg_groups] = dneg
    dscores = np.zeros(n_spans)
    dscores[fwd.gargmax] += dgmax
    if n_spans:
        sigm = 1.0 / (1.0 + np.exp(-fwd.logits))
        dlogits = (sigm - cand.span_label) / n_spans
    else:
        dlogits = np.zeros(0)

    n, d = fwd.h.shape
    dh = np.zeros((n, d))
    for (k, off, m), xw, z, g in zip(cand.k_blocks, fwd.windows, fwd.z, fwd.g):
        ds = dscores[off : off + m]
        dt = dlogits[off : off + m]
        grads["score.w"] += g.T @ ds
        grads["score.b"][0] += ds.sum()
        grads["chunk.w"] += g.T @ dt
        grads["chunk.b"][0] += dt.sum()
        dg = np.outer(ds, params.score_w) + np.outer(dt, params.chunk_w)
        dz = dg * (z > 0.0)
        grads[f"conv{k}.w"] += dz.T @ xw
        grads[f"conv{k}.b"] += dz.sum(axis=0)
        dh += kernels.scatter_windows(np.ascontiguousarray(dz @ params.conv_w[k - 1]), k, n, d)
    if provider.trainable:
        kernels.embedding_scatter_add(grads["emb.table"], fwd.token_ids, dh)

    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for tensor {name!r} (document {doc.id!r})")
    return breakdown, grads, signature


def joint_loss(doc, params, provider=None, margin=DEFAULT_MARGIN,
               pair_cap=DEFAULT_PAIR_CAP, pair_seed=0):
    """Full forward pipeline; returns the loss breakdown for one document."""
    breakdown, _, _ = _evaluate(doc, params, provider, margin, pair_cap, pair_seed, False)
    return breakdown


def loss_and_gradients(doc, params, provider=None, margin=DEFAULT_MARGIN,
                       pair_cap=DEFAULT_PAIR_CAP, pair_seed=0):
    """Loss breakdown plus gradients w.r.t. every trainable tensor."""
    breakdown, grads, _ = _evaluate(doc, params, provider, margin, pair_cap, pair_seed, True)
    return breakdown, grads


def gradients(doc, params, provider=None, margin=DEFAULT_MARGIN,
              pair_cap=DEFAULT_PAIR_CAP, pair_seed=0):
    """Gradients of the joint loss w.r.t. every trainable tensor."""
    _, grads = loss_and_gradients(doc, params, provider, margin, pair_cap, pair_seed)
    return grads


def loss_with_signature(doc, params, provider=None, margin=DEFAULT_MARGIN,
                        pair_cap=DEFAULT_PAIR_CAP, pair_seed=0):
    """Loss breakdown plus the kink signature (for finite-difference checks)."""
    breakdown, _, sig = _evaluate(doc, params, provider, margin, pair_cap, pair_seed, False)
    return breakdown, sig


def global_scores(doc, params, provider=None):
    """Candidates plus one pooled score per distinct phrase.

    Models trained with the chunking objective alone carry no trained score
    head, so their phrases are ranked by max-pooled chunking logit instead.
    """
    provider = _resolve_provider(params, provider)
    cand = build_candidates(doc, params.k_max)
    if not cand.spans:
        return cand, np.zeros(0)
    fwd = _forward(doc, params, provider, cand)
    if params.objective == "chunk":
        pooled, _ = kernels.segment_max(fwd.logits, cand.group_ids, cand.n_groups)
    else:
        pooled = fwd.gmax
    return cand, pooled
