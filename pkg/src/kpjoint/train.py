"""Mini-batch training with Adam and a linear warmup/decay schedule.

Reproducibility contract: (seed, config, corpus, provider) fully determine
the trajectory. Per-document gradients may be computed in parallel, but the
batch reduction and the Adam update run in a fixed order, so checkpoints are
bit-identical across runs and thread counts.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import NumericError, TrainAbort
from .evaluate import evaluate
from .infer import extract
from .model import OBJECTIVES, init_params, loss_and_gradients, loss_with_signature


@dataclass
class TrainConfig:
    lr: float = 5e-5
    warmup: float = 0.10
    batch_size: int = 64
    epochs: int = 3
    seed: int = 13
    k_max: int = 5
    max_seq_len: int = 512
    margin: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    d: int = 128
    d_out: int = 128
    objective: str = "joint"
    pair_cap: int = 10_000

    def validate(self):
        if not 0.0 <= self.warmup < 1.0:
            raise ValueError(f"warmup proportion must be in [0, 1), got {self.warmup}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        return self

    def loss_weights(self):
        """(rank, chunk) loss weights implied by the training objective."""
        return {"joint": (1.0, 1.0), "rank": (1.0, 0.0), "chunk": (0.0, 1.0)}[self.objective]


# "full" mirrors the reference training protocol (large-batch fine-tuning
# hyperparameters); "desk" is sized to train a fresh lookup-embedding model
# on a small corpus in seconds on one core.
PRESETS = {
    "full": TrainConfig(),
    "desk": TrainConfig(lr=8e-3, batch_size=8, d=48, d_out=48),
}


def preset(name):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return replace(PRESETS[name])


def config_fields():
    return [f.name for f in fields(TrainConfig)]


def lr_at(step, total_steps, cfg):
    """Linear ramp 0 -> lr over the warmup steps, then linear decay to 0."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup_steps = math.ceil(cfg.warmup * total_steps)
    if step < warmup_steps:
        return cfg.lr * step / warmup_steps
    if total_steps == warmup_steps:
        return cfg.lr if step == warmup_steps else 0.0
    return cfg.lr * (total_steps - step) / (total_steps - warmup_steps)


class Adam:
    """Bias-corrected Adam over a named tensor dict, updated in sorted order."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.tensor_items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.tensor_items()}

    def step(self, params, grads, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, arr in params.tensor_items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainResult:
    params: object
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = None


def _doc_losses(docs, params, provider, cfg, threads):
    rank_w, chunk_w = cfg.loss_weights()

    def one(doc):
        try:
            return loss_and_gradients(
                doc,
                params,
                provider,
                margin=cfg.margin,
                pair_cap=cfg.pair_cap,
                rank_weight=rank_w,
                chunk_weight=chunk_w,
            )
        except NumericError as exc:
            raise TrainAbort(f"aborting: {exc}") from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, docs))
    return [one(doc) for doc in docs]


def _dev_metrics(dev_docs, params, provider, top_n=5):
    predictions = {
        doc.id: [p.phrase for p in extract(doc, params, provider, top_n=top_n)]
        for doc in dev_docs
    }
    golds = {doc.id: doc.gold for doc in dev_docs}
    report = evaluate(predictions, golds, cutoffs=(1, 3, 5), mode="exact")
    return {f"dev_f1_{n}": report.metrics[n]["f1"] for n in (1, 3, 5)}


def train(train_docs, cfg, provider, dev_docs=None, threads=1, log_sink=None):
    """Train a model; returns the best-dev (or final) parameters and the log.

    Model selection: the epoch with the highest dev F1@3 wins (earliest on
    ties); without a dev set the final epoch's parameters are returned.
    ``log_sink``, when given, receives each structured log record as emitted.
    """
    cfg.validate()
    if not train_docs:
        raise ValueError("training corpus is empty")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
    params = init_params(provider, cfg.k_max, cfg.d_out, int(seeds[1]), cfg.objective)

    n_docs = len(train_docs)
    batches_per_epoch = math.ceil(n_docs / cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    optimizer = Adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps)

    log = []

    def emit(record):
        log.append(record)
        if log_sink is not None:
            log_sink(record)

    best = TrainResult(params=params)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 1000 + epoch]).permutation(n_docs)
        for b in range(batches_per_epoch):
            batch_idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = [train_docs[i] for i in batch_idx]
            results = _doc_losses(batch, params, provider, cfg, threads)
            grads = {name: np.zeros_like(arr) for name, arr in params.tensor_items()}
            loss = rank_part = chunk_part = 0.0
            for breakdown, doc_grads in results:
                loss += breakdown.total
                rank_part += breakdown.rank
                chunk_part += breakdown.chunk
                for name in grads:
                    grads[name] += doc_grads[name]
            scale = 1.0 / len(batch)
            for name in grads:
                grads[name] *= scale
            step += 1
            lr = lr_at(step, total_steps, cfg)
            optimizer.step(params, grads, lr)
            emit(
                {
                    "step": step,
                    "epoch": epoch,
                    "lr": lr,
                    "loss": loss * scale,
                    "rank_loss": rank_part * scale,
                    "chunk_loss": chunk_part * scale,
                }
            )
        if dev_docs:
            metrics = _dev_metrics(dev_docs, params, provider)
            emit({"epoch": epoch, **metrics})
            if best.best_dev_f1 is None or metrics["dev_f1_3"] > best.best_dev_f1:
                best.best_dev_f1 = metrics["dev_f1_3"]
                best.best_epoch = epoch
                best.params = params.copy()

    if dev_docs and best.best_dev_f1 is not None:
        result = TrainResult(best.params, log, best.best_epoch, best.best_dev_f1)
    else:
        result = TrainResult(params, log, cfg.epochs, None)
    return result


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Per-tensor comparison of analytic gradients to central differences.

    A coordinate passes when |fd - analytic| <= atol + tolerance * scale,
    with scale = max(|fd|, |analytic|); the reported relative error uses the
    same scale with a 1e-6 floor so near-zero gradients cannot divide by
    noise. Coordinates whose +/-eps evaluations cross a ReLU/hinge/max-pool
    decision boundary are excluded (the loss is not differentiable there).
    """

    eps: float
    tolerance: float
    tensors: dict = field(default_factory=dict)
    passed: bool = True

    @property
    def max_rel_err(self):
        errs = [t["max_rel_err"] for t in self.tensors.values() if t["checked"]]
        return max(errs) if errs else 0.0

    def summary(self):
        lines = [
            f"{'tensor':<12} {'checked':>7} {'skipped':>7} {'max rel err':>12} {'max abs err':>12}"
        ]
        for name, t in sorted(self.tensors.items()):
            lines.append(
                f"{name:<12} {t['checked']:>7} {t['skipped']:>7} "
                f"{t['max_rel_err']:>12.3e} {t['max_abs_err']:>12.3e}"
            )
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def grad_check(doc, params, provider=None, eps=1e-4, tolerance=1e-4,
               max_coords=50, seed=0, margin=1.0, pair_cap=10_000, atol=1e-7):
    """Compare analytic gradients against seeded central finite differences."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    _, analytic = loss_and_gradients(doc, params, provider, margin=margin, pair_cap=pair_cap)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(eps=eps, tolerance=tolerance)

    for name, arr in params.tensor_items():
        flat = arr.reshape(-1)
        size = flat.shape[0]
        coords = np.arange(size) if size <= max_coords else np.sort(
            rng.choice(size, size=max_coords, replace=False)
        )
        stats = {"checked": 0, "skipped": 0, "max_rel_err": 0.0, "max_abs_err": 0.0}
        grad_flat = analytic[name].reshape(-1)
        for c in coords:
            original = flat[c]
            flat[c] = original + eps
            up, sig_up = loss_with_signature(doc, params, provider, margin=margin,
                                             pair_cap=pair_cap)
            flat[c] = original - eps
            down, sig_down = loss_with_signature(doc, params, provider, margin=margin,
                                                 pair_cap=pair_cap)
            flat[c] = original
            if sig_up != sig_down:
                stats["skipped"] += 1
                continue
            fd = (up.total - down.total) / (2.0 * eps)
            an = grad_flat[c]
            abs_err = abs(fd - an)
            scale = max(abs(fd), abs(an))
            stats["checked"] += 1
            stats["max_abs_err"] = max(stats["max_abs_err"], abs_err)
            stats["max_rel_err"] = max(stats["max_rel_err"], abs_err / max(scale, 1e-6))
            if abs_err > atol + tolerance * scale:
                report.passed = False
        report.tensors[name] = stats
    return report
