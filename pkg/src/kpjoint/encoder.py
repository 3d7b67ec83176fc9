"""Token-embedding providers.

The scoring head only needs a per-document matrix of token vectors, so the
encoder is pluggable: a trainable lookup table for self-contained runs, or
precomputed per-document sequences (e.g. exported from any contextual
encoder) read from an "embjsonl" file.
"""

import json

import numpy as np

from . import FormatError


class LookupProvider:
    """Trainable per-token embedding table; row 0 is the out-of-vocabulary row."""

    kind = "lookup"
    trainable = True

    def __init__(self, vocab, table):
        self.vocab = list(vocab)
        self.index = {tok: i + 1 for i, tok in enumerate(self.vocab)}
        self.table = table
        if table.shape[0] != len(self.vocab) + 1:
            raise ValueError(
                f"table has {table.shape[0]} rows for vocabulary of {len(self.vocab)}"
            )

    @property
    def dim(self):
        return self.table.shape[1]

    def token_ids(self, tokens):
        return np.array([self.index.get(t, 0) for t in tokens], dtype=np.int64)

    def encode(self, doc):
        return self.table[self.token_ids(doc.tokens)]


class FileProvider:
    """Frozen per-document embedding sequences keyed by document id."""

    kind = "file"
    trainable = False

    def __init__(self, records, dim):
        self.records = records
        self.dim = dim

    @classmethod
    def from_file(cls, path):
        records, dim = read_embeddings(path)
        return cls(records, dim)

    def encode(self, doc):
        if doc.id not in self.records:
            raise FormatError(f"no embedding record for document {doc.id!r}")
        vectors = self.records[doc.id]
        if vectors.shape[0] != len(doc.tokens):
            raise FormatError(
                f"document {doc.id!r}: {vectors.shape[0]} stored vectors "
                f"for {len(doc.tokens)} tokens"
            )
        return vectors


def init_lookup(vocab, dim, seed):
    """Seeded lookup table with rows i.i.d. uniform in [-0.05, 0.05]."""
    if dim < 1:
        raise ValueError(f"embedding dim must be >= 1, got {dim}")
    vocab = sorted(set(vocab))
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.05, 0.05, size=(len(vocab) + 1, dim))
    return LookupProvider(vocab, table)


def build_vocab(docs):
    """Sorted set of all tokens in the corpus."""
    seen = set()
    for doc in docs:
        seen.update(doc.tokens)
    return sorted(seen)


def read_embeddings(path):
    """Load an embjsonl file into {id: (n, dim) array}; validates shapes."""
    records = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            for key in ("id", "dim", "vectors"):
                if key not in obj:
                    raise FormatError(f"{path}: line {lineno}: missing field {key!r}")
            rec_dim = obj["dim"]
            if dim is None:
                dim = rec_dim
            elif rec_dim != dim:
                raise FormatError(
                    f"{path}: line {lineno}: dim {rec_dim} differs from earlier dim {dim}"
                )
            vectors = obj["vectors"]
            if any(len(v) != rec_dim for v in vectors):
                raise FormatError(
                    f"{path}: line {lineno}: vector width differs from declared dim {rec_dim}"
                )
            if obj["id"] in records:
                raise FormatError(f"{path}: line {lineno}: duplicate id {obj['id']!r}")
            records[str(obj["id"])] = np.array(vectors, dtype=np.float64).reshape(
                len(vectors), rec_dim
            )
    if dim is None:
        raise FormatError(f"{path}: empty embedding file")
    return records, dim


def write_embeddings(records, path):
    """Write {id: (n, dim) array} as embjsonl with round-trip float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, vectors in records.items():
            rec = {
                "id": doc_id,
                "dim": int(vectors.shape[1]),
                "vectors": [[float(x) for x in row] for row in vectors],
            }
            fh.write(json.dumps(rec) + "\n")


def validate_embeddings_file(path):
    """Raise FormatError if the file is not valid embjsonl."""
    read_embeddings(path)
