"""Skip-gram word vectors with negative sampling, trained per tweet.

Context windows never cross tweet boundaries. Negative samples are drawn from
the unigram distribution raised to the 0.75 power. Input vectors start
uniform in [-0.5/dim, 0.5/dim], output vectors at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CleanTweet, Vocabulary
from .numeric import FloatArray, RngState

EMBEDDING_MAGIC = "SGNS-EMB"
EMBEDDING_VERSION = "v1"


class EmbeddingFileError(ValueError):
    """Bad magic/version, truncated data, or malformed lines in an embedding file."""


class UnknownWordError(ValueError):
    """Query word is not in the vocabulary."""


@dataclass(frozen=True)
class EmbeddingParams:
    dim: int = 100
    window: int = 5
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    subsample_threshold: float = 1e-3  # 0 disables frequent-word subsampling

    def __post_init__(self) -> None:
        if self.dim < 1 or self.window < 1 or self.negative_samples < 1 or self.epochs < 1:
            raise ValueError("dim, window, negative_samples and epochs must all be >= 1")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.subsample_threshold < 0:
            raise ValueError("subsample_threshold must be >= 0")


class EmbeddingMatrix:
    """Input and output vector tables, one row per vocabulary index."""

    def __init__(self, input_vectors: FloatArray, output_vectors: FloatArray | None = None):
        input_vectors = np.asarray(input_vectors, dtype=np.float64)
        if input_vectors.ndim != 2:
            raise ValueError("input_vectors must be a 2-D array")
        if output_vectors is None:
            output_vectors = np.zeros_like(input_vectors)
        output_vectors = np.asarray(output_vectors, dtype=np.float64)
        if output_vectors.shape != input_vectors.shape:
            raise ValueError("input and output vector tables must share a shape")
        self.input_vectors = input_vectors
        self.output_vectors = output_vectors
        self.epoch_losses: list[float] = []

    @property
    def vocab_size(self) -> int:
        return self.input_vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def vector(self, index: int) -> FloatArray:
        return self.input_vectors[index]


def _sigmoid(x: FloatArray) -> FloatArray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def train_embeddings(
    corpus: Sequence[CleanTweet],
    vocab: Vocabulary,
    params: EmbeddingParams,
    rng: RngState,
) -> EmbeddingMatrix:
    """Train skip-gram/negative-sampling vectors over the clean corpus.

    Deterministic for a fixed (corpus, vocab, params, rng). The mean
    negative-sampling loss per epoch is recorded on the returned matrix as
    ``epoch_losses``.
    """
    unknown = {t for tweet in corpus for t in tweet.tokens if t not in vocab}
    if unknown:
        raise ValueError(f"corpus tokens missing from vocabulary: {sorted(unknown)[:5]}")

    vocab_size = len(vocab)
    gen = rng.generator()
    in_vecs = (gen.random((vocab_size, params.dim)) - 0.5) / params.dim
    out_vecs = np.zeros_like(in_vecs)
    emb = EmbeddingMatrix(in_vecs, out_vecs)

    counts = np.asarray(vocab.counts, dtype=np.float64)
    total_tokens = counts.sum()
    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    # Frequent-word subsampling: keep probability sqrt(t/f) for words whose
    # relative frequency f exceeds the threshold t.
    if params.subsample_threshold > 0 and total_tokens > 0:
        rel = counts / total_tokens
        with np.errstate(divide="ignore"):
            keep_prob = np.minimum(1.0, np.sqrt(params.subsample_threshold / rel))
    else:
        keep_prob = np.ones(vocab_size)

    sentences = [np.array([vocab.index(t) for t in tweet.tokens], dtype=np.intp) for tweet in corpus]
    start_lr = params.learning_rate
    min_lr = start_lr * 1e-4
    total_steps = max(1, params.epochs * len(sentences))
    step = 0

    for _epoch in range(params.epochs):
        loss_sum = 0.0
        pair_count = 0
        for idxs in sentences:
            lr = max(min_lr, start_lr * (1.0 - step / total_steps))
            step += 1
            if params.subsample_threshold > 0:
                u = gen.random(len(idxs))
                idxs = idxs[u < keep_prob[idxs]]
            n = len(idxs)
            for center_pos in range(n):
                center = idxs[center_pos]
                lo = max(0, center_pos - params.window)
                hi = min(n, center_pos + params.window + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == center_pos:
                        continue
                    loss_sum += _train_pair(
                        in_vecs, out_vecs, int(center), int(idxs[ctx_pos]),
                        noise_cdf, params.negative_samples, lr, gen,
                    )
                    pair_count += 1
        emb.epoch_losses.append(loss_sum / pair_count if pair_count else 0.0)
    return emb


def _train_pair(
    in_vecs: FloatArray,
    out_vecs: FloatArray,
    center: int,
    context: int,
    noise_cdf: FloatArray,
    negatives: int,
    lr: float,
    gen: np.random.Generator,
) -> float:
    v = in_vecs[center]
    neg = np.searchsorted(noise_cdf, gen.random(negatives))
    neg = neg[neg != context]  # a drawn positive is skipped, not resampled
    rows = np.concatenate(([context], neg))
    labels = np.zeros(len(rows))
    labels[0] = 1.0

    u = out_vecs[rows]
    scores = u @ v
    sig = _sigmoid(scores)
    coeff = (sig - labels) * lr
    dv = coeff @ u
    np.subtract.at(out_vecs, rows, np.outer(coeff, v))
    in_vecs[center] = v - dv

    # -log sigma(s_pos) - sum(log sigma(-s_neg)), computed stably
    return float(np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum())


def cosine_similarity(a: FloatArray, b: FloatArray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def nearest_neighbors(
    emb: EmbeddingMatrix,
    vocab: Vocabulary,
    word: str,
    k: int,
) -> list[tuple[str, float]]:
    """Top-k words by cosine similarity over input vectors, query excluded.

    Descending similarity; exact ties broken by vocabulary index.
    """
    if word not in vocab:
        raise UnknownWordError(f"word {word!r} is not in the vocabulary")
    if not 1 <= k < len(vocab):
        raise ValueError(f"k must be in [1, {len(vocab) - 1}], got {k}")
    if emb.vocab_size != len(vocab):
        raise ValueError(f"embedding has {emb.vocab_size} rows but vocabulary has {len(vocab)}")

    query_idx = vocab.index(word)
    q = emb.input_vectors[query_idx]
    qnorm = np.linalg.norm(q)
    if qnorm == 0.0:
        raise ValueError(f"word {word!r} has a zero vector")
    norms = np.linalg.norm(emb.input_vectors, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (emb.input_vectors @ q) / (norms * qnorm)
    sims[norms == 0.0] = -np.inf
    sims[query_idx] = -np.inf

    order = np.lexsort((np.arange(len(sims)), -sims))[:k]
    return [(vocab.token(int(i)), float(sims[i])) for i in order]


def save_embeddings(emb: EmbeddingMatrix, vocab: Vocabulary, path: str | Path) -> None:
    """Header "SGNS-EMB v1 <vocab> <dim>", then one "token v1 .. vd" line per
    token in vocabulary-index order; 9 significant digits per value."""
    if emb.vocab_size != len(vocab):
        raise ValueError(f"embedding has {emb.vocab_size} rows but vocabulary has {len(vocab)}")
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{EMBEDDING_MAGIC} {EMBEDDING_VERSION} {emb.vocab_size} {emb.dim}\n")
        for index, token in enumerate(vocab.tokens):
            values = " ".join(f"{x:.9g}" for x in emb.input_vectors[index])
            fh.write(f"{token} {values}\n")


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    emb, _tokens = load_embeddings_with_tokens(path)
    return emb


def load_embeddings_with_tokens(path: str | Path) -> tuple[EmbeddingMatrix, tuple[str, ...]]:
    """Read an embedding file back; also returns the stored token order.

    Only input vectors are stored, so the loaded matrix has zero output
    vectors (queries and classification use input vectors only).
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != EMBEDDING_MAGIC:
            raise EmbeddingFileError(f"{path}: not an embedding file (expected {EMBEDDING_MAGIC} header)")
        if header[1] != EMBEDDING_VERSION:
            raise EmbeddingFileError(
                f"{path}: version mismatch: file is {header[1]!r}, reader supports {EMBEDDING_VERSION!r}"
            )
        try:
            vocab_size, dim = int(header[2]), int(header[3])
        except ValueError as exc:
            raise EmbeddingFileError(f"{path}: malformed header counts") from exc

        tokens: list[str] = []
        vectors = np.empty((vocab_size, dim))
        for i in range(vocab_size):
            line = fh.readline()
            if not line:
                raise EmbeddingFileError(f"{path}: corrupt file: expected {vocab_size} rows, found {i}")
            parts = line.split()
            if len(parts) != dim + 1:
                raise EmbeddingFileError(f"{path}: corrupt file: row {i} has {len(parts) - 1} values, expected {dim}")
            tokens.append(parts[0])
            try:
                vectors[i] = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise EmbeddingFileError(f"{path}: corrupt file: row {i} has a non-numeric value") from exc
    return EmbeddingMatrix(vectors), tuple(tokens)
