"""Standard (Elman) and bidirectional recurrent classifiers.

Forward pass, full backpropagation through time, and truncated BPTT are all
hand-derived; there is no autodiff anywhere.

Standard:       h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h),  h_0 = 0
                readout r = h_T
Bidirectional:  one pass over x_1..x_T, an independent pass over x_T..x_1,
                readout r = [h_T^fwd ; final backward state]

In train mode a single inverted-dropout mask is applied to r; the class
distribution is softmax(W_hy r + b_y).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Vocabulary
from .embedding import EmbeddingMatrix
from .numeric import FloatArray, RngState, dropout_mask, softmax

STANDARD = "standard"
BIDIRECTIONAL = "bidirectional"
BPTT_FULL = "full"
BPTT_TRUNCATED = "truncated"

MODEL_MAGIC = "RNN-SENT"
MODEL_VERSION = "v1"


class ModelFileError(ValueError):
    """Bad magic/version, malformed lines, or shape inconsistencies in a model file."""


class AllTokensUnknownError(ValueError):
    """Every token of the input was out-of-vocabulary; nothing can be embedded."""


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int
    hidden_size: int = 64
    num_classes: int = 3
    dropout_rate: float = 0.0
    direction: str = STANDARD
    bptt_mode: str = BPTT_TRUNCATED
    bptt_k: int = 50

    def __post_init__(self) -> None:
        if self.embedding_dim < 1 or self.hidden_size < 1:
            raise ValueError("embedding_dim and hidden_size must be >= 1")
        if self.num_classes not in (2, 3):
            raise ValueError(f"num_classes must be 2 or 3, got {self.num_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.direction not in (STANDARD, BIDIRECTIONAL):
            raise ValueError(f"direction must be {STANDARD!r} or {BIDIRECTIONAL!r}")
        if self.bptt_mode not in (BPTT_FULL, BPTT_TRUNCATED):
            raise ValueError(f"bptt_mode must be {BPTT_FULL!r} or {BPTT_TRUNCATED!r}")
        if self.bptt_mode == BPTT_TRUNCATED and self.bptt_k < 1:
            raise ValueError(f"truncated BPTT needs k >= 1, got {self.bptt_k}")

    @property
    def readout_size(self) -> int:
        return self.hidden_size * (2 if self.direction == BIDIRECTIONAL else 1)


@dataclass
class RnnCellParams:
    w_xh: FloatArray  # hidden x embedding_dim
    w_hh: FloatArray  # hidden x hidden
    b_h: FloatArray   # hidden


@dataclass
class RnnParams:
    w_xh: FloatArray
    w_hh: FloatArray
    b_h: FloatArray
    w_hy: FloatArray  # classes x hidden
    b_y: FloatArray   # classes


@dataclass
class BiRnnParams:
    forward_cell: RnnCellParams
    backward_cell: RnnCellParams
    w_hy: FloatArray  # classes x (2*hidden)
    b_y: FloatArray


Params = RnnParams | BiRnnParams


def as_param_dict(params: Params) -> dict[str, FloatArray]:
    """Flatten params into an ordered name -> array dict (gradients share the keys)."""
    if isinstance(params, RnnParams):
        return {
            "w_xh": params.w_xh,
            "w_hh": params.w_hh,
            "b_h": params.b_h,
            "w_hy": params.w_hy,
            "b_y": params.b_y,
        }
    return {
        "fwd.w_xh": params.forward_cell.w_xh,
        "fwd.w_hh": params.forward_cell.w_hh,
        "fwd.b_h": params.forward_cell.b_h,
        "bwd.w_xh": params.backward_cell.w_xh,
        "bwd.w_hh": params.backward_cell.w_hh,
        "bwd.b_h": params.backward_cell.b_h,
        "w_hy": params.w_hy,
        "b_y": params.b_y,
    }


def params_from_dict(arrays: dict[str, FloatArray], direction: str) -> Params:
    if direction == STANDARD:
        return RnnParams(**{k: arrays[k] for k in ("w_xh", "w_hh", "b_h", "w_hy", "b_y")})
    return BiRnnParams(
        forward_cell=RnnCellParams(arrays["fwd.w_xh"], arrays["fwd.w_hh"], arrays["fwd.b_h"]),
        backward_cell=RnnCellParams(arrays["bwd.w_xh"], arrays["bwd.w_hh"], arrays["bwd.b_h"]),
        w_hy=arrays["w_hy"],
        b_y=arrays["b_y"],
    )


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, e, c = config.hidden_size, config.embedding_dim, config.num_classes
    cell = {"w_xh": (h, e), "w_hh": (h, h), "b_h": (h,)}
    if config.direction == STANDARD:
        return {**cell, "w_hy": (c, h), "b_y": (c,)}
    shapes = {f"fwd.{k}": s for k, s in cell.items()}
    shapes.update({f"bwd.{k}": s for k, s in cell.items()})
    shapes.update({"w_hy": (c, 2 * h), "b_y": (c,)})
    return shapes


def init_params(config: ModelConfig, rng: RngState) -> Params:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    gen = rng.generator()

    def uniform(fan_in: int, fan_out: int, shape: tuple[int, ...]) -> FloatArray:
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return gen.uniform(-s, s, shape)

    h, e, c = config.hidden_size, config.embedding_dim, config.num_classes

    def cell() -> RnnCellParams:
        return RnnCellParams(
            w_xh=uniform(e, h, (h, e)),
            w_hh=uniform(h, h, (h, h)),
            b_h=np.zeros(h),
        )

    if config.direction == STANDARD:
        base = cell()
        return RnnParams(
            w_xh=base.w_xh,
            w_hh=base.w_hh,
            b_h=base.b_h,
            w_hy=uniform(h, c, (c, h)),
            b_y=np.zeros(c),
        )
    return BiRnnParams(
        forward_cell=cell(),
        backward_cell=cell(),
        w_hy=uniform(2 * h, c, (c, 2 * h)),
        b_y=np.zeros(c),
    )


@dataclass
class ForwardTrace:
    """Per-timestep activations cached for the backward pass.

    Backward-direction lists are in processing order: entry s holds the state
    after consuming x_{T+1-s}, so the last entry aligns with input position 1.
    """

    hidden_fwd: list[FloatArray]
    pre_fwd: list[FloatArray]
    hidden_bwd: list[FloatArray] | None
    pre_bwd: list[FloatArray] | None
    probabilities: FloatArray
    dropout_mask: FloatArray | None

    def __len__(self) -> int:
        return len(self.hidden_fwd)


def _run_cell(cell: RnnCellParams, inputs: Sequence[FloatArray]) -> tuple[list[FloatArray], list[FloatArray]]:
    hidden_size = cell.b_h.shape[0]
    h = np.zeros(hidden_size)
    hidden, pre = [], []
    for x in inputs:
        a = cell.w_xh @ x + cell.w_hh @ h + cell.b_h
        h = np.tanh(a)
        pre.append(a)
        hidden.append(h)
    return hidden, pre


def _check_sequence(config: ModelConfig, sequence: Sequence[FloatArray]) -> list[FloatArray]:
    if len(sequence) == 0:
        raise ValueError("cannot run the network on an empty sequence")
    seq = [np.asarray(x, dtype=np.float64) for x in sequence]
    for i, x in enumerate(seq):
        if x.shape != (config.embedding_dim,):
            raise ValueError(
                f"dimension mismatch at position {i}: expected ({config.embedding_dim},), got {x.shape}"
            )
    return seq


def forward(
    params: Params,
    config: ModelConfig,
    sequence: Sequence[FloatArray],
    train: bool = False,
    rng: RngState | None = None,
) -> ForwardTrace:
    """Run the classifier over one embedded sequence.

    In train mode with dropout_rate > 0 an inverted-dropout mask is drawn from
    `rng` and applied to the readout vector; infer mode never applies a mask.
    """
    seq = _check_sequence(config, sequence)
    if isinstance(params, RnnParams):
        if config.direction != STANDARD:
            raise ValueError("config direction is bidirectional but params are standard")
        hidden_fwd, pre_fwd = _run_cell(RnnCellParams(params.w_xh, params.w_hh, params.b_h), seq)
        hidden_bwd = pre_bwd = None
        readout = hidden_fwd[-1]
    else:
        if config.direction != BIDIRECTIONAL:
            raise ValueError("config direction is standard but params are bidirectional")
        hidden_fwd, pre_fwd = _run_cell(params.forward_cell, seq)
        hidden_bwd, pre_bwd = _run_cell(params.backward_cell, seq[::-1])
        readout = np.concatenate([hidden_fwd[-1], hidden_bwd[-1]])

    mask = None
    if train and config.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an RngState")
        mask = dropout_mask(readout.shape[0], config.dropout_rate, rng)
        readout = readout * mask

    if isinstance(params, RnnParams):
        logits = params.w_hy @ readout + params.b_y
    else:
        # per-direction half products: a bidirectional net whose backward cell
        # and backward readout columns are zero then reproduces the standard
        # net's output bit for bit
        h = config.hidden_size
        logits = params.w_hy[:, :h] @ readout[:h] + params.w_hy[:, h:] @ readout[h:] + params.b_y
    probabilities = softmax(logits)
    return ForwardTrace(
        hidden_fwd=hidden_fwd,
        pre_fwd=pre_fwd,
        hidden_bwd=hidden_bwd,
        pre_bwd=pre_bwd,
        probabilities=probabilities,
        dropout_mask=mask,
    )


def _cell_backward(
    cell: RnnCellParams,
    hidden: list[FloatArray],
    inputs: Sequence[FloatArray],
    d_last: FloatArray,
    k: int | None,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Backpropagate an error on the final hidden state through the recurrence.

    At most k timesteps receive parameter-gradient contributions (k=None means
    all of them); tanh'(a_t) is evaluated as 1 - h_t^2.
    """
    steps = len(inputs)
    limit = steps if k is None else min(k, steps)
    d_w_xh = np.zeros_like(cell.w_xh)
    d_w_hh = np.zeros_like(cell.w_hh)
    d_b_h = np.zeros_like(cell.b_h)
    zero_state = np.zeros_like(cell.b_h)

    dh = d_last
    for step in range(limit):
        t = steps - 1 - step
        h_t = hidden[t]
        h_prev = hidden[t - 1] if t > 0 else zero_state
        da = dh * (1.0 - h_t * h_t)
        d_w_xh += np.outer(da, inputs[t])
        d_w_hh += np.outer(da, h_prev)
        d_b_h += da
        if step + 1 < limit:
            dh = cell.w_hh.T @ da
    return d_w_xh, d_w_hh, d_b_h


def _backward(
    params: Params,
    config: ModelConfig,
    trace: ForwardTrace,
    sequence: Sequence[FloatArray],
    target_class: int,
    k: int | None,
) -> dict[str, FloatArray]:
    seq = _check_sequence(config, sequence)
    if len(trace) != len(seq):
        raise ValueError(f"trace covers {len(trace)} timesteps but the sequence has {len(seq)}")
    if (trace.hidden_bwd is None) != (config.direction == STANDARD):
        raise ValueError("trace direction does not match the config")
    if not 0 <= target_class < config.num_classes:
        raise IndexError(f"target class {target_class} out of range for {config.num_classes} classes")

    if config.direction == STANDARD:
        readout = trace.hidden_fwd[-1]
    else:
        readout = np.concatenate([trace.hidden_fwd[-1], trace.hidden_bwd[-1]])
    if trace.dropout_mask is not None:
        readout = readout * trace.dropout_mask

    # softmax + cross-entropy collapses to (p - onehot) at the logits
    dlogits = trace.probabilities.copy()
    dlogits[target_class] -= 1.0
    d_w_hy = np.outer(dlogits, readout)
    d_b_y = dlogits.copy()
    dr = params.w_hy.T @ dlogits
    if trace.dropout_mask is not None:
        dr = dr * trace.dropout_mask

    if isinstance(params, RnnParams):
        cell = RnnCellParams(params.w_xh, params.w_hh, params.b_h)
        d_w_xh, d_w_hh, d_b_h = _cell_backward(cell, trace.hidden_fwd, seq, dr, k)
        return {"w_xh": d_w_xh, "w_hh": d_w_hh, "b_h": d_b_h, "w_hy": d_w_hy, "b_y": d_b_y}

    h = config.hidden_size
    df = _cell_backward(params.forward_cell, trace.hidden_fwd, seq, dr[:h], k)
    db = _cell_backward(params.backward_cell, trace.hidden_bwd, seq[::-1], dr[h:], k)
    return {
        "fwd.w_xh": df[0],
        "fwd.w_hh": df[1],
        "fwd.b_h": df[2],
        "bwd.w_xh": db[0],
        "bwd.w_hh": db[1],
        "bwd.b_h": db[2],
        "w_hy": d_w_hy,
        "b_y": d_b_y,
    }


def backward_full(
    params: Params,
    config: ModelConfig,
    trace: ForwardTrace,
    sequence: Sequence[FloatArray],
    target_class: int,
) -> dict[str, FloatArray]:
    """Exact cross-entropy gradients through every timestep (both directions)."""
    return _backward(params, config, trace, sequence, target_class, k=None)


def backward_truncated(
    params: Params,
    config: ModelConfig,
    trace: ForwardTrace,
    sequence: Sequence[FloatArray],
    target_class: int,
    k: int = 50,
) -> dict[str, FloatArray]:
    """Like backward_full, but the temporal error stops after k steps backward."""
    if k < 1:
        raise ValueError(f"truncation length must be >= 1, got {k}")
    return _backward(params, config, trace, sequence, target_class, k=k)


def backward_for_config(
    params: Params,
    config: ModelConfig,
    trace: ForwardTrace,
    sequence: Sequence[FloatArray],
    target_class: int,
) -> dict[str, FloatArray]:
    """Dispatch on config.bptt_mode."""
    if config.bptt_mode == BPTT_FULL:
        return backward_full(params, config, trace, sequence, target_class)
    return backward_truncated(params, config, trace, sequence, target_class, k=config.bptt_k)


def embed_tokens(
    emb: EmbeddingMatrix,
    vocab: Vocabulary,
    tokens: Sequence[str],
) -> list[FloatArray]:
    """Embedding rows for the in-vocabulary tokens, in order; OOV tokens skipped."""
    return [emb.input_vectors[vocab.index(t)] for t in tokens if t in vocab]


def predict(
    params: Params,
    config: ModelConfig,
    emb: EmbeddingMatrix,
    vocab: Vocabulary,
    tokens: Sequence[str],
) -> tuple[int, FloatArray]:
    """Classify a token list: (argmax class index, class probabilities).

    Ties resolve to the lowest class index. Raises AllTokensUnknownError when
    no token can be embedded.
    """
    seq = embed_tokens(emb, vocab, tokens)
    if not seq:
        raise AllTokensUnknownError(f"none of the {len(tokens)} tokens are in the vocabulary")
    trace = forward(params, config, seq, train=False)
    return int(np.argmax(trace.probabilities)), trace.probabilities


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = (
    "direction",
    "hidden_size",
    "num_classes",
    "embedding_dim",
    "dropout_rate",
    "bptt_mode",
    "bptt_k",
)


def save_model(params: Params, config: ModelConfig, path: str | Path) -> None:
    """Text format: "RNN-SENT v1" header, config block, then each parameter as
    a "param <name> <shape...>" line followed by row-major values at 17
    significant digits (lossless for float64)."""
    arrays = as_param_dict(params)
    expected = param_shapes(config)
    for name, arr in arrays.items():
        if arr.shape != expected[name]:
            raise ValueError(f"parameter {name!r} has shape {arr.shape}, config implies {expected[name]}")
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
        fh.write(f"direction {config.direction}\n")
        fh.write(f"hidden_size {config.hidden_size}\n")
        fh.write(f"num_classes {config.num_classes}\n")
        fh.write(f"embedding_dim {config.embedding_dim}\n")
        fh.write(f"dropout_rate {config.dropout_rate:.17g}\n")
        fh.write(f"bptt_mode {config.bptt_mode}\n")
        fh.write(f"bptt_k {config.bptt_k}\n")
        for name, arr in arrays.items():
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"param {name} {dims}\n")
            rows = arr if arr.ndim == 2 else arr[None, :]
            for row in rows:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_model(path: str | Path) -> tuple[Params, ModelConfig]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != MODEL_MAGIC:
            raise ModelFileError(f"{path}: not a model file (expected {MODEL_MAGIC} header)")
        if header[1] != MODEL_VERSION:
            raise ModelFileError(
                f"{path}: version mismatch: file is {header[1]!r}, reader supports {MODEL_VERSION!r}"
            )

        raw: dict[str, str] = {}
        for field in _CONFIG_FIELDS:
            line = fh.readline().split(maxsplit=1)
            if len(line) != 2 or line[0] != field:
                raise ModelFileError(f"{path}: corrupt config block (expected {field!r} line)")
            raw[field] = line[1].strip()
        try:
            config = ModelConfig(
                direction=raw["direction"],
                hidden_size=int(raw["hidden_size"]),
                num_classes=int(raw["num_classes"]),
                embedding_dim=int(raw["embedding_dim"]),
                dropout_rate=float(raw["dropout_rate"]),
                bptt_mode=raw["bptt_mode"],
                bptt_k=int(raw["bptt_k"]),
            )
        except ValueError as exc:
            raise ModelFileError(f"{path}: invalid config: {exc}") from exc

        expected = param_shapes(config)
        arrays: dict[str, FloatArray] = {}
        for name, shape in expected.items():
            head = fh.readline().split()
            if len(head) != 2 + len(shape) or head[0] != "param" or head[1] != name:
                raise ModelFileError(f"{path}: corrupt file: expected 'param {name}' block")
            file_shape = tuple(int(d) for d in head[2:])
            if file_shape != shape:
                raise ModelFileError(
                    f"{path}: shape inconsistency for {name!r}: file says {file_shape}, config implies {shape}"
                )
            n_rows = shape[0] if len(shape) == 2 else 1
            n_cols = shape[1] if len(shape) == 2 else shape[0]
            rows = []
            for r in range(n_rows):
                line = fh.readline().split()
                if len(line) != n_cols:
                    raise ModelFileError(f"{path}: corrupt file: bad row {r} of {name!r}")
                try:
                    rows.append([float(x) for x in line])
                except ValueError as exc:
                    raise ModelFileError(f"{path}: corrupt file: non-numeric value in {name!r}") from exc
            arr = np.array(rows)
            arrays[name] = arr if len(shape) == 2 else arr[0]
    return params_from_dict(arrays, config.direction), config
