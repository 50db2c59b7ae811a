"""Model layers: LSTM encoders, attention blocks, and the risk head.

The sequence-level operations run through the selected kernel backend and
are recorded on the active tape as single fused ops; lstm_cell_step is the
same cell built from tape primitives and serves as the independent reference
the fused kernels are tested against.

Every encoder output is a HiddenMap: a (T, H) value tensor plus the visit
mask.  Masked rows are exactly zero everywhere and never influence unmasked
rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import (
    Tensor,
    _emit,
    add,
    clamp_unit,
    masked_mean_rows,
    matmul,
    mul,
    sigmoid,
    slice1d,
    tanh,
)

VARIANTS = ("clinical", "lstm", "lstm-temporal", "lstm-joint", "local-joint")


@dataclass
class ModelConfig:
    """Architecture selection and hyperparameters; fully serializable."""

    variant: str
    hidden_size: int = 32
    num_layers: int = 2
    window: int = 6
    attn_dim: int = 8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("hidden_size", "num_layers", "window", "attn_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "window": self.window,
            "attn_dim": self.attn_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class HiddenMap:
    """Encoded sequence: values (T, H) with masked rows exactly zero."""

    values: Tensor
    mask: np.ndarray


@dataclass
class LstmCellParams:
    w: Tensor  # (4H, D_in), gate order (input, forget, candidate, output)
    u: Tensor  # (4H, H)
    b: Tensor  # (4H,), forget-gate slice initialized to 1

    @property
    def hidden_size(self) -> int:
        return self.u.shape[1]


@dataclass
class JointAttentionParams:
    wq: Tensor  # (H, d_a) per-feature query embeddings
    wk: Tensor  # (H, d_a) per-feature key embeddings
    wv: Tensor  # (H, H) value map
    gamma: Tensor  # scalar residual gate, initialized to 0


@dataclass
class TemporalAttentionParams:
    w: Tensor  # (H,)
    b: Tensor  # scalar


@dataclass
class MlpHeadParams:
    w1: Tensor  # (H2, H)
    b1: Tensor  # (H2,)
    w2: Tensor  # (H2,)
    b2: Tensor  # scalar


@dataclass
class ModelParams:
    """All trainable tensors of one model instance."""

    cells: list[LstmCellParams] = field(default_factory=list)
    joint: JointAttentionParams | None = None
    temporal: TemporalAttentionParams | None = None
    head: MlpHeadParams | None = None

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, cell in enumerate(self.cells):
            out[f"lstm{i}.w"] = cell.w
            out[f"lstm{i}.u"] = cell.u
            out[f"lstm{i}.b"] = cell.b
        if self.joint is not None:
            out["joint.wq"] = self.joint.wq
            out["joint.wk"] = self.joint.wk
            out["joint.wv"] = self.joint.wv
            out["joint.gamma"] = self.joint.gamma
        if self.temporal is not None:
            out["temporal.w"] = self.temporal.w
            out["temporal.b"] = self.temporal.b
        if self.head is not None:
            out["head.w1"] = self.head.w1
            out["head.b1"] = self.head.b1
            out["head.w2"] = self.head.w2
            out["head.b2"] = self.head.b2
        return out

    def all(self) -> list[Tensor]:
        return list(self.named().values())


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    limit = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def init_lstm_cell(d_in: int, hidden: int, rng: np.random.Generator) -> LstmCellParams:
    w = _uniform(rng, (4 * hidden, d_in), d_in)
    u = _uniform(rng, (4 * hidden, hidden), hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # open the forget gate at init
    return LstmCellParams(w=w, u=u, b=Tensor(b, requires_grad=True))


def init_model_params(config: ModelConfig, d_in: int, rng: np.random.Generator) -> ModelParams:
    """Seeded initialization; consumption order is fixed so a seed pins every value."""
    if config.variant == "clinical":
        raise ValueError("the clinical variant has no trainable parameters")
    H = config.hidden_size
    params = ModelParams()
    if config.variant == "local-joint":
        params.cells = [init_lstm_cell(d_in, H, rng)]
    else:
        params.cells = [init_lstm_cell(d_in, H, rng)]
        for _ in range(config.num_layers - 1):
            params.cells.append(init_lstm_cell(H, H, rng))
    if config.variant in ("lstm-joint", "local-joint"):
        params.joint = JointAttentionParams(
            wq=_uniform(rng, (H, config.attn_dim), H),
            wk=_uniform(rng, (H, config.attn_dim), H),
            wv=_uniform(rng, (H, H), H),
            gamma=Tensor(np.zeros(()), requires_grad=True),
        )
    if config.variant == "lstm-temporal":
        params.temporal = TemporalAttentionParams(
            w=_uniform(rng, (H,), H),
            b=Tensor(np.zeros(()), requires_grad=True),
        )
    H2 = max(1, H // 2)
    params.head = MlpHeadParams(
        w1=_uniform(rng, (H2, H), H),
        b1=Tensor(np.zeros(H2), requires_grad=True),
        w2=_uniform(rng, (H2,), H2),
        b2=Tensor(np.zeros(()), requires_grad=True),
    )
    return params


# ---------------------------------------------------------------------------
# reference cell built from tape primitives


def lstm_cell_step(x_t: Tensor, h: Tensor, c: Tensor, params: LstmCellParams):
    """One LSTM cell step; returns (h', c').

    i = sig(Wi x + Ui h + bi)   f = sig(Wf x + Uf h + bf)
    g = tanh(Wg x + Ug h + bg)  o = sig(Wo x + Uo h + bo)
    c' = f*c + i*g              h' = o * tanh(c')
    """
    H = params.hidden_size
    z = add(add(matmul(params.w, x_t), matmul(params.u, h)), params.b)
    i = sigmoid(slice1d(z, 0, H))
    f = sigmoid(slice1d(z, H, 2 * H))
    g = tanh(slice1d(z, 2 * H, 3 * H))
    o = sigmoid(slice1d(z, 3 * H, 4 * H))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


# ---------------------------------------------------------------------------
# fused sequence ops (kernel backend, one tape record each)


def lstm_layer(x: Tensor, mask: np.ndarray, params: LstmCellParams) -> Tensor:
    """Single LSTM layer over a full (T, D) sequence -> (T, H) hidden rows."""
    K = kernels.ops
    out, cache = K.lstm_seq_forward(x.data, mask, params.w.data, params.u.data, params.b.data)
    need_dx = x.requires_grad

    def bwd(g):
        dx, dw, du, db = K.lstm_seq_backward(g, cache, need_dx)
        return dx, dw, du, db

    return _emit(out, (x, params.w, params.u, params.b), bwd)


def stacked_lstm_forward(x: Tensor, mask: np.ndarray, cells: list[LstmCellParams]) -> HiddenMap:
    if not cells:
        raise ValueError("stacked_lstm_forward needs at least one layer")
    if x.data.shape[0] == 0:
        raise ValueError("stacked_lstm_forward: empty sequence")
    h = x
    for cell in cells:
        h = lstm_layer(h, mask, cell)
    return HiddenMap(values=h, mask=np.asarray(mask, dtype=bool))


def local_lstm_forward(x: Tensor, mask: np.ndarray, params: LstmCellParams, window: int) -> HiddenMap:
    """Windowed LSTM: row p is the final state of a fresh pass over rows
    max(0, p - window + 1) .. p, so row p depends on at most `window` visits."""
    K = kernels.ops
    out, cache = K.local_lstm_forward(
        x.data, mask, params.w.data, params.u.data, params.b.data, window
    )
    need_dx = x.requires_grad

    def bwd(g):
        dx, dw, du, db = K.local_lstm_backward(g, cache, need_dx)
        return dx, dw, du, db

    values = _emit(out, (x, params.w, params.u, params.b), bwd)
    return HiddenMap(values=values, mask=np.asarray(mask, dtype=bool))


def joint_attention(hm: HiddenMap, params: JointAttentionParams) -> HiddenMap:
    """Attention over every (time, feature) cell with a gated residual.

    Scores pair each output cell with every unmasked source cell through
    per-feature query/key embeddings; out = f + gamma * attended, so a zero
    gamma passes the map through untouched.
    """
    if not np.any(hm.mask):
        raise ValueError("joint_attention: every time step is masked")
    K = kernels.ops
    out, cache = K.joint_attention_forward(
        hm.values.data, hm.mask, params.wq.data, params.wk.data,
        params.wv.data, float(params.gamma.data),
    )

    def bwd(g):
        return K.joint_attention_backward(g, cache)

    values = _emit(out, (hm.values, params.wq, params.wk, params.wv, params.gamma), bwd)
    return HiddenMap(values=values, mask=hm.mask)


def temporal_attention(hm: HiddenMap, params: TemporalAttentionParams) -> HiddenMap:
    """Per-step softmax weights rescaled by the unmasked count, so each output
    row is a scalar multiple of its input row and uniform weights are identity."""
    if not np.any(hm.mask):
        raise ValueError("temporal_attention: every time step is masked")
    K = kernels.ops
    out, cache = K.temporal_attention_forward(
        hm.values.data, hm.mask, params.w.data, float(params.b.data)
    )

    def bwd(g):
        return K.temporal_attention_backward(g, cache)

    values = _emit(out, (hm.values, params.w, params.b), bwd)
    return HiddenMap(values=values, mask=hm.mask)


def temporal_attention_coefficients(
    values: np.ndarray, mask: np.ndarray, params: TemporalAttentionParams
) -> np.ndarray:
    """The per-row multipliers the layer applies (count * softmax weight),
    taken from the same kernel run the layer performs."""
    _, cache = kernels.ops.temporal_attention_forward(
        values, mask, params.w.data, float(params.b.data)
    )
    return cache[-1]


def mlp_head(hm: HiddenMap, params: MlpHeadParams) -> Tensor:
    """Mask-aware mean pool -> affine -> tanh -> affine -> sigmoid risk in (0,1)."""
    pooled = masked_mean_rows(hm.values, hm.mask)
    hidden = tanh(add(matmul(params.w1, pooled), params.b1))
    logit = add(matmul(params.w2, hidden), params.b2)
    return clamp_unit(sigmoid(logit))


# ---------------------------------------------------------------------------
# variant dispatch


def model_forward(seq, params, config: ModelConfig) -> Tensor:
    """Risk score for one FeatureSequence under the configured variant.

    The clinical variant carries no tensors: params must expose
    risk_for(patient_id) and the score passes through unchanged.
    """
    if config.variant == "clinical":
        return Tensor(np.asarray(params.risk_for(seq.patient_id)))
    x, mask = seq.matrix, seq.mask
    if config.variant == "local-joint":
        hm = local_lstm_forward(x, mask, params.cells[0], config.window)
    else:
        hm = stacked_lstm_forward(x, mask, params.cells)
    if config.variant == "lstm-temporal":
        hm = temporal_attention(hm, params.temporal)
    elif config.variant in ("lstm-joint", "local-joint"):
        hm = joint_attention(hm, params.joint)
    return mlp_head(hm, params.head)
