"""Training loop, learning-rate schedule, checkpoints, cross-validation.

One optimization step per batch: per-sample loss gradients accumulate to
the batch sum before a single sgd_step.  The
learning rate follows a geometric anneal whose endpoints are returned
exactly.  Model selection keeps the epoch with the best validation AUC
(ties resolve to the earlier epoch).  Cross-validation computes
preprocessing statistics once on the whole cohort, then trains per fold on
disjoint patient sets.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Cohort, FeatureSequence, preprocess_cohort, split_folds
from .layers import (
    JointAttentionParams,
    LstmCellParams,
    MlpHeadParams,
    ModelConfig,
    ModelParams,
    TemporalAttentionParams,
    init_model_params,
    model_forward,
)
from .metrics import auc
from .tensor import ComputationTape, Tensor, bce_loss, sgd_step


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig
    epochs: int = 50
    batch_size: int = 2
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ValueError("learning rates must be positive")
        if self.lr_end > self.lr_start:
            raise ValueError(
                f"lr_end ({self.lr_end}) must not exceed lr_start ({self.lr_start})"
            )

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_start": self.lr_start,
            "lr_end": self.lr_end,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Geometric anneal from lr_start to lr_end across the epoch budget.

    Endpoints are returned exactly (no float drift at epoch 0 or the last
    epoch); interior values follow lr_start * (lr_end/lr_start)^(e/(E-1)).
    """
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    if epoch == 0 or config.epochs == 1:
        return config.lr_start
    if epoch == config.epochs - 1:
        return config.lr_end
    ratio = config.lr_end / config.lr_start
    return config.lr_start * ratio ** (epoch / (config.epochs - 1))


# ---------------------------------------------------------------------------
# single training run


def predict_risks(seqs, params, model_config: ModelConfig) -> np.ndarray:
    """Forward every sequence without taping (inference path)."""
    return np.array([model_forward(s, params, model_config).item() for s in seqs])


def _val_auc(val_seqs, params, model_config: ModelConfig) -> float:
    risks = predict_risks(val_seqs, params, model_config)
    return auc(risks, [s.label for s in val_seqs])


def train_epoch(train_seqs, order, params: ModelParams, config: TrainConfig,
                lr: float, epoch: int) -> float:
    """One pass over the training set in the given order; returns mean loss."""
    tensors = params.all()
    model_cfg = config.model
    total = 0.0
    count = 0
    for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
        batch = order[start:start + config.batch_size]
        for idx in batch:
            seq = train_seqs[idx]
            with ComputationTape() as tape:
                risk = model_forward(seq, params, model_cfg)
                loss = bce_loss(risk, seq.label)
            sample_loss = loss.item()
            if not math.isfinite(sample_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no} "
                    f"(patient {seq.patient_id})"
                )
            tape.backward(loss)
            total += sample_loss
            count += 1
        sgd_step(tensors, lr)
    return total / count


def train_one(train_seqs: list[FeatureSequence], val_seqs: list[FeatureSequence],
              config: TrainConfig, history: list | None = None) -> "Checkpoint":
    """Train one model; returns the checkpoint of the best-validation epoch.

    history, when given, receives one (epoch, mean_loss, val_auc) triple per
    epoch.
    """
    if config.model.variant == "clinical":
        raise ValueError("the clinical variant is not trained; score it directly")
    if not train_seqs or not val_seqs:
        raise ValueError("train_one needs non-empty train and validation sets")
    d_in = train_seqs[0].matrix.shape[1]
    rng = np.random.default_rng(config.seed)
    params = init_model_params(config.model, d_in, rng)
    best_epoch = -1
    best_auc = -np.inf
    best_arrays: dict[str, np.ndarray] = {}
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        order = rng.permutation(len(train_seqs))
        mean_loss = train_epoch(train_seqs, order, params, config, lr, epoch)
        epoch_auc = _val_auc(val_seqs, params, config.model)
        if history is not None:
            history.append((epoch, mean_loss, epoch_auc))
        if epoch_auc > best_auc:  # ties keep the earlier epoch
            best_auc = epoch_auc
            best_epoch = epoch
            best_arrays = {name: t.data.copy() for name, t in params.named().items()}
    return Checkpoint(config=config, epoch=best_epoch, val_auc=float(best_auc),
                      params=best_arrays)


# ---------------------------------------------------------------------------
# checkpoints: versioned binary container, bit-exact round trip


@dataclass
class Checkpoint:
    config: TrainConfig
    epoch: int
    val_auc: float
    params: dict[str, np.ndarray]

    def model_params(self) -> ModelParams:
        return model_params_from_arrays(self.params)


_CKPT_MAGIC = b"SQRKCKPT"
_CKPT_VERSION = 1


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    entries = []
    blocks = []
    for name, arr in ckpt.params.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "nbytes": data.nbytes})
        blocks.append(data.tobytes())
    header = json.dumps({
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "val_auc": ckpt.val_auc,
        "params": entries,
    }).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<I", _CKPT_VERSION))
    buf.write(struct.pack("<Q", len(header)))
    buf.write(header)
    for block in blocks:
        buf.write(block)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if len(raw) < len(_CKPT_MAGIC) + 12:
        raise ValueError(f"checkpoint {path}: truncated header")
    if bytes(view[:8]) != _CKPT_MAGIC:
        raise ValueError(f"checkpoint {path}: bad magic bytes")
    version = struct.unpack("<I", view[8:12])[0]
    if version != _CKPT_VERSION:
        raise ValueError(f"checkpoint {path}: unsupported format version {version}")
    header_len = struct.unpack("<Q", view[12:20])[0]
    pos = 20
    if len(raw) < pos + header_len:
        raise ValueError(f"checkpoint {path}: truncated header block")
    header = json.loads(bytes(view[pos:pos + header_len]).decode("utf-8"))
    pos += header_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        nbytes = entry["nbytes"]
        if len(raw) < pos + nbytes:
            raise ValueError(f"checkpoint {path}: truncated parameter block {entry['name']!r}")
        arr = np.frombuffer(view[pos:pos + nbytes], dtype="<f8").reshape(entry["shape"]).copy()
        params[entry["name"]] = arr
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"checkpoint {path}: {len(raw) - pos} trailing bytes")
    return Checkpoint(
        config=TrainConfig.from_dict(header["config"]),
        epoch=header["epoch"],
        val_auc=header["val_auc"],
        params=params,
    )


def model_params_from_arrays(arrays: dict[str, np.ndarray]) -> ModelParams:
    """Rebuild a ModelParams tree from named checkpoint arrays."""
    cells = []
    i = 0
    while f"lstm{i}.w" in arrays:
        cells.append(LstmCellParams(
            w=Tensor(arrays[f"lstm{i}.w"].copy(), requires_grad=True),
            u=Tensor(arrays[f"lstm{i}.u"].copy(), requires_grad=True),
            b=Tensor(arrays[f"lstm{i}.b"].copy(), requires_grad=True),
        ))
        i += 1
    if not cells:
        raise ValueError("checkpoint holds no LSTM cell parameters")
    params = ModelParams(cells=cells)
    if "joint.wq" in arrays:
        params.joint = JointAttentionParams(
            wq=Tensor(arrays["joint.wq"].copy(), requires_grad=True),
            wk=Tensor(arrays["joint.wk"].copy(), requires_grad=True),
            wv=Tensor(arrays["joint.wv"].copy(), requires_grad=True),
            gamma=Tensor(arrays["joint.gamma"].copy(), requires_grad=True),
        )
    if "temporal.w" in arrays:
        params.temporal = TemporalAttentionParams(
            w=Tensor(arrays["temporal.w"].copy(), requires_grad=True),
            b=Tensor(arrays["temporal.b"].copy(), requires_grad=True),
        )
    if "head.w1" in arrays:
        params.head = MlpHeadParams(
            w1=Tensor(arrays["head.w1"].copy(), requires_grad=True),
            b1=Tensor(arrays["head.b1"].copy(), requires_grad=True),
            w2=Tensor(arrays["head.w2"].copy(), requires_grad=True),
            b2=Tensor(arrays["head.b2"].copy(), requires_grad=True),
        )
    return params


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldResult:
    fold: int
    test_auc: float
    val_auc: float | None
    best_epoch: int | None
    n_test: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CvReport:
    variant: str
    config: dict
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def mean_auc(self) -> float:
        return float(np.mean([f.test_auc for f in self.folds]))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "config": self.config,
            "folds": [f.to_dict() for f in self.folds],
            "mean_auc": self.mean_auc,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "CvReport":
        return cls(
            variant=d["variant"],
            config=d["config"],
            folds=[FoldResult(**f) for f in d["folds"]],
        )


def cross_validate(cohort: Cohort, config: TrainConfig, *, k: int = 5,
                   val_fraction: float = 0.2, threshold: float = 0.95,
                   modalities=None, scoring_table=None,
                   checkpoint_sink=None) -> CvReport:
    """k-fold protocol: per fold train on train+select on val, report test AUC.

    The clinical variant skips training: first-admission scores on the raw
    cohort are evaluated on each fold's test patients.  checkpoint_sink, when
    given, receives (fold_index, Checkpoint) for every trained fold.
    """
    labels = cohort.labels()
    splits = split_folds(cohort, k=k, val_fraction=val_fraction, seed=config.seed)
    for s in splits:  # id bookkeeping: no test patient may influence training
        overlap = (set(s.test) & set(s.train)) | (set(s.test) & set(s.val))
        if overlap:
            raise AssertionError(f"fold {s.fold}: test ids leak into training: {sorted(overlap)}")

    report = CvReport(variant=config.model.variant, config=config.to_dict())

    if config.model.variant == "clinical":
        from .clinical import ClinicalRiskLookup, default_scoring_table

        table = scoring_table if scoring_table is not None else default_scoring_table()
        lookup = ClinicalRiskLookup.from_cohort(cohort, table)
        for s in splits:
            scores = [lookup.risk_for(pid) for pid in s.test]
            report.folds.append(FoldResult(
                fold=s.fold,
                test_auc=auc(scores, [labels[pid] for pid in s.test]),
                val_auc=None, best_epoch=None, n_test=len(s.test),
            ))
        return report

    pre = preprocess_cohort(cohort, threshold=threshold, modalities=modalities)
    for s in splits:
        train_seqs = [pre.sequences[pid] for pid in s.train]
        val_seqs = [pre.sequences[pid] for pid in s.val]
        test_seqs = [pre.sequences[pid] for pid in s.test]
        ckpt = train_one(train_seqs, val_seqs, config)
        best = ckpt.model_params()
        risks = predict_risks(test_seqs, best, config.model)
        report.folds.append(FoldResult(
            fold=s.fold,
            test_auc=auc(risks, [t.label for t in test_seqs]),
            val_auc=ckpt.val_auc, best_epoch=ckpt.epoch, n_test=len(test_seqs),
        ))
        if checkpoint_sink is not None:
            checkpoint_sink(s.fold, ckpt)
    return report
