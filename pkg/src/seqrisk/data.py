"""Cohort data: loading, preprocessing, fold splitting, synthetic generation.

A cohort is a list of patient records plus a variable catalog.  Each record
carries static fields and an irregular visit sequence; preprocessing turns
records into dense (T, D) feature sequences:

    restrict to modalities -> prevalence filter -> cohort min-max normalize
    -> forward fill (cohort-median backstop) -> assemble rows

Normalization statistics and imputation medians are computed once over the
whole cohort and reused for every fold; fold splitting separates patients,
not preprocessing statistics.

On disk a cohort is two UTF-8 CSVs, static.csv and visits.csv, where an
empty cell means missing, plus an optional catalog.json recording each
variable's kind and modality.  Without the catalog, kinds are inferred
(binary statics are 0/1-valued columns) and modalities default per kind.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .tensor import Tensor

KINDS = ("longitudinal", "static_numeric", "static_binary")
MODALITIES = ("labs", "vitals", "demographic", "history", "imaging")

# modality assumed for catalog-less CSVs, per variable kind
_DEFAULT_MODALITY = {
    "longitudinal": "labs",
    "static_numeric": "demographic",
    "static_binary": "history",
}


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    modality: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.modality not in MODALITIES:
            raise ValueError(f"variable {self.name!r}: unknown modality {self.modality!r}")


@dataclass
class VariableCatalog:
    variables: list[Variable]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("catalog contains duplicate variable names")

    def _names(self, kind: str) -> list[str]:
        return [v.name for v in self.variables if v.kind == kind]

    @property
    def longitudinal(self) -> list[str]:
        return self._names("longitudinal")

    @property
    def static_numeric(self) -> list[str]:
        return self._names("static_numeric")

    @property
    def static_binary(self) -> list[str]:
        return self._names("static_binary")

    def feature_names(self) -> list[str]:
        """Assembly order: longitudinal, then static numeric, then binary flags."""
        return self.longitudinal + self.static_numeric + self.static_binary

    def __contains__(self, name: str) -> bool:
        return any(v.name == name for v in self.variables)

    def subset(self, names) -> "VariableCatalog":
        keep = set(names)
        return VariableCatalog([v for v in self.variables if v.name in keep])

    def restrict_modalities(self, modalities) -> "VariableCatalog":
        mods = set(modalities)
        unknown = mods - set(MODALITIES)
        if unknown:
            raise ValueError(f"unknown modalities: {sorted(unknown)}")
        return VariableCatalog([v for v in self.variables if v.modality in mods])


@dataclass
class PatientRecord:
    patient_id: str
    label: int
    static_numeric: dict[str, float] = field(default_factory=dict)
    static_binary: dict[str, int] = field(default_factory=dict)
    # (day_index, {variable: value}) with strictly increasing day indices;
    # a variable absent from a visit dict was not observed at that visit
    visits: list[tuple[int, dict[str, float]]] = field(default_factory=list)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"patient {self.patient_id!r}: label must be 0 or 1, got {self.label!r}")
        days = [d for d, _ in self.visits]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValueError(f"patient {self.patient_id!r}: day indices must strictly increase")


@dataclass
class Cohort:
    records: list[PatientRecord]
    catalog: VariableCatalog

    def __post_init__(self):
        ids = [r.patient_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("cohort contains duplicate patient ids")

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> dict[str, int]:
        return {r.patient_id: r.label for r in self.records}


@dataclass
class FeatureSequence:
    patient_id: str
    matrix: Tensor  # (T, D)
    mask: np.ndarray  # (T,) bool, all True for real visits
    label: int


@dataclass
class FoldSplit:
    fold: int
    train: list[str]
    val: list[str]
    test: list[str]


# ---------------------------------------------------------------------------
# CSV round trip


def write_cohort(cohort: Cohort, data_dir) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    cat = cohort.catalog
    num_names, bin_names, long_names = cat.static_numeric, cat.static_binary, cat.longitudinal

    with open(data_dir / "static.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "label"] + num_names + bin_names)
        for r in cohort.records:
            row = [r.patient_id, r.label]
            row += [_fmt(r.static_numeric.get(n)) for n in num_names]
            row += ["" if r.static_binary.get(n) is None else str(int(r.static_binary[n]))
                    for n in bin_names]
            w.writerow(row)

    with open(data_dir / "visits.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "day_index"] + long_names)
        for r in cohort.records:
            for day, values in r.visits:
                w.writerow([r.patient_id, day] + [_fmt(values.get(n)) for n in long_names])

    catalog_doc = {"variables": [
        {"name": v.name, "kind": v.kind, "modality": v.modality} for v in cat.variables
    ]}
    (data_dir / "catalog.json").write_text(json.dumps(catalog_doc, indent=2), encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _parse_cell(text: str, where: str):
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"{where}: not a number: {text!r}") from None


def load_cohort(data_dir) -> Cohort:
    data_dir = Path(data_dir)
    static_path = data_dir / "static.csv"
    visits_path = data_dir / "visits.csv"
    for p in (static_path, visits_path):
        if not p.exists():
            raise DataFormatError(f"missing required file: {p}")

    catalog = None
    catalog_path = data_dir / "catalog.json"
    if catalog_path.exists():
        doc = json.loads(catalog_path.read_text(encoding="utf-8"))
        catalog = VariableCatalog([
            Variable(v["name"], v["kind"], v["modality"]) for v in doc["variables"]
        ])

    with open(static_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["patient_id", "label"]:
        raise DataFormatError(f"{static_path}: header must start with patient_id,label")
    static_cols = rows[0][2:]
    statics: dict[str, dict] = {}
    order: list[str] = []
    labels: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{static_path}:{lineno}"
        if len(row) != len(rows[0]):
            raise DataFormatError(f"{where}: expected {len(rows[0])} fields, got {len(row)}")
        pid = row[0].strip()
        if not pid:
            raise DataFormatError(f"{where}: empty patient_id")
        if pid in statics:
            raise DataFormatError(f"{where}: duplicate patient_id {pid!r}")
        label = _parse_cell(row[1], where)
        if label not in (0.0, 1.0):
            raise DataFormatError(f"{where}: label must be 0 or 1, got {row[1]!r}")
        statics[pid] = {c: _parse_cell(v, where) for c, v in zip(static_cols, row[2:])}
        labels[pid] = int(label)
        order.append(pid)

    with open(visits_path, newline="", encoding="utf-8") as fh:
        vrows = list(csv.reader(fh))
    if not vrows or vrows[0][:2] != ["patient_id", "day_index"]:
        raise DataFormatError(f"{visits_path}: header must start with patient_id,day_index")
    long_cols = vrows[0][2:]
    visits: dict[str, list] = {pid: [] for pid in statics}
    for lineno, row in enumerate(vrows[1:], start=2):
        where = f"{visits_path}:{lineno}"
        if len(row) != len(vrows[0]):
            raise DataFormatError(f"{where}: expected {len(vrows[0])} fields, got {len(row)}")
        pid = row[0].strip()
        if pid not in statics:
            raise DataFormatError(f"{where}: visit for unknown patient {pid!r}")
        day = _parse_cell(row[1], where)
        if day is None or day != int(day):
            raise DataFormatError(f"{where}: day_index must be an integer, got {row[1]!r}")
        values = {}
        for c, v in zip(long_cols, row[2:]):
            parsed = _parse_cell(v, where)
            if parsed is not None:
                values[c] = parsed
        visits[pid].append((int(day), values))

    if catalog is None:
        catalog = _infer_catalog(static_cols, long_cols, statics)
    else:
        declared = set(v.name for v in catalog.variables)
        actual = set(static_cols) | set(long_cols)
        if declared != actual:
            extra = sorted(actual - declared)
            missing = sorted(declared - actual)
            raise DataFormatError(
                f"catalog.json disagrees with CSV columns (extra={extra}, missing={missing})"
            )

    num_names = set(catalog.static_numeric)
    bin_names = set(catalog.static_binary)
    records = []
    for pid in order:
        if not visits[pid]:
            raise DataFormatError(f"patient {pid!r} has no visits")
        visits[pid].sort(key=lambda dv: dv[0])
        days = [d for d, _ in visits[pid]]
        if len(set(days)) != len(days):
            raise DataFormatError(f"patient {pid!r}: duplicate day_index")
        sn = {k: v for k, v in statics[pid].items() if k in num_names and v is not None}
        sb = {}
        for k, v in statics[pid].items():
            if k in bin_names and v is not None:
                if v not in (0.0, 1.0):
                    raise DataFormatError(
                        f"patient {pid!r}: binary variable {k!r} must be 0 or 1, got {v}"
                    )
                sb[k] = int(v)
        records.append(PatientRecord(
            patient_id=pid, label=labels[pid],
            static_numeric=sn, static_binary=sb, visits=visits[pid],
        ))
    return Cohort(records=records, catalog=catalog)


def _infer_catalog(static_cols, long_cols, statics) -> VariableCatalog:
    variables = [Variable(c, "longitudinal", _DEFAULT_MODALITY["longitudinal"]) for c in long_cols]
    for c in static_cols:
        observed = [row[c] for row in statics.values() if row.get(c) is not None]
        binary = bool(observed) and all(v in (0.0, 1.0) for v in observed)
        kind = "static_binary" if binary else "static_numeric"
        variables.append(Variable(c, kind, _DEFAULT_MODALITY[kind]))
    return VariableCatalog(variables)


# ---------------------------------------------------------------------------
# preprocessing steps


def restrict_modalities(cohort: Cohort, modalities) -> Cohort:
    """Drop every variable outside the requested modalities (column filtering)."""
    catalog = cohort.catalog.restrict_modalities(modalities)
    keep_long = set(catalog.longitudinal)
    keep_num = set(catalog.static_numeric)
    keep_bin = set(catalog.static_binary)
    records = [replace(
        r,
        static_numeric={k: v for k, v in r.static_numeric.items() if k in keep_num},
        static_binary={k: v for k, v in r.static_binary.items() if k in keep_bin},
        visits=[(d, {k: v for k, v in vals.items() if k in keep_long}) for d, vals in r.visits],
    ) for r in cohort.records]
    return Cohort(records=records, catalog=catalog)


def prevalence_filter(cohort: Cohort, threshold: float = 0.95):
    """Drop longitudinal variables observed (at least once) by <= threshold
    of patients.  Returns (filtered cohort, dropped names)."""
    n = len(cohort.records)
    if n == 0:
        raise ValueError("prevalence_filter: empty cohort")
    counts = {name: 0 for name in cohort.catalog.longitudinal}
    for r in cohort.records:
        seen = set()
        for _, values in r.visits:
            seen.update(k for k in values if k in counts)
        for k in seen:
            counts[k] += 1
    dropped = sorted(name for name, c in counts.items() if c / n <= threshold)
    if not dropped:
        return cohort, []
    gone = set(dropped)
    keep = [v.name for v in cohort.catalog.variables if v.name not in gone]
    catalog = cohort.catalog.subset(keep)
    records = [replace(
        r, visits=[(d, {k: v for k, v in vals.items() if k not in gone}) for d, vals in r.visits],
    ) for r in cohort.records]
    return Cohort(records=records, catalog=catalog), dropped


def minmax_normalize(cohort: Cohort):
    """Cohort-wide min-max scaling of every numeric variable.

    Longitudinal values and static numerics map to [0, 1] using the observed
    min/max across the whole cohort; a constant variable maps to 0.  Binary
    flags pass through.  Returns (normalized cohort, {name: (min, max)}).
    """
    table: dict[str, tuple[float, float]] = {}
    observed: dict[str, list[float]] = {name: [] for name in
                                        cohort.catalog.longitudinal + cohort.catalog.static_numeric}
    for r in cohort.records:
        for _, values in r.visits:
            for k, v in values.items():
                if k in observed:
                    observed[k].append(v)
        for k, v in r.static_numeric.items():
            if k in observed:
                observed[k].append(v)
    for name, vals in observed.items():
        if not vals:
            raise ValueError(f"minmax_normalize: variable {name!r} has no observed values")
        table[name] = (float(min(vals)), float(max(vals)))

    def scale_value(name, v):
        lo, hi = table[name]
        if hi == lo:
            return 0.0
        return (v - lo) / (hi - lo)

    records = [replace(
        r,
        static_numeric={k: scale_value(k, v) for k, v in r.static_numeric.items()},
        visits=[(d, {k: scale_value(k, v) for k, v in vals.items()}) for d, vals in r.visits],
    ) for r in cohort.records]
    return Cohort(records=records, catalog=cohort.catalog), table


def apply_scaling(record: PatientRecord, scaling_table) -> PatientRecord:
    """Scale one raw record with a stored table (inference on new patients)."""

    def scale_value(name, v):
        if name not in scaling_table:
            return v
        lo, hi = scaling_table[name]
        if hi == lo:
            return 0.0
        return (v - lo) / (hi - lo)

    return replace(
        record,
        static_numeric={k: scale_value(k, v) for k, v in record.static_numeric.items()},
        visits=[(d, {k: scale_value(k, v) for k, v in vals.items()}) for d, vals in record.visits],
    )


def cohort_medians(cohort: Cohort) -> dict[str, float]:
    """Per-variable median of observed values (longitudinal and static numeric)."""
    observed: dict[str, list[float]] = {name: [] for name in
                                        cohort.catalog.longitudinal + cohort.catalog.static_numeric}
    for r in cohort.records:
        for _, values in r.visits:
            for k, v in values.items():
                if k in observed:
                    observed[k].append(v)
        for k, v in r.static_numeric.items():
            if k in observed:
                observed[k].append(v)
    medians = {}
    for name, vals in observed.items():
        if not vals:
            raise ValueError(f"cohort_medians: variable {name!r} has no observed values")
        medians[name] = float(np.median(vals))
    return medians


def forward_fill(record: PatientRecord, catalog: VariableCatalog,
                 medians: dict[str, float]) -> PatientRecord:
    """Carry each longitudinal variable forward; values missing before the
    first observation take the cohort median."""
    names = catalog.longitudinal
    last: dict[str, float] = {}
    new_visits = []
    for day, values in record.visits:
        filled = {}
        for name in names:
            if name in values:
                last[name] = values[name]
                filled[name] = values[name]
            elif name in last:
                filled[name] = last[name]
            else:
                if name not in medians:
                    raise ValueError(f"forward_fill: no median for variable {name!r}")
                filled[name] = medians[name]
        new_visits.append((day, filled))
    return replace(record, visits=new_visits)


def fill_static(record: PatientRecord, catalog: VariableCatalog,
                medians: dict[str, float]) -> PatientRecord:
    """Complete missing statics: numeric -> cohort median, binary -> 0."""
    sn = dict(record.static_numeric)
    for name in catalog.static_numeric:
        if name not in sn:
            if name not in medians:
                raise ValueError(f"fill_static: no median for variable {name!r}")
            sn[name] = medians[name]
    sb = dict(record.static_binary)
    for name in catalog.static_binary:
        sb.setdefault(name, 0)
    return replace(record, static_numeric=sn, static_binary=sb)


def assemble_features(record: PatientRecord, catalog: VariableCatalog,
                      scaling_table=None) -> FeatureSequence:
    """Dense (T, D) matrix: one row per visit, columns in catalog order
    (longitudinal, static numerics, binary flags); statics repeat every row.

    The record must be fully imputed and normalized; the scaling table, when
    given, is cross-checked so an unscaled numeric variable cannot slip in.
    """
    long_names = catalog.longitudinal
    num_names = catalog.static_numeric
    bin_names = catalog.static_binary
    if scaling_table is not None:
        unscaled = [n for n in long_names + num_names if n not in scaling_table]
        if unscaled:
            raise ValueError(f"assemble_features: variables missing from scaling table: {unscaled}")
    if not record.visits:
        raise ValueError(f"assemble_features: patient {record.patient_id!r} has no visits")

    static_tail = []
    for name in num_names:
        if name not in record.static_numeric:
            raise ValueError(f"assemble_features: patient {record.patient_id!r} missing {name!r}")
        static_tail.append(record.static_numeric[name])
    for name in bin_names:
        if name not in record.static_binary:
            raise ValueError(f"assemble_features: patient {record.patient_id!r} missing {name!r}")
        static_tail.append(float(record.static_binary[name]))

    T = len(record.visits)
    D = len(long_names) + len(static_tail)
    matrix = np.zeros((T, D))
    for t, (_, values) in enumerate(record.visits):
        for j, name in enumerate(long_names):
            if name not in values:
                raise ValueError(
                    f"assemble_features: patient {record.patient_id!r} missing {name!r} at visit {t}"
                )
            matrix[t, j] = values[name]
        matrix[t, len(long_names):] = static_tail
    return FeatureSequence(
        patient_id=record.patient_id,
        matrix=Tensor(matrix),
        mask=np.ones(T, dtype=bool),
        label=record.label,
    )


@dataclass
class PreprocessedData:
    sequences: dict[str, FeatureSequence]
    catalog: VariableCatalog
    scaling_table: dict[str, tuple[float, float]]
    medians: dict[str, float]
    dropped: list[str]

    @property
    def n_features(self) -> int:
        return len(self.catalog.feature_names())


def preprocess_cohort(cohort: Cohort, threshold: float = 0.95,
                      modalities=None) -> PreprocessedData:
    """Full pipeline from raw cohort to model-ready sequences."""
    if modalities is not None:
        cohort = restrict_modalities(cohort, modalities)
        if not cohort.catalog.feature_names():
            raise ValueError("modality restriction removed every variable")
    cohort, dropped = prevalence_filter(cohort, threshold)
    cohort, scaling_table = minmax_normalize(cohort)
    medians = cohort_medians(cohort)
    sequences = {}
    for r in cohort.records:
        filled = fill_static(forward_fill(r, cohort.catalog, medians), cohort.catalog, medians)
        sequences[r.patient_id] = assemble_features(filled, cohort.catalog, scaling_table)
    return PreprocessedData(
        sequences=sequences, catalog=cohort.catalog,
        scaling_table=scaling_table, medians=medians, dropped=dropped,
    )


# ---------------------------------------------------------------------------
# fold splitting


def split_folds(cohort: Cohort, k: int = 5, val_fraction: float = 0.2,
                seed: int = 0) -> list[FoldSplit]:
    """Stratified k-fold assignment plus a stratified validation carve-out.

    Positives and negatives are shuffled separately and dealt round-robin,
    so every fold's positive count is within one of an even share.  For fold
    i the test set is fold i; the validation set takes val_fraction of the
    remaining patients (at least one of each class); the rest train.
    """
    if k < 2:
        raise ValueError(f"split_folds: k must be >= 2, got {k}")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"split_folds: val_fraction must be in (0, 1), got {val_fraction}")
    pos = [r.patient_id for r in cohort.records if r.label == 1]
    neg = [r.patient_id for r in cohort.records if r.label == 0]
    if not pos or not neg:
        raise ValueError("split_folds: cohort must contain both classes")
    if len(pos) < k or len(neg) < k:
        raise ValueError(
            f"split_folds: need at least {k} patients of each class, got {len(pos)}P/{len(neg)}N"
        )
    rng = np.random.default_rng(seed)
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    folds = [pos[i::k] + neg[i::k] for i in range(k)]

    labels = cohort.labels()
    splits = []
    for i in range(k):
        test = list(folds[i])
        rest_pos = [pid for j in range(k) if j != i for pid in folds[j] if labels[pid] == 1]
        rest_neg = [pid for j in range(k) if j != i for pid in folds[j] if labels[pid] == 0]
        rest_pos = [rest_pos[m] for m in rng.permutation(len(rest_pos))]
        rest_neg = [rest_neg[m] for m in rng.permutation(len(rest_neg))]
        n_vp = max(1, int(round(val_fraction * len(rest_pos))))
        n_vn = max(1, int(round(val_fraction * len(rest_neg))))
        if n_vp >= len(rest_pos) or n_vn >= len(rest_neg):
            raise ValueError("split_folds: validation carve-out would empty a training class")
        val = rest_pos[:n_vp] + rest_neg[:n_vn]
        train = rest_pos[n_vp:] + rest_neg[n_vn:]
        splits.append(FoldSplit(fold=i, train=train, val=val, test=test))
    return splits


# ---------------------------------------------------------------------------
# synthetic cohort generation


@dataclass
class GeneratorConfig:
    """Shape and signal knobs for the synthetic cohort.

    The label is a Bernoulli draw from a logit built out of planted effects,
    each hosted on dedicated lab channels and each exercising a different
    model capability:

      signal_level   per-patient baseline of two ordinary labs; a running
                     level any encoder can read.
      signal_spike   graded height of a single one-visit spike.  Mean
                     pooling dilutes it by the (highly variable) sequence
                     length, so reading it cleanly rewards attention that
                     amplifies salient cells or visits.
      signal_short   adjacent-visit ordered motif (one lab spiking, then a
                     second lab at the next visit; reversed order pushes
                     risk the other way), repeated n_motifs times.  Only
                     order separates the classes.
      signal_long    product of the stable levels of two labs; zero mean in
                     each factor, so no single channel is informative.
      signal_static  additive effect of age, RALE score and history flags,
                     the only part a first-visit scoring table can see.

    Spike and motif host channels are kept quiet so the events are salient.
    n_clutter labs carry a strong label-free random walk: encoders that drag
    state across the whole stay accumulate that drift, while windowed
    encoders shed it, so the clutter separates long-memory from local
    processing without touching the label.  Zero coefficients make labels
    independent coin flips; large ones drive the Bernoulli toward
    determinism.
    """

    n_patients: int = 365
    n_labs: int = 24
    n_vitals: int = 4
    n_rare_labs: int = 2
    rare_detect_fraction: float = 0.5  # fraction of patients with any rare-lab value
    seq_len_mean: float = 10.0
    seq_len_sd: float = 4.0
    seq_len_min: int = 3
    seq_len_max: int = 20
    missing_rate: float = 0.08
    interleave_jitter: float = 0.0  # probability of swapping adjacent visits' vitals
    n_motifs: int = 2  # ordered-pair occurrences per patient (capped by length)
    n_clutter: int = 6  # labs carrying label-free random-walk drift
    clutter_drift: float = 0.35  # per-visit step size of the clutter walk
    signal_level: float = 1.2
    signal_spike: float = 1.2
    signal_short: float = 1.2
    signal_long: float = 2.0
    signal_static: float = 0.6
    label_bias: float = 0.0
    label_flip: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**d)


_VITAL_NAMES = ("vital_hr", "vital_rr", "vital_temp", "vital_spo2")
_VITAL_RANGES = ((45.0, 160.0), (8.0, 40.0), (35.0, 41.0), (70.0, 100.0))
_FLAG_NAMES = ("hypertension", "obesity", "hyperlipidemia", "diabetes")


def _build_catalog(cfg: GeneratorConfig) -> VariableCatalog:
    variables = [Variable(f"lab_{i:02d}", "longitudinal", "labs") for i in range(cfg.n_labs)]
    variables += [Variable(name, "longitudinal", "vitals") for name in _VITAL_NAMES[:cfg.n_vitals]]
    variables += [Variable(f"lab_rare_{i}", "longitudinal", "labs") for i in range(cfg.n_rare_labs)]
    variables.append(Variable("age", "static_numeric", "demographic"))
    variables.append(Variable("rale_score", "static_numeric", "imaging"))
    variables += [Variable(name, "static_binary", "history") for name in _FLAG_NAMES]
    return VariableCatalog(variables)


def _lab_range(i: int) -> tuple[float, float]:
    lo = 1.0 + 3.0 * i
    return lo, lo + 15.0 + 2.0 * i


def generate_synthetic_cohort(cfg: GeneratorConfig) -> Cohort:
    cohort, _ = generate_synthetic_cohort_with_truth(cfg)
    return cohort


def generate_synthetic_cohort_with_truth(cfg: GeneratorConfig):
    """Like generate_synthetic_cohort but also returns the ground-truth
    logits {patient_id: logit}, the generator's own scoring rule."""
    if cfg.n_labs < 8 + cfg.n_clutter:
        raise ValueError(
            f"generator needs at least {8 + cfg.n_clutter} labs for the planted "
            f"signals plus {cfg.n_clutter} clutter channels"
        )
    if cfg.n_vitals > len(_VITAL_NAMES):
        raise ValueError(f"at most {len(_VITAL_NAMES)} vitals are supported")
    rng = np.random.default_rng(cfg.seed)
    catalog = _build_catalog(cfg)
    lab_names = [f"lab_{i:02d}" for i in range(cfg.n_labs)]
    vital_names = list(_VITAL_NAMES[:cfg.n_vitals])
    rare_names = [f"lab_rare_{i}" for i in range(cfg.n_rare_labs)]
    # planted-signal labs: motif pair (A, B), product pair (C, D), spike
    # host E with decoy host F, level pair (L1, L2)
    A, B, C, D, E, F, L1, L2 = range(8)
    n_regular = cfg.n_labs + cfg.n_vitals

    records = []
    truth = {}
    for p in range(cfg.n_patients):
        pid = f"p{p:04d}"
        T = int(round(rng.normal(cfg.seq_len_mean, cfg.seq_len_sd)))
        T = int(min(max(T, cfg.seq_len_min), cfg.seq_len_max))

        # AR(1) latent in [0, 1] per regular variable
        base = rng.uniform(0.3, 0.7, size=n_regular)
        w = np.zeros(n_regular)
        u = np.zeros((T, n_regular))
        for t in range(T):
            w = 0.6 * w + 0.8 * rng.standard_normal(n_regular)
            u[t] = np.clip(base + 0.22 * w, 0.0, 1.0)

        # quiet hosts so the planted events are salient against the baseline
        for ch in (A, B, E, F):
            u[:, ch] = np.clip(0.3 + 0.05 * rng.standard_normal(T), 0.0, 1.0)
        # clutter labs: label-free random walk spanning the full range
        for ch in range(8, 8 + cfg.n_clutter):
            walk = rng.random()
            for t in range(T):
                walk = min(max(walk + cfg.clutter_drift * rng.standard_normal(), 0.0), 1.0)
                u[t, ch] = walk
        # product channels: stable per-patient level with small jitter
        level_c = 0.1 + 0.8 * rng.random()
        level_d = 0.1 + 0.8 * rng.random()
        u[:, C] = np.clip(level_c + 0.04 * rng.standard_normal(T), 0.0, 1.0)
        u[:, D] = np.clip(level_d + 0.04 * rng.standard_normal(T), 0.0, 1.0)
        # level labs: widened per-patient baseline over the usual AR texture
        base_l1 = 0.2 + 0.6 * rng.random()
        base_l2 = 0.2 + 0.6 * rng.random()
        u[:, L1] = np.clip(base_l1 + 0.1 * rng.standard_normal(T), 0.0, 1.0)
        u[:, L2] = np.clip(base_l2 + 0.1 * rng.standard_normal(T), 0.0, 1.0)
        z_level = (base_l1 - 0.5) + (base_l2 - 0.5)

        # one graded spike on E (height carries the signal, its pooled trace
        # is diluted by the variable length T) and one decoy spike on F
        spike_h = 0.75 + 0.25 * rng.random()
        u[int(rng.integers(0, T)), E] = spike_h
        u[int(rng.integers(0, T)), F] = 0.75 + 0.25 * rng.random()
        z_spike = (spike_h - 0.875) / 0.125

        # ordered motifs on labs A and B: same orientation at every
        # occurrence, so order is the only separating attribute
        forward_event = bool(rng.random() < 0.5)
        z_short = 1.0 if forward_event else -1.0
        taken: list[int] = []
        for j in rng.permutation(T - 1):
            if len(taken) >= cfg.n_motifs:
                break
            if any(abs(int(j) - s) <= 1 for s in taken):
                continue
            taken.append(int(j))
            hi = 0.92 + 0.06 * rng.random()
            if forward_event:
                u[j, A], u[j + 1, B] = hi, hi
            else:
                u[j, B], u[j + 1, A] = hi, hi

        # product interaction between the two stable levels: learnable only
        # through a multiplicative pairing of cells
        z_long = 4.0 * (level_c - 0.5) * (level_d - 0.5)

        age_u = rng.random()
        rale_u = rng.random()
        flags = (rng.random(len(_FLAG_NAMES)) < 0.25).astype(int)
        z_static = 1.4 * (age_u - 0.5) + 1.4 * (rale_u - 0.5) + 0.4 * (float(flags.sum()) - 1.0)

        logit = (cfg.label_bias
                 + cfg.signal_level * z_level
                 + cfg.signal_spike * z_spike
                 + cfg.signal_short * z_short
                 + cfg.signal_long * z_long
                 + cfg.signal_static * z_static)
        label = int(rng.random() < 1.0 / (1.0 + math.exp(-logit)))
        if cfg.label_flip > 0.0 and rng.random() < cfg.label_flip:
            label = 1 - label

        # map latents to raw scales
        raw = np.empty_like(u)
        for i in range(cfg.n_labs):
            lo, hi_r = _lab_range(i)
            raw[:, i] = lo + u[:, i] * (hi_r - lo)
        for i in range(cfg.n_vitals):
            lo, hi_r = _VITAL_RANGES[i]
            raw[:, cfg.n_labs + i] = lo + u[:, cfg.n_labs + i] * (hi_r - lo)

        # optional modality interleaving: swap adjacent visits' vitals
        if cfg.interleave_jitter > 0.0:
            for t in range(1, T):
                if rng.random() < cfg.interleave_jitter:
                    cols = slice(cfg.n_labs, n_regular)
                    raw[t - 1, cols], raw[t, cols] = raw[t, cols].copy(), raw[t - 1, cols].copy()

        rare_raw = 2.0 + 6.0 * rng.random((T, cfg.n_rare_labs))
        rare_seen = rng.random(cfg.n_rare_labs) < cfg.rare_detect_fraction

        miss = rng.random((T, n_regular)) < cfg.missing_rate
        day = 0
        visits = []
        for t in range(T):
            values = {}
            for i, name in enumerate(lab_names + vital_names):
                if not miss[t, i]:
                    values[name] = float(raw[t, i])
            for i, name in enumerate(rare_names):
                if rare_seen[i] and rng.random() > 0.3:
                    values[name] = float(rare_raw[t, i])
            visits.append((day, values))
            day += int(rng.integers(1, 4))

        records.append(PatientRecord(
            patient_id=pid,
            label=label,
            static_numeric={"age": 30.0 + 62.0 * age_u, "rale_score": 48.0 * rale_u},
            static_binary={name: int(f) for name, f in zip(_FLAG_NAMES, flags)},
            visits=visits,
        ))
        truth[pid] = float(logit)
    return Cohort(records=records, catalog=catalog), truth
