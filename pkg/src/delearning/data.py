"""Datasets, CSV ingestion, normalization, splitting and the synthetic generator."""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class Outcome(str, enum.Enum):
    """Binary diagnosis. AD is the positive class everywhere."""

    AD = "AD"
    NDC = "NDC"

    @property
    def code(self) -> int:
        return 1 if self is Outcome.AD else 0

    @classmethod
    def from_code(cls, code: int) -> "Outcome":
        return cls.AD if int(code) == 1 else cls.NDC


class DataError(ValueError):
    """Malformed input data."""


def encode_labels(labels) -> np.ndarray:
    """Map a sequence of Outcome / "AD" / "NDC" / {1, 0} to an int8 array (AD=1)."""
    out = np.empty(len(labels), dtype=np.int8)
    for i, lab in enumerate(labels):
        if isinstance(lab, Outcome):
            out[i] = lab.code
        elif isinstance(lab, str):
            try:
                out[i] = Outcome(lab.strip()).code
            except ValueError:
                raise DataError(f"unknown label value {lab!r} at position {i}") from None
        elif lab in (0, 1):
            out[i] = int(lab)
        else:
            raise DataError(f"unknown label value {lab!r} at position {i}")
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable table of real features with optional AD/NDC labels.

    ``labels`` is stored as int8 codes (AD=1, NDC=0). ``row_ids`` keeps the
    original row index so that splits and resamples stay auditable.
    """

    values: np.ndarray
    feature_names: tuple
    labels: Optional[np.ndarray] = None
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"values must be 2-d, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {r}, column {c}")
        names = tuple(self.feature_names)
        if len(names) != values.shape[1]:
            raise DataError(f"{len(names)} feature names for {values.shape[1]} columns")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "feature_names", names)
        if self.labels is not None:
            labels = encode_labels(self.labels) if not isinstance(self.labels, np.ndarray) \
                or self.labels.dtype.kind not in "iub" else np.asarray(self.labels, dtype=np.int8)
            if labels.shape != (values.shape[0],):
                raise DataError(f"{labels.shape[0]} labels for {values.shape[0]} rows")
            if not np.isin(labels, (0, 1)).all():
                raise DataError("labels must be AD(1) or NDC(0)")
            object.__setattr__(self, "labels", _frozen(labels))
        ids = np.arange(values.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != (values.shape[0],):
            raise DataError("row_ids length must equal row count")
        object.__setattr__(self, "row_ids", _frozen(ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def outcomes(self) -> list:
        if self.labels is None:
            return []
        return [Outcome.from_code(c) for c in self.labels]

    def class_counts(self) -> dict:
        if self.labels is None:
            raise DataError("dataset is unlabeled")
        n_ad = int(self.labels.sum())
        return {Outcome.AD: n_ad, Outcome.NDC: self.n - n_ad}

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.values[idx],
            self.feature_names,
            None if self.labels is None else self.labels[idx],
            self.row_ids[idx],
        )

    def with_values(self, values, feature_names=None) -> "Dataset":
        """Same rows and labels, new feature matrix."""
        names = feature_names if feature_names is not None else \
            tuple(f"f{j}" for j in range(np.shape(values)[1]))
        return Dataset(values, names, self.labels, self.row_ids)


# ---------------------------------------------------------------------------
# CSV

def load_csv(path, label_column: Optional[str] = "outcome", id_column: Optional[str] = None) -> Dataset:
    """Read a header-row CSV of numeric features.

    The label column is optional; when absent the dataset is unlabeled.
    Errors name the 1-based file line of the offending row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        label_idx = header.index(label_column) if label_column in header else None
        id_idx = header.index(id_column) if id_column and id_column in header else None
        if id_column and id_idx is None:
            raise DataError(f"{path}: id column {id_column!r} not found")
        feat_idx = [j for j in range(len(header)) if j not in (label_idx, id_idx)]
        rows, labels, ids = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            vals = []
            for j in feat_idx:
                cell = row[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {header[j]!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {header[j]!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
            if label_idx is not None:
                lab = row[label_idx].strip()
                if lab not in (Outcome.AD.value, Outcome.NDC.value):
                    raise DataError(f"{path}: row {lineno}: unknown label value {lab!r}")
                labels.append(Outcome(lab).code)
            if id_idx is not None:
                try:
                    ids.append(int(row[id_idx]))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}: bad id {row[id_idx]!r}") from None
    values = np.array(rows, dtype=float).reshape(len(rows), len(feat_idx))
    return Dataset(
        values,
        tuple(header[j] for j in feat_idx),
        np.array(labels, dtype=np.int8) if label_idx is not None else None,
        np.array(ids, dtype=np.int64) if id_idx is not None else None,
    )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_csv(ds: Dataset, path, label_column: str = "outcome", id_column: Optional[str] = None) -> None:
    """Write ``ds`` in the format :func:`load_csv` reads."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ([id_column] if id_column else []) + list(ds.feature_names)
        if ds.is_labeled:
            header.append(label_column)
        w.writerow(header)
        for i in range(ds.n):
            row = ([str(int(ds.row_ids[i]))] if id_column else []) + [_fmt(v) for v in ds.values[i]]
            if ds.is_labeled:
                row.append(Outcome.from_code(ds.labels[i]).value)
            w.writerow(row)


# ---------------------------------------------------------------------------
# Normalization

class MinMaxNormalizer(TransformerMixin, BaseEstimator):
    """Per-column min-max scaling to [0, 1]; constant columns map to 0.

    Values outside the fitted range are clipped, so transformed data always
    lies in [0, 1].
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.data_min_ = X.min(axis=0)
        self.data_range_ = X.max(axis=0) - self.data_min_
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        rng = self.data_range_
        safe = np.where(rng > 0, rng, 1.0)
        out = (X - self.data_min_) / safe
        out[:, rng == 0] = 0.0
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"data_min": self.data_min_.tolist(), "data_range": self.data_range_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxNormalizer":
        obj = cls()
        obj.data_min_ = np.asarray(d["data_min"], dtype=float)
        obj.data_range_ = np.asarray(d["data_range"], dtype=float)
        obj.n_features_in_ = obj.data_min_.shape[0]
        return obj


def normalize(ds: Dataset) -> Dataset:
    if ds.n < 1:
        raise DataError("cannot normalize an empty dataset")
    return Dataset(MinMaxNormalizer().fit_transform(ds.values), ds.feature_names, ds.labels, ds.row_ids)


# ---------------------------------------------------------------------------
# Splitting

def split_indices(labels: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train_idx, test_idx), each sorted ascending.

    Per-class test sizes are allocated by largest remainder so the total is
    ``round(test_fraction * n)`` and every class is within one row of its
    exact share.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    classes = [1, 0]
    members = [np.flatnonzero(labels == c) for c in classes]
    for c, m in zip(classes, members):
        if len(m) < 2:
            raise DataError(f"class {Outcome.from_code(c).value} has {len(m)} member(s); at least 2 required")
    exact = [test_fraction * len(m) for m in members]
    sizes = [math.floor(e) for e in exact]
    total = int(round(test_fraction * len(labels)))
    order = sorted(range(len(classes)), key=lambda k: (-(exact[k] - sizes[k]), k))
    for k in order[: max(0, total - sum(sizes))]:
        sizes[k] += 1
    rng = np.random.default_rng(seed)
    test = []
    for m, s in zip(members, sizes):
        test.append(rng.permutation(m)[:s])
    test_idx = np.sort(np.concatenate(test))
    mask = np.ones(len(labels), dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified, seeded train/test split of a labeled dataset."""
    if not ds.is_labeled:
        raise DataError("split requires a labeled dataset")
    train_idx, test_idx = split_indices(ds.labels, test_fraction, seed)
    return ds.take(train_idx), ds.take(test_idx)


# ---------------------------------------------------------------------------
# Synthetic clinical-measure generator

@dataclass(frozen=True)
class SchemaGroup:
    name: str
    measures: tuple
    cardinality: int


MEASURE_SCHEMA = (
    SchemaGroup("MH", (
        "CVHATT", "CVAFIB", "CVANGIO", "CVBYPASS", "CVPACE", "CVCHF", "CVOTHR", "CBSTROKE", "CBTIA",
        "CBOTHR", "PD", "SEIZURES", "TRAUMBRF", "HYPERTEN", "HYPERCHO", "DIABETES", "B12DEF",
        "THYROID", "INCONTU", "INCONTF"), 3),
    SchemaGroup("HIS_CVD", (
        "ABRUPT", "STEPWISE", "SOMATIC", "EMOT", "HXHYPER", "HXSTROKE", "FOCLSYM", "FOCLSIGN",
        "HACHIN", "CVDVOG", "STROKCOG", "CVDIMAG", "CVDIMAG1", "CVDIMAG2", "CVDIMAG3", "CVDIMAG4"), 2),
    SchemaGroup("UPDRS", (
        "SPEECH", "FACEXP", "TRESTFAC", "TRESTRHD", "TRESTLHD", "TRESTRFT", "TRESTLFT", "TRACTRHD",
        "TRACTLHD", "RIGDNECK", "RIGDUPRT", "RIGDUPLF", "RIGDLORT", "RIGDLOLF", "TAPSRT", "TAPSLF",
        "HANDMOVR", "HANDMOVL", "HANDALTR", "HANDALT", "LEGRT", "LEGLF", "ARISING", "POSTURE", "GAIT",
        "POSTTAB", "BRADYKIN"), 5),
    SchemaGroup("NPIQ", (
        "DEL", "HALL", "AGIT", "DEPD", "ANX", "ELAT", "APA", "DISN", "IRR", "MOT", "NITE", "APP"), 4),
    SchemaGroup("GDS", (
        "SATIS", "DROPACT", "EMPTY", "BORED", "SPIRITS", "AFRAID", "HAPPY", "HELPLESS", "STAYHOME",
        "MEMPROB", "WONDRFUL", "WRTHLESS", "ENERGY", "HOPELESS", "BETTER"), 2),
    SchemaGroup("FS", (
        "BILLS", "TAXES", "SHOPPING", "GAMES", "STOVE", "MEALPREP", "EVENTS", "PAYATTN", "REMDATES",
        "TRAVEL"), 4),
)

MEASURE_COUNTS = {"MH": 20, "HIS_CVD": 16, "UPDRS": 27, "NPIQ": 12, "GDS": 15, "FS": 10}


def validate_schema(schema: Sequence[SchemaGroup]) -> None:
    names = [g.name for g in schema]
    if sorted(names) != sorted(MEASURE_COUNTS):
        raise DataError(f"schema groups {names} do not match {sorted(MEASURE_COUNTS)}")
    for g in schema:
        if len(g.measures) != MEASURE_COUNTS[g.name]:
            raise DataError(f"group {g.name} has {len(g.measures)} measures, expected {MEASURE_COUNTS[g.name]}")
        if len(set(g.measures)) != len(g.measures):
            raise DataError(f"group {g.name} has duplicate measures")
        if g.cardinality < 2:
            raise DataError(f"group {g.name} cardinality must be >= 2")
    all_measures = [m for g in schema for m in g.measures]
    if len(set(all_measures)) != len(all_measures):
        raise DataError("measure names must be unique across groups")


def _xlogy(x, y):
    # x * log(y) with 0 * log(0) = 0, so noise=0 gives -inf instead of nan
    return xlogy(x, y) if y > 0 else np.where(np.asarray(x) > 0, -np.inf, 0.0)


@dataclass
class SynthTables:
    """Known generative tables of :func:`synth_generate`.

    Generative story: label y ~ Bernoulli(class_balance) with AD=1; each
    group k carries a binary latent g_k that equals y with probability
    ``1 - noise``; each measure j in group k takes level ``signature[j][g_k]``
    with probability ``signal[j]`` and otherwise a draw from ``base[j]``.
    The first measure of every group has signal 1, so g is recoverable
    exactly from the features and the Bayes rule depends on g alone.
    """

    class_balance: float
    noise: float
    groups: list
    group_of: list
    signal: list
    signature: list
    base: list
    measure_names: list = field(default_factory=list)

    @property
    def latent_match(self) -> float:
        return 1.0 - self.noise

    def measure_tables(self, j: int) -> np.ndarray:
        """2×k table: row g gives P(level | latent g) for measure j."""
        base = np.asarray(self.base[j])
        out = np.vstack([(1 - self.signal[j]) * base, (1 - self.signal[j]) * base])
        for g in (0, 1):
            out[g, self.signature[j][g]] += self.signal[j]
        return out

    def anchors(self) -> list:
        return [self.group_of.index(k) for k in range(len(self.groups))]

    def latents_from_features(self, X) -> np.ndarray:
        X = np.asarray(X)
        cols = []
        for j in self.anchors():
            cols.append((X[:, j] == self.signature[j][1]).astype(np.int8))
        return np.column_stack(cols)

    def _log_joint(self, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.latent_match
        k = G.sum(axis=1)
        K = G.shape[1]
        ad = math.log(self.class_balance) + _xlogy(k, m) + _xlogy(K - k, 1 - m)
        ndc = math.log(1 - self.class_balance) + _xlogy(k, 1 - m) + _xlogy(K - k, m)
        return ad, ndc

    def bayes_predict(self, X) -> np.ndarray:
        """Bayes-optimal labels (AD=1) from raw integer features; ties go to AD."""
        ad, ndc = self._log_joint(self.latents_from_features(X))
        return (ad >= ndc).astype(np.int8)

    def bayes_optimal_accuracy(self) -> float:
        """Exact optimum: sum over all latent configurations of the max joint."""
        K = len(self.groups)
        G = np.array(list(itertools.product((0, 1), repeat=K)), dtype=np.int8)
        ad, ndc = self._log_joint(G)
        return float(np.sum(np.maximum(np.exp(ad), np.exp(ndc))))

    def to_dict(self) -> dict:
        return {
            "class_balance": self.class_balance,
            "noise": self.noise,
            "latent_match": self.latent_match,
            "label_information": "none" if self.noise == 0.5 else "present",
            "bayes_optimal_accuracy": self.bayes_optimal_accuracy(),
            "groups": self.groups,
            "measures": [
                {
                    "name": self.measure_names[j],
                    "group": self.groups[self.group_of[j]]["name"],
                    "signal": self.signal[j],
                    "signature": {"latent_0": self.signature[j][0], "latent_1": self.signature[j][1]},
                    "base": list(self.base[j]),
                    "given_latent_0": self.measure_tables(j)[0].tolist(),
                    "given_latent_1": self.measure_tables(j)[1].tolist(),
                }
                for j in range(len(self.signal))
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthTables":
        names = [g["name"] for g in d["groups"]]
        ms = d["measures"]
        return cls(
            class_balance=d["class_balance"],
            noise=d["noise"],
            groups=d["groups"],
            group_of=[names.index(m["group"]) for m in ms],
            signal=[m["signal"] for m in ms],
            signature=[(m["signature"]["latent_0"], m["signature"]["latent_1"]) for m in ms],
            base=[m["base"] for m in ms],
            measure_names=[m["name"] for m in ms],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def synth_generate(
    schema: Sequence[SchemaGroup] = MEASURE_SCHEMA,
    n: int = 23165,
    class_balance: float = 0.3,
    noise: float = 0.2,
    seed: int = 0,
) -> tuple[Dataset, SynthTables]:
    """Draw a labeled Table-1-shaped dataset (raw integer level codes).

    ``noise`` is the probability that a group's latent disagrees with the
    label: 0 makes the label a deterministic function of the features,
    0.5 makes features independent of the label.
    """
    validate_schema(schema)
    if n < 2:
        raise DataError("n must be >= 2")
    if not 0.0 < class_balance < 1.0:
        raise DataError("class_balance must be in (0, 1)")
    if not 0.0 <= noise <= 0.5:
        raise DataError("noise must be in [0, 0.5]")
    rng = np.random.default_rng(seed)
    # tables depend on the seed only, so one seed always means one distribution
    groups, group_of, signal, signature, base, names = [], [], [], [], [], []
    for k, g in enumerate(schema):
        groups.append({"name": g.name, "cardinality": g.cardinality, "measures": list(g.measures)})
        for i, m in enumerate(g.measures):
            group_of.append(k)
            names.append(m)
            signal.append(1.0 if i == 0 else float(np.round(rng.uniform(0.3, 0.8), 6)))
            sig = rng.choice(g.cardinality, size=2, replace=False)
            signature.append((int(sig[0]), int(sig[1])))
            b = rng.dirichlet(np.ones(g.cardinality))
            b = np.round(b, 6)
            b[-1] = 1.0 - b[:-1].sum()
            base.append([float(x) for x in b])
    tables = SynthTables(class_balance, noise, groups, group_of, signal, signature, base, names)

    y = (rng.random(n) < class_balance).astype(np.int8)
    flip = rng.random((n, len(schema))) < noise
    G = np.where(flip, 1 - y[:, None], y[:, None]).astype(np.int8)
    X = np.empty((n, len(names)))
    for j in range(len(names)):
        probs = tables.measure_tables(j)  # 2×k
        cdf = np.cumsum(probs, axis=1)
        cdf[:, -1] = 1.0
        u = rng.random(n)
        rows = cdf[G[:, group_of[j]]]
        X[:, j] = (u[:, None] >= rows).sum(axis=1)
    return Dataset(X, tuple(names), y), tables
