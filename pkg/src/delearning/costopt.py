"""Optimizing layer: misclassification costs, resampling, threshold-moving and prototype fusion.

Per-outcome quantities are dicts keyed by :class:`Outcome`. Arrays of
network outputs use column 0 for AD and column 1 for NDC.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset, DataError, Outcome, split_indices
from .metrics import g_mean
from .neural import DenseNet, TrainConfig, train
from .stacking import RBM, META_TRAIN, ad_probability, as_visibles, init_meta_net, meta_outputs, one_hot_outcomes

log = logging.getLogger(__name__)

OUTCOMES = (Outcome.AD, Outcome.NDC)


@dataclass(frozen=True)
class CostMatrix:
    """Two-outcome cost matrix with ``cost[i][j]`` the cost of calling outcome i as j.

    Off-diagonal entries of row i all equal H_i, 1 <= H_i <= 10, and at
    least one H_i is exactly 1.
    """

    h_ad: float = 2.0
    h_ndc: float = 1.0

    def __post_init__(self):
        for name, h in (("H_AD", self.h_ad), ("H_NDC", self.h_ndc)):
            if not 1.0 <= h <= 10.0:
                raise ValueError(f"{name}={h} outside [1, 10]")
        if 1.0 not in (self.h_ad, self.h_ndc):
            raise ValueError("at least one H_i must equal 1.0")

    @property
    def cost(self) -> np.ndarray:
        return np.array([[0.0, self.h_ad], [self.h_ndc, 0.0]])

    def cost_of(self, outcome: Outcome) -> float:
        """Row sum of the matrix, which for two outcomes is H_i."""
        return self.h_ad if outcome is Outcome.AD else self.h_ndc

    def costs(self) -> dict:
        return {o: self.cost_of(o) for o in OUTCOMES}

    def as_array(self) -> np.ndarray:
        return np.array([self.h_ad, self.h_ndc])

    def label(self) -> str:
        return f"AD{_num(self.h_ad)}_NDC{_num(self.h_ndc)}"

    def to_dict(self) -> dict:
        return {"h_ad": self.h_ad, "h_ndc": self.h_ndc, "cost": self.cost.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CostMatrix":
        return cls(d["h_ad"], d["h_ndc"])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else str(x)


DEFAULT_COST = CostMatrix(2.0, 1.0)


def default_cost_candidates() -> list:
    """The nine integer matrices: uniform, H_AD in 2..5 with H_NDC 1, and the mirror."""
    return ([CostMatrix(1.0, 1.0)] + [CostMatrix(float(h), 1.0) for h in range(2, 6)]
            + [CostMatrix(1.0, float(h)) for h in range(2, 6)])


@dataclass
class ClassCosts:
    cost_of: dict
    counts: dict

    def __post_init__(self):
        self.cost_of = {Outcome(k): v for k, v in self.cost_of.items()}
        self.counts = {Outcome(k): int(v) for k, v in self.counts.items()}
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("counts must be nonnegative")

    @classmethod
    def from_matrix(cls, cm: CostMatrix, counts: dict) -> "ClassCosts":
        return cls(cm.costs(), counts)

    def ordered(self) -> list:
        """Outcomes by ascending cost; equal costs put the larger class first, then AD."""
        return sorted(OUTCOMES, key=lambda o: (Fraction(self.cost_of[o]), -self.counts[o], o is not Outcome.AD))


def lambda_scores(cc: ClassCosts) -> dict:
    """Score of each outcome in the resampling-reference rule (exact rationals)."""
    cheapest = cc.ordered()[0]
    min_cost = Fraction(cc.cost_of[cheapest])
    return {o: Fraction(cc.cost_of[o]) / min_cost * cc.counts[cheapest] / cc.counts[o] for o in OUTCOMES}


def select_lambda(cc: ClassCosts) -> Outcome:
    """Outcome whose count anchors resampling: argmin of :func:`lambda_scores`.

    Ties go to the outcome earlier in :meth:`ClassCosts.ordered` (the cheaper one).
    """
    if any(cc.counts[o] <= 0 for o in OUTCOMES):
        raise DataError("every outcome needs at least one sample")
    scores = lambda_scores(cc)
    rank = {o: i for i, o in enumerate(cc.ordered())}
    return min(OUTCOMES, key=lambda o: (scores[o], rank[o]))


def resample_counts(cc: ClassCosts, lam: Outcome) -> dict:
    """Target count per outcome: floor(Cost[k] / Cost[lambda] * N_lambda)."""
    ref = Fraction(cc.cost_of[lam])
    out = {o: math.floor(Fraction(cc.cost_of[o]) / ref * cc.counts[lam]) for o in OUTCOMES}
    out[lam] = cc.counts[lam]
    return out


def balance_counts(counts: dict) -> dict:
    """Every outcome raised to the largest class count."""
    top = max(counts.values())
    return {Outcome(o): top for o in counts}


def oversample_indices(labels, targets: dict, seed: int) -> np.ndarray:
    """Row indices realizing ``targets``: all original rows, then with-replacement copies per outcome."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    extra = []
    for o in OUTCOMES:
        members = np.flatnonzero(labels == o.code)
        want = int(targets.get(o, len(members)))
        if want < len(members):
            raise DataError(f"target {want} for {o.value} is below its current count {len(members)}; "
                            "under-sampling is not supported")
        if want > len(members):
            if len(members) == 0:
                raise DataError(f"cannot oversample {o.value}: no rows of that outcome")
            extra.append(rng.choice(members, size=want - len(members), replace=True))
    return np.concatenate([np.arange(len(labels))] + extra).astype(np.int64)


def oversample(ds: Dataset, targets: dict, seed: int) -> Dataset:
    if not ds.is_labeled:
        raise DataError("oversample needs labels")
    return ds.take(oversample_indices(ds.labels, targets, seed))


@dataclass
class ThresholdResult:
    adjusted: dict
    prediction: Outcome
    degenerate: bool = False


def threshold_move(O: dict, cc) -> ThresholdResult:
    """Scale each output by its outcome cost, renormalize, predict the largest.

    ``cc`` may be a ClassCosts or a CostMatrix. All-zero outputs return a
    uniform distribution with ``degenerate`` set.
    """
    costs = cc.cost_of if isinstance(cc, ClassCosts) else cc.costs()
    O = {Outcome(k): float(v) for k, v in O.items()}
    raw = {o: O[o] * costs[o] for o in OUTCOMES}
    total = sum(raw.values())
    if total <= 0:
        log.warning("threshold_move: all outputs zero, returning uniform")
        adjusted = {o: 1.0 / len(OUTCOMES) for o in OUTCOMES}
        return ThresholdResult(adjusted, _break_tie(costs), True)
    adjusted = {o: raw[o] / total for o in OUTCOMES}
    if adjusted[Outcome.AD] == adjusted[Outcome.NDC]:
        pred = _break_tie(costs)
    else:
        pred = max(OUTCOMES, key=lambda o: adjusted[o])
    return ThresholdResult(adjusted, pred, False)


def _break_tie(costs: dict) -> Outcome:
    # larger cost wins; AD on equal costs
    return Outcome.NDC if costs[Outcome.NDC] > costs[Outcome.AD] else Outcome.AD


def threshold_move_batch(outputs: np.ndarray, cm: CostMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`threshold_move` on n×2 (AD, NDC) outputs.

    Returns ``(adjusted n×2, predictions with AD=1)``.
    """
    outputs = np.asarray(outputs, dtype=float)
    raw = outputs * cm.as_array()
    total = raw.sum(axis=1, keepdims=True)
    adjusted = np.where(total > 0, raw / np.where(total > 0, total, 1.0), 0.5)
    tie_ad = 1 if _break_tie(cm.costs()) is Outcome.AD else 0
    pred = np.where(adjusted[:, 0] > adjusted[:, 1], 1, np.where(adjusted[:, 0] < adjusted[:, 1], 0, tie_ad))
    return adjusted, pred.astype(np.int8)


# ---------------------------------------------------------------------------
# Networks

@dataclass(frozen=True)
class OptimizingConfig:
    meta: TrainConfig = META_TRAIN
    resample_mode: str = "balance"
    validation_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.resample_mode not in ("balance", "cost"):
            raise ValueError("resample_mode must be 'balance' or 'cost'")


def train_dbn_initialized(rbm: RBM, V: np.ndarray, labels, cfg: TrainConfig) -> DenseNet:
    net = init_meta_net(rbm, 2, cfg.init_std, cfg.seed)
    return train(net, V, one_hot_outcomes(labels), "cross_entropy", cfg)[0]


@dataclass
class CostSearch:
    best: CostMatrix
    g_means: list
    candidates: list
    validation_rows: Optional[np.ndarray] = None


def evaluate_cost_candidates(candidates: Sequence[CostMatrix], outputs: np.ndarray, labels) -> list:
    """G-mean of threshold-moved predictions under each candidate."""
    return [g_mean(labels, threshold_move_batch(outputs, cm)[1]) for cm in candidates]


def search_cost_matrix(candidates: Sequence[CostMatrix], votes, labels, cfg: OptimizingConfig,
                       rbm: Optional[RBM] = None, net: Optional[DenseNet] = None) -> CostSearch:
    """Pick the candidate whose threshold-moved NN1 has the highest validation G-mean.

    NN1 is trained once on the non-validation rows (threshold-moving is
    post-hoc, so training does not depend on the candidate). Pass ``net`` to
    score an already trained NN1 on all of ``votes``. Ties keep the earlier
    candidate.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate list")
    labels = np.asarray(labels)
    V = as_visibles(votes)
    val_rows = None
    if net is None:
        if rbm is None:
            raise ValueError("need a trained RBM or a trained NN1")
        fit_rows, val_rows = split_indices(labels, cfg.validation_fraction, cfg.seed)
        net = train_dbn_initialized(rbm, V[fit_rows], labels[fit_rows], cfg.meta.with_(seed=cfg.seed + 1))
        V, labels = V[val_rows], labels[val_rows]
    scores = evaluate_cost_candidates(candidates, meta_outputs(net, V), labels)
    best = max(range(len(candidates)), key=lambda i: (scores[i], -i))
    return CostSearch(candidates[best], scores, candidates, val_rows)


@dataclass
class OptimizingNets:
    nn1: DenseNet
    nn2: DenseNet
    nn3: DenseNet
    cost: CostMatrix
    nn2_counts: dict = field(default_factory=dict)


def train_optimizing_nns(rbm: RBM, votes, labels, best_cost: CostMatrix, cfg: OptimizingConfig,
                         nn1: Optional[DenseNet] = None) -> OptimizingNets:
    """NN1 and NN3 on the raw vote matrix, NN2 on an over-sampled copy; all start from the RBM.

    In ``balance`` mode NN2's data has every outcome raised to the largest
    class count; in ``cost`` mode the targets come from :func:`resample_counts`.
    An already trained ``nn1`` (same rows, same seed stream) is reused.
    """
    V = as_visibles(votes)
    labels = np.asarray(labels)
    counts = {Outcome.AD: int(labels.sum()), Outcome.NDC: int(len(labels) - labels.sum())}
    if cfg.resample_mode == "balance":
        targets = balance_counts(counts)
    else:
        cc = ClassCosts.from_matrix(best_cost, counts)
        targets = resample_counts(cc, select_lambda(cc))
    idx = oversample_indices(labels, targets, cfg.seed + 2)
    if nn1 is None:
        nn1 = train_dbn_initialized(rbm, V, labels, cfg.meta.with_(seed=cfg.seed + 1))
    nn2 = train_dbn_initialized(rbm, V[idx], labels[idx], cfg.meta.with_(seed=cfg.seed + 2))
    nn3 = train_dbn_initialized(rbm, V, labels, cfg.meta.with_(seed=cfg.seed + 3))
    nn2_counts = {o.value: int(np.sum(labels[idx] == o.code)) for o in OUTCOMES}
    return OptimizingNets(nn1, nn2, nn3, best_cost, nn2_counts)


def probabilistic_outputs(nets: OptimizingNets, votes) -> np.ndarray:
    """n×3 points (P1, P2, P3): cost-adjusted NN1 AD probability, then NN2 and NN3."""
    V = as_visibles(votes)
    p1 = threshold_move_batch(meta_outputs(nets.nn1, V), nets.cost)[0][:, 0]
    p2 = ad_probability(meta_outputs(nets.nn2, V))
    p3 = ad_probability(meta_outputs(nets.nn3, V))
    return np.column_stack([p1, p2, p3])


# ---------------------------------------------------------------------------
# Prototypes

@dataclass
class PrototypeSpace:
    points: np.ndarray
    prototype_ad: np.ndarray
    prototype_ndc: np.ndarray

    def to_dict(self) -> dict:
        return {"prototype_AD": self.prototype_ad.tolist(), "prototype_NDC": self.prototype_ndc.tolist()}


def build_prototypes(P1, P2, P3, labels) -> PrototypeSpace:
    points = np.column_stack([np.asarray(P1, float), np.asarray(P2, float), np.asarray(P3, float)])
    labels = np.asarray(labels)
    if len(labels) != len(points):
        raise DataError("probability columns and labels differ in length")
    protos = {}
    for o in OUTCOMES:
        rows = points[labels == o.code]
        if len(rows) == 0:
            raise DataError(f"outcome {o.value} absent; cannot build its prototype")
        protos[o] = rows.mean(axis=0)
    return PrototypeSpace(points, protos[Outcome.AD], protos[Outcome.NDC])


def classify_by_prototype(point, ps: PrototypeSpace, cm: CostMatrix) -> Outcome:
    """Nearest prototype by Euclidean distance; exact ties go to the costlier outcome."""
    return Outcome.from_code(classify_points(np.atleast_2d(point), ps, cm)[0])


def classify_points(points: np.ndarray, ps: PrototypeSpace, cm: CostMatrix) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    d_ad = np.sum((points - ps.prototype_ad) ** 2, axis=1)
    d_ndc = np.sum((points - ps.prototype_ndc) ** 2, axis=1)
    tie = 1 if _break_tie(cm.costs()) is Outcome.AD else 0
    return np.where(d_ad < d_ndc, 1, np.where(d_ad > d_ndc, 0, tie)).astype(np.int8)


class CostSensitiveOptimizer(ClassifierMixin, BaseEstimator):
    """Cost search, the three DBN-initialized networks and prototype fusion on a vote matrix.

    ``fit(V, y, rbm=...)`` needs the stacking layer's trained RBM. The cost
    matrix is chosen on a validation slice of the fitting rows; the three
    networks and the prototypes then use the remaining rows.
    """

    def __init__(self, candidates=None, resample_mode="balance", validation_fraction=0.25,
                 meta_learning_rate=0.5, meta_momentum=0.5, meta_epochs=40, batch_size=100,
                 init_std=0.01, random_state=0):
        self.candidates = candidates
        self.resample_mode = resample_mode
        self.validation_fraction = validation_fraction
        self.meta_learning_rate = meta_learning_rate
        self.meta_momentum = meta_momentum
        self.meta_epochs = meta_epochs
        self.batch_size = batch_size
        self.init_std = init_std
        self.random_state = random_state

    @property
    def config(self) -> OptimizingConfig:
        meta = TrainConfig(self.meta_learning_rate, self.meta_momentum, self.meta_epochs, self.batch_size,
                           self.random_state, self.init_std)
        return OptimizingConfig(meta, self.resample_mode, self.validation_fraction, self.random_state)

    def fit(self, X, y, rbm: RBM = None):
        if rbm is None:
            raise ValueError("CostSensitiveOptimizer.fit needs the stacking RBM")
        V = as_visibles(X)
        y = np.asarray(y)
        cfg = self.config
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = V.shape[1]
        cands = list(self.candidates) if self.candidates is not None else default_cost_candidates()
        self.search_ = search_cost_matrix(cands, V, y, cfg, rbm=rbm)
        fit_rows = np.setdiff1d(np.arange(len(y)), self.search_.validation_rows)
        self.fit_rows_ = fit_rows
        self.nets_ = train_optimizing_nns(rbm, V[fit_rows], y[fit_rows], self.search_.best, cfg)
        pts = probabilistic_outputs(self.nets_, V[fit_rows])
        self.prototypes_ = build_prototypes(pts[:, 0], pts[:, 1], pts[:, 2], y[fit_rows])
        return self

    def points(self, X) -> np.ndarray:
        check_is_fitted(self, "nets_")
        return probabilistic_outputs(self.nets_, X)

    def predict(self, X):
        return classify_points(self.points(X), self.prototypes_, self.nets_.cost)

    def predict_proba(self, X):
        """Softmax-free similarity share: AD column is d_NDC / (d_AD + d_NDC)."""
        pts = self.points(X)
        d_ad = np.linalg.norm(pts - self.prototypes_.prototype_ad, axis=1)
        d_ndc = np.linalg.norm(pts - self.prototypes_.prototype_ndc, axis=1)
        tot = d_ad + d_ndc
        p = np.where(tot > 0, d_ndc / np.where(tot > 0, tot, 1.0), 0.5)
        return np.column_stack([1 - p, p])
