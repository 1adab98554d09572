"""The 22-step DELearning algorithm as one estimator, plus the stage table it logs against.

Seeds: step k draws from ``stage_seed(root, k)``, a SeedSequence of
``[root, k]``; sub-streams add further keys (e.g. one SAE per hidden size).
The test split uses step 0.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import RunConfig
from .costopt import (CostMatrix, OptimizingConfig, OptimizingNets, PrototypeSpace, balance_counts, ClassCosts,
                      build_prototypes, classify_points, oversample_indices, probabilistic_outputs, resample_counts,
                      search_cost_matrix, select_lambda, threshold_move_batch, train_dbn_initialized)
from .data import DataError, MinMaxNormalizer, Outcome, split_indices
from .metrics import evaluate
from .neural import DenseNet
from .sae import SparseAutoencoder
from .stacking import RBM, ad_probability, as_visibles, build_meta_nn, rank_classifiers, select_hidden_size, meta_outputs
from .zoo import MLP_HIDDEN, PredictionMatrix, TrainedClassifier, derive_seed, predict_matrix, train_zoo

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stage:
    step: int
    name: str
    layer: str


STAGES = tuple(Stage(i + 1, name, layer) for i, (name, layer) in enumerate([
    ("normalize", "voting"),
    ("train_saes", "voting"),
    ("select_sae_structure", "voting"),
    ("construct_feature_spaces", "voting"),
    ("train_zoo", "voting"),
    ("build_vote_matrix", "voting"),
    ("train_dbn", "stacking"),
    ("rank_classifiers", "stacking"),
    ("train_meta_nn", "stacking"),
    ("init_optimizing_nns", "optimizing"),
    ("train_nn1", "optimizing"),
    ("select_cost_matrix", "optimizing"),
    ("threshold_move_nn1", "optimizing"),
    ("train_nn2", "optimizing"),
    ("train_nn3", "optimizing"),
    ("outputs_p1", "optimizing"),
    ("outputs_p2", "optimizing"),
    ("outputs_p3", "optimizing"),
    ("formulate_points", "optimizing"),
    ("build_prototypes", "optimizing"),
    ("similarity", "optimizing"),
    ("final_decision", "optimizing"),
]))
LAYERS = ("voting", "stacking", "optimizing")


class StageError(RuntimeError):
    def __init__(self, stage: Stage, cause: BaseException):
        super().__init__(f"stage {stage.step} ({stage.name}) failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def resolve_stop(stop_after) -> int:
    """Last step to run for a layer name, stage name or step number (None means all 22)."""
    if stop_after is None:
        return len(STAGES)
    if isinstance(stop_after, int) or str(stop_after).isdigit():
        k = int(stop_after)
        if not 1 <= k <= len(STAGES):
            raise ValueError(f"step {k} outside 1..{len(STAGES)}")
        return k
    if stop_after in LAYERS:
        return max(s.step for s in STAGES if s.layer == stop_after)
    for s in STAGES:
        if s.name == stop_after:
            return s.step
    raise ValueError(f"unknown stage {stop_after!r}; use a layer ({', '.join(LAYERS)}), a stage name or 1..22")


def stage_seed(root: int, step: int, *keys: int) -> int:
    return derive_seed(root, step, *keys)


def space_name(h: int) -> str:
    return f"sae{h}"


class StageRecorder:
    """Times each stage and logs it in step order."""

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self.clock = clock
        self.timings: dict = {}
        self.completed: list = []

    def run(self, stage: Stage, fn):
        log.info("stage %d/%d %s", stage.step, len(STAGES), stage.name)
        t0 = self.clock()
        try:
            out = fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        self.timings[stage.name] = self.clock() - t0
        self.completed.append(stage.name)
        return out


class DELearningClassifier(ClassifierMixin, BaseEstimator):
    """Voting, stacking and optimizing layers fitted end to end on raw features.

    ``fit(X, y)`` runs steps 1-22: SAE feature spaces, the classifier zoo on
    one part of the rows, the RBM and meta network on the zoo's votes for the
    other part, then the cost search, the three networks and the prototypes.
    ``predict`` maps new rows through the same chain to the nearest
    prototype.

    Parameters
    ----------
    config : RunConfig, optional
        Hyperparameters; the data/split sections only matter to the runner
        except ``split.stack_fraction``.
    random_state : int, default=0
        Root seed for every stage.
    stop_after : str or int, optional
        Stop after this stage or layer; ``predict`` then needs the later stages
        and raises ``NotFittedError``.
    """

    def __init__(self, config: Optional[RunConfig] = None, random_state=0, stop_after=None):
        self.config = config
        self.random_state = random_state
        self.stop_after = stop_after

    @property
    def cfg(self) -> RunConfig:
        return self.config if self.config is not None else RunConfig()

    def fit(self, X, y, recorder: Optional[StageRecorder] = None):
        X = check_array(X, dtype=float)
        y = np.asarray(y).astype(np.int8)
        if y.shape != (X.shape[0],):
            raise DataError("y must have one label per row")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.recorder_ = recorder or StageRecorder()
        last = resolve_stop(self.stop_after)
        steps = [
            self._s1_normalize, self._s2_train_saes, self._s3_select_sae, self._s4_spaces, self._s5_zoo,
            self._s6_votes, self._s7_dbn, self._s8_rank, self._s9_meta, self._s10_init, self._s11_nn1,
            self._s12_cost, self._s13_threshold, self._s14_nn2, self._s15_nn3, self._s16_p1, self._s17_p2,
            self._s18_p3, self._s19_points, self._s20_prototypes, self._s21_similarity, self._s22_decision,
        ]
        self._X, self._y = X, y
        try:
            for stage, fn in zip(STAGES[:last], steps[:last]):
                self.recorder_.run(stage, fn)
        finally:
            del self._X, self._y
        self.completed_stages_ = list(self.recorder_.completed)
        return self

    def _seed(self, step, *keys):
        return stage_seed(self.random_state, step, *keys)

    # voting layer --------------------------------------------------------

    def _s1_normalize(self):
        self.normalizer_ = MinMaxNormalizer().fit(self._X)
        self._X1 = self.normalizer_.transform(self._X)

    def _s2_train_saes(self):
        c = self.cfg.sae
        self.saes_ = {}
        for h in c.sizes:
            self.saes_[h] = SparseAutoencoder(h, c.rho, c.beta, c.epochs, c.learning_rate, c.momentum,
                                              c.batch_size, c.init_std, self._seed(2, h)).fit(self._X1)
        self.sae_rho_sweep_ = {}
        for r in c.rho_sweep:
            m = SparseAutoencoder(c.rho_sweep_hidden, r, c.beta, c.epochs, c.learning_rate, c.momentum,
                                  c.batch_size, c.init_std, self._seed(2, c.rho_sweep_hidden, 1000))
            self.sae_rho_sweep_[r] = m.fit(self._X1).mse_history_

    def _s3_select_sae(self):
        final = {h: m.mse_history_[-1] if m.mse_history_ else float("inf") for h, m in self.saes_.items()}
        ranked = sorted(final, key=lambda h: (final[h], h))
        self.sae_selected_ = sorted(ranked[: self.cfg.sae.keep])

    def _s4_spaces(self):
        self.spaces_ = ("original",) + tuple(space_name(h) for h in self.sae_selected_)
        self._spaces = self._encode(self._X1)

    def _encode(self, X1) -> dict:
        out = {"original": X1}
        for h in self.sae_selected_:
            out[space_name(h)] = self.saes_[h].transform(X1)
        return out

    def _s5_zoo(self):
        self.zoo_rows_, self.stack_rows_ = split_indices(self._y, self.cfg.split.stack_fraction, self._seed(5, 0))
        hidden = dict(MLP_HIDDEN)
        hidden.update(self.cfg.zoo.mlp_hidden)
        zcfg = dataclasses.replace(self.cfg.zoo, spaces=self.spaces_, seed=self._seed(5, 1), mlp_hidden=hidden)
        spaces = {k: v[self.zoo_rows_] for k, v in self._spaces.items()}
        self.zoo_ = train_zoo(spaces, zcfg, self._y[self.zoo_rows_])

    def _s6_votes(self):
        spaces = {k: v[self.stack_rows_] for k, v in self._spaces.items()}
        pm = predict_matrix(self.zoo_, spaces=spaces)
        self.stack_votes_ = PredictionMatrix(pm.votes, pm.probs, pm.classifier_ids, self._y[self.stack_rows_],
                                             self.stack_rows_)

    # stacking layer ------------------------------------------------------

    def _s7_dbn(self):
        dcfg = dataclasses.replace(self.cfg.dbn, seed=self._seed(7))
        self.dbn_search_ = select_hidden_size(self.stack_votes_, dcfg)
        self.rbm_ = self.dbn_search_.models[self.dbn_search_.best]

    def _s8_rank(self):
        self.importance_, self.ranking_ = rank_classifiers(self.rbm_)

    def _s9_meta(self):
        self.meta_net_ = build_meta_nn(self.rbm_, self.stack_votes_, self.stack_votes_.labels,
                                       self.cfg.meta.with_(seed=self._seed(9)))

    # optimizing layer ----------------------------------------------------

    def _s10_init(self):
        o = self.cfg.optimizing
        self.opt_config_ = OptimizingConfig(self.cfg.meta, o.resample_mode, o.validation_fraction, self._seed(10))
        y = self.stack_votes_.labels
        self.fit_rows_, self.validation_rows_ = split_indices(y, o.validation_fraction, self._seed(10))
        self._V = as_visibles(self.stack_votes_)
        self._Vf, self._yf = self._V[self.fit_rows_], y[self.fit_rows_]

    def _train_nn(self, k, V, y):
        c = self.opt_config_
        return train_dbn_initialized(self.rbm_, V, y, c.meta.with_(seed=c.seed + k))

    def _s11_nn1(self):
        self.nn1_ = self._train_nn(1, self._Vf, self._yf)

    def _s12_cost(self):
        o = self.cfg.optimizing
        yv = self.stack_votes_.labels[self.validation_rows_]
        self.cost_search_ = search_cost_matrix(o.cost_matrices(), self._V[self.validation_rows_], yv,
                                               self.opt_config_, net=self.nn1_)
        self.cost_ = self.cost_search_.best

    def _s13_threshold(self):
        yv = self.stack_votes_.labels[self.validation_rows_]
        out = meta_outputs(self.nn1_, self._V[self.validation_rows_])
        raw = (out[:, 0] >= out[:, 1]).astype(np.int8)
        moved = threshold_move_batch(out, self.cost_)[1]
        self.threshold_summary_ = {"raw": evaluate(yv, raw), "moved": evaluate(yv, moved)}

    def _s14_nn2(self):
        y = self._yf
        counts = {Outcome.AD: int(y.sum()), Outcome.NDC: int(len(y) - y.sum())}
        if self.opt_config_.resample_mode == "balance":
            targets = balance_counts(counts)
        else:
            cc = ClassCosts.from_matrix(self.cost_, counts)
            targets = resample_counts(cc, select_lambda(cc))
        idx = oversample_indices(y, targets, self.opt_config_.seed + 2)
        self.nn2_counts_ = {o.value: int(np.sum(y[idx] == o.code)) for o in (Outcome.AD, Outcome.NDC)}
        self.nn2_ = self._train_nn(2, self._Vf[idx], y[idx])

    def _s15_nn3(self):
        self.nn3_ = self._train_nn(3, self._Vf, self._yf)
        self.nets_ = OptimizingNets(self.nn1_, self.nn2_, self.nn3_, self.cost_, self.nn2_counts_)

    def _s16_p1(self):
        self._P = [threshold_move_batch(meta_outputs(self.nn1_, self._Vf), self.cost_)[0][:, 0]]

    def _s17_p2(self):
        self._P.append(ad_probability(meta_outputs(self.nn2_, self._Vf)))

    def _s18_p3(self):
        self._P.append(ad_probability(meta_outputs(self.nn3_, self._Vf)))

    def _s19_points(self):
        self.fit_points_ = np.column_stack(self._P)

    def _s20_prototypes(self):
        P = self.fit_points_
        self.prototypes_ = build_prototypes(P[:, 0], P[:, 1], P[:, 2], self._yf)

    def _s21_similarity(self):
        self._dist = _distances(self.fit_points_, self.prototypes_)

    def _s22_decision(self):
        pred = classify_points(self.fit_points_, self.prototypes_, self.cost_)
        self.fit_metrics_ = evaluate(self._yf, pred)
        for attr in ("_X1", "_spaces", "_V", "_Vf", "_yf", "_P", "_dist"):
            self.__dict__.pop(attr, None)

    # inference -----------------------------------------------------------

    def votes(self, X, row_ids=None, labels=None) -> PredictionMatrix:
        """Zoo vote matrix for raw rows (normalize, encode, predict)."""
        check_is_fitted(self, "zoo_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        pm = predict_matrix(self.zoo_, spaces=self._encode(self.normalizer_.transform(X)))
        return PredictionMatrix(pm.votes, pm.probs, pm.classifier_ids, labels, row_ids)

    def points(self, X) -> np.ndarray:
        check_is_fitted(self, "prototypes_")
        return probabilistic_outputs(self.nets_, self.votes(X))

    def predict(self, X):
        check_is_fitted(self, "prototypes_")
        return classify_points(self.points(X), self.prototypes_, self.cost_)

    def predict_proba(self, X):
        """AD column is the NDC-prototype distance share d_NDC / (d_AD + d_NDC)."""
        d_ad, d_ndc = _distances(self.points(X), self.prototypes_)
        tot = d_ad + d_ndc
        p = np.where(tot > 0, d_ndc / np.where(tot > 0, tot, 1.0), 0.5)
        return np.column_stack([1 - p, p])

    def meta_predict(self, X) -> np.ndarray:
        """Stacking-layer prediction (step 9's meta network alone)."""
        check_is_fitted(self, "meta_net_")
        return (ad_probability(meta_outputs(self.meta_net_, self.votes(X))) >= 0.5).astype(np.int8)

    # persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "prototypes_")
        return {
            "n_features": int(self.n_features_in_),
            "normalizer": self.normalizer_.to_dict(),
            "sae_selected": [int(h) for h in self.sae_selected_],
            "saes": {str(h): self.saes_[h].to_dict() for h in self.sae_selected_},
            "zoo": [c.to_dict() for c in self.zoo_],
            "rbm": self.rbm_.to_dict(),
            "meta_net": self.meta_net_.to_dict(),
            "nn1": self.nn1_.to_dict(),
            "nn2": self.nn2_.to_dict(),
            "nn3": self.nn3_.to_dict(),
            "cost": self.cost_.to_dict(),
            "prototypes": self.prototypes_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, config: Optional[RunConfig] = None, random_state=0) -> "DELearningClassifier":
        obj = cls(config, random_state)
        obj.classes_ = np.array([0, 1])
        obj.n_features_in_ = int(d["n_features"])
        obj.normalizer_ = MinMaxNormalizer.from_dict(d["normalizer"])
        obj.sae_selected_ = [int(h) for h in d["sae_selected"]]
        obj.saes_ = {int(h): SparseAutoencoder.from_dict(m) for h, m in d["saes"].items()}
        obj.spaces_ = ("original",) + tuple(space_name(h) for h in obj.sae_selected_)
        obj.zoo_ = [TrainedClassifier.from_dict(c) for c in d["zoo"]]
        obj.rbm_ = RBM.from_dict(d["rbm"])
        obj.meta_net_ = DenseNet.from_dict(d["meta_net"])
        obj.nn1_, obj.nn2_, obj.nn3_ = (DenseNet.from_dict(d[k]) for k in ("nn1", "nn2", "nn3"))
        obj.cost_ = CostMatrix.from_dict(d["cost"])
        obj.nets_ = OptimizingNets(obj.nn1_, obj.nn2_, obj.nn3_, obj.cost_)
        p = d["prototypes"]
        obj.prototypes_ = PrototypeSpace(np.empty((0, 3)), np.asarray(p["prototype_AD"]), np.asarray(p["prototype_NDC"]))
        return obj


def _distances(points: np.ndarray, ps: PrototypeSpace) -> tuple[np.ndarray, np.ndarray]:
    return (np.linalg.norm(points - ps.prototype_ad, axis=1), np.linalg.norm(points - ps.prototype_ndc, axis=1))
