"""Batch runs: load data, fit the pipeline, evaluate on the held-out split and write artifacts.

``report.json`` holds everything except wall-clock times, which go under the
top-level ``timings`` key; dropping that key leaves bytes that depend only on
the config and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import BaselineConfig, LOGITBOOST_NOTE, METRIC_KEYS, comparison_row, diversity_summary, \
    run_baselines, same_split
from .config import RunConfig
from .data import Dataset, DataError, load_csv, split_indices, synth_generate, write_csv
from .metrics import evaluate
from .pipeline import LAYERS, STAGES, DELearningClassifier, StageError, StageRecorder, resolve_stop, stage_seed
from .sae import correlation_matrix, mean_abs_offdiag
from .stacking import ranks_from_order

log = logging.getLogger(__name__)

REPORT_FORMAT = "delearning-report/1"
TEST_ID_COLUMN = "row_id"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_without_timings(text: str) -> str:
    d = json.loads(text)
    d.pop("timings", None)
    return json.dumps(d, indent=2, sort_keys=True)


def load_dataset(cfg: RunConfig) -> tuple[Dataset, Optional[object]]:
    d = cfg.data
    if d.csv:
        ds = load_csv(d.csv, d.label_column, d.id_column)
        if not ds.is_labeled:
            raise DataError(f"{d.csv}: label column {d.label_column!r} missing")
        return ds, None
    seed = d.synth_seed if d.synth_seed is not None else stage_seed(cfg.seed, 0, 0)
    return synth_generate(n=d.n, class_balance=d.class_balance, noise=d.noise, seed=seed)


def _write_rows(path: Path, header: list, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in r])


def _metric_block(m: dict) -> dict:
    return {k: m[k] for k in (*METRIC_KEYS, "specificity", "tp", "fn", "fp", "tn", "flags")}


def run_experiment(cfg: RunConfig, out_dir=None, stop_after=None) -> dict:
    """Run the pipeline and write all artifacts to ``out_dir`` (default ``cfg.out``).

    Returns the report dict. A failing stage still writes a report marked
    incomplete, then raises :class:`StageError`.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    last = resolve_stop(stop_after)
    ds, tables = load_dataset(cfg)
    train_idx, test_idx = split_indices(ds.labels, cfg.split.test_fraction, stage_seed(cfg.seed, 0))
    train, test = ds.take(train_idx), ds.take(test_idx)

    report = {
        "format": REPORT_FORMAT,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "stop_after": stop_after,
        "stages": [{"step": s.step, "name": s.name, "layer": s.layer} for s in STAGES],
        "data": {
            "source": cfg.data.csv or "synthetic",
            "n": ds.n, "d": ds.d, "feature_names": list(ds.feature_names),
            "class_counts": {k.value: v for k, v in ds.class_counts().items()},
            "train_rows": train.n, "test_rows": test.n,
            "test_csv": {"file": "test.csv", "id_column": TEST_ID_COLUMN, "label_column": cfg.data.label_column},
        },
    }
    if tables is not None:
        tables.save(out / "synth_tables.json")
        report["data"]["synth_tables"] = "synth_tables.json"
        report["data"]["bayes_optimal_accuracy"] = tables.bayes_optimal_accuracy()
        report["data"]["bayes_test_accuracy"] = float(np.mean(tables.bayes_predict(test.values) == test.labels))
    write_csv(test, out / "test.csv", cfg.data.label_column, TEST_ID_COLUMN)

    recorder = StageRecorder()
    est = DELearningClassifier(cfg, cfg.seed, last)
    failure = None
    try:
        est.fit(train.values, train.labels, recorder)
    except StageError as exc:
        failure = exc
        report["failed_stage"] = {"step": exc.stage.step, "name": exc.stage.name, "cause": str(exc.cause)}
    done = list(recorder.completed)
    report["completed_stages"] = done
    report["complete"] = len(done) == len(STAGES)
    report["timings"] = dict(recorder.timings)

    layers_done = [L for L in LAYERS if all(s.name in done for s in STAGES if s.layer == L)]
    if failure is None:
        _evaluate(est, cfg, train, test, report, out, layers_done)
    _write_report(report, out)
    if failure is not None:
        raise failure
    return report


def _write_report(report: dict, out: Path) -> None:
    (out / "report.json").write_text(dumps(report), encoding="utf-8")


def _evaluate(est: DELearningClassifier, cfg: RunConfig, train: Dataset, test: Dataset, report: dict, out: Path,
              layers_done: list) -> None:
    yt = test.labels
    if "voting" in layers_done:
        test_votes = est.votes(test.values, test.row_ids, yt)
        test_votes.to_csv(out / "votes_test.csv", cfg.data.label_column)
        report["voting"] = _voting_block(est, test_votes, train, out)
    if "stacking" in layers_done:
        report["stacking"] = _stacking_block(est, test, out)
    if "optimizing" in layers_done:
        report["optimizing"] = _optimizing_block(est, test, out)
        models = dumps(est.to_dict())
        (out / "models.json").write_text(models, encoding="utf-8")
        report["models"] = {"file": "models.json", "sha256": hashlib.sha256(models.encode()).hexdigest()}
        pred = est.predict(test.values)
        report["final_metrics"] = _metric_block(evaluate(yt, pred))
        if cfg.baselines.enabled:
            b = cfg.baselines
            bcfg = BaselineConfig(b.n_estimators, b.boosting_rounds, b.min_leaf, stage_seed(cfg.seed, 23))
            norm_train = train.with_values(est.normalizer_.transform(train.values), train.feature_names)
            norm_test = test.with_values(est.normalizer_.transform(test.values), test.feature_names)
            rows = run_baselines(norm_train, norm_test, bcfg, est.stack_votes_, test_votes,
                                 extra={"MetaNN": est.meta_predict(test.values), "DELearning": pred})
        else:
            rows = [comparison_row("DELearning", yt, pred, test.row_ids)]
        report["comparison"] = {"rows": rows, "same_split": same_split(rows), "footnote": LOGITBOOST_NOTE}
        _write_rows(out / "comparison.csv", ["method", *METRIC_KEYS, "n_test", "test_rows"],
                    [[r["method"], *[r[k] for k in METRIC_KEYS], r["n_test"], r["test_rows"]] for r in rows])
        (out / "comparison.json").write_text(dumps(report["comparison"]), encoding="utf-8")


def _voting_block(est, test_votes, train: Dataset, out: Path) -> dict:
    sae_rows = []
    curves = {}
    for h, m in sorted(est.saes_.items()):
        curves[str(h)] = m.mse_history_
        sae_rows += [[h, est.cfg.sae.rho, e + 1, v] for e, v in enumerate(m.mse_history_)]
    for r, hist in sorted(est.sae_rho_sweep_.items()):
        sae_rows += [[est.cfg.sae.rho_sweep_hidden, r, e + 1, v] for e, v in enumerate(hist)]
    _write_rows(out / "sae_mse.csv", ["hidden_units", "rho", "epoch", "mse"], sae_rows)

    X1 = est.normalizer_.transform(train.values)
    corr = {"original": mean_abs_offdiag(correlation_matrix(X1))}
    for h in est.sae_selected_:
        corr[f"sae{h}"] = mean_abs_offdiag(correlation_matrix(est.saes_[h].transform(X1)))

    yt = test_votes.labels
    zoo_rows, members = [], []
    for j, c in enumerate(est.zoo_):
        m = evaluate(yt, (test_votes.votes[:, j] > 0).astype(np.int8))
        members.append({"id": c.id, "algorithm": c.algorithm, "space": c.space, "notes": c.notes,
                        **{k: m[k] for k in METRIC_KEYS}})
        zoo_rows.append([c.id, c.algorithm, c.space, *[m[k] for k in METRIC_KEYS]])
    _write_rows(out / "zoo_metrics.csv", ["id", "algorithm", "space", *METRIC_KEYS], zoo_rows)

    div = diversity_summary(test_votes)
    _write_rows(out / "diversity.csv", ["i", "j", "q"], [[p["i"], p["j"], p["q"]] for p in div["pairs"]])
    _write_rows(out / "difficulty.csv", ["n_correct", "fraction_correct", "rows"],
                [[k, k / div["L"], v] for k, v in enumerate(div["histogram"])])
    accs = [m["accuracy"] for m in members]
    return {
        "sae": {"sizes": list(est.saes_), "final_mse": {str(h): m.mse_history_[-1] for h, m in est.saes_.items()},
                "curves": curves, "rho_sweep": {repr(r): h for r, h in est.sae_rho_sweep_.items()},
                "selected": est.sae_selected_, "mean_abs_correlation": corr},
        "spaces": list(est.spaces_),
        "zoo": members,
        "zoo_mean_accuracy": float(np.mean(accs)),
        "zoo_best_accuracy": float(np.max(accs)),
        "zoo_rows": int(len(est.zoo_rows_)),
        "stack_rows": int(len(est.stack_rows_)),
        "diversity": div,
    }


def _stacking_block(est, test: Dataset, out: Path) -> dict:
    s = est.dbn_search_
    _write_rows(out / "dbn_search.csv", ["hidden_units", "epoch", "reconstruction_error"],
                [[h, e + 1, v] for h in sorted(s.curves) for e, v in enumerate(s.curves[h])])
    ranks = ranks_from_order(est.ranking_)
    imp = []
    for j, c in enumerate(est.zoo_):
        imp.append({"id": c.id, "algorithm": c.algorithm, "space": c.space, "score": float(est.importance_[j]),
                    "rank": int(ranks[j])})
    _write_rows(out / "importance.csv", ["id", "algorithm", "space", "score", "rank"],
                [[r["id"], r["algorithm"], r["space"], r["score"], r["rank"]] for r in imp])
    meta = evaluate(test.labels, est.meta_predict(test.values))
    return {
        "dbn_search": {"errors": {str(h): e for h, e in sorted(s.errors.items())}, "best": s.best},
        "importance": imp,
        "meta_nn_test": _metric_block(meta),
    }


def _optimizing_block(est, test: Dataset, out: Path) -> dict:
    cs = est.cost_search_
    table = [{"label": c.label(), "h_ad": c.h_ad, "h_ndc": c.h_ndc, "g_mean": g, "selected": c == cs.best}
             for c, g in zip(cs.candidates, cs.g_means)]
    _write_rows(out / "gmean.csv", ["candidate", "h_ad", "h_ndc", "g_mean", "selected"],
                [[r["label"], r["h_ad"], r["h_ndc"], r["g_mean"], int(r["selected"])] for r in table])
    pts = est.points(test.values)
    _write_rows(out / "points.csv", ["row_id", "p1", "p2", "p3", "outcome"],
                [[int(i), *p, "AD" if y == 1 else "NDC"] for i, p, y in zip(test.row_ids, pts, test.labels)])
    return {
        "cost_search": table,
        "selected_cost": est.cost_.to_dict(),
        "threshold_validation": {k: _metric_block(v) for k, v in est.threshold_summary_.items()},
        "nn2_counts": est.nn2_counts_,
        "fit_rows": int(len(est.fit_rows_)),
        "validation_rows": int(len(est.validation_rows_)),
        "prototypes": est.prototypes_.to_dict(),
        "fit_metrics": _metric_block(est.fit_metrics_),
    }


def load_run(report_path) -> tuple[dict, DELearningClassifier]:
    report_path = Path(report_path)
    report = json.loads(report_path.read_text(encoding="utf-8"))
    if report.get("format") != REPORT_FORMAT:
        raise DataError(f"{report_path}: not a run report")
    if "models" not in report:
        raise DataError(f"{report_path}: report has no serialized models (run incomplete)")
    models = json.loads((report_path.parent / report["models"]["file"]).read_text(encoding="utf-8"))
    cfg = RunConfig.from_dict(report["config"])
    return report, DELearningClassifier.from_dict(models, cfg, cfg.seed)


def evaluate_csv(report_path, csv_path) -> dict:
    """Inference only: metrics of the stored models on a labeled CSV with the run's schema."""
    report, est = load_run(report_path)
    info = report["data"]
    with Path(csv_path).open(newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    id_col = info["test_csv"]["id_column"] if info["test_csv"]["id_column"] in header else None
    ds = load_csv(csv_path, info["test_csv"]["label_column"], id_col)
    if ds.d != info["d"]:
        raise DataError(f"{csv_path}: expected d={info['d']} feature columns, found {ds.d}")
    if list(ds.feature_names) != info["feature_names"]:
        missing = sorted(set(info["feature_names"]) - set(ds.feature_names))
        raise DataError(f"{csv_path}: feature columns differ from the run's schema (missing {missing[:5]})")
    if not ds.is_labeled:
        raise DataError(f"{csv_path}: label column {info['test_csv']['label_column']!r} missing")
    return _metric_block(evaluate(ds.labels, est.predict(ds.values)))
