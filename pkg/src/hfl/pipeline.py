"""Two-stage study orchestration.

Stage 1 regresses the log target on structural/locational covariates; its
residuals are the training labels for the stage-2 CNN, whose out-of-fold
predictions ("floor plan sentiment") feed the stage-3 augmented regression
and the prediction benchmark.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import gbt as gbt_mod
from . import nn, stats
from .errors import (CollinearSentiment, MisalignedPredictions,
                     SubsetTooSmall, TooFewListings)
from .imageproc import crop_to_content, letterbox_resize, minmax_normalize
from .stats import VariableSpec, build_frame, ols_fit, paired_t_test, percent_reduction

SENTIMENT_COLUMN = "floor_plan_sentiment"
MIN_SUBSET_N = 200


@dataclass
class FoldPlan:
    k: int
    assignment: dict  # listing id -> fold index
    seed: int

    def fold_ids(self, f):
        return [i for i, g in self.assignment.items() if g == f]


@dataclass
class SentimentScores:
    scores: dict          # listing id -> out-of-fold predicted residual
    fold: dict            # listing id -> fold that scored it
    target_label: str


def make_folds(ids, k, seed):
    """Seeded shuffle into k folds whose sizes differ by at most one."""
    ids = list(ids)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ids) < k:
        raise TooFewListings(f"{len(ids)} listings cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    assignment = {}
    for pos, idx in enumerate(order):
        assignment[ids[idx]] = pos % k
    return FoldPlan(k, assignment, seed)


def preprocess_images(images, side):
    """Crop, letterbox and min-max normalize each raster to a side x side tensor."""
    out = {}
    for key, img in images.items():
        out[key] = minmax_normalize(letterbox_resize(crop_to_content(img), side))
    return out


def stage1(listings, target="rpms"):
    """Hedonic OLS of the log target on all covariates; residuals are the
    stage-2 labels."""
    frame, tv = build_frame(listings, VariableSpec(target=target))
    return ols_fit(frame, tv)


def stage2_oof(tensors, listings, stage1_fit, folds, config):
    """Out-of-fold CNN sentiment: each fold is scored by a model trained
    on the remaining folds only."""
    ids = [rec.id for rec in listings]
    missing = [i for i in ids if i not in tensors]
    if missing:
        raise MisalignedPredictions(f"no image tensor for ids {missing[:5]}")
    residual = dict(zip(ids, stage1_fit.residuals))
    scores, fold_of = {}, {}
    for f in range(folds.k):
        test_ids = [i for i in ids if folds.assignment[i] == f]
        train_ids = [i for i in ids if folds.assignment[i] != f]
        x_train = np.stack([tensors[i] for i in train_ids])
        y_train = np.array([residual[i] for i in train_ids])
        rng = np.random.default_rng(np.random.SeedSequence([folds.seed, f]))
        fold_config = replace(config, init_seed=int(rng.integers(2**31 - 1)))
        model, _ = nn.cnn_train(x_train, y_train, fold_config, rng)
        x_test = np.stack([tensors[i] for i in test_ids])
        pred = nn.predict_batched(model, x_test)
        for i, p in zip(test_ids, pred):
            scores[i] = float(p)
            fold_of[i] = f
    return SentimentScores(scores, fold_of, stage1_fit.target_label)


def _frames_with_sentiment(listings, sentiment, target):
    frame, tv = build_frame(listings, VariableSpec(target=target))
    missing = [rec.id for rec in listings if rec.id not in sentiment.scores]
    if missing:
        raise MisalignedPredictions(f"sentiment missing for ids {missing[:5]}")
    raw = np.array([sentiment.scores[rec.id] for rec in listings])
    if np.all(raw == raw[0]):
        raise CollinearSentiment("sentiment scores are constant")
    augmented = frame.with_column(SENTIMENT_COLUMN, raw, prepend=True)
    return frame, augmented, tv


def stage3_hedonic(listings, sentiment, target="rpms"):
    """Augmented hedonic regression; the sentiment coefficient is the
    parameter of interest."""
    if sentiment.target_label != target:
        raise MisalignedPredictions(
            f"sentiment was trained on {sentiment.target_label!r}, not {target!r}")
    _, augmented, tv = _frames_with_sentiment(listings, sentiment, target)
    return ols_fit(augmented, tv)


@dataclass
class ModelConfigs:
    gbt: gbt_mod.GbtConfig = field(default_factory=gbt_mod.GbtConfig)
    mlp: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(
        lr=5e-3, epochs=80, patience=10, hidden=(32, 16)))


def _fit_predict(model_name, x_train, y_train, x_test, frame_names, configs, seed):
    if model_name == "ols":
        train_frame = stats.FeatureFrame(list(frame_names), x_train,
                                         ["continuous"] * x_train.shape[1])
        fit = ols_fit(train_frame, stats.TargetVector(y_train, "log", "bench"))
        test_frame = stats.FeatureFrame(list(frame_names), x_test,
                                        ["continuous"] * x_test.shape[1])
        return stats.predict(fit, test_frame)
    if model_name == "gbt":
        model, _ = gbt_mod.gbt_fit(x_train, y_train, configs.gbt)
        return gbt_mod.gbt_predict(model, x_test)
    if model_name == "mlp":
        rng = np.random.default_rng(seed)
        config = replace(configs.mlp, init_seed=seed)
        model, _ = nn.mlp_fit(x_train, y_train, config, rng)
        return nn.mlp_predict(model, x_test)
    raise ValueError(f"unknown model {model_name!r}")


def benchmark(listings, sentiment, models, folds, target="rpms", configs=None):
    """Per-model 5-fold prediction benchmark with and without sentiment.

    Returns a dict keyed by model name with per-fold MSE/MAE, per-observation
    error records, paired t-tests and percent reductions.
    """
    configs = configs or ModelConfigs()
    frame, augmented, tv = _frames_with_sentiment(listings, sentiment, target)
    ids = [rec.id for rec in listings]
    y = tv.values
    fold_idx = np.array([folds.assignment[i] for i in ids])
    results = {}
    for model_name in models:
        variant = {}
        for label, fr in (("without", frame), ("with", augmented)):
            per_fold_mse, per_fold_mae = [], []
            sq = np.zeros(len(ids))
            ab = np.zeros(len(ids))
            for f in range(folds.k):
                test = np.flatnonzero(fold_idx == f)
                train = np.flatnonzero(fold_idx != f)
                seed = int(np.random.default_rng(
                    np.random.SeedSequence([folds.seed, f, 77])).integers(2**31 - 1))
                pred = _fit_predict(model_name, fr.values[train], y[train],
                                    fr.values[test], fr.names, configs, seed)
                err = pred - y[test]
                sq[test] = err ** 2
                ab[test] = np.abs(err)
                per_fold_mse.append(float(np.mean(err ** 2)))
                per_fold_mae.append(float(np.mean(np.abs(err))))
            variant[label] = {
                "per_fold_mse": per_fold_mse,
                "per_fold_mae": per_fold_mae,
                "mse": float(np.mean(per_fold_mse)),
                "mae": float(np.mean(per_fold_mae)),
                "sq_errors": sq,
                "abs_errors": ab,
            }
        t_mse = paired_t_test(variant["without"]["sq_errors"], variant["with"]["sq_errors"])
        t_mae = paired_t_test(variant["without"]["abs_errors"], variant["with"]["abs_errors"])
        results[model_name] = {
            "without": variant["without"],
            "with": variant["with"],
            "mse_reduction_pct": percent_reduction(variant["without"]["mse"],
                                                   variant["with"]["mse"]),
            "mae_reduction_pct": percent_reduction(variant["without"]["mae"],
                                                   variant["with"]["mae"]),
            "t_mse": {"t": t_mse.t, "df": t_mse.df, "p": t_mse.p},
            "t_mae": {"t": t_mae.t, "df": t_mae.df, "p": t_mae.p},
        }
    return results


def rank_exemplars(pred_with, pred_without, k):
    """Top-k positive and negative price adjustments (with minus without)."""
    if set(pred_with) != set(pred_without):
        raise MisalignedPredictions("prediction maps cover different ids")
    if 2 * k > len(pred_with):
        raise ValueError("2k must not exceed the number of predictions")
    adj = {i: pred_with[i] - pred_without[i] for i in pred_with}
    positive = sorted(adj, key=lambda i: (-adj[i], i))[:k]
    negative = sorted(adj, key=lambda i: (adj[i], i))[:k]
    return positive, negative


def add_quadratic_terms(frame):
    """Append a standardized square of every continuous column ("_sq")."""
    out = frame
    for name, kind in zip(frame.names, frame.kinds):
        if kind != "continuous" or name.endswith("_sq"):
            continue
        raw = frame.raw_column(name)
        out = out.with_column(f"{name}_sq", raw ** 2)
    return out


def subset_analysis(listings, sentiment, predicates=None, target="rpms",
                    models=("ols",), k=5, seed=0, min_n=MIN_SUBSET_N,
                    configs=None):
    """Rerun stage 3 and the benchmark on listing subsets.

    Built-in predicates split at the sample medians of area and year_built.
    """
    if predicates is None:
        areas = np.array([rec.area for rec in listings])
        years = np.array([rec.year_built for rec in listings])
        med_area = float(np.median(areas))
        med_year = float(np.median(years))
        predicates = {
            "area_below_median": lambda r: r.area < med_area,
            "area_above_median": lambda r: r.area >= med_area,
            "year_below_median": lambda r: r.year_built < med_year,
            "year_above_median": lambda r: r.year_built >= med_year,
        }
    out = {}
    for name, pred in predicates.items():
        subset = [rec for rec in listings if pred(rec)]
        if len(subset) < min_n:
            raise SubsetTooSmall(f"predicate {name!r} selected only {len(subset)} listings")
        sub_sent = SentimentScores(
            {rec.id: sentiment.scores[rec.id] for rec in subset},
            {rec.id: sentiment.fold[rec.id] for rec in subset},
            sentiment.target_label)
        folds = make_folds([rec.id for rec in subset], k, seed)
        fit = stage3_hedonic(subset, sub_sent, target)
        j = fit.names.index(SENTIMENT_COLUMN)
        bench = benchmark(subset, sub_sent, models, folds, target, configs)
        out[name] = {
            "n": len(subset),
            "sentiment_coef": float(fit.coef[j]),
            "sentiment_p": float(fit.pvalue[j + 1]),
            "benchmark": bench,
        }
    return out


# ---------------------------------------------------------------------------
# full study

@dataclass
class StudyConfig:
    target: str = "rpms"
    k: int = 5
    seed: int = 7
    image_side: int = 64
    models: tuple = ("ols",)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    model_configs: ModelConfigs = field(default_factory=ModelConfigs)
    exemplar_k: int = 10
    run_subsets: bool = False


def _strip_arrays(bench):
    """Benchmark fragment without the per-observation arrays (for JSON)."""
    out = {}
    for model_name, res in bench.items():
        res2 = {}
        for key, val in res.items():
            if key in ("with", "without"):
                res2[key] = {kk: vv for kk, vv in val.items()
                             if kk not in ("sq_errors", "abs_errors")}
            else:
                res2[key] = val
        out[model_name] = res2
    return out


def run_study(listings, images, config):
    """Execute stage1 -> stage2 OOF -> stage3 -> benchmark and assemble the
    study report as a plain dict (JSON-ready) plus side tables."""
    ids = [rec.id for rec in listings]
    tensors = preprocess_images(images, config.image_side)
    folds = make_folds(ids, config.k, config.seed)
    fit1 = stage1(listings, config.target)
    sentiment = stage2_oof(tensors, listings, fit1, folds, config.train)
    fit3 = stage3_hedonic(listings, sentiment, config.target)
    bench = benchmark(listings, sentiment, config.models, folds,
                      config.target, config.model_configs)

    frame, augmented, tv = _frames_with_sentiment(listings, sentiment, config.target)
    pred_without = dict(zip(ids, stats.predict(fit1, frame)))
    pred_with = dict(zip(ids, stats.predict(fit3, augmented)))
    pos, neg = rank_exemplars(pred_with, pred_without,
                              min(config.exemplar_k, len(ids) // 2))
    j = fit3.names.index(SENTIMENT_COLUMN)
    report = {
        "schema_version": 1,
        "target": config.target,
        "seed": config.seed,
        "k": config.k,
        "n": len(ids),
        "stage1": fit1.to_dict(),
        "stage3": fit3.to_dict(),
        "sentiment_coef": float(fit3.coef[j]),
        "sentiment_p": float(fit3.pvalue[j + 1]),
        "adj_r2_without": fit1.adj_r2,
        "adj_r2_with": fit3.adj_r2,
        "aic_without": fit1.aic,
        "aic_with": fit3.aic,
        "aic_difference": fit1.aic - fit3.aic,
        "benchmark": _strip_arrays(bench),
        "exemplars": {"positive": pos, "negative": neg},
        "ccdf": {
            "rent": stats.ccdf([rec.rent for rec in listings]),
            "rpms": stats.ccdf([rec.rpms for rec in listings]),
        },
        "fold_assignment": {str(i): folds.assignment[i] for i in ids},
    }
    if config.run_subsets:
        subsets = subset_analysis(listings, sentiment, target=config.target,
                                  models=("ols",), k=config.k, seed=config.seed,
                                  configs=config.model_configs)
        report["subsets"] = {name: {kk: (vv if kk != "benchmark" else _strip_arrays(vv))
                                    for kk, vv in frag.items()}
                            for name, frag in subsets.items()}
    side = {"sentiment": sentiment, "benchmark_raw": bench, "folds": folds}
    return report, side
