"""Learning-guided ranking: cluster history, classify new jobs, predict, score.

The pipeline clusters historical jobs over static and trace-summary
features, maps fresh submissions to a cluster using only the features
known at submit time, predicts runtime and power with a per-cluster
linear model, and ranks the queue with a decaying exponential score:
larger feature values always score lower, so a positive weight on node
count prefers smaller jobs.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

import numpy as np

from .model import Job, SystemConfig
from .power_cooling import node_power

STATIC_FEATURES = ("nodes_requested", "wall_limit", "priority")
DYNAMIC_FEATURES = ("util_max", "util_min", "util_mean", "util_std")
SCORED_FEATURES = ("nodes_requested", "wall_limit", "priority", "pred_runtime", "pred_avg_power")
TARGETS = ("runtime", "avg_power")

DEFAULT_K = 5
DEFAULT_ALPHA = {"nodes_requested": 1.0, "pred_runtime": 1.0}

_MAX_ITER = 100


@dataclass(frozen=True, slots=True)
class FeatureVector:
    """Static features are always known; trace summaries only when data exists."""

    static: tuple[float, float, float]
    dynamic_summary: tuple[float, float, float, float] | None
    normalized: bool = False


@dataclass(frozen=True, slots=True)
class ScoreWeights:
    alpha: tuple[tuple[str, float], ...]

    def __post_init__(self):
        values = dict(self.alpha)
        unknown = set(values) - set(SCORED_FEATURES)
        if unknown:
            raise ValueError(f"unknown scored features: {sorted(unknown)}")
        if not any(v != 0.0 for v in values.values()):
            raise ValueError("at least one score weight must be nonzero")
        if any(not math.isfinite(v) for v in values.values()):
            raise ValueError("score weights must be finite")

    @classmethod
    def default(cls) -> "ScoreWeights":
        return cls(tuple(sorted(DEFAULT_ALPHA.items())))

    def items(self) -> list[tuple[str, float]]:
        return [(k, v) for k, v in self.alpha if v != 0.0]


@dataclass
class ClusterModel:
    """k-means centroids plus per-cluster affine predictors.

    Features are z-scored with the stored means/scales; classification of
    new jobs uses only the static subspace of the centroids. Predictor
    coefficients act on [1, normalized static...]. Clusters with fewer
    than two members degrade to a constant (their target mean).
    """

    k: int
    feature_names: tuple[str, ...]
    means: np.ndarray
    scales: np.ndarray
    centroids: np.ndarray
    predictors: dict[str, np.ndarray]
    weights: ScoreWeights

    @property
    def static_dims(self) -> int:
        return len(STATIC_FEATURES)


def featurize(job: Job) -> FeatureVector:
    """Feature vector of one job; scalar averages degrade to a flat summary."""
    static = (float(job.nodes_requested), float(job.wall_limit), float(job.priority))
    if job.trace is not None:
        values = np.asarray(job.trace.values, dtype=float)
        hi, lo = float(values.max()), float(values.min())
        if hi == lo:
            dynamic = (hi, lo, hi, 0.0)
        else:
            dynamic = (hi, lo, float(values.mean()), float(values.std()))
    elif job.scalar_avg_util is not None:
        v = float(job.scalar_avg_util)
        dynamic = (v, v, v, 0.0)
    else:
        dynamic = None
    return FeatureVector(static=static, dynamic_summary=dynamic)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: random.Random) -> np.ndarray:
    n = len(points)
    centroids = [points[rng.randrange(n)]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centroids], axis=0
        )
        total = float(d2.sum())
        if total == 0.0:
            centroids.append(points[rng.randrange(n)])
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        centroids.append(points[min(idx, n - 1)])
    return np.array(centroids)


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int,
    inertia_history: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from a seeded k-means++ start.

    Returns (centroids, labels). Ties in assignment take the lowest label;
    a cluster that empties out is reseeded with the point farthest from
    its current centroid. Same seed and data give identical centroids.
    Pass a list as inertia_history to record the post-assignment inertia
    of every iteration.
    """
    points = np.asarray(points, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(points):
        raise ValueError(f"k={k} exceeds {len(points)} points")
    rng = random.Random(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    labels = np.full(len(points), -1)
    for _ in range(_MAX_ITER):
        dists = np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        for c in range(k):
            if not np.any(new_labels == c):
                per_point = dists[np.arange(len(points)), new_labels]
                far = int(np.argmax(per_point))
                centroids[c] = points[far]
                new_labels[far] = c
        if inertia_history is not None:
            inertia_history.append(inertia(points, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return centroids, labels


def inertia(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum((points - centroids[labels]) ** 2))


def _feature_matrix(jobs: list[Job]) -> np.ndarray:
    rows = []
    for job in jobs:
        fv = featurize(job)
        dynamic = fv.dynamic_summary or (0.0, 0.0, 0.0, 0.0)
        rows.append(fv.static + dynamic)
    return np.asarray(rows, dtype=float)


def train_model(
    jobs: list[Job],
    config: SystemConfig,
    k: int = DEFAULT_K,
    seed: int = 0,
    weights: ScoreWeights | None = None,
) -> ClusterModel:
    """Fit clustering and per-cluster predictors on jobs with recorded runs."""
    usable = [j for j in jobs if j.times.duration is not None]
    if len(usable) < k:
        raise ValueError(f"need at least k={k} jobs with recorded runtimes, got {len(usable)}")
    raw = _feature_matrix(usable)
    means = raw.mean(axis=0)
    scales = raw.std(axis=0)
    scales[scales == 0.0] = 1.0
    normalized = (raw - means) / scales
    centroids, labels = kmeans_fit(normalized, k, seed)

    targets = {
        "runtime": np.array([float(j.times.duration) for j in usable]),
        "avg_power": np.array(
            [
                j.nodes_requested * node_power(_mean_util(j), config)
                for j in usable
            ]
        ),
    }
    static = normalized[:, : len(STATIC_FEATURES)]
    predictors: dict[str, np.ndarray] = {}
    for name, y in targets.items():
        coefs = np.zeros((k, 1 + len(STATIC_FEATURES)))
        for c in range(k):
            mask = labels == c
            if mask.sum() < 2:
                coefs[c, 0] = y[mask].mean() if mask.any() else float(y.mean())
                continue
            design = np.hstack([np.ones((mask.sum(), 1)), static[mask]])
            sol, *_ = np.linalg.lstsq(design, y[mask], rcond=None)
            coefs[c] = sol
        predictors[name] = coefs
    return ClusterModel(
        k=k,
        feature_names=STATIC_FEATURES + DYNAMIC_FEATURES,
        means=means,
        scales=scales,
        centroids=centroids,
        predictors=predictors,
        weights=weights or ScoreWeights.default(),
    )


def _mean_util(job: Job) -> float:
    if job.trace is not None:
        return float(np.mean(job.trace.values))
    if job.scalar_avg_util is not None:
        return job.scalar_avg_util
    return 0.0


def _normalize_static(model: ClusterModel, static: tuple[float, ...]) -> np.ndarray:
    d = model.static_dims
    return (np.asarray(static, dtype=float) - model.means[:d]) / model.scales[:d]


def assign_cluster(model: ClusterModel, static: tuple[float, ...]) -> int:
    """Nearest centroid over the static subspace; ties take the lowest label."""
    z = _normalize_static(model, static)
    dists = np.linalg.norm(model.centroids[:, : model.static_dims] - z, axis=1)
    return int(np.argmin(dists))


def predict_metrics(model: ClusterModel, cluster: int, static: tuple[float, ...]) -> dict[str, float]:
    """Affine per-cluster prediction of runtime and power, clamped to >= 0."""
    z = _normalize_static(model, static)
    design = np.concatenate([[1.0], z])
    return {
        name: max(0.0, float(coefs[cluster] @ design))
        for name, coefs in model.predictors.items()
    }


def score(features: list[float], alpha: list[float]) -> float:
    """Weighted sum of exp(1/sqrt(x+1)) terms; strictly decreasing in each x.

    Every feature must exceed -1 (node counts, durations, and powers are
    nonnegative in practice), otherwise the inner root leaves its domain.
    """
    if len(features) != len(alpha):
        raise ValueError("feature and weight vectors differ in length")
    total = 0.0
    for x, a in zip(features, alpha):
        if x <= -1.0:
            raise ValueError(f"feature value {x} outside the score domain (> -1)")
        total += a * math.exp(1.0 / math.sqrt(x + 1.0))
    return total


def score_job(model: ClusterModel, job: Job) -> float:
    """Rank score of one job from its static features and predictions.

    Only features with nonzero weight enter the sum, so unused channels
    (for example negative priorities) never hit the score domain check.
    """
    static = (float(job.nodes_requested), float(job.wall_limit), float(job.priority))
    cluster = assign_cluster(model, static)
    predicted = predict_metrics(model, cluster, static)
    values = {
        "nodes_requested": static[0],
        "wall_limit": static[1],
        "priority": static[2],
        "pred_runtime": predicted["runtime"],
        "pred_avg_power": predicted["avg_power"],
    }
    active = model.weights.items()
    return score([values[name] for name, _ in active], [a for _, a in active])


def rank_jobs(queue: list[Job], model: ClusterModel) -> list[Job]:
    """Attach scores and order the queue best-first (score desc, submit, id)."""
    scored = [job if job.score is not None else job.with_score(score_job(model, job)) for job in queue]
    scored.sort(key=lambda j: (-j.score, j.submit, j.id))
    return scored


def save_model(model: ClusterModel, path: str) -> None:
    payload = {
        "k": model.k,
        "feature_names": list(model.feature_names),
        "means": model.means.tolist(),
        "scales": model.scales.tolist(),
        "centroids": model.centroids.tolist(),
        "predictors": {name: coefs.tolist() for name, coefs in model.predictors.items()},
        "alpha": dict(model.weights.alpha),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str, alpha_override: dict[str, float] | None = None) -> ClusterModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    alpha = dict(payload["alpha"])
    if alpha_override:
        alpha.update(alpha_override)
    return ClusterModel(
        k=int(payload["k"]),
        feature_names=tuple(payload["feature_names"]),
        means=np.asarray(payload["means"], dtype=float),
        scales=np.asarray(payload["scales"], dtype=float),
        centroids=np.asarray(payload["centroids"], dtype=float),
        predictors={
            name: np.asarray(coefs, dtype=float)
            for name, coefs in payload["predictors"].items()
        },
        weights=ScoreWeights(tuple(sorted(alpha.items()))),
    )
