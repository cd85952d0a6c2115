"""
align_losses.py - Alignment and generation objectives with analytic gradients

Stage 1 aligns projected object features with text embeddings through a
weighted sum of mean squared error and cosine distance; stage 2 is plain
cross-entropy. Gradients are checked against central finite differences.
"""

from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from config import LOSS_CONFIG
from errors import ZeroNormVector

PROB_FLOOR = 1e-12
SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    vectors: np.ndarray
    targets: np.ndarray
    alpha: float = LOSS_CONFIG['alpha']
    beta: float = LOSS_CONFIG['beta']

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        object.__setattr__(self, 'vectors', v)
        object.__setattr__(self, 'targets', t)
        if v.ndim != 2 or v.shape != t.shape:
            raise ValueError(f"vectors {v.shape} and targets {t.shape} must be matching N x d grids")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(t))):
            raise ValueError("batch contains non-finite values")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")

    def with_vectors(self, vectors: np.ndarray) -> 'EmbeddingBatch':
        return EmbeddingBatch(vectors, self.targets, self.alpha, self.beta)


@dataclass(frozen=True, eq=False)
class ProbDistribution:
    truth: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.truth, dtype=float)
        p = np.asarray(self.predicted, dtype=float)
        object.__setattr__(self, 'truth', y)
        object.__setattr__(self, 'predicted', p)
        if y.ndim != 1 or y.shape != p.shape:
            raise ValueError("truth and predicted must be vectors of equal length")
        if np.any(y < 0) or abs(y.sum() - 1.0) > SUM_TOLERANCE:
            raise ValueError("truth must be non-negative and sum to 1")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > SUM_TOLERANCE:
            raise ValueError("predicted must be strictly positive and sum to 1")


def _norms(batch: EmbeddingBatch):
    v_norm = np.linalg.norm(batch.vectors, axis=1)
    t_norm = np.linalg.norm(batch.targets, axis=1)
    if batch.beta > 0 and (np.any(v_norm == 0) or np.any(t_norm == 0)):
        raise ZeroNormVector("cosine term undefined for a zero-norm row")
    return v_norm, t_norm


def stage1_loss(batch: EmbeddingBatch) -> float:
    """alpha * mean((v - v_hat)^2) + beta * mean_i(1 - cos(v_i, v_hat_i))."""
    v, t = batch.vectors, batch.targets
    loss = batch.alpha * float(np.mean((v - t) ** 2))
    if batch.beta > 0:
        v_norm, t_norm = _norms(batch)
        # 1 - cos written as half the squared distance of the unit vectors: exact 0 for equal rows
        gap = v / v_norm[:, None] - t / t_norm[:, None]
        loss += batch.beta * float(np.mean(0.5 * np.sum(gap ** 2, axis=1)))
    return loss


def stage1_loss_grad(batch: EmbeddingBatch) -> np.ndarray:
    v, t = batch.vectors, batch.targets
    n, d = v.shape
    grad = 2.0 * batch.alpha * (v - t) / (n * d)
    if batch.beta > 0:
        v_norm, t_norm = _norms(batch)
        cos = np.sum(v * t, axis=1) / (v_norm * t_norm)
        dcos = t / (v_norm * t_norm)[:, None] - cos[:, None] * v / (v_norm ** 2)[:, None]
        grad -= batch.beta * dcos / n
    return grad


def cross_entropy(dist: ProbDistribution) -> float:
    return float(-np.sum(dist.truth * np.log(np.maximum(dist.predicted, PROB_FLOOR))))


def cross_entropy_grad(dist: ProbDistribution) -> np.ndarray:
    """Gradient with respect to the predicted probabilities, entries treated independently."""
    return -dist.truth / np.maximum(dist.predicted, PROB_FLOOR)


def finite_difference_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                           h: float = LOSS_CONFIG['fd_step']) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[idx] = h
        grad[idx] = (f(x + step) - f(x - step)) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def entropy(y: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    positive = y[y > 0]
    return float(-np.sum(positive * np.log(positive)))


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    # rows kept away from the origin so the cosine term stays smooth
    rows = rng.normal(size=(n, d))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows * rng.uniform(0.5, 2.0, size=(n, 1))


def random_batch(rng: np.random.Generator, max_n: int = 8, max_d: int = 16) -> EmbeddingBatch:
    n = int(rng.integers(1, max_n + 1))
    d = int(rng.integers(2, max_d + 1))
    return EmbeddingBatch(_unit_rows(rng, n, d), _unit_rows(rng, n, d),
                          alpha=float(rng.uniform(0.1, 2.0)), beta=float(rng.uniform(0.1, 2.0)))


def random_distribution(rng: np.random.Generator, max_v: int = 32) -> ProbDistribution:
    size = int(rng.integers(2, max_v + 1))
    truth = rng.dirichlet(np.ones(size))
    # half uniform mass keeps every predicted entry >= 1 / (2 * size)
    predicted = 0.5 * rng.dirichlet(np.ones(size)) + 0.5 / size
    return ProbDistribution(truth, predicted / predicted.sum())


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    passed: bool


def gradient_check_suite(seeds: int = LOSS_CONFIG['selftest_seeds'],
                         tolerance: float = LOSS_CONFIG['fd_tolerance']) -> List[CheckResult]:
    """Finite-difference checks for both objectives plus the Gibbs inequality, over seeded random data."""
    stage1_errors, ce_errors, gibbs_margins = [], [], []
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        batch = random_batch(rng)
        numeric = finite_difference_grad(lambda x: stage1_loss(batch.with_vectors(x)), batch.vectors)
        stage1_errors.append(relative_error(stage1_loss_grad(batch), numeric))

        dist = random_distribution(rng)
        numeric = finite_difference_grad(lambda p: float(-np.sum(dist.truth * np.log(p))), dist.predicted)
        ce_errors.append(relative_error(cross_entropy_grad(dist), numeric))

        gibbs_margins.append(cross_entropy(dist) - entropy(dist.truth))

    worst_stage1, worst_ce, worst_gibbs = max(stage1_errors), max(ce_errors), min(gibbs_margins)
    return [
        CheckResult('stage1_loss_grad', worst_stage1, worst_stage1 <= tolerance),
        CheckResult('cross_entropy_grad', worst_ce, worst_ce <= tolerance),
        CheckResult('gibbs_inequality', worst_gibbs, worst_gibbs >= -1e-12),
    ]
