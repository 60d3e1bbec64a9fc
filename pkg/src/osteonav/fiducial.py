"""Lens-centre extraction: GMM/EM clustering, sampled algebraic sphere fit, ordering."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (AmbiguousCorrespondence, DegenerateCluster, InvalidTrackerModel,
                     SingularSystem, TooFewPoints)
from .ingest import PointCloud

EM_TOL = 1e-8
EM_MAX_ITER = 500
EM_RESTARTS = 5
REG_COVAR = 1e-6
MIN_COV_DET = 1e-12

SAMPLE_RATIO = 0.2
MAX_COND = 1e10
MAX_DRAWS = 20

MIN_SEPARATION = 1.0
MATCH_MARGIN = 0.2


# -- clustering ---------------------------------------------------------------

def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(len(x)) if total <= 0 else rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _log_gauss(x, mean, cov):
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (x - mean).T)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (np.sum(z**2, axis=0) + log_det + x.shape[1] * np.log(2 * np.pi))


def _em(x, k, rng):
    """One EM run from k-means++ seeds. Returns (log-likelihood, resp) or None if degenerate."""
    n, dim = x.shape
    means = _kmeanspp(x, k, rng)
    label = np.argmin(((x[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    resp = np.eye(k)[label]
    prev = -np.inf
    for _ in range(EM_MAX_ITER):
        # M-step
        nk = resp.sum(axis=0)
        if np.any(nk < dim + 1):
            return None
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        covs = np.empty((k, dim, dim))
        for j in range(k):
            d = x - means[j]
            covs[j] = (resp[:, j, None] * d).T @ d / nk[j] + REG_COVAR * np.eye(dim)
            if np.linalg.det(covs[j]) < MIN_COV_DET:
                return None
        # E-step
        logp = np.column_stack([np.log(weights[j]) + _log_gauss(x, means[j], covs[j])
                                for j in range(k)])
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        resp = np.exp(logp - norm[:, None])
        if abs(ll - prev) < EM_TOL:
            break
        prev = ll
    return ll, resp


def cluster_fiducials(cloud: PointCloud, k=4, seed=0) -> list[PointCloud]:
    """Split a cloud into k clusters with a full-covariance Gaussian mixture.

    Points are hard-assigned to the component of maximum posterior.  The best
    of several k-means++-seeded EM runs (by log-likelihood) is kept.  Output
    clusters are ordered lexicographically by their mean.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = cloud.points
    if len(x) < 10 * k:
        raise TooFewPoints(f"need at least {10 * k} points for k={k}, got {len(x)}")
    if k == 1:
        return [cloud]
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(EM_RESTARTS):
        run = _em(x, k, rng)
        if run is not None and (best is None or run[0] > best[0]):
            best = run
    if best is None:
        raise DegenerateCluster("every EM restart collapsed a component")
    label = np.argmax(best[1], axis=1)
    groups = [x[label == j] for j in range(k)]
    if any(len(g) == 0 for g in groups):
        raise DegenerateCluster("a mixture component received no points")
    groups.sort(key=lambda g: tuple(g.mean(axis=0)))
    return [PointCloud(g, cloud.frame) for g in groups]


# -- sphere fit ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphereFit:
    center: np.ndarray
    radius: float
    rms_residual: float
    inlier_count: int


def sphere_normal_equations(points):
    """Matrix and right-hand side of the algebraic ball-centre regression.

    A = sum x x^T - Ns xbar xbar^T,  b = 1/2 sum (|x|^2 x - M1 x), with
    M1 = mean |x|^2.  Also returns (M1, M2 = xbar).
    """
    p = np.asarray(points, float)
    ns = len(p)
    m2 = p.mean(axis=0)
    sq = np.einsum("ij,ij->i", p, p)
    m1 = sq.mean()
    a = p.T @ p - ns * np.outer(m2, m2)
    b = 0.5 * ((sq - m1)[:, None] * p).sum(axis=0)
    return a, b, m1, m2


def solve_sphere(points):
    """Centre and radius from the sampled points (no RANSAC). Raises SingularSystem."""
    p = np.asarray(points, float)
    # the regression is translation-equivariant; working about the sample mean
    # keeps the cubic terms of b small
    shift = p.mean(axis=0)
    a, b, m1, m2 = sphere_normal_equations(p - shift)
    if not np.all(np.isfinite(a)) or np.linalg.cond(a) > MAX_COND:
        raise SingularSystem("sphere design matrix is ill-conditioned")
    c = np.linalg.inv(a) @ b
    r2 = m1 - 2.0 * m2 @ c + c @ c
    if r2 <= 0:
        raise SingularSystem("non-positive squared radius")
    return c + shift, float(np.sqrt(r2))


def fit_sphere(points, sample_ratio=SAMPLE_RATIO, seed=0) -> SphereFit:
    """Fit a sphere to a randomly drawn subset of round(sample_ratio*N) points.

    Degenerate draws are redrawn (up to 20 times).  The RMS residual is
    reported over all N points.
    """
    x = points.points if isinstance(points, PointCloud) else np.asarray(points, float)
    if not 0.0 < sample_ratio <= 1.0:
        raise ValueError("sample_ratio must be in (0, 1]")
    n = len(x)
    ns = max(4, int(round(sample_ratio * n)))
    if n < 4:
        raise TooFewPoints("sphere fit needs at least 4 points")
    ns = min(ns, n)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_DRAWS):
        idx = rng.choice(n, size=ns, replace=False) if ns < n else np.arange(n)
        try:
            center, radius = solve_sphere(x[idx])
        except SingularSystem:
            if ns == n:
                break
            continue
        res = np.linalg.norm(x - center, axis=1) - radius
        return SphereFit(center, radius, float(np.sqrt(np.mean(res**2))), ns)
    raise SingularSystem(f"no well-conditioned sample in {MAX_DRAWS} draws")


# -- ordering -----------------------------------------------------------------

def pairwise_distances(centers) -> np.ndarray:
    c = np.asarray(centers, float)
    return np.linalg.norm(c[:, None] - c[None], axis=-1)


@dataclass(frozen=True, eq=False)
class TrackerModel:
    centers: np.ndarray
    min_separation: float = MIN_SEPARATION

    def __post_init__(self):
        c = np.asarray(self.centers, float)
        if c.shape != (4, 3):
            raise InvalidTrackerModel(f"expected 4 centres, got shape {c.shape}")
        d = np.sort(self.distances_of(c))
        if np.min(np.diff(d)) < self.min_separation:
            raise InvalidTrackerModel("pairwise distances are not distinct enough")
        sv = np.linalg.svd(c - c.mean(axis=0), compute_uv=False)
        if sv[1] <= 1e-3:
            raise InvalidTrackerModel("centres are collinear")
        object.__setattr__(self, "centers", c)

    @staticmethod
    def distances_of(c):
        d = pairwise_distances(c)
        return d[np.triu_indices(4, 1)]

    @property
    def distances(self) -> np.ndarray:
        return self.distances_of(self.centers)


def correspondence_cost(measured, model_distances, perm) -> float:
    dm = pairwise_distances(np.asarray(measured, float)[list(perm)])
    return float(np.abs(dm[np.triu_indices(4, 1)] - model_distances).sum())


def sort_centers(measured, model: TrackerModel, match_margin=MATCH_MARGIN):
    """Match measured centres to the model by pairwise distances.

    Returns (perm, discrepancy): ``measured[perm[i]]`` corresponds to
    ``model.centers[i]``; discrepancy is the best cost divided by 6.
    """
    m = np.asarray(measured, float)
    if m.shape != (4, 3):
        raise ValueError(f"expected 4 measured centres, got shape {m.shape}")
    costs = sorted((correspondence_cost(m, model.distances, p), p)
                   for p in itertools.permutations(range(4)))
    (best, perm), (second, _) = costs[0], costs[1]
    if second - best < match_margin:
        raise AmbiguousCorrespondence(
            f"best and runner-up correspondences differ by {second - best:.3f} mm")
    return perm, best / 6.0


def extract_centers(cloud: PointCloud, k=4, seed=0, sample_ratio=SAMPLE_RATIO):
    """Cluster then fit a sphere per cluster. Returns the list of SphereFit."""
    clusters = cluster_fiducials(cloud, k, seed)
    return [fit_sphere(c, sample_ratio, seed + i) for i, c in enumerate(clusters)]
