"""Classical oversampling: random duplication, SMOTE, ADASYN.

All three methods operate on flattened {0,1} beat-image vectors with
Euclidean distance and are deterministic given the request seed. SMOTE and
ADASYN interpolate continuously between minority samples and re-binarize at
threshold 0.5 so the results are valid binary beat images.

The ``*_vectors`` functions hold the actual algorithms on plain float
matrices; the request-level wrappers handle dataset bookkeeping.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .errors import ContractError
from .ingest import HeartbeatClass
from .preprocess import BeatDataset, BeatImage

log = logging.getLogger(__name__)

METHODS = ("random", "smote", "adasyn", "adversarial")


@dataclass(frozen=True)
class OversampleRequest:
    dataset: BeatDataset
    target_class: HeartbeatClass
    target_count: int
    k_neighbors: int = 5
    rng_seed: int = 0

    def minority_indices(self):
        return self.dataset.indices(split="train", label=self.target_class)

    def validate(self, method):
        minority = self.minority_indices()
        m = len(minority)
        if self.target_count < m:
            raise ContractError(f"target_count {self.target_count} < current train count {m} of {self.target_class}")
        if self.k_neighbors < 1:
            raise ContractError(f"k_neighbors must be positive, got {self.k_neighbors}")
        if method == "smote":
            if m < 2:
                raise ContractError(f"SMOTE needs at least 2 minority samples, got {m}")
            if m <= self.k_neighbors:
                raise ContractError(
                    f"SMOTE needs k_neighbors < minority count ({m}); lower k_neighbors from {self.k_neighbors}"
                )
        if method == "adasyn":
            total = len(self.dataset.indices(split="train"))
            if self.k_neighbors >= total:
                raise ContractError(f"ADASYN needs k_neighbors < train-split size ({total})")
        return minority


@dataclass(frozen=True)
class SyntheticBatch:
    """Synthetic train-split images produced by one oversampling method."""

    images: list
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for img in self.images:
            if img.provenance != self.method:
                raise ValueError(f"image provenance {img.provenance!r} != method {self.method!r}")

    def __len__(self):
        return len(self.images)


def pairwise_sq_dists(Q, X):
    """Squared Euclidean distances between rows of Q and rows of X.

    Uses the q^2 - 2qx + x^2 expansion, which is exact on {0,1} vectors.
    """
    Q = np.asarray(Q, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    d2 = (Q * Q).sum(axis=1)[:, None] - 2.0 * (Q @ X.T) + (X * X).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def nearest_neighbors(X, k, exclude_self=True):
    """Indices of the k nearest rows of ``X`` per row (Euclidean).

    Ties are broken by lower row index; ``exclude_self`` removes each row
    from its own neighbor list.
    """
    d2 = pairwise_sq_dists(X, X)
    if exclude_self:
        np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def largest_remainder(weights, total):
    """Integer allocation of ``total`` proportional to ``weights``.

    Floors each share, then hands the remaining units to the largest
    fractional parts (ties to lower index). The result sums to ``total``
    exactly and is zero wherever the weight is zero.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if total < 0:
        raise ValueError("total must be >= 0")
    s = weights.sum()
    if s <= 0:
        raise ValueError("weights must sum to a positive value")
    shares = weights / s * total
    alloc = np.floor(shares).astype(np.int64)
    remainder = total - int(alloc.sum())
    if remainder > 0:
        frac = shares - alloc
        # stable sort on -frac: equal fractions resolve to lower index
        order = np.argsort(-frac, kind="stable")
        alloc[order[:remainder]] += 1
    return alloc


def smote_vectors(X, n, k, rng):
    """Generate ``n`` SMOTE interpolants from minority matrix ``X``.

    Returns ``(synthetic, meta)`` where ``meta[t] = (i, j, u)`` records that
    ``synthetic[t] = X[i] + u * (X[j] - X[i])`` with ``X[j]`` one of the k
    nearest minority neighbors of ``X[i]``.
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise ContractError("SMOTE needs at least 2 samples")
    if not 1 <= k < m:
        raise ContractError(f"SMOTE needs 1 <= k < {m}, got k={k}; lower k")
    nn = nearest_neighbors(X, k)
    out = np.empty((n, X.shape[1]), dtype=np.float64)
    meta = []
    for t in range(n):
        i = int(rng.integers(m))
        j = int(nn[i, int(rng.integers(k))])
        u = float(rng.random())
        out[t] = X[i] + u * (X[j] - X[i])
        meta.append((i, j, u))
    return out, meta


def adasyn_allocation(X_min, X_maj, total, k):
    """Per-sample synthetic counts g_i from the ADASYN density criterion.

    For each minority row, r_i = (majority members among its k nearest
    neighbors in the combined set) / k; counts are the largest-remainder
    allocation of ``total`` proportional to normalized r. When no minority
    point has a majority neighbor the allocation falls back to uniform.
    """
    X_min = np.asarray(X_min, dtype=np.float64)
    X_maj = np.asarray(X_maj, dtype=np.float64)
    m = X_min.shape[0]
    combined = np.concatenate([X_min, X_maj], axis=0) if X_maj.size else X_min
    if k >= combined.shape[0]:
        raise ContractError(f"ADASYN needs k < combined train size ({combined.shape[0]})")
    d2 = pairwise_sq_dists(X_min, combined)
    d2[np.arange(m), np.arange(m)] = np.inf  # a minority point is not its own neighbor
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    delta = (order >= m).sum(axis=1)  # rows >= m are majority samples
    r = delta.astype(np.float64) / k
    if r.sum() == 0.0:
        log.info("ADASYN: no minority point has majority neighbors; uniform fallback")
        r = np.ones(m, dtype=np.float64)
    return largest_remainder(r, total)


def adasyn_vectors(X_min, X_maj, total, k, rng):
    """Generate ADASYN interpolants: g_i samples from each minority row.

    Each sample moves from X_min[i] toward one of its (at most) k nearest
    minority neighbors, SMOTE-style. With a single minority row the samples
    are copies of it.
    """
    X_min = np.asarray(X_min, dtype=np.float64)
    m = X_min.shape[0]
    alloc = adasyn_allocation(X_min, X_maj, total, k)
    k_min = min(k, m - 1)
    nn = nearest_neighbors(X_min, k_min) if k_min >= 1 else None
    out = np.empty((total, X_min.shape[1]), dtype=np.float64)
    meta = []
    t = 0
    for i in range(m):
        for _ in range(int(alloc[i])):
            if nn is None:
                out[t] = X_min[i]
                meta.append((i, i, 0.0))
            else:
                j = int(nn[i, int(rng.integers(k_min))])
                u = float(rng.random())
                out[t] = X_min[i] + u * (X_min[j] - X_min[i])
                meta.append((i, j, u))
            t += 1
    return out, alloc, meta


def binarize(vectors, threshold=0.5):
    """Map continuous interpolants in [0,1] back to binary pixel vectors."""
    return (np.asarray(vectors) >= threshold).astype(np.uint8)


def _package(req, vectors_binary, method):
    h, w = req.dataset.image_size
    images = []
    for t, vec in enumerate(vectors_binary):
        images.append(
            BeatImage(
                pixels=vec.reshape(h, w),
                label=req.target_class,
                source=f"{method}:{t:05d}",
                provenance=method,
            )
        )
    return SyntheticBatch(images=images, method=method)


def random_oversample(req):
    """Duplicate minority train images uniformly at random with replacement."""
    minority = req.validate("random")
    n = req.target_count - len(minority)
    rng = np.random.default_rng(req.rng_seed)
    images = []
    for t in range(n):
        src = req.dataset.items[minority[int(rng.integers(len(minority)))]]
        images.append(
            BeatImage(pixels=src.pixels.copy(), label=req.target_class, source=f"random:{t:05d}", provenance="random")
        )
    return SyntheticBatch(images=images, method="random")


def smote(req):
    """SMOTE on flattened pixel vectors; interpolants re-binarized at 0.5."""
    minority = req.validate("smote")
    n = req.target_count - len(minority)
    rng = np.random.default_rng(req.rng_seed)
    X = req.dataset.pixel_matrix(minority)
    vectors, _ = smote_vectors(X, n, req.k_neighbors, rng)
    return _package(req, binarize(vectors), "smote")


def adasyn(req, majority=None):
    """ADASYN on flattened pixel vectors; density over the full train split.

    ``majority`` defaults to the train-split samples of all other classes.
    """
    minority = req.validate("adasyn")
    n = req.target_count - len(minority)
    rng = np.random.default_rng(req.rng_seed)
    X_min = req.dataset.pixel_matrix(minority)
    if majority is None:
        other = [i for i in req.dataset.indices(split="train") if req.dataset.items[i].label != req.target_class]
        majority = req.dataset.pixel_matrix(other) if other else np.empty((0, X_min.shape[1]))
    vectors, _, _ = adasyn_vectors(X_min, np.asarray(majority, dtype=np.float64), n, req.k_neighbors, rng)
    return _package(req, binarize(vectors), "adasyn")


def oversample_with(method, req, **kwargs):
    """Dispatch one of the classical methods by name."""
    table = {"random": random_oversample, "smote": smote, "adasyn": adasyn}
    if method not in table:
        raise ContractError(f"unknown classical oversampling method {method!r}")
    return table[method](req, **kwargs)
