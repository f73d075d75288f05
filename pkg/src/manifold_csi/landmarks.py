"""Landmark dictionary learning by alternating minimization.

A dictionary of landmark columns is fit to a dataset so that every sample is
approximated by an affine (sum-to-one) combination of its k nearest landmarks.
The objective combines the reconstruction residual, a squared-weight locality
penalty that keeps combinations on nearby landmarks, and a row-sparsity term
(sum of weight-row norms) that prunes landmarks nobody uses. Both the
dictionary-column update and the per-sample weight update have closed forms;
the row-sparsity term is handled by diagonal reweighting, which makes the
total objective non-increasing across iterations.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg as sla
from scipy import sparse

from .validation import as_real_matrix, require

__all__ = [
    "TrainConfig",
    "LocalWeights",
    "ObjectiveTerms",
    "ObjectiveTrace",
    "DeadLandmarkError",
    "WeightSolveError",
    "knn_landmarks",
    "objective_value",
    "update_g",
    "update_dictionary_column",
    "solve_local_weights",
    "train_landmarks",
    "embed_training_set",
    "fit_low_dim_dictionary",
    "fit_reconstruction_dictionaries",
    "approximation_error",
]


class DeadLandmarkError(RuntimeError):
    """A landmark's weight row has (numerically) zero energy."""

    def __init__(self, index: int):
        super().__init__(f"landmark {index} is unused (zero weight-row energy)")
        self.index = index


class WeightSolveError(np.linalg.LinAlgError):
    """The local weight system is singular even after diagonal loading."""


@dataclass
class TrainConfig:
    """Hyperparameters of the landmark learner.

    ``ridge_eps`` is a relative diagonal-loading factor for every matrix
    solve (scaled by the mean diagonal of the matrix being inverted) and the
    absolute floor used when guarding weight-row norms.
    """

    m_landmarks: int = 400
    k_neighbors: int = 70
    intrinsic_dim: int = 6
    lam: float = 1e-3
    mu: float = 1e-3
    max_iters: int = 50
    rel_tol: float = 1e-6
    ridge_eps: float = 1e-10
    embed_method: str = "pca"
    rng_seed: int = 0

    def validate(self, n_features: int | None = None, n_samples: int | None = None) -> None:
        require(self.m_landmarks >= 1, "m_landmarks must be >= 1")
        require(1 <= self.k_neighbors <= self.m_landmarks, "need 1 <= k_neighbors <= m_landmarks")
        require(self.intrinsic_dim >= 1, "intrinsic_dim must be >= 1")
        require(self.lam >= 0.0, "lam must be >= 0")
        require(self.mu >= 0.0, "mu must be >= 0")
        require(self.max_iters >= 0, "max_iters must be >= 0")
        require(self.rel_tol >= 0.0, "rel_tol must be >= 0")
        require(self.ridge_eps > 0.0, "ridge_eps must be > 0")
        require(self.embed_method in ("pca", "lle"), "embed_method must be 'pca' or 'lle'")
        if n_samples is not None:
            require(self.m_landmarks <= n_samples, "m_landmarks must not exceed the sample count")
        if n_features is not None:
            require(
                self.intrinsic_dim < n_features,
                "intrinsic_dim must be below the ambient dimension",
            )


class ObjectiveTerms(NamedTuple):
    fit: float
    locality: float
    sparsity: float
    total: float


@dataclass
class ObjectiveTrace:
    """Per-iteration objective breakdown. Entry 0 is the post-init state."""

    n_samples: int
    fit: list = field(default_factory=list)
    locality: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, terms: ObjectiveTerms) -> None:
        self.fit.append(terms.fit)
        self.locality.append(terms.locality)
        self.sparsity.append(terms.sparsity)
        self.total.append(terms.total)

    def __len__(self) -> int:
        return len(self.total)

    def per_sample_totals(self) -> np.ndarray:
        """Totals divided by the sample count, for size-independent plots."""
        return np.asarray(self.total) / max(self.n_samples, 1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "fit", "locality", "sparsity", "total"])
            for i in range(len(self)):
                writer.writerow(
                    [i, repr(self.fit[i]), repr(self.locality[i]), repr(self.sparsity[i]), repr(self.total[i])]
                )


class LocalWeights:
    """Column-sparse weight matrix: per column, exactly k (index, value) pairs.

    The structural support of column i is its k-nearest-landmark index set,
    and values sum to one per column.
    """

    def __init__(self, indices: np.ndarray, values: np.ndarray, m_landmarks: int):
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        require(indices.shape == values.shape, "indices and values must have identical shape")
        require(indices.ndim == 2, "indices must be (k, n_samples)")
        self.indices = indices
        self.values = values
        self.m_landmarks = int(m_landmarks)

    @property
    def k(self) -> int:
        return self.indices.shape[0]

    @property
    def n_samples(self) -> int:
        return self.indices.shape[1]

    @property
    def shape(self) -> tuple:
        return (self.m_landmarks, self.n_samples)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.indices, np.arange(self.n_samples)[None, :]] = self.values
        return dense

    def to_csc(self) -> sparse.csc_matrix:
        k, n = self.indices.shape
        indptr = np.arange(0, k * n + 1, k)
        return sparse.csc_matrix(
            (self.values.ravel(order="F"), self.indices.ravel(order="F"), indptr),
            shape=self.shape,
        )

    def combine(self, columns: np.ndarray) -> np.ndarray:
        """Linear combinations ``columns @ W`` as a dense array."""
        return (self.to_csc().T @ columns.T).T

    def row_norms(self) -> np.ndarray:
        sq = np.zeros(self.m_landmarks)
        np.add.at(sq, self.indices, self.values**2)
        return np.sqrt(sq)

    def column_sums(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def row(self, j: int) -> tuple:
        """Column indices and values of row j (the samples using landmark j)."""
        pos, cols = np.nonzero(self.indices == j)
        return cols, self.values[pos, cols]


def knn_landmarks(x: np.ndarray, landmarks: np.ndarray, k: int) -> tuple:
    """Indices of the k nearest landmark columns plus the neighbor matrix.

    Ties are broken by ascending column index.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    landmarks = as_real_matrix(landmarks, "landmarks")
    require(k <= landmarks.shape[1], "k must not exceed the landmark count")
    idx = _knn_batch(x[:, None], landmarks, k)[:, 0]
    return idx, landmarks[:, idx]


def _knn_batch(queries: np.ndarray, landmarks: np.ndarray, k: int) -> np.ndarray:
    """(k, n_queries) nearest-landmark indices; stable sort breaks ties by index."""
    d2 = (
        np.sum(queries**2, axis=0)[:, None]
        + np.sum(landmarks**2, axis=0)[None, :]
        - 2.0 * (queries.T @ landmarks)
    )
    return np.argsort(d2, axis=1, kind="stable")[:, :k].T


def update_g(weights, ridge_eps: float = 1e-10) -> np.ndarray:
    """Diagonal of the row-sparsity reweighting: 1 / (2 * row norm), with the
    norm floored at ridge_eps for unused landmarks."""
    if isinstance(weights, LocalWeights):
        norms = weights.row_norms()
    else:
        norms = np.linalg.norm(np.asarray(weights, dtype=np.float64), axis=1)
    return 1.0 / (2.0 * np.maximum(norms, ridge_eps))


def objective_value(X, dictionary, weights: LocalWeights, lam: float, mu: float) -> ObjectiveTerms:
    """Evaluate the training objective and its three terms.

    fit = squared Frobenius residual, locality = lam * sum of squared weights
    times squared sample-landmark distances, sparsity = mu * sum of weight-row
    norms.
    """
    X = as_real_matrix(X, "X")
    dictionary = as_real_matrix(dictionary, "dictionary", n_rows=X.shape[0])
    require(weights.m_landmarks == dictionary.shape[1], "weights/dictionary landmark mismatch")
    require(weights.n_samples == X.shape[1], "weights/data sample mismatch")

    resid = X - weights.combine(dictionary)
    fit = float(np.sum(resid**2))

    cross = dictionary.T @ X  # (M, n)
    col = np.arange(weights.n_samples)[None, :]
    d2 = (
        np.sum(X**2, axis=0)[None, :]
        + np.sum(dictionary**2, axis=0)[weights.indices]
        - 2.0 * cross[weights.indices, col]
    )
    locality = float(lam * np.sum(weights.values**2 * np.maximum(d2, 0.0)))

    sparsity = float(mu * np.sum(weights.row_norms()))
    return ObjectiveTerms(fit, locality, sparsity, fit + locality + sparsity)


def update_dictionary_column(
    j: int, X, dictionary, weights: LocalWeights, lam: float, ridge_eps: float = 1e-10
) -> np.ndarray:
    """Closed-form refit of landmark column j with all other columns fixed.

    Raises :class:`DeadLandmarkError` when the column's weight row carries no
    energy, so the caller can re-seed it.
    """
    X = as_real_matrix(X, "X")
    dictionary = as_real_matrix(dictionary, "dictionary", n_rows=X.shape[0])
    cols, vals = weights.row(j)
    wnorm2 = float(vals @ vals)
    if wnorm2 < ridge_eps:
        raise DeadLandmarkError(j)
    # The column-j-excluded residual contracted with the weight row equals
    # (X - D W) w_row^T + d_j ||w_row||^2, which avoids forming it explicitly.
    resid = X - weights.combine(dictionary)
    e_wt = resid[:, cols] @ vals + dictionary[:, j] * wnorm2
    x_w2 = X[:, cols] @ (vals**2)
    return (e_wt + lam * x_w2) / ((1.0 + lam) * wnorm2)


def solve_local_weights(
    x,
    neighbors,
    lam: float,
    mu: float = 0.0,
    g_hat=None,
    ridge_eps: float = 1e-10,
) -> np.ndarray:
    """Optimal sum-to-one weights of a sample over its neighbor matrix.

    Solves the k x k system built from the neighbor-difference Gram matrix,
    its diagonal (scaled by lam), the row-sparsity diagonal (scaled by mu) and
    an absolute ridge ``ridge_eps`` on the diagonal, then renormalizes so the
    weights sum to one exactly.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    neighbors = as_real_matrix(neighbors, "neighbors", n_rows=x.shape[0])
    k = neighbors.shape[1]
    diff = x[:, None] - neighbors
    r = diff.T @ diff
    a = r + lam * np.diag(np.diag(r))
    if g_hat is not None and mu != 0.0:
        a = a + mu * np.diag(np.asarray(g_hat, dtype=np.float64).ravel())
    a[np.diag_indices(k)] += ridge_eps
    try:
        w = np.linalg.solve(a, np.ones(k))
    except np.linalg.LinAlgError:
        raise WeightSolveError(
            f"singular weight system (cond={np.linalg.cond(a):.3e}) despite ridge {ridge_eps:.3e}"
        ) from None
    total = w.sum()
    if not np.isfinite(total) or total == 0.0:
        raise WeightSolveError(
            f"weight system ill-conditioned (cond={np.linalg.cond(a):.3e}); sum(A^-1 e)={total!r}"
        )
    return w / total


def _solve_weights_batch(
    X: np.ndarray,
    dictionary: np.ndarray,
    k: int,
    lam: float,
    mu: float,
    g_full,
    ridge_rel: float,
    chunk: int = 512,
) -> LocalWeights:
    """Vectorized nearest-landmark weight solve for every column of X.

    The per-sample ridge is ``ridge_rel`` times the mean diagonal of that
    sample's difference Gram matrix (falling back to ridge_rel itself when the
    diagonal vanishes).
    """
    dim, n = X.shape
    m = dictionary.shape[1]
    require(k <= m, "k must not exceed the landmark count")
    indices = _knn_batch(X, dictionary, k)
    values = np.empty((k, n))
    eye = np.arange(k)
    ones = np.ones((k, 1))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sl = slice(start, stop)
        nb = dictionary[:, indices[:, sl]]  # (dim, k, c)
        diff = X[:, None, sl] - nb
        r = np.einsum("dkc,dlc->ckl", diff, diff)
        dd = r[:, eye, eye]
        mean_diag = dd.mean(axis=1)
        ridge = ridge_rel * np.where(mean_diag > 0.0, mean_diag, 1.0)
        extra = lam * dd + ridge[:, None]
        if g_full is not None and mu != 0.0:
            extra = extra + mu * np.asarray(g_full)[indices[:, sl]].T
        a = r
        a[:, eye, eye] += extra
        try:
            w = np.linalg.solve(a, np.broadcast_to(ones, (stop - start, k, 1)))[..., 0]
        except np.linalg.LinAlgError:
            w = _solve_weights_fallback(a)
        sums = w.sum(axis=1)
        bad = ~np.isfinite(sums) | (sums == 0.0)
        if np.any(bad):
            i = int(np.nonzero(bad)[0][0])
            raise WeightSolveError(
                f"weight system for sample {start + i} ill-conditioned "
                f"(cond={np.linalg.cond(a[i]):.3e})"
            )
        values[:, sl] = (w / sums[:, None]).T
    return LocalWeights(indices, values, m)


def _solve_weights_fallback(a: np.ndarray) -> np.ndarray:
    """Per-sample solve used when a batched factorization reports singularity,
    to attribute the failure to a specific sample."""
    out = np.empty(a.shape[:2])
    for i in range(a.shape[0]):
        try:
            out[i] = np.linalg.solve(a[i], np.ones(a.shape[1]))
        except np.linalg.LinAlgError:
            raise WeightSolveError(
                f"singular weight system in batch (cond={np.linalg.cond(a[i]):.3e})"
            ) from None
    return out


def _init_dictionary(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded draw of m distinct data columns (bit-exact duplicates skipped)."""
    n = X.shape[1]
    chosen = []
    seen = set()
    for idx in rng.permutation(n):
        key = X[:, idx].tobytes()
        if key in seen:
            continue
        seen.add(key)
        chosen.append(idx)
        if len(chosen) == m:
            break
    if len(chosen) < m:
        raise ValueError(f"dataset has only {len(chosen)} distinct columns, need {m}")
    return X[:, np.asarray(chosen)].copy()


def _update_dictionary(
    X: np.ndarray, dictionary: np.ndarray, weights: LocalWeights, config: TrainConfig
) -> np.ndarray:
    """One sequential pass of closed-form column refits.

    Columns whose weight row is dead are re-seeded from the data column with
    the largest current residual. The running residual X - D W is kept exact
    under every column change.
    """
    d = dictionary.copy()
    resid = X - weights.combine(d)
    csr = weights.to_csc().tocsr()
    lam = config.lam
    for j in range(d.shape[1]):
        cols = csr.indices[csr.indptr[j] : csr.indptr[j + 1]]
        vals = csr.data[csr.indptr[j] : csr.indptr[j + 1]]
        wnorm2 = float(vals @ vals)
        if wnorm2 < config.ridge_eps:
            worst = int(np.argmax(np.sum(resid**2, axis=0)))
            new_col = X[:, worst].copy()
        else:
            e_wt = resid[:, cols] @ vals + d[:, j] * wnorm2
            x_w2 = X[:, cols] @ (vals**2)
            new_col = (e_wt + lam * x_w2) / ((1.0 + lam) * wnorm2)
        if cols.size:
            resid[:, cols] -= np.outer(new_col - d[:, j], vals)
        d[:, j] = new_col
    return d


def train_landmarks(X, config: TrainConfig) -> tuple:
    """Alternating minimization over the landmark dictionary and local weights.

    Returns ``(dictionary, weights, trace)``. The dictionary is initialized
    from m distinct data columns; the initial weight pass uses a unit-row-norm
    reweighting diagonal (all entries 1/2) so iteration zero is well defined.

    Stops when the relative objective decrease falls below ``rel_tol`` or
    after ``max_iters`` iterations. Because the nearest-landmark supports are
    re-selected every iteration, a weight pass can occasionally end above the
    previous total (the per-column and per-sample solves only descend for a
    fixed support set); such an iterate means the alternation has stopped
    making progress, so it is discarded and the last descending state is
    returned. The trace therefore records accepted iterates and is
    non-increasing.
    """
    X = as_real_matrix(X, "X")
    if X.shape[1] == 0:
        raise ValueError("dataset is empty")
    config.validate(n_samples=X.shape[1])
    rng = np.random.default_rng(config.rng_seed)

    dictionary = _init_dictionary(X, config.m_landmarks, rng)
    g = np.full(config.m_landmarks, 0.5)
    weights = _solve_weights_batch(
        X, dictionary, config.k_neighbors, config.lam, config.mu, g, config.ridge_eps
    )
    trace = ObjectiveTrace(n_samples=X.shape[1])
    trace.append(objective_value(X, dictionary, weights, config.lam, config.mu))

    for _ in range(config.max_iters):
        g = update_g(weights, config.ridge_eps)
        new_dictionary = _update_dictionary(X, dictionary, weights, config)
        new_weights = _solve_weights_batch(
            X, new_dictionary, config.k_neighbors, config.lam, config.mu, g, config.ridge_eps
        )
        terms = objective_value(X, new_dictionary, new_weights, config.lam, config.mu)
        previous = trace.total[-1]
        if terms.total > previous:
            break
        dictionary, weights = new_dictionary, new_weights
        trace.append(terms)
        if previous - terms.total < config.rel_tol * max(previous, 1e-300):
            break
    return dictionary, weights, trace


def embed_training_set(X, d: int, method: str = "pca", k_neighbors: int | None = None) -> np.ndarray:
    """Low-dimensional embedding of the training columns.

    ``pca`` projects the centered data onto its top-d principal directions
    (sign fixed so each direction's first significant loading is positive);
    ``lle`` solves the classic locally-linear-embedding eigenproblem with
    ``k_neighbors`` neighbors. If the data rank falls below d, the missing
    coordinates are zero and a warning is issued.
    """
    X = as_real_matrix(X, "X")
    require(1 <= d < X.shape[0], "need 1 <= d < ambient dimension")
    if method == "pca":
        return _embed_pca(X, d)
    if method == "lle":
        require(k_neighbors is not None and k_neighbors >= 1, "lle requires k_neighbors")
        return _embed_lle(X, d, k_neighbors)
    raise ValueError(f"unknown embedding method {method!r}")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry above threshold is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.nonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))[0]
        if big.size and col[big[0]] < 0:
            out[:, j] = -col
    return out


def _embed_pca(X: np.ndarray, d: int) -> np.ndarray:
    centered = X - X.mean(axis=1, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    require(d <= s.shape[0], "d exceeds the available component count")
    tol = max(X.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank < d:
        warnings.warn(
            f"data rank {rank} is below the requested dimension {d}; "
            "padding the embedding with zero coordinates",
            stacklevel=2,
        )
    u = _fix_signs(u[:, :d])
    y = u.T @ centered
    y[rank:, :] = 0.0
    return y


def _embed_lle(X: np.ndarray, d: int, k: int) -> np.ndarray:
    n = X.shape[1]
    require(k < n, "lle needs k_neighbors below the sample count")
    require(d < n, "lle needs d below the sample count")
    d2 = (
        np.sum(X**2, axis=0)[:, None]
        + np.sum(X**2, axis=0)[None, :]
        - 2.0 * (X.T @ X)
    )
    np.fill_diagonal(d2, np.inf)
    nbr = np.argsort(d2, axis=1, kind="stable")[:, :k]

    rows = np.repeat(np.arange(n), k)
    cols = np.empty(n * k, dtype=np.int64)
    vals = np.empty(n * k)
    for i in range(n):
        diff = X[:, i][:, None] - X[:, nbr[i]]
        c = diff.T @ diff
        trace_scale = np.trace(c) / k
        c[np.diag_indices(k)] += 1e-6 * (trace_scale if trace_scale > 0 else 1.0)
        w = np.linalg.solve(c, np.ones(k))
        vals[i * k : (i + 1) * k] = w / w.sum()
        cols[i * k : (i + 1) * k] = nbr[i]
    w_graph = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m = sparse.eye(n) - w_graph
    gram = (m.T @ m).toarray()
    _, vecs = sla.eigh(gram, subset_by_index=[0, d])
    y = _fix_signs(vecs[:, 1 : d + 1]).T
    return np.ascontiguousarray(y)


def fit_low_dim_dictionary(Y, weights: LocalWeights, ridge_eps: float = 1e-10) -> np.ndarray:
    """Least-squares dictionary matched to fixed weights: Y W^T (W W^T + eps I)^{-1}.

    The ridge is relative to the Gram matrix's mean diagonal. Also used to
    anchor the high-dimensional reconstruction dictionary, which solves the
    same regression with the roles of the spaces exchanged.
    """
    Y = as_real_matrix(Y, "Y")
    require(weights.n_samples == Y.shape[1], "weights/data sample mismatch")
    w_csc = weights.to_csc()
    gram = (w_csc @ w_csc.T).toarray()
    m = weights.m_landmarks
    scale = np.trace(gram) / m
    gram[np.diag_indices(m)] += ridge_eps * (scale if scale > 0 else 1.0)
    target = w_csc @ Y.T  # (M, d)
    try:
        return np.linalg.solve(gram, target).T
    except np.linalg.LinAlgError:
        raise WeightSolveError(
            f"weight Gram matrix singular despite ridge (cond={np.linalg.cond(gram):.3e})"
        ) from None


def fit_reconstruction_dictionaries(
    X, Y, config: TrainConfig, return_trace: bool = False
) -> tuple:
    """Learn the reconstruction pair: landmarks of the embedded data plus the
    least-squares high-dimensional anchors sharing the same weights."""
    X = as_real_matrix(X, "X")
    Y = as_real_matrix(Y, "Y")
    require(X.shape[1] == Y.shape[1], "X and Y must be column-aligned")
    dl_rc, w_rc, trace = train_landmarks(Y, config)
    dh_rc = fit_low_dim_dictionary(X, w_rc, config.ridge_eps)
    if return_trace:
        return dl_rc, dh_rc, trace
    return dl_rc, dh_rc


def approximation_error(x, dictionary, w) -> float:
    """Euclidean distance between a sample and its weighted landmark combination."""
    x = np.asarray(x, dtype=np.float64).ravel()
    dictionary = as_real_matrix(dictionary, "dictionary", n_rows=x.shape[0])
    w = np.asarray(w, dtype=np.float64).ravel()
    return float(np.linalg.norm(x - dictionary @ w))
