"""Independent reference implementations used as test oracles.

Each oracle recomputes the quantity a library routine produces, but through a
different derivation (explicit loops, null-space elimination, gradient
descent), so agreement is evidence and not tautology.
"""

import numpy as np


def qp_weight_oracle(x, neighbors, lam, mu=0.0, g_hat=None, ridge=0.0):
    """Minimize w'Aw over sum-to-one weights by null-space elimination.

    A is assembled entry by entry from the definition: the Gram matrix of
    (x - neighbor) differences, its diagonal scaled by lam, plus mu times the
    reweighting diagonal and the ridge.
    """
    x = np.asarray(x, dtype=float).ravel()
    nb = np.asarray(neighbors, dtype=float)
    k = nb.shape[1]
    a = np.empty((k, k))
    for p in range(k):
        for q in range(k):
            a[p, q] = float((x - nb[:, p]) @ (x - nb[:, q]))
    for p in range(k):
        a[p, p] += lam * float((x - nb[:, p]) @ (x - nb[:, p]))
        if g_hat is not None:
            a[p, p] += mu * g_hat[p]
        a[p, p] += ridge
    # affine slice w = w0 + B z with e'w0 = 1 and columns of B summing to zero
    w0 = np.full(k, 1.0 / k)
    if k == 1:
        return w0
    basis = np.zeros((k, k - 1))
    for j in range(k - 1):
        basis[j, j] = 1.0
        basis[k - 1, j] = -1.0
    z = np.linalg.lstsq(basis.T @ a @ basis, -(basis.T @ (a @ w0)), rcond=None)[0]
    return w0 + basis @ z


def gd_column_oracle(j, X, dictionary, weights_dense, lam, tol=1e-12, max_steps=200_000):
    """Gradient descent on the single-column objective.

    The residual with column j removed is formed explicitly and the gradient
    of ||E - d w_row||_F^2 + lam * sum_i w_ji^2 ||x_i - d||^2 is evaluated
    term by term; backtracking keeps steps stable.
    """
    X = np.asarray(X, dtype=float)
    D = np.asarray(dictionary, dtype=float)
    W = np.asarray(weights_dense, dtype=float)
    n = X.shape[1]
    E = X.copy()
    for m in range(D.shape[1]):
        if m != j:
            E -= np.outer(D[:, m], W[m])
    w_row = W[j]

    def grad(d):
        g = -2.0 * (E - np.outer(d, w_row)) @ w_row
        for i in range(n):
            g += -2.0 * lam * w_row[i] ** 2 * (X[:, i] - d)
        return g

    def value(d):
        v = np.sum((E - np.outer(d, w_row)) ** 2)
        for i in range(n):
            v += lam * w_row[i] ** 2 * np.sum((X[:, i] - d) ** 2)
        return v

    d = D[:, j].copy()
    step = 1.0 / (2.0 * (1.0 + lam) * max(w_row @ w_row, 1e-12))
    for _ in range(max_steps):
        g = grad(d)
        if np.linalg.norm(g) < tol * max(1.0, np.linalg.norm(d)):
            break
        cur = value(d)
        s = step
        while value(d - s * g) > cur and s > 1e-20:
            s *= 0.5
        d = d - s * g
    return d


def objective_loops(X, dictionary, weights_dense, lam, mu):
    """Triple-loop evaluation of the training objective."""
    X = np.asarray(X, dtype=float)
    D = np.asarray(dictionary, dtype=float)
    W = np.asarray(weights_dense, dtype=float)
    m, n = W.shape
    fit = 0.0
    for i in range(n):
        r = X[:, i] - D @ W[:, i]
        fit += float(r @ r)
    locality = 0.0
    for i in range(n):
        for j in range(m):
            if W[j, i] != 0.0:
                diff = X[:, i] - D[:, j]
                locality += W[j, i] ** 2 * float(diff @ diff)
    sparsity = 0.0
    for j in range(m):
        sparsity += float(np.linalg.norm(W[j]))
    return fit, lam * locality, mu * sparsity
