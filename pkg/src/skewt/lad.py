"""Least absolute deviations (median) regression."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError

__all__ = ["LADFit", "lad_fit"]


@dataclass(frozen=True)
class LADFit:
    beta: np.ndarray
    residuals: np.ndarray
    objective: float
    iterations: int


def _irls(y, X, max_iter=100, eps=1e-8):
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    best = np.abs(y - X @ beta).sum()
    it = 0
    for it in range(1, max_iter + 1):
        r = y - X @ beta
        w = 1.0 / np.maximum(np.abs(r), eps)
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        obj = np.abs(y - X @ new).sum()
        if obj >= best * (1 - 1e-12):
            # plateau: tighten the smoothing and stop once it is tiny
            eps *= 0.5
            if eps < 1e-14:
                break
        if obj < best:
            best, beta = obj, new
    return beta, it


def _initial_basis(X, r, p):
    order = np.lexsort((np.arange(r.size), np.abs(r)))
    basis = []
    for i in order:
        trial = basis + [int(i)]
        if np.linalg.matrix_rank(X[trial]) == len(trial):
            basis = trial
            if len(basis) == p:
                return basis
    raise DomainError("design matrix is rank deficient")


class _Vertex:
    def __init__(self, y, X, basis, ztol):
        self.y, self.X, self.ztol = y, X, ztol
        self.set_basis(basis)

    def set_basis(self, basis):
        self.basis = list(basis)
        XB = self.X[self.basis]
        self.beta = np.linalg.solve(XB, self.y[self.basis])
        self.r = self.y - self.X @ self.beta
        self.r[self.basis] = 0.0
        self.r[np.abs(self.r) <= self.ztol] = 0.0
        nb = np.ones(self.y.size, bool)
        nb[self.basis] = False
        self.nonbasic = np.flatnonzero(nb)
        # D[i, j] = x_i' X_B^{-1} e_j for nonbasic rows
        self.D = np.linalg.solve(XB.T, self.X[self.nonbasic].T).T

    def slopes(self):
        """Directional derivatives for releasing each basis row upward/downward."""
        rN = self.r[self.nonbasic]
        s = np.sign(rN)
        zero = s == 0
        u = s @ self.D
        z = np.abs(self.D[zero]).sum(axis=0)
        return np.stack([1.0 - u + z, 1.0 + u + z])  # rows: sigma = +1, -1

    def step(self, j, sigma):
        """Move along the edge releasing basis position ``j`` to the next kink."""
        a = sigma * self.D[:, j]
        rN = self.r[self.nonbasic]
        slope = 1.0 - np.sum(np.sign(rN) * a) + np.abs(a[rN == 0]).sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where((rN != 0) & (a != 0), rN / a, -1.0)
        cand = np.flatnonzero(t > 0)
        if cand.size == 0:
            raise NumericalError("LAD line search found no breakpoint")
        cand = cand[np.lexsort((self.nonbasic[cand], t[cand]))]
        for k in cand:
            slope += 2.0 * abs(a[k])
            if slope >= -1e-12:
                new = list(self.basis)
                new[j] = int(self.nonbasic[k])
                return new
        raise NumericalError("LAD line search failed")

    @property
    def objective(self):
        return float(np.abs(self.r).sum())


def lad_fit(y, X, max_iter: int = 1000) -> LADFit:
    """
    Minimize ``sum |y_i - x_i' beta|``.

    Iteratively reweighted least squares supplies a starting vertex; an
    exact simplex-type descent over bases of ``p`` zero residuals then
    reaches the optimum.  Among tied optima the lexicographically smallest
    reachable ``beta`` is returned (e.g. the lower median for an
    intercept-only fit with even ``n``).
    """
    y = np.asarray(y, float).ravel()
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.size != n:
        raise DomainError("y and X have inconsistent lengths")
    if n <= p:
        raise DomainError("LAD regression needs n > p")
    if np.linalg.matrix_rank(X) < p:
        raise DomainError("design matrix is rank deficient")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise DomainError("non-finite data")

    beta0, iters = _irls(y, X)
    scale = 1.0 + np.max(np.abs(y))
    ztol = 1e-11 * scale
    v = _Vertex(y, X, _initial_basis(X, y - X @ beta0, p), ztol)
    tol = 1e-10

    for _ in range(max_iter):
        iters += 1
        sl = v.slopes()
        if sl.min() >= -tol:
            break
        sig_idx, j = np.unravel_index(np.argmin(sl), sl.shape)
        v.set_basis(v.step(int(j), 1.0 if sig_idx == 0 else -1.0))
    else:
        raise NumericalError("LAD simplex hit its iteration cap")

    # walk zero-cost edges while beta decreases lexicographically
    obj = v.objective
    for _ in range(max_iter):
        sl = v.slopes()
        moved = False
        for sig_idx, j in zip(*np.nonzero(np.abs(sl) <= tol)):
            new = v.step(int(j), 1.0 if sig_idx == 0 else -1.0)
            trial = _Vertex(y, X, new, ztol)
            if trial.objective > obj + 1e-9 * (1 + obj):
                continue
            diff = trial.beta - v.beta
            nz = np.flatnonzero(np.abs(diff) > 1e-12 * (1 + np.abs(v.beta)))
            if nz.size and diff[nz[0]] < 0:
                v = trial
                iters += 1
                moved = True
                break
        if not moved:
            break

    return LADFit(v.beta, y - X @ v.beta, float(np.abs(y - X @ v.beta).sum()), iters)
