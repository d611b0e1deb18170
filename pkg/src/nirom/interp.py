"""Element-wise multivariate Lagrange interpolation over parameter space.

Parameters are first mapped to ``[0, 1]`` per coordinate using the design
ranges; neighbor search and the monomial basis both work in those
normalized coordinates.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg as la

from .errors import StencilError

__all__ = [
    "LagrangeStencil",
    "monomial_exponents",
    "nearest_neighbors",
    "build_stencil",
    "lagrange_fit_eval",
    "interpolate_rom",
    "COND_LIMIT",
]

COND_LIMIT = 1e12
MAX_RETRIES = 5


def monomial_exponents(dim, degree):
    """Exponent tuples of total degree <= ``degree``.

    Grouped by degree; within a degree mixed terms precede pure powers, so
    for two variables and degree 2 the order is
    ``1, t1, t2, t1 t2, t1^2, t2^2``.
    """
    exps = [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]

    def key(e):
        d = sum(e)
        pure = sum(1 for v in e if v) <= 1 and d > 1
        return (d, pure, tuple(-v for v in e))

    return sorted(exps, key=key)


def _monomials(points, exps):
    pts = np.atleast_2d(points)
    return np.prod(pts[:, None, :] ** np.asarray(exps)[None, :, :], axis=2)


def _normalize(theta, ranges):
    theta = np.asarray(theta, dtype=float)
    if ranges is None:
        return theta
    r = np.asarray(ranges, dtype=float).reshape(-1, 2)
    width = np.where(r[:, 1] > r[:, 0], r[:, 1] - r[:, 0], 1.0)
    return (theta - r[:, 0]) / width


def nearest_neighbors(theta, train, count, ranges=None):
    """Indices of the ``count`` training points closest to ``theta``.

    Distances are Euclidean in normalized coordinates; ties go to the lower
    index.
    """
    train = np.atleast_2d(np.asarray(train, dtype=float))
    if train.shape[0] < count:
        raise StencilError(f"need {count} training points, only {train.shape[0]} available")
    d = np.linalg.norm(_normalize(train, ranges) - _normalize(theta, ranges), axis=1)
    return np.argsort(d, kind="stable")[:count], np.argsort(d, kind="stable")


@dataclass(frozen=True, eq=False)
class LagrangeStencil:
    """A factorized interpolation stencil (one per query point)."""

    degree: int
    indices: np.ndarray
    exponents: tuple
    M: np.ndarray
    lu: tuple
    condition: float
    ranges: np.ndarray | None = None

    @property
    def size(self):
        return self.indices.size

    def basis_at(self, theta):
        return _monomials(_normalize(theta, self.ranges), self.exponents)[0]

    def weights(self, theta):
        """Lagrange basis values ``l_i(theta)`` so that ``f(theta) = sum_i l_i f_i``."""
        return la.lu_solve(self.lu, self.basis_at(theta), trans=1, check_finite=False)

    def coefficients(self, values):
        vals = np.asarray(values, dtype=float)
        return la.lu_solve(self.lu, vals.reshape(self.size, -1)).reshape(vals.shape)

    def evaluate(self, values, theta):
        vals = np.asarray(values, dtype=float)
        w = self.weights(theta)
        return np.tensordot(w, vals, axes=(0, 0))


factorizations = 0
"""Count of stencil factorizations performed (instrumentation)."""


def _factor(points, exps):
    global factorizations
    M = _monomials(points, exps)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return M, None, cond
    factorizations += 1
    return M, la.lu_factor(M), cond


def build_stencil(theta, train, degree=2, ranges=None):
    """Nearest-neighbor stencil around ``theta``, repaired if degenerate.

    When the chosen neighbors make the monomial matrix singular or worse
    conditioned than ``1e12``, the farthest chosen neighbor is swapped for the
    next-nearest unused one, up to five times.
    """
    train = np.atleast_2d(np.asarray(train, dtype=float))
    dim = train.shape[1]
    count = comb(degree + dim, dim)
    exps = tuple(monomial_exponents(dim, degree))
    chosen, order = nearest_neighbors(theta, train, count, ranges)
    chosen = list(chosen)
    spare = list(order[count:])
    for attempt in range(MAX_RETRIES + 1):
        M, lu, cond = _factor(_normalize(train[chosen], ranges), exps)
        if lu is not None:
            r = None if ranges is None else np.asarray(ranges, dtype=float).reshape(-1, 2)
            return LagrangeStencil(degree, np.array(chosen), exps, M, lu, float(cond), r)
        if attempt == MAX_RETRIES or not spare:
            break
        chosen[-1] = spare.pop(0)
    raise StencilError(
        f"degenerate interpolation stencil {sorted(int(c) for c in chosen)} around "
        f"theta={tuple(np.atleast_1d(theta))} (cond={cond:.3e}); perturb the neighbor set"
    )


def lagrange_fit_eval(points, values, theta, degree=2, ranges=None):
    """Interpolate ``values`` given at ``points`` to ``theta``.

    Solves ``M c = values`` with ``M`` the monomial matrix of the points and
    returns ``a(theta) . c``. ``values`` may carry trailing dimensions; every
    element is interpolated with the same factorization.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    exps = tuple(monomial_exponents(points.shape[1], degree))
    if points.shape[0] != len(exps):
        raise StencilError(f"degree {degree} needs exactly {len(exps)} points, got {points.shape[0]}")
    M, lu, cond = _factor(_normalize(points, ranges), exps)
    if lu is None:
        raise StencilError(f"interpolation matrix is singular or ill-conditioned (cond={cond:.3e})")
    r = None if ranges is None else np.asarray(ranges, dtype=float).reshape(-1, 2)
    st = LagrangeStencil(degree, np.arange(points.shape[0]), exps, M, lu, float(cond), r)
    coef = st.coefficients(values)
    return np.tensordot(st.basis_at(theta), coef, axes=(0, 0))


def interpolate_rom(db, theta, degree=None):
    """Reduced system at ``theta`` interpolated element-wise from ``db``.

    One stencil (and one factorization) serves every entry of the reduced
    matrix and vector. The interpolated matrix is symmetrized.
    """
    from .rom import RomInstance

    degree = db.degree if degree is None else degree
    theta = np.asarray(theta, dtype=float)
    ranges = db.ranges
    if ranges is not None:
        r = np.asarray(ranges).reshape(-1, 2)
        if np.any(theta < r[:, 0]) or np.any(theta > r[:, 1]):
            warnings.warn(f"theta={tuple(theta)} lies outside the training box; extrapolating", stacklevel=2)
    st = build_stencil(theta, db.thetas, degree, ranges)
    w = st.weights(theta)
    idx = st.indices
    B = np.tensordot(w, db.B_stack[idx], axes=(0, 0))
    B = 0.5 * (B + B.T)
    f = w @ db.f_stack[idx]
    y0 = w @ db.reduced_snapshots[idx] if db.reduced_snapshots is not None else None
    return RomInstance(B, f, theta, y0=y0, stencil=st)
