"""Discrete empirical interpolation of constraint nonlinearities.

For a constraint ``h = y_t - N(y_deps)`` the reduced residual is::

    h_r(yr) = C yr - Lf N(S_1 yr, ..., S_d yr)

where ``C = T^T Phi_t`` maps reduced coordinates to the target's reduced
coordinates, ``Lf = T^T X (X[rho])^{-1}`` is the precomputed left factor and
``S_j = Phi_j[rho]`` are the sampled trial-basis rows of each dependency.
Only the ``q`` interpolation rows are ever touched online.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DimensionError, NiromError
from .pod import compute_pod

__all__ = [
    "DeimInterpolant",
    "select_points",
    "build_interpolant",
    "deim_approximation",
    "build_constraint_interpolants",
    "evaluate_constraint_reduced",
]


class SingularInterpolationError(NiromError, np.linalg.LinAlgError):
    """The sampled basis ``X[rho]`` is singular."""


def select_points(X):
    """Greedy DEIM row selection.

    The first index maximizes ``|X[:, 0]|``; each further index maximizes the
    residual of column ``j`` after interpolating it from the previous columns
    at the rows chosen so far. Ties go to the lowest row.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DimensionError("DEIM needs a non-empty 2-D basis")
    if X.shape[1] > X.shape[0]:
        raise DimensionError("more basis columns than rows")
    rho = [int(np.argmax(np.abs(X[:, 0])))]
    if X[rho[0], 0] == 0.0:
        raise SingularInterpolationError("first basis column is zero")
    for j in range(1, X.shape[1]):
        P = X[rho, :j]
        try:
            c = la.solve(P, X[rho, j])
        except la.LinAlgError as exc:
            raise SingularInterpolationError(f"degenerate basis at column {j}") from exc
        r = X[:, j] - X[:, :j] @ c
        nxt = int(np.argmax(np.abs(r)))
        if r[nxt] == 0.0 or nxt in rho:
            raise SingularInterpolationError(f"degenerate basis at column {j}")
        rho.append(nxt)
    return np.array(rho, dtype=np.int64)


def deim_approximation(X, rho, v):
    """``X (X[rho])^{-1} v[rho]``; reproduces ``v`` exactly when it lies in span(X)."""
    X = np.asarray(X, dtype=float)
    return X @ la.solve(X[rho], np.asarray(v)[rho])


@dataclass(frozen=True, eq=False)
class DeimInterpolant:
    """Precomputed factors for one constraint family.

    ``left`` is ``T^T X (X[rho])^{-1}`` (``k_t x q``), ``linear`` is ``C``
    (``k_t x k``) and ``sampled[j]`` is ``q x k``, aligned with ``deps``.
    """

    X: np.ndarray
    indices: np.ndarray
    left: np.ndarray
    sampled: tuple
    linear: np.ndarray | None = None
    constraint: int = 0
    condition: float = 1.0

    @property
    def q(self):
        return self.indices.size

    def sample(self, yr):
        return [S @ yr for S in self.sampled]


def build_interpolant(X, rho, target_basis, sampled_bases, linear=None, constraint=0):
    """Precompute the DEIM factors.

    Parameters
    ----------
    X : (N, q) array
        Nonlinear-term basis.
    rho : (q,) int array
        Interpolation rows from :func:`select_points`.
    target_basis : (N, k_t) array
        Basis ``T`` onto which the constraint is projected.
    sampled_bases : sequence of (N, k) arrays
        Trial-basis rows of every observable entering the nonlinearity.
    linear : (k_t, k) array, optional
        Reduced form of the target observable; stored as-is.
    """
    X = np.asarray(X, dtype=float)
    rho = np.asarray(rho, dtype=np.int64)
    T = np.asarray(target_basis, dtype=float)
    if rho.ndim != 1 or rho.size != X.shape[1]:
        raise DimensionError("need exactly one interpolation row per basis column")
    if len(np.unique(rho)) != rho.size or rho.min() < 0 or rho.max() >= X.shape[0]:
        raise DimensionError("interpolation rows must be distinct and in range")
    if T.shape[0] != X.shape[0]:
        raise DimensionError("target basis and X must have the same number of rows")
    PX = X[rho]
    try:
        with warnings.catch_warnings():
            # an exactly singular factor is reported below
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu = la.lu_factor(PX, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise SingularInterpolationError("sampled basis X[rho] is singular") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise SingularInterpolationError("sampled basis X[rho] is singular")
    # T^T X (PX)^{-1} = ((PX)^{-T} X^T T)^T
    left = la.lu_solve(lu, X.T @ T, trans=1).T
    sampled = tuple(np.asarray(B, dtype=float)[rho] for B in sampled_bases)
    return DeimInterpolant(X, rho, left, sampled, linear, constraint, float(np.linalg.cond(PX)))


def build_constraint_interpolants(system, basis, snapshots, q=None, energy=None):
    """One interpolant per constraint family of ``system``.

    ``X`` is the POD basis of the nonlinear term ``N_c`` evaluated on the
    training snapshots. In per-block mode the constraint is projected on the
    target observable's own trial block; in joint mode on ``X``.

    Parameters
    ----------
    basis : BlockBasis
    snapshots : SnapshotSet
    q : int, optional
        Nonlinear modes to keep (default: all numerically nonzero, or the
        ``energy`` rule when given).
    """
    cols = [snapshots.block(i) for i in range(system.n_observables)]
    thetas = snapshots.thetas
    out = []
    for ci, con in enumerate(system.constraints(thetas[0])):
        nl = np.column_stack(
            [
                system.constraints(th)[ci].value([cols[d][:, j] for d in con.deps], th)
                for j, th in enumerate(thetas)
            ]
        )
        X = compute_pod(nl, k=q, energy=energy, block=f"{con.name}:nonlinear").modes
        rho = select_points(X)
        target_rows = basis.rows(con.target)
        if basis.mode == "block":
            sl = basis.col_slice(con.target)
            T = target_rows[:, sl]
            linear = np.zeros((T.shape[1], basis.k))
            linear[:, sl] = np.eye(T.shape[1])
        else:
            T = X
            linear = T.T @ target_rows
        sampled = [basis.rows(d) for d in con.deps]
        out.append(build_interpolant(X, rho, T, sampled, linear, ci))
    return out


def evaluate_constraint_reduced(yr, interpolants, system, theta):
    """Reduced residual and Jacobian of every constraint family, stacked.

    Returns
    -------
    h : ndarray
    jac : ndarray
        ``d h / d yr``, dense ``(sum k_t) x k``.
    """
    yr = np.asarray(yr, dtype=float)
    cons = system.constraints(theta)
    hs, js = [], []
    for it in interpolants:
        con = cons[it.constraint]
        samples = it.sample(yr)
        nl = con.value(samples, theta)
        parts = con.partials(samples, theta)
        dnl = sum(p[:, None] * S for p, S in zip(parts, it.sampled))
        hs.append(it.linear @ yr - it.left @ nl)
        js.append(it.linear - it.left @ dnl)
    return np.concatenate(hs), np.vstack(js)
