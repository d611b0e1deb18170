"""Observable liftings and the equality constraints that close them.

A system lifts a state to a stack of observables ``y = [y_1; ...; y_m]``
(each block one value per cell) so that the governing equations become
linear in ``y``. The lost algebraic relations are restored by constraints,
each of the form::

    h_c(y) = y[target_c] - N_c(y[deps_c])

with ``N_c`` evaluated cell by cell. Keeping that split explicit lets the
DEIM machinery evaluate ``N_c`` at a handful of cells only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateObservableError, DimensionError, ParameterError

__all__ = [
    "Constraint",
    "ObservableSystem",
    "CanonicalSystem",
    "EulerSystem",
    "get_system",
    "scaled_expm1",
]

DIVISOR_TOL = 1e-300


def scaled_expm1(u, mu2):
    """``(exp(mu2 u) - 1) / mu2`` evaluated without cancellation for small ``mu2``."""
    u = np.asarray(u, dtype=float)
    if mu2 == 0.0:
        return u.copy()
    return np.expm1(mu2 * u) / mu2


@dataclass(frozen=True)
class Constraint:
    """One constraint family ``y[target] - N(y[deps])``.

    ``value(cols, theta)`` receives the dependency observables as a list of
    equally-shaped arrays and returns ``N``; ``partials`` returns the list of
    ``dN/dy_dep`` arrays in the same order.
    """

    name: str
    target: int
    deps: tuple
    value: Callable
    partials: Callable


class ObservableSystem:
    """Base class: lifting, restriction and constraints for one PDE system."""

    name = "abstract"
    observable_names: tuple = ()
    parameter_names: tuple = ()

    @property
    def n_observables(self):
        return len(self.observable_names)

    def constraints(self, theta):
        raise NotImplementedError

    def check_parameters(self, theta):
        return np.asarray(theta, dtype=float)

    def lift(self, state, theta):
        raise NotImplementedError

    def restrict(self, y, theta=None):
        raise NotImplementedError

    def split(self, y):
        """View the stacked vector ``y`` as ``(n_observables, n_cells)``."""
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.size % self.n_observables:
            raise DimensionError(
                f"stacked observables must be a vector of length {self.n_observables}*N"
            )
        return y.reshape(self.n_observables, -1)

    def constraint_residual(self, y, theta):
        """Full-space residual, constraint blocks stacked in declaration order."""
        theta = self.check_parameters(theta)
        blocks = self.split(y)
        out = []
        for c in self.constraints(theta):
            nl = c.value([blocks[d] for d in c.deps], theta)
            out.append(blocks[c.target] - nl)
        return np.concatenate(out)

    def constraint_jacobian(self, y, theta):
        """Sparse ``d h / d y``; one row block per constraint, one column block per observable."""
        theta = self.check_parameters(theta)
        blocks = self.split(y)
        n = blocks.shape[1]
        cons = self.constraints(theta)
        grid = [[None] * self.n_observables for _ in cons]
        for i, c in enumerate(cons):
            parts = c.partials([blocks[d] for d in c.deps], theta)
            diag = {c.target: np.ones(n)}
            for d, p in zip(c.deps, parts):
                diag[d] = diag.get(d, 0.0) - p
            for j, v in diag.items():
                grid[i][j] = sp.diags(v, format="csr")
        for j in range(self.n_observables):
            if all(grid[i][j] is None for i in range(len(cons))):
                grid[0][j] = sp.csr_matrix((n, n))
        return sp.bmat(grid, format="csr")


class CanonicalSystem(ObservableSystem):
    """``-lap u + (mu1/mu2)(exp(mu2 u) - 1) = forcing`` lifted to ``[u, s(u)]``."""

    name = "canonical"
    observable_names = ("y1", "y2")
    parameter_names = ("mu1", "mu2")

    def check_parameters(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2,):
            raise ParameterError("canonical system takes theta = (mu1, mu2)")
        if not np.all(theta > 0):
            raise ParameterError(f"mu1 and mu2 must be positive, got {tuple(theta)}")
        return theta

    def constraints(self, theta):
        mu1, mu2 = theta

        def value(cols, _theta):
            return mu1 * scaled_expm1(cols[0], mu2)

        def partials(cols, _theta):
            return [mu1 * np.exp(mu2 * np.asarray(cols[0]))]

        return [Constraint("h", 1, (0,), value, partials)]

    def lift(self, state, theta):
        mu1, mu2 = self.check_parameters(theta)
        u = np.asarray(getattr(state, "values", state), dtype=float)
        if u.ndim != 1:
            raise DimensionError("canonical state is one value per cell")
        return np.concatenate([u, mu1 * scaled_expm1(u, mu2)])

    def restrict(self, y, theta=None):
        return self.split(y)[0].copy()


class EulerSystem(ObservableSystem):
    """2D compressible Euler lifted to eight flux observables.

    Observables, in stacking order: ``rho u, rho v, rho u v, p, rho u^2,
    rho v^2, rho u H, rho v H``. The ratio of specific heats is carried as
    the scalar parameter ``gamma`` (``theta = (mach, alpha, gamma)`` or just
    ``gamma``), not as a ninth field.
    """

    name = "euler"
    observable_names = ("rho_u", "rho_v", "rho_uv", "p", "rho_u2", "rho_v2", "rho_uH", "rho_vH")
    parameter_names = ("mach", "alpha", "gamma")

    def __init__(self, gamma=1.4):
        self.default_gamma = float(gamma)

    def gamma_of(self, theta):
        if theta is None:
            return self.default_gamma
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return float(t[-1]) if t.size in (1, 3) else self.default_gamma

    def check_parameters(self, theta):
        g = self.gamma_of(theta)
        if not g > 1.0 + 1e-12:
            raise ParameterError(f"gamma must exceed 1, got {g}")
        return np.atleast_1d(np.asarray(theta if theta is not None else g, dtype=float))

    def lift(self, state, theta=None):
        """``state`` is ``(rho, u, v, p)``, each one value per cell."""
        g = self.gamma_of(self.check_parameters(theta))
        rho, u, v, p = (np.asarray(s, dtype=float) for s in state)
        rhoE = 0.5 * rho * (u * u + v * v) + p / (g - 1.0)
        H = (rhoE + p) / rho
        return np.concatenate(
            [rho * u, rho * v, rho * u * v, p, rho * u * u, rho * v * v, rho * u * H, rho * v * H]
        )

    def restrict(self, y, theta=None):
        """Primitive ``(rho, u, v, p)`` from ``rho u, rho v, rho u v, p``.

        Raises
        ------
        DegenerateObservableError
            Where ``rho u``, ``rho v`` or ``rho u v`` vanishes.
        """
        b = self.split(y)
        y1, y2, y3, y4 = b[0], b[1], b[2], b[3]
        for arr, label in ((y1, "rho_u"), (y2, "rho_v"), (y3, "rho_uv")):
            _check_divisor(arr, label)
        u = y3 / y2
        v = y3 / y1
        rho = y1 * y2 / y3
        return rho, u, v, y4.copy()

    def constraints(self, theta):
        g = self.gamma_of(theta)
        gm1 = g - 1.0

        def ratio(y1, y2, y3):
            _check_divisor(y1, "rho_u")
            _check_divisor(y2, "rho_v")
            return y3 / (y1 * y2)

        def h1(c, _t):
            y1, y2, y3 = c
            _check_divisor(y2, "rho_v")
            return y1 * y3 / y2

        def h1p(c, _t):
            y1, y2, y3 = c
            return [y3 / y2, -y1 * y3 / (y2 * y2), y1 / y2]

        def h2(c, _t):
            y1, y2, y3 = c
            _check_divisor(y1, "rho_u")
            return y2 * y3 / y1

        def h2p(c, _t):
            y1, y2, y3 = c
            return [-y2 * y3 / (y1 * y1), y3 / y1, y2 / y1]

        # E = r (y5 + y6)/2 + r y4/(g-1), r = y3/(y1 y2); enthalpy-like K = E + r y4
        def q(y4, y5, y6):
            return 0.5 * (y5 + y6) + y4 * g / gm1

        def energy(lead):
            def value(c, _t):
                y1, y2, y3, y4, y5, y6 = c
                r = ratio(y1, y2, y3)
                return c[lead] * r * q(y4, y5, y6)

            def partials(c, _t):
                y1, y2, y3, y4, y5, y6 = c
                r = ratio(y1, y2, y3)
                Q = q(y4, y5, y6)
                a = c[lead]
                K = r * Q
                dK = [-K / y1, -K / y2, Q / (y1 * y2), r * g / gm1, 0.5 * r, 0.5 * r]
                out = [a * d for d in dK]
                out[lead] = out[lead] + K
                return out

            return value, partials

        v3, p3 = energy(0)
        v4, p4 = energy(1)
        return [
            Constraint("h1", 4, (0, 1, 2), h1, h1p),
            Constraint("h2", 5, (0, 1, 2), h2, h2p),
            Constraint("h3", 6, (0, 1, 2, 3, 4, 5), v3, p3),
            Constraint("h4", 7, (0, 1, 2, 3, 4, 5), v4, p4),
        ]

    def specific_energy(self, y, theta=None):
        """``E`` computed from observables, as used inside the energy constraints."""
        g = self.gamma_of(theta)
        b = self.split(y)
        r = b[2] / (b[0] * b[1])
        return 0.5 * (r * b[4] + r * b[5]) + r * b[3] / (g - 1.0)


def _check_divisor(arr, label):
    bad = np.abs(arr) <= DIVISOR_TOL
    if np.any(bad):
        cell = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise DegenerateObservableError(f"observable {label} vanishes at cell {cell}", cell)


def get_system(name, **kwargs):
    """Look up a system by its CLI name (``"canonical"`` or ``"euler"``)."""
    systems = {"canonical": CanonicalSystem, "euler": EulerSystem}
    try:
        return systems[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(systems)}") from None


def warn_outside(theta, ranges, what="parameter"):
    theta = np.asarray(theta, dtype=float)
    for t, (lo, hi) in zip(theta, ranges):
        if not lo <= t <= hi:
            warnings.warn(f"{what} {tuple(theta)} lies outside {list(map(tuple, ranges))}", stacklevel=3)
            return True
    return False
