"""Quasilinear model problems u_t - div(a(t, x, |grad u|) grad u) = f.

Nonlinearities carry certified constants: the flux y -> a(|y|) y is
Lipschitz with constant ``a_upper`` and strongly monotone with constant
``a_lower``.  Manufactured problems vanish on the boundary of the unit
square and come with closed-form sources.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar coefficient a(t, x, s) for s = |grad u| >= 0.

    ``mu`` and ``dmu_ds`` take ``(t, x, s)`` with ``x`` of shape (..., 2)
    and ``s`` of shape (...).
    """

    name: str
    mu: Callable
    dmu_ds: Callable
    a_lower: float
    a_upper: float

    @property
    def is_linear(self):
        """a_lower == a_upper forces a(s) + a'(s) s = a(s), i.e. a constant coefficient."""
        return self.a_lower == self.a_upper

    def flux(self, t, x, grad):
        """alpha = a(|grad|) grad, shape of ``grad``."""
        s = np.linalg.norm(grad, axis=-1)
        return self.mu(t, x, s)[..., None] * grad

    def flux_derivative(self, t, x, grad):
        """d alpha / d grad = mu I + (mu'(s)/s) grad grad^T, with limit mu(0) I at s = 0."""
        s = np.linalg.norm(grad, axis=-1)
        mu = self.mu(t, x, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s > 0, self.dmu_ds(t, x, s) / np.where(s > 0, s, 1.0), 0.0)
        D = ratio[..., None, None] * grad[..., :, None] * grad[..., None, :]
        D[..., 0, 0] += mu
        D[..., 1, 1] += mu
        return D

    def scalar_flux_derivative(self, t, x, s):
        """d/ds [a(s) s] = a(s) + a'(s) s."""
        return self.mu(t, x, s) + self.dmu_ds(t, x, s) * s


def _s_only(fn):
    return lambda t, x, s: fn(np.asarray(s, dtype=float))


_ARCTAN_UPPER = 1.0 + (2.0 / np.pi) * (np.pi / 3.0 + np.sqrt(3.0) / 2.0)

PRESET_NAMES = ("linear", "hrs", "arctan")


def preset_nonlinearity(name):
    """Named coefficient with its certified constants.

    ``linear``  a = 1                         (1, 1)
    ``hrs``     a = 2 + 1/(1 + s)             (2, 3)
    ``arctan``  a = 1 + (2/pi) arctan(s^2)    (1, 1 + (2/pi)(pi/3 + sqrt(3)/2))
    """
    if name == "linear":
        return Nonlinearity(
            "linear", _s_only(np.ones_like), _s_only(np.zeros_like), 1.0, 1.0
        )
    if name == "hrs":
        return Nonlinearity(
            "hrs",
            _s_only(lambda s: 2.0 + 1.0 / (1.0 + s)),
            _s_only(lambda s: -1.0 / (1.0 + s) ** 2),
            2.0,
            3.0,
        )
    if name == "arctan":
        # d/ds[a(s) s] = a + 4 s^2 / (pi (1 + s^4)) peaks at s^4 = 3
        return Nonlinearity(
            "arctan",
            _s_only(lambda s: 1.0 + (2.0 / np.pi) * np.arctan(s**2)),
            _s_only(lambda s: (4.0 / np.pi) * s / (1.0 + s**4)),
            1.0,
            float(_ARCTAN_UPPER),
        )
    raise ValueError(f"unknown nonlinearity preset {name!r}; expected one of {PRESET_NAMES}")


@dataclass(frozen=True)
class HypothesisReport:
    lipschitz: float
    monotonicity: float
    a_lower: float
    a_upper: float
    pairs: int
    rtol: float = 1e-9

    @property
    def passed(self):
        return (
            self.lipschitz <= self.a_upper * (1 + self.rtol)
            and self.monotonicity >= self.a_lower * (1 - self.rtol)
        )


def _random_vectors(rng, n, radius):
    # log-uniform magnitudes so small |y|, where the coefficient varies, is sampled
    r = radius * 10.0 ** rng.uniform(-6.0, 0.0, n)
    theta = rng.uniform(0.0, 2 * np.pi, n)
    return r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])


def check_hypotheses(nl, samples=10_000, radius=1e3, rng=0):
    """Sample the Lipschitz and strong-monotonicity ratios of the flux.

    Half of the pairs are independent draws, half are close pairs probing
    the flux derivative.  Pairs with y = z are skipped.
    """
    rng = np.random.default_rng(rng)
    n1 = samples // 2
    y = _random_vectors(rng, samples, radius)
    z = np.empty_like(y)
    z[:n1] = _random_vectors(rng, n1, radius)
    rel = 10.0 ** rng.uniform(-4.0, -1.0, samples - n1)
    z[n1:] = y[n1:] + rel[:, None] * np.linalg.norm(y[n1:], axis=1, keepdims=True) * rng.standard_normal(
        (samples - n1, 2)
    )
    norms = np.linalg.norm(np.concatenate([y, z]), axis=1)
    z *= np.minimum(1.0, radius / np.maximum(norms[samples:], 1e-300))[:, None]

    x = np.zeros((samples, 2))
    d = y - z
    dd = np.einsum("na,na->n", d, d)
    keep = dd > 0
    dphi = nl.flux(0.0, x, y) - nl.flux(0.0, x, z)
    lip = np.sqrt(np.einsum("na,na->n", dphi, dphi)[keep] / dd[keep])
    mono = np.einsum("na,na->n", dphi, d)[keep] / dd[keep]
    return HypothesisReport(
        lipschitz=float(lip.max()),
        monotonicity=float(mono.min()),
        a_lower=nl.a_lower,
        a_upper=nl.a_upper,
        pairs=int(keep.sum()),
    )


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    nonlinearity: Nonlinearity
    f: Callable  # f(t, x)
    u0: Callable  # u0(x)
    T: float = 0.1
    domain: tuple = UNIT_SQUARE
    exact: Optional[Callable] = None  # u(t, x)
    exact_grad: Optional[Callable] = None  # grad u(t, x), shape (..., 2)
    steady: bool = False
    # decay rate of the solution; sets the default time step
    rate: float = 1.0

    @property
    def has_exact(self):
        return self.exact is not None


def _sines(x):
    X, Y = x[..., 0], x[..., 1]
    sx, sy = np.sin(np.pi * X), np.sin(np.pi * Y)
    cx, cy = np.cos(np.pi * X), np.cos(np.pi * Y)
    return sx, sy, cx, cy


def _product_fields(x):
    """S = sin(pi x) sin(pi y), its gradient and Hessian."""
    sx, sy, cx, cy = _sines(x)
    S = sx * sy
    G = np.pi * np.stack([cx * sy, sx * cy], axis=-1)
    pi2 = np.pi**2
    H = np.empty(x.shape[:-1] + (2, 2))
    H[..., 0, 0] = -pi2 * S
    H[..., 1, 1] = -pi2 * S
    H[..., 0, 1] = H[..., 1, 0] = pi2 * cx * cy
    return S, G, H


def divergence_of_flux(nl, t, x, grad, hess):
    """div(a(|grad u|) grad u) = a lap u + (a'(s)/s) grad^T H grad, with the s -> 0 limit."""
    s = np.linalg.norm(grad, axis=-1)
    lap = hess[..., 0, 0] + hess[..., 1, 1]
    gHg = np.einsum("...a,...ab,...b->...", grad, hess, grad)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(s > 0, nl.dmu_ds(t, x, s) * gHg / np.where(s > 0, s, 1.0), 0.0)
    return nl.mu(t, x, s) * lap + tail


def _separable(name, nl, decay, T, steady=False):
    """u = exp(-decay t) S(x) with its closed-form source."""

    def exact(t, x):
        return np.exp(-decay * t) * _product_fields(x)[0]

    def exact_grad(t, x):
        return np.exp(-decay * t) * _product_fields(x)[1]

    def f(t, x):
        S, G, H = _product_fields(x)
        e = np.exp(-decay * t)
        return -decay * e * S - divergence_of_flux(nl, t, x, e * G, e * H)

    def u0(x):
        return _product_fields(x)[0]

    return ProblemSpec(name, nl, f, u0, T, UNIT_SQUARE, exact, exact_grad, steady, max(decay, 1.0))


MANUFACTURED_NAMES = ("heat_decay", "quasilinear_smooth", "steady_quasilinear")


def manufactured_problem(name, T=0.1):
    """Manufactured problems on the unit square.

    ``heat_decay``          a = 1, u = S exp(-2 pi^2 t), f = 0
    ``quasilinear_smooth``  a = hrs, u = S exp(-t)
    ``steady_quasilinear``  a = hrs, u = S, time independent
    with S = sin(pi x) sin(pi y).
    """
    if name == "heat_decay":
        spec = _separable(name, preset_nonlinearity("linear"), 2 * np.pi**2, T)
        zero = lambda t, x: np.zeros(np.shape(x)[:-1])  # noqa: E731
        return ProblemSpec(
            spec.name, spec.nonlinearity, zero, spec.u0, T, UNIT_SQUARE, spec.exact, spec.exact_grad, rate=spec.rate
        )
    if name == "quasilinear_smooth":
        return _separable(name, preset_nonlinearity("hrs"), 1.0, T)
    if name == "steady_quasilinear":
        return _separable(name, preset_nonlinearity("hrs"), 0.0, T, steady=True)
    raise ValueError(f"unknown problem preset {name!r}; expected one of {MANUFACTURED_NAMES}")


def zero_problem(nl_name="hrs", T=0.1):
    """f = 0, u0 = 0: the solution stays identically zero."""
    zero_tx = lambda t, x: np.zeros(np.shape(x)[:-1])  # noqa: E731
    zero_x = lambda x: np.zeros(np.shape(x)[:-1])  # noqa: E731
    grad0 = lambda t, x: np.zeros(np.shape(x))  # noqa: E731
    return ProblemSpec("zero", preset_nonlinearity(nl_name), zero_tx, zero_x, T, UNIT_SQUARE, zero_tx, grad0)
