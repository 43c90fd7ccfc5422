"""Temperature-dependent coefficients and pointwise constitutive relations."""

from dataclasses import dataclass, field
import math

import numpy as np

COEFFICIENT_KINDS = ("constant", "affine_clamped", "rational")

_PARAMS = {
    "constant": ("c",),
    "affine_clamped": ("a", "b", "lo", "hi"),
    "rational": ("c0", "c1"),
}


@dataclass(frozen=True)
class CoefficientSpec:
    """A scalar function of temperature chosen from a small preset family.

    constant        c
    affine_clamped  clip(a + b theta, lo, hi)
    rational        c0 + c1 / (1 + theta)      (theta >= 0)
    """

    kind: str
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}; choose from {COEFFICIENT_KINDS}")
        params = dict(self.params)
        missing = [p for p in _PARAMS[self.kind] if p not in params]
        extra = [p for p in params if p not in _PARAMS[self.kind]]
        if missing or extra:
            raise ValueError(f"{self.kind} coefficient needs {_PARAMS[self.kind]}, got {tuple(params)}")
        for name, value in params.items():
            if not math.isfinite(float(value)):
                raise ValueError(f"coefficient parameter {name} must be finite")
        object.__setattr__(self, "params", tuple((p, float(params[p])) for p in _PARAMS[self.kind]))

    @classmethod
    def make(cls, kind, **params):
        return cls(kind, tuple(params.items()))

    def get(self, name):
        return dict(self.params)[name]

    def __call__(self, theta):
        p = dict(self.params)
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.full(theta.shape, p["c"])
        if self.kind == "affine_clamped":
            return np.clip(p["a"] + p["b"] * theta, p["lo"], p["hi"])
        return p["c0"] + p["c1"] / (1.0 + theta)

    def bounds(self):
        """Lower and upper bound over theta >= 0."""
        p = dict(self.params)
        if self.kind == "constant":
            return p["c"], p["c"]
        if self.kind == "affine_clamped":
            return p["lo"], p["hi"]
        ends = (p["c0"], p["c0"] + p["c1"])
        return min(ends), max(ends)

    def sympy(self, theta):
        """Symbolic expression of the coefficient (used by manufactured tests)."""
        import sympy

        p = dict(self.params)
        if self.kind == "constant":
            return sympy.Float(p["c"]) + 0 * theta
        if self.kind == "affine_clamped":
            return sympy.Min(sympy.Max(p["a"] + p["b"] * theta, p["lo"]), p["hi"])
        return p["c0"] + p["c1"] / (1 + theta)

    def as_dict(self):
        return {"kind": self.kind, **dict(self.params)}


@dataclass(frozen=True)
class CoefficientSet:
    mu: CoefficientSpec
    k: CoefficientSpec
    h: CoefficientSpec

    @property
    def mu_bounds(self):
        return self.mu.bounds()

    @property
    def k_bounds(self):
        lo_k, hi_k = self.k.bounds()
        lo_h, hi_h = self.h.bounds()
        return min(lo_k, lo_h), max(hi_k, hi_h)


def validate_coefficients(mu, k, h, samples=None):
    """Check positivity and boundedness on a temperature sample and bundle.

    The sample spans ``[1e-6, 1e6]`` logarithmically plus zero.
    """
    if samples is None:
        samples = np.concatenate([[0.0], np.logspace(-6, 6, 241)])
    for name, spec in (("mu", mu), ("k", k), ("h", h)):
        if spec.kind == "affine_clamped" and spec.get("lo") > spec.get("hi"):
            raise ValueError(f"{name}: clamp interval is empty (lo > hi)")
        lo, hi = spec.bounds()
        if not lo > 0.0:
            raise ValueError(f"{name}: coefficient must have a positive lower bound, got {lo}")
        vals = spec(samples)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{name}: coefficient is not finite on the temperature sample")
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(vals < lo - tol) or np.any(vals > hi + tol):
            raise ValueError(f"{name}: coefficient leaves its declared bounds [{lo}, {hi}]")
        if np.any(vals <= 0.0):
            raise ValueError(f"{name}: coefficient is not positive on the temperature sample")
    return CoefficientSet(mu, k, h)


# ---------------------------------------------------------------------------
# Ginzburg-Landau penalty


def _check_eps(eps):
    if isinstance(eps, str) or not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"penalty parameter must be positive and finite, got {eps!r}")


def ginzburg_landau_energy(d, eps):
    """Penalty density (|d|^2 - 1)^2 / (4 eps^2)."""
    _check_eps(eps)
    s = np.sum(d * d, axis=0) - 1.0
    return s * s / (4.0 * eps * eps)


def ginzburg_landau_force(d, eps):
    """Gradient of the penalty, (|d|^2 - 1) d / eps^2."""
    _check_eps(eps)
    return (np.sum(d * d, axis=0) - 1.0) * d / (eps * eps)


# ---------------------------------------------------------------------------
# stresses and fluxes


def ericksen_stress(grad_d):
    """(grad d . grad d)_{ab} = sum_k d_a d^k d_b d^k from a ``(dims, 3, ...)`` tensor."""
    return np.einsum("ak...,bk...->ab...", grad_d, grad_d)


def heat_flux(grad_theta, d, k_vals, h_vals):
    """q = -k grad theta - h (grad theta . d) d, restricted to the grid plane."""
    dims = grad_theta.shape[0]
    dd = d[:dims]
    proj = np.sum(grad_theta * dd, axis=0)
    return -k_vals * grad_theta - h_vals * proj * dd


def conductivity_tensor(k_vals, h_vals, d, dims):
    """D = k I + h d d^T (in-plane block), shape ``(dims, dims, ...)``."""
    dd = d[:dims]
    D = h_vals * np.einsum("a...,b...->ab...", dd, dd)
    for a in range(dims):
        D[a, a] += k_vals
    return D


def lattice_coefficients(D, spacing):
    """Split a symmetric tensor field over axis and plane-diagonal lattice edges.

    Returns ``(coeffs, clipped)`` where ``coeffs`` maps an integer shift to
    cell-wise edge coefficients with ``sum_v c_v v v^T = D`` (``v`` scaled by
    the spacing) and ``clipped`` counts cells whose axis coefficient had to be
    raised to zero, which happens only under strong anisotropy.
    """
    dims = D.shape[0]
    coeffs = {}
    clipped = 0
    axis = [D[a, a] / spacing[a] ** 2 for a in range(dims)]
    for a in range(dims):
        for b in range(a + 1, dims):
            hab = spacing[a] * spacing[b]
            plus = np.maximum(D[a, b], 0.0) / hab
            minus = np.maximum(-D[a, b], 0.0) / hab
            sp_ = [0] * dims
            sm = [0] * dims
            sp_[a] = sp_[b] = 1
            sm[a], sm[b] = 1, -1
            coeffs[tuple(sp_)] = plus
            coeffs[tuple(sm)] = minus
            axis[a] = axis[a] - np.abs(D[a, b]) / hab
            axis[b] = axis[b] - np.abs(D[a, b]) / hab
    for a in range(dims):
        neg = axis[a] < 0.0
        clipped += int(np.count_nonzero(neg))
        shift = [0] * dims
        shift[a] = 1
        coeffs[tuple(shift)] = np.where(neg, 0.0, axis[a])
    return coeffs, clipped


def entropy_production_density(theta, viscous, director_sq, grad_theta, d, k_vals, h_vals):
    """Cell-wise production: (viscous + director + k|grad theta|^2 + h (grad theta . d)^2) / theta.

    Each term is a square times a positive coefficient, so the result is
    nonnegative whenever theta > 0.
    """
    dims = grad_theta.shape[0]
    proj = np.sum(grad_theta * d[:dims], axis=0)
    conduction = k_vals * np.sum(grad_theta * grad_theta, axis=0) + h_vals * proj * proj
    return (viscous + director_sq + conduction) / theta


def energy_flux(P, u, grad_u, grad_d, d_material, mu_vals):
    """Mechanical energy flux Sigma, a vector field of shape ``(dims, ...)``.

    Sigma_j = P u_j - mu u_k d_j u_k + (d_j d . d_i d) u_i - d_j d . Dd/Dt,
    with ``grad_u[j, k] = d_j u_k`` and ``grad_d[j, k] = d_j d^k``.
    """
    S = ericksen_stress(grad_d)
    return (
        P * u
        - mu_vals * np.einsum("k...,jk...->j...", u, grad_u)
        + np.einsum("ji...,i...->j...", S, u)
        - np.einsum("jk...,k...->j...", grad_d, d_material)
    )


def sigma_flux(state, d_material_derivative, coeffs):
    """Energy flux of a state given the director material derivative."""
    from .state import cell_velocity
    from .grid import central_gradient

    grid = state.grid
    u = cell_velocity(grid, state.u)
    grad_u = central_gradient(u, grid, "odd")
    grad_d = central_gradient(state.d, grid, "even")
    return energy_flux(state.P, u, grad_u, grad_d, d_material_derivative, coeffs.mu(state.theta))


def entropy_production(state, coeffs, eps=None):
    """Entropy production Delta of a state at every cell."""
    from .state import entropy_production_cells

    return entropy_production_cells(state, coeffs, eps)
