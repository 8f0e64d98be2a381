"""Beta kernels on [-1, 1] and the three-term ansatz built from them.

A shape is parametrized by its mean position ``gamma`` and spread ``delta``,

    f(mu; gamma, delta) = ((1+mu)/2)^(xi-1) ((1-mu)/2)^(eta-1) / (2 B(xi, eta)),
    xi = gamma / delta,   eta = (1 - gamma) / delta.

The two degenerate limits of the family are kept as separate branches:
``delta -> 0`` concentrates all mass at ``mu = 2 gamma - 1`` and
``delta -> inf`` splits it between ``mu = +1`` and ``mu = -1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import betaln, xlogy

from .errors import ClosureError, DiracEvaluation, DomainError, UnsupportedOrder, Unrealizable1D
from .moments import MomentState, ThirdMoments, build_moments

DELTA_MIN = 1e-10
BRANCH_GUARD = 1e-10
REALIZABILITY_SLACK = 1e-12
WEIGHT_CLAMP = 1e-14


class Branch(enum.Enum):
    SMOOTH = "smooth"
    DIRAC_SINGLE = "dirac_single"
    DIRAC_PAIR = "dirac_pair"


@dataclass(frozen=True)
class BetaShape:
    """One-dimensional kernel on [-1, 1].

    For the Dirac branches ``delta`` is 0 (single point mass at
    ``2*gamma - 1``) or ``inf`` (masses ``gamma`` at +1 and ``1-gamma`` at -1).
    """

    gamma: float
    delta: float
    branch: Branch = Branch.SMOOTH

    def __post_init__(self):
        gamma, delta = float(self.gamma), float(self.delta)
        if not -1e-12 <= gamma <= 1.0 + 1e-12:
            raise DomainError(f"gamma = {gamma!r} outside [0, 1]")
        gamma = min(1.0, max(0.0, gamma))
        if self.branch is Branch.SMOOTH:
            if not (DELTA_MIN < delta < math.inf) or not 0.0 < gamma < 1.0:
                raise DomainError(f"no smooth kernel for gamma={gamma!r}, delta={delta!r}")
        elif self.branch is Branch.DIRAC_SINGLE:
            delta = 0.0
        else:
            delta = math.inf
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def smooth(cls, gamma, delta) -> "BetaShape":
        return cls(gamma, delta, Branch.SMOOTH)

    @classmethod
    def dirac_single(cls, mu) -> "BetaShape":
        return cls(0.5 * (1.0 + mu), 0.0, Branch.DIRAC_SINGLE)

    @classmethod
    def dirac_pair(cls, weight_plus) -> "BetaShape":
        return cls(weight_plus, math.inf, Branch.DIRAC_PAIR)

    @classmethod
    def uniform(cls) -> "BetaShape":
        return cls(0.5, 0.5, Branch.SMOOTH)

    @property
    def xi(self) -> float:
        return self.gamma / self.delta

    @property
    def eta(self) -> float:
        return (1.0 - self.gamma) / self.delta

    @property
    def mu(self) -> float:
        """Location of the point mass (DiracSingle) / mean position otherwise."""
        return 2.0 * self.gamma - 1.0

    @property
    def weight_plus(self) -> float:
        return self.gamma

    def to_dict(self) -> dict:
        d = {"branch": self.branch.value, "gamma": self.gamma}
        if self.branch is Branch.SMOOTH:
            d["delta"] = self.delta
        elif self.branch is Branch.DIRAC_SINGLE:
            d["mu"] = self.mu
        else:
            d["weight_plus"] = self.weight_plus
        return d


@dataclass(frozen=True, eq=False)
class AnsatzTerm:
    """``weight / (2 pi) * f(Omega . axis; shape)``."""

    weight: float
    axis: np.ndarray
    shape: BetaShape

    def __post_init__(self):
        weight = float(self.weight)
        if weight < -WEIGHT_CLAMP:
            raise DomainError(f"negative ansatz weight {weight!r}")
        axis = np.array(self.axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise DomainError("ansatz axis must be a unit 3-vector")
        axis.flags.writeable = False
        object.__setattr__(self, "weight", max(weight, 0.0))
        object.__setattr__(self, "axis", axis)


# ---------------------------------------------------------------------------
# one-dimensional kernel


def beta_pdf(mu, shape: BetaShape):
    """Density of a smooth kernel; accepts scalars or arrays of ``mu``."""
    if shape.branch is not Branch.SMOOTH:
        raise DiracEvaluation(f"{shape.branch.value} kernel has no pointwise density")
    mu = np.asarray(mu, dtype=float)
    if np.any(np.abs(mu) > 1.0):
        raise DomainError("mu outside [-1, 1]")
    xi, eta = shape.xi, shape.eta
    with np.errstate(divide="ignore"):
        logf = (
            xlogy(xi - 1.0, 0.5 * (1.0 + mu))
            + xlogy(eta - 1.0, 0.5 * (1.0 - mu))
            - betaln(xi, eta)
            - math.log(2.0)
        )
    out = np.exp(logf)
    return float(out) if out.ndim == 0 else out


def beta_moment(k: int, shape: BetaShape) -> float:
    """``int mu^k f(mu) dmu`` for ``k = 0..3``."""
    if k not in (0, 1, 2, 3):
        raise UnsupportedOrder(f"moment order {k} not supported")
    if k == 0:
        return 1.0
    g = shape.gamma
    if shape.branch is Branch.DIRAC_SINGLE:
        return shape.mu ** k
    if shape.branch is Branch.DIRAC_PAIR:
        return 2.0 * g - 1.0 if k % 2 else 1.0
    d = shape.delta
    m1 = 2.0 * g - 1.0
    if k == 1:
        return m1
    if k == 2:
        return 4.0 * g * (g - 1.0) / (1.0 + d) + 1.0
    # third moment written in (gamma, delta) so that delta -> 0 stays finite
    return m1 * (m1 * m1 + 3.0 * d + 2.0 * d * d) / ((1.0 + d) * (1.0 + 2.0 * d))


def shape_from_moments(m1: float, m2: float) -> BetaShape:
    """Invert ``(m1, m2) -> (gamma, delta)`` with explicit Dirac limits."""
    m1, m2 = float(m1), float(m2)
    if m1 * m1 > m2 + REALIZABILITY_SLACK or m2 > 1.0 + REALIZABILITY_SLACK:
        raise Unrealizable1D(f"no kernel with m1={m1!r}, m2={m2!r}")
    m1 = min(1.0, max(-1.0, m1))
    if m2 - m1 * m1 <= BRANCH_GUARD:
        return BetaShape.dirac_single(m1)
    if 1.0 - m2 <= BRANCH_GUARD:
        return BetaShape.dirac_pair(0.5 * (1.0 + m1))
    delta = (m2 - m1 * m1) / (1.0 - m2)
    if delta <= DELTA_MIN:
        return BetaShape.dirac_single(m1)
    return BetaShape.smooth(0.5 * (1.0 + m1), delta)


# ---------------------------------------------------------------------------
# three-term ansatz


def eval_ansatz(omega, terms) -> np.ndarray | float:
    """Ansatz value at unit direction(s) ``omega`` (shape (3,) or (..., 3))."""
    omega = np.asarray(omega, dtype=float)
    total = np.zeros(omega.shape[:-1])
    for t in terms:
        if t.weight == 0.0:
            continue
        if t.shape.branch is not Branch.SMOOTH:
            raise DiracEvaluation("ansatz contains a Dirac term")
        mu = np.clip(omega @ t.axis, -1.0, 1.0)
        total = total + t.weight / (2.0 * math.pi) * beta_pdf(mu, t.shape)
    return float(total) if total.ndim == 0 else total


def _axisymmetric_moments(weight, axis, m):
    """Sphere moments of ``weight/(2pi) f(Omega.axis)`` from its 1D moments ``m``."""
    a = axis
    proj = np.eye(3) - np.outer(a, a)
    e1 = weight * m[1] * a
    e2 = weight * (m[2] * np.outer(a, a) + 0.5 * (1.0 - m[2]) * proj)
    aaa = np.einsum("i,j,k->ijk", a, a, a)
    sym = (
        np.einsum("i,jk->ijk", a, proj)
        + np.einsum("j,ik->ijk", a, proj)
        + np.einsum("k,ij->ijk", a, proj)
    )
    e3 = weight * (m[3] * aaa + 0.5 * (m[1] - m[3]) * sym)
    return weight * m[0], e1, e2, e3


def beta_gauss_rule(n: int, shape: BetaShape):
    """Gauss nodes/weights for the probability measure ``f(mu) dmu``.

    Golub-Welsch on the Jacobi recurrence, normalized to unit mass, so it
    stays finite for the very concentrated kernels near the Dirac limits.
    """
    # Jacobi parameters are a = eta - 1, b = xi - 1; everything is written in
    # xi, eta directly to avoid cancellation when both are tiny.
    xi, eta = shape.xi, shape.eta
    c = xi + eta
    k = np.arange(n, dtype=float)
    s = 2.0 * k + c - 2.0  # 2k + a + b
    diag = np.empty(n)
    diag[0] = (xi - eta) / c
    diag[1:] = (xi - eta) * (c - 2.0) / (s[1:] * (s[1:] + 2.0))
    kk = k[1:]
    s1 = s[1:]
    off = np.sqrt(
        4.0 * kk * (kk - 1.0 + eta) * (kk - 1.0 + xi) * (kk - 2.0 + c)
        / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0))
    )
    nodes, vecs = eigh_tridiagonal(diag, off)
    return np.clip(nodes, -1.0, 1.0), vecs[0] ** 2


def _legendre_theta_rule(n: int, shape: BetaShape):
    t, wt = np.polynomial.legendre.leggauss(n)
    theta = 0.5 * math.pi * (t + 1.0)
    mu = np.cos(theta)
    return mu, 0.5 * math.pi * wt * beta_pdf(mu, shape) * np.sin(theta)


def _polar_rule(shape: BetaShape, n: int, rule: str):
    if shape.branch is Branch.DIRAC_SINGLE:
        return np.array([shape.mu]), np.array([1.0])
    if shape.branch is Branch.DIRAC_PAIR:
        return np.array([1.0, -1.0]), np.array([shape.gamma, 1.0 - shape.gamma])
    if rule == "jacobi":
        return beta_gauss_rule(n, shape)
    if rule == "legendre":
        return _legendre_theta_rule(n, shape)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def _quadrature_moments(weight, axis, shape, n, rule):
    mu, wmu = _polar_rule(shape, n, rule)
    nphi = 2 * n
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    t1 = np.cross(axis, [1.0, 0.0, 0.0] if abs(axis[0]) < 0.9 else [0.0, 1.0, 0.0])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(axis, t1)
    st = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    omega = (
        mu[:, None, None] * axis
        + (st[:, None] * np.cos(phi))[:, :, None] * t1
        + (st[:, None] * np.sin(phi))[:, :, None] * t2
    ).reshape(-1, 3)
    wq = weight * np.repeat(wmu, nphi) / nphi
    e0 = wq.sum()
    e1 = wq @ omega
    e2 = np.einsum("q,qi,qj->ij", wq, omega, omega)
    e3 = np.einsum("q,qi,qj,qk->ijk", wq, omega, omega, omega)
    return e0, e1, e2, e3


def spherical_moments(terms, method: str = "analytic", order: int = 64, rule: str = "jacobi"):
    """Moments ``E0, E1, E2, E3`` of the ansatz over the unit sphere.

    ``method="analytic"`` assembles them from the closed-form 1D moments of
    each kernel; ``method="quadrature"`` integrates numerically with a
    polar rule of ``order`` nodes times ``2*order`` uniform azimuthal nodes
    around each term's own axis. ``rule`` picks the polar rule: Gauss rule
    of the kernel itself (``"jacobi"``) or Gauss-Legendre in the polar
    angle (``"legendre"``, adequate only for kernels without endpoint
    singularities). Dirac terms are integrated exactly in both methods.

    Returns ``(MomentState, ThirdMoments)``.
    """
    e0, e1, e2, e3 = 0.0, np.zeros(3), np.zeros((3, 3)), np.zeros((3, 3, 3))
    for t in terms:
        if t.weight == 0.0:
            continue
        if method == "analytic":
            m = [beta_moment(k, t.shape) for k in range(4)]
            c = _axisymmetric_moments(t.weight, t.axis, m)
        elif method == "quadrature":
            c = _quadrature_moments(t.weight, t.axis, t.shape, order, rule)
        else:
            raise ValueError(f"unknown method {method!r}")
        e0, e1, e2, e3 = e0 + c[0], e1 + c[1], e2 + c[2], e3 + c[3]
    if not e0 > 0.0:
        raise ClosureError("ansatz carries no mass")
    # |Omega| = 1 at every node, so trace(E2) = E0 up to rounding on both paths
    return build_moments(e0, e1, e2), ThirdMoments(e3)
