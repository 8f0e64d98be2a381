"""The three-term beta closure: weights, shapes, third moments and fluxes.

Everything below the eigenframe works in units of E0 (``lam_hat = lam/E0``,
``f_hat = F/E0``), since the interpolating function ``g`` is built on the
barycentric triangle ``sum(lam_hat) = 1``. Results are scaled back by E0.

Per eigen-axis ``i`` the ansatz term carries weight ``w_i`` and second
moment ``sigma_i = w_i <mu^2>``::

    sigma_1 = lam_1 - g(lam_1, lam_2; F_1, F_2) - g(lam_1, lam_3; F_1, F_3)
    w_1     = sigma_1 + 2 g(lam_2, lam_3; F_2, F_3)

(cyclic for 2 and 3), with

    q = (x - F_x^2/x)(y - F_y^2/y),   r = -(1 - F_x^2/x - F_y^2/y),
    g = 2 q (x + y - 1 - r) / (3 (x + y)^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beta import AnsatzTerm, BetaShape, shape_from_moments
from .errors import (
    ClosureError,
    DomainError,
    NotRealizable,
    Unrealizable1D,
    ZeroWeightInconsistency,
)
from .moments import (
    ClosureFrame,
    MomentState,
    ThirdMoments,
    eigenframe,
    realizability_margin,
)

BOX_TOL = 1e-12
ZERO_LAMBDA = 1e-14
ZERO_WEIGHT = 1e-13
ZERO_F = 1e-12
VERTEX_TOL = 1e-13
SINGULAR_DEN = 1e-12
MARGIN_TOL = 1e-12

__all__ = [
    "ClosureParams",
    "ThirdMoments",
    "closure_params",
    "fluxes",
    "g_func",
    "h_func",
    "nonneg_diagnostics",
    "q_func",
    "r_func",
    "sigma_positive",
    "sigma_weights",
    "slab_e3",
    "slab_e3_surface",
    "slab_state",
    "third_moments",
    "third_moments_axis",
]


# ---------------------------------------------------------------------------
# interpolation functions (normalized units, broadcast over arrays)


def _check_box(x, f):
    if np.any(np.abs(f) > x + BOX_TOL):
        raise DomainError("|F| exceeds lambda: outside the box |F_i| <= lambda_i")


def _ratio(x, f):
    """``F^2 / x``, taken to be zero where ``x`` vanishes."""
    x, f = np.asarray(x, dtype=float), np.asarray(f, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > ZERO_LAMBDA, f * f / np.where(x > ZERO_LAMBDA, x, 1.0), 0.0)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def _q(x, y, fx, fy):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return (x - _ratio(x, fx)) * (y - _ratio(y, fy))


def _r(x, y, fx, fy):
    return -(1.0 - _ratio(x, fx) - _ratio(y, fy))


def _g(x, y, fx, fy):
    s = np.asarray(x, dtype=float) + np.asarray(y, dtype=float)
    q, r = _q(x, y, fx, fy), _r(x, y, fx, fy)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 2.0 * q * (s - 1.0 - r) / (3.0 * s * s)
    return np.where(s < VERTEX_TOL, 0.0, g)


def q_func(x, y, fx, fy, check: bool = True):
    """``(x - fx^2/x)(y - fy^2/y)``; non-negative on the box."""
    if check:
        _check_box(x, fx)
        _check_box(y, fy)
    return _out(_q(x, y, fx, fy))


def r_func(x, y, fx, fy, check: bool = True):
    """``-(1 - fx^2/x - fy^2/y)``; non-positive on the realizable set."""
    if check:
        _check_box(x, fx)
        _check_box(y, fy)
    return _out(_r(x, y, fx, fy))


def h_func(x, y, fx, fy, check: bool = True):
    """``(4/3) q r``: the correction to the transverse second moments."""
    if check:
        _check_box(x, fx)
        _check_box(y, fy)
    return _out(4.0 / 3.0 * _q(x, y, fx, fy) * _r(x, y, fx, fy))


def g_func(x, y, fx, fy, check: bool = True):
    """Interpolant ``2 q (x + y - 1 - r) / (3 (x + y)^2)``, zero at the vertex."""
    if check:
        _check_box(x, fx)
        _check_box(y, fy)
    return _out(_g(x, y, fx, fy))


def sigma_weights(lam_hat, f_hat, check: bool = True):
    """Normalized ``(sigma, w)`` from normalized eigenvalues and rotated fluxes.

    Broadcasts over leading dimensions; the last axis has length 3.

    Parameters
    ----------
    lam_hat : array_like, shape (..., 3)
        Eigenvalues of ``E2 / E0``; they should sum to one.
    f_hat : array_like, shape (..., 3)
        ``F / E0`` in the eigenframe.
    check : bool
        Raise :class:`DomainError` outside the box ``|f_i| <= lam_i``.

    Returns
    -------
    sigma, w : ndarray, shape (..., 3)
    """
    lam = np.asarray(lam_hat, dtype=float)
    f = np.asarray(f_hat, dtype=float)
    if check:
        _check_box(lam, f)
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    f1, f2, f3 = f[..., 0], f[..., 1], f[..., 2]
    g12 = _g(l1, l2, f1, f2)
    g13 = _g(l1, l3, f1, f3)
    g23 = _g(l2, l3, f2, f3)
    sigma = np.stack([l1 - g12 - g13, l2 - g12 - g23, l3 - g13 - g23], axis=-1)
    w = sigma + 2.0 * np.stack([g23, g13, g12], axis=-1)
    return sigma, w


def sigma_positive(lam_hat) -> np.ndarray | bool:
    """``3 l_i^2 + l_i (l_j + l_k) - l_j l_k > 0`` for every ``i``.

    Sufficient for ``sigma_i > 0`` at ``F = 0``; broadcasts like
    :func:`sigma_weights`.
    """
    lam = np.asarray(lam_hat, dtype=float)
    ok = np.ones(lam.shape[:-1], dtype=bool)
    for i, j, k in ((0, 1, 2), (1, 0, 2), (2, 0, 1)):
        li, lj, lk = lam[..., i], lam[..., j], lam[..., k]
        ok &= 3.0 * li * li + li * (lj + lk) - lj * lk > 0.0
    return bool(ok) if ok.ndim == 0 else ok


def third_moments_axis(w, sigma, f, e0=1.0):
    """``<(Omega.R_l)^3>`` carried by a single axis term.

    ``F (sigma^2 + 2F^2 - 3 w sigma) / (2F^2 - w sigma - w^2)``; where the
    denominator vanishes (``sigma = w``, ``|F| = w``) numerator and denominator
    share the factor ``2(F^2 - w^2)`` and the value is ``F``.
    """
    w, sigma, f = (np.asarray(a, dtype=float) for a in (w, sigma, f))
    den = 2.0 * f * f - w * sigma - w * w
    num = f * (sigma * sigma + 2.0 * f * f - 3.0 * w * sigma)
    singular = np.abs(den) < SINGULAR_DEN * e0 * e0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(singular, f, num / np.where(singular, 1.0, den))
    return _out(t)


# ---------------------------------------------------------------------------
# full pipeline


@dataclass(frozen=True, eq=False)
class ClosureParams:
    """Closure parameters for one state, in absolute (E0-scaled) units.

    ``shapes[i]`` is ``None`` when no beta kernel matches axis ``i``
    (only possible for non-strict evaluation, flagged by ``unsafe``).
    """

    e0: float
    frame: ClosureFrame
    sigma: np.ndarray
    w: np.ndarray
    shapes: tuple
    delta: float
    unsafe: bool = False
    normalized: bool = True
    notes: tuple = field(default=())

    @property
    def f(self) -> np.ndarray:
        return self.frame.f

    def terms(self) -> list[AnsatzTerm]:
        if any(s is None for s in self.shapes):
            raise ClosureError("closure has no valid ansatz for this state")
        return [
            AnsatzTerm(self.w[i], self.frame.rot[:, i], self.shapes[i]) for i in range(3)
        ]

    def to_dict(self) -> dict:
        return {
            "lambda": self.frame.lam.tolist(),
            "rot": self.frame.rot.tolist(),
            "f": self.frame.f.tolist(),
            "sigma": self.sigma.tolist(),
            "w": self.w.tolist(),
            "shapes": [None if s is None else s.to_dict() for s in self.shapes],
            "delta": self.delta,
            "unsafe": self.unsafe,
        }


def _normalized_frame(m: MomentState, strict: bool, frame: ClosureFrame | None = None):
    frame = frame if frame is not None else eigenframe(m)
    e0 = m.e0
    margin = realizability_margin(m, frame) if strict else None
    if strict and margin < -MARGIN_TOL * e0:
        raise NotRealizable(f"realizability margin {margin!r} < 0")
    lam = frame.lam / e0
    f = frame.f / e0
    zero = lam <= ZERO_LAMBDA
    # a vanishing eigenvalue forces the matching F and sigma to vanish too
    lam = np.where(zero, 0.0, lam)
    f = np.where(zero, 0.0, f)
    return frame, lam, f


def closure_params(
    m: MomentState, strict: bool = True, frame: ClosureFrame | None = None
) -> ClosureParams:
    """Eigenframe, weights and per-axis beta shapes for the state ``m``.

    With ``strict=True`` any state without a non-negative three-term ansatz
    raises: :class:`NotRealizable`, :class:`DomainError` (outside the box),
    :class:`ZeroWeightInconsistency`, or :class:`Unrealizable1D` (negative
    discriminant). With ``strict=False`` the algebraic parameters are always
    returned and failures are reported through ``unsafe`` and ``notes``.

    ``frame`` overrides the computed eigenframe; it must diagonalize E2.
    Inside a degenerate eigenspace any orthonormal basis is admissible and
    the closure does depend on the choice.
    """
    e0 = m.e0
    frame, lam, f = _normalized_frame(m, strict, frame)
    notes = []
    try:
        _check_box(lam, f)
    except DomainError:
        if strict:
            raise
        notes.append("outside box")
    sigma, w = sigma_weights(lam, f, check=False)

    shapes = []
    for i in range(3):
        if abs(w[i]) < ZERO_WEIGHT:
            if abs(f[i]) >= ZERO_F:
                if strict:
                    raise ZeroWeightInconsistency(f"w_{i + 1} = 0 but F_{i + 1} = {f[i]!r}")
                notes.append(f"zero weight with F on axis {i + 1}")
            w[i] = 0.0
            shapes.append(BetaShape.uniform())
            continue
        if w[i] < 0.0:
            if strict:
                raise NotRealizable(f"negative weight w_{i + 1} = {w[i]!r}")
            notes.append(f"negative weight on axis {i + 1}")
            shapes.append(None)
            continue
        try:
            shapes.append(shape_from_moments(f[i] / w[i], sigma[i] / w[i]))
        except Unrealizable1D:
            if strict:
                raise
            notes.append(f"no beta kernel on axis {i + 1}")
            shapes.append(None)

    delta = float(np.min(w * sigma - f * f))
    # unsafe: no non-negative three-term ansatz backs these parameters
    unsafe = bool(notes) or delta < -MARGIN_TOL
    # keep the enforced values (lam_i = 0 => F_i = 0) in the stored frame
    frame = ClosureFrame(lam * e0, frame.rot, f * e0)
    return ClosureParams(
        e0=e0,
        frame=frame,
        sigma=sigma * e0,
        w=w * e0,
        shapes=tuple(shapes),
        delta=delta * e0 * e0,
        unsafe=unsafe,
        notes=tuple(notes),
    )


def frame_third_moments(p: ClosureParams) -> np.ndarray:
    """Third-moment tensor in the eigenframe, ``<R_l R_m R_n>``."""
    f = p.frame.f
    t = third_moments_axis(p.w, p.sigma, f, p.e0)
    out = np.zeros((3, 3, 3))
    for l in range(3):
        out[l, l, l] = t[l]
        side = 0.5 * (f[l] - t[l])
        for mm in range(3):
            if mm != l:
                out[l, mm, mm] = out[mm, l, mm] = out[mm, mm, l] = side
    return out


def third_moments(p: ClosureParams) -> ThirdMoments:
    """Closed third moments rotated to the lab frame."""
    r = p.frame.rot
    t = np.einsum("il,jm,kn,lmn->ijk", r, r, r, frame_third_moments(p))
    # symmetrize away rounding from the rotation
    t = (
        t + t.transpose(0, 2, 1) + t.transpose(1, 0, 2)
        + t.transpose(1, 2, 0) + t.transpose(2, 0, 1) + t.transpose(2, 1, 0)
    ) / 6.0
    return ThirdMoments(t)


def fluxes(m: MomentState, strict: bool = True, params: ClosureParams | None = None) -> np.ndarray:
    """Rows ``f_x, f_y, f_z`` of the moment system, in state order.

    ``f_k = [E1_k, E2_k1, E2_k2, E2_k3, E3_k11, E3_k12, E3_k13, E3_k22, E3_k23]``.
    """
    p = params if params is not None else closure_params(m, strict=strict)
    e3 = third_moments(p).tensor
    out = np.empty((3, 9))
    for k in range(3):
        out[k, 0] = m.e1[k]
        out[k, 1:4] = m.e2[k]
        out[k, 4:9] = [e3[k, 0, 0], e3[k, 0, 1], e3[k, 0, 2], e3[k, 1, 1], e3[k, 1, 2]]
    return out


@dataclass(frozen=True)
class NonnegDiagnostics:
    delta: float
    box_ok: bool
    sigma_pos_ok: bool
    margin: float

    @property
    def guaranteed(self) -> bool:
        """All sufficient conditions for a non-negative ansatz hold."""
        return self.box_ok and self.sigma_pos_ok and self.delta >= -MARGIN_TOL

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "box_ok": self.box_ok,
            "sigma_pos_ok": self.sigma_pos_ok,
            "margin": self.margin,
        }


def nonneg_diagnostics(m: MomentState) -> NonnegDiagnostics:
    """Discriminant ``min_i(w_i sigma_i - F_i^2)`` and the sufficient conditions."""
    frame, lam, f = _normalized_frame(m, strict=False)
    sigma, w = sigma_weights(lam, f, check=False)
    delta = float(np.min(w * sigma - f * f)) * m.e0 ** 2
    return NonnegDiagnostics(
        delta=delta,
        box_ok=bool(np.all(np.abs(f) <= lam + BOX_TOL)),
        sigma_pos_ok=bool(sigma_positive(lam)),
        margin=float(realizability_margin(m, frame)),
    )


# ---------------------------------------------------------------------------
# slab geometry


def slab_state(e1: float, e2: float) -> MomentState:
    """3D state of a slab intensity with normalized moments ``<mu> = e1``, ``<mu^2> = e2``."""
    return MomentState(1.0, (e1, 0.0, 0.0), np.diag([e2, 0.5 * (1.0 - e2), 0.5 * (1.0 - e2)]))


def slab_e3(e1: float, e2: float) -> float:
    """Closed ``<mu^3>`` for the slab state; raises when the closure has no valid ansatz."""
    return float(third_moments(closure_params(slab_state(e1, e2))).tensor[0, 0, 0])


def slab_e3_surface(grid_n: int = 200):
    """``(e1, e2, e3, valid)`` over a ``grid_n x grid_n`` grid of the slab triangle.

    ``e1`` runs over ``[-1, 1]`` (outer loop) and ``e2`` over ``[0, 1]`` (inner
    loop); only nodes with ``e1^2 <= e2`` are kept. Where the closure has no
    valid ansatz the row has ``valid = False`` and ``e3 = nan``.
    """
    if grid_n < 2:
        raise ValueError("grid resolution must be at least 2")
    rows = []
    for e1 in np.linspace(-1.0, 1.0, grid_n):
        for e2 in np.linspace(0.0, 1.0, grid_n):
            if e1 * e1 > e2:
                continue
            try:
                rows.append((e1, e2, slab_e3(e1, e2), True))
            except ClosureError:
                rows.append((e1, e2, math.nan, False))
    return rows
