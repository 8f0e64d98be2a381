"""Moment states, realizability, and the eigenframe of the second moment.

A state holds the nine known moments of the angular intensity,

    E0 = <I>,   E1 = <Omega I>,   E2 = <Omega (x) Omega I>,

stored in the order  [1, Wx, Wy, Wz, Wx^2, WxWy, WxWz, Wy^2, WyWz].
``E2_zz`` is never stored; it is recovered from ``trace(E2) = E0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _SciRotation

from .errors import (
    BoundaryViolation,
    ClosureError,
    NonPositiveEnergy,
    TraceMismatch,
)

# (i, j) index pairs of the independent second moments, in state order
E2_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2))

TRACE_RTOL = 1e-12
TRACE_REPAIR_RTOL = 1e-10
SYMMETRY_TOL = 1e-14
EIG_CLAMP_TOL = 1e-14
DEGENERACY_TOL = 1e-9
PROJECTION_TOL = 1e-12
ZERO_F_TOL = 1e-12


def _readonly(a, shape) -> np.ndarray:
    out = np.array(a, dtype=float)
    if out.shape != shape:
        raise ClosureError(f"expected shape {shape}, got {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class MomentState:
    """Validated (E0, E1, E2) triple. Immutable."""

    e0: float
    e1: np.ndarray
    e2: np.ndarray

    def __post_init__(self):
        e0 = float(self.e0)
        e1 = _readonly(self.e1, (3,))
        e2 = _readonly(self.e2, (3, 3))
        if not e0 > 0.0:
            raise NonPositiveEnergy(f"E0 must be positive, got {e0}")
        if abs(np.trace(e2) - e0) > TRACE_RTOL * e0:
            raise TraceMismatch(f"trace(E2) = {np.trace(e2)!r} differs from E0 = {e0!r}")
        if np.max(np.abs(e2 - e2.T)) > SYMMETRY_TOL * e0:
            raise ClosureError("E2 is not symmetric")
        object.__setattr__(self, "e0", e0)
        object.__setattr__(self, "e1", e1)
        object.__setattr__(self, "e2", e2)

    def as_vector(self) -> np.ndarray:
        """The nine known moments in state order."""
        e2 = self.e2
        return np.array([self.e0, *self.e1, *(e2[i, j] for i, j in E2_PAIRS)])

    @classmethod
    def from_vector(cls, v) -> "MomentState":
        v = np.asarray(v, dtype=float)
        e0 = v[0]
        xx, xy, xz, yy, yz = v[4:9]
        e2 = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, e0 - xx - yy]])
        return cls(e0, v[1:4], e2)

    def to_dict(self) -> dict:
        return {"e0": self.e0, "e1": self.e1.tolist(), "e2": self.e2.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MomentState":
        return build_moments(d["e0"], d["e1"], d["e2"])


@dataclass(frozen=True, eq=False)
class Rotation:
    """Proper rotation matrix (orthogonal, det +1)."""

    matrix: np.ndarray

    def __post_init__(self):
        q = _readonly(self.matrix, (3, 3))
        if np.max(np.abs(q.T @ q - np.eye(3))) > 1e-12 or abs(np.linalg.det(q) - 1.0) > 1e-12:
            raise ClosureError("matrix is not a proper rotation")
        object.__setattr__(self, "matrix", q)

    @property
    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    @classmethod
    def random(cls, rng=None) -> "Rotation":
        return cls(_SciRotation.random(random_state=rng).as_matrix())

    @classmethod
    def to_x_axis(cls, n) -> "Rotation":
        """A rotation Q with Q @ n = e_x."""
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        u, v = _complement(n)
        return cls(np.array([n, u, v]))


@dataclass(frozen=True, eq=False)
class ClosureFrame:
    """Eigenvalues (descending), eigenvectors as columns of ``rot``, and F = rot^T E1."""

    lam: np.ndarray
    rot: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", _readonly(self.lam, (3,)))
        object.__setattr__(self, "rot", _readonly(self.rot, (3, 3)))
        object.__setattr__(self, "f", _readonly(self.f, (3,)))


def build_moments(e0, e1, e2) -> MomentState:
    """Validate raw moments: symmetrize E2 and repair tiny trace drift."""
    e0 = float(e0)
    if not e0 > 0.0:
        raise NonPositiveEnergy(f"E0 must be positive, got {e0}")
    e2 = np.array(e2, dtype=float)
    e2 = 0.5 * (e2 + e2.T)
    tr = np.trace(e2)
    if abs(tr - e0) > TRACE_REPAIR_RTOL * e0:
        raise TraceMismatch(f"trace(E2) = {tr!r} differs from E0 = {e0!r}")
    if tr != e0:
        e2[np.diag_indices(3)] *= e0 / tr
    return MomentState(e0, e1, e2)


# ---------------------------------------------------------------------------
# symmetric 3x3 eigensolver


def _cross(a, b):
    # np.cross carries heavy dispatch overhead for single 3-vectors
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _complement(v):
    """Two unit vectors completing ``v`` to a right-handed orthonormal frame."""
    if abs(v[0]) > abs(v[1]):
        u = np.array([-v[2], 0.0, v[0]]) / math.hypot(v[0], v[2])
    else:
        u = np.array([0.0, v[2], -v[1]]) / math.hypot(v[1], v[2])
    return u, _cross(v, u)


def _char_coeffs(a):
    c2 = a[0, 0] + a[1, 1] + a[2, 2]
    c1 = (
        a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
        + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    )
    c0 = np.linalg.det(a)
    return c2, c1, c0


def sym3_eigvals(a) -> np.ndarray:
    """Eigenvalues of a symmetric 3x3 matrix, descending.

    Trigonometric closed form followed by one Newton step on the
    characteristic polynomial for each well-separated root.
    """
    a = np.asarray(a, dtype=float)
    q = np.trace(a) / 3.0
    b = a - q * np.eye(3)
    p2 = (
        b[0, 0] ** 2 + b[1, 1] ** 2 + b[2, 2] ** 2
        + 2.0 * (b[0, 1] ** 2 + b[0, 2] ** 2 + b[1, 2] ** 2)
    ) / 6.0
    if p2 == 0.0:
        return np.array([q, q, q])
    p = math.sqrt(p2)
    r = np.linalg.det(b / p) / 2.0
    phi = math.acos(min(1.0, max(-1.0, r))) / 3.0
    l1 = q + 2.0 * p * math.cos(phi)
    l3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    vals = [l1, 3.0 * q - l1 - l3, l3]

    c2, c1, c0 = _char_coeffs(a)
    scale = max(abs(l1), abs(l3), p)
    for k, lam in enumerate(vals):
        dchi = -(3.0 * lam * lam - 2.0 * c2 * lam + c1)
        # near a double root the derivative vanishes and the step is unreliable
        if abs(dchi) > 1e-6 * scale * scale:
            chi = -lam ** 3 + c2 * lam * lam - c1 * lam + c0
            vals[k] = lam - chi / dchi
    return np.sort(np.array(vals))[::-1]


def _null_vector(m):
    rows = (m[0], m[1], m[2])
    cands = (_cross(rows[0], rows[1]), _cross(rows[0], rows[2]), _cross(rows[1], rows[2]))
    norms = [float(np.dot(c, c)) for c in cands]
    k = int(np.argmax(norms))
    if norms[k] == 0.0:
        return None
    return cands[k] / math.sqrt(norms[k])


def sym3_eigh(a):
    """Eigenpairs of a symmetric 3x3 matrix; eigenvalues descending, vectors as columns.

    The most isolated eigenvalue gets its vector from cross products of the
    rows of ``A - lam I``; the remaining pair is resolved by a 2x2 Jacobi
    rotation in the orthogonal complement, which stays accurate when the
    pair is close.
    """
    a = np.asarray(a, dtype=float)
    if a[0, 1] == 0.0 and a[0, 2] == 0.0 and a[1, 2] == 0.0:
        d = np.diag(a).copy()
        order = np.argsort(-d, kind="stable")
        return d[order], np.eye(3)[:, order]
    vals = sym3_eigvals(a)
    scale = max(abs(vals[0]), abs(vals[2]))
    if vals[0] - vals[2] <= 1e-15 * scale:
        return vals, np.eye(3)
    if vals[0] - vals[1] >= vals[1] - vals[2]:
        iso, pair = 0, (1, 2)
    else:
        iso, pair = 2, (0, 1)
    v = _null_vector(a - vals[iso] * np.eye(3))
    if v is None:
        return vals, np.eye(3)
    # one refinement with the Rayleigh quotient: the characteristic
    # polynomial is too ill-conditioned to pin the root when gaps are small
    v_ref = _null_vector(a - (v @ a @ v) * np.eye(3))
    if v_ref is not None:
        v = v_ref
    u, w = _complement(v)
    au, aw = a @ u, a @ w
    b00, b01, b11 = u @ au, u @ aw, w @ aw
    theta = 0.5 * math.atan2(2.0 * b01, b00 - b11)
    c, s = math.cos(theta), math.sin(theta)
    vecs = np.empty((3, 3))
    vecs[:, iso] = v
    vecs[:, pair[0]] = c * u + s * w
    vecs[:, pair[1]] = -s * u + c * w
    # The trigonometric roots lose half the digits near a double root
    # (acos is ill-conditioned at +-1); the 2x2 block and the Rayleigh
    # quotient of the isolated vector are accurate to rounding.
    mid, rad = 0.5 * (b00 + b11), math.hypot(0.5 * (b00 - b11), b01)
    vals = vals.copy()
    vals[iso] = v @ a @ v
    vals[pair[0]], vals[pair[1]] = mid + rad, mid - rad
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


# ---------------------------------------------------------------------------
# eigenframe with deterministic treatment of degenerate eigenspaces


def _canonical_basis(proj, k):
    """Orthonormal basis of a k-dim subspace, built from the lab axes.

    ``proj`` is the orthogonal projector onto the subspace. Lab axes are
    taken in order of decreasing overlap (ties go to the lower index) and
    Gram-Schmidt orthogonalized.
    """
    norms = np.linalg.norm(proj, axis=0)
    order = sorted(range(3), key=lambda i: (-round(float(norms[i]), 12), i))
    basis = []
    for i in order:
        v = proj[:, i].copy()
        for b in basis:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
        if len(basis) == k:
            break
    return np.column_stack(basis)


def _degenerate_basis(sub, e1, e0):
    k = sub.shape[1]
    proj = sub @ sub.T
    p = proj @ e1
    pn = np.linalg.norm(p)
    if pn < PROJECTION_TOL * e0:
        return _canonical_basis(proj, k)
    if k == 3:
        first = p / pn
        rest = _canonical_basis(np.eye(3) - np.outer(first, first), 2)
        return np.column_stack([first, rest])
    # k == 2: rotate so that E1 splits evenly over the two axes
    c = _canonical_basis(proj, 2)
    pc = c.T @ p
    target = np.where(pc < 0.0, -1.0, 1.0)
    angle = math.atan2(pc[1], pc[0]) - math.atan2(target[1], target[0])
    ca, sa = math.cos(angle), math.sin(angle)
    return c @ np.array([[ca, -sa], [sa, ca]])


def eigenframe(m: MomentState) -> ClosureFrame:
    """Eigen-decomposition of E2 with sorted eigenvalues and a right-handed frame.

    Eigenvalues closer than ``DEGENERACY_TOL * E0`` are treated as one
    eigenspace and replaced by their mean. The basis inside such a space is
    fixed by E1: a plane is oriented so that E1 splits evenly over its two
    axes, the full sphere so that the first axis follows E1. Without an E1
    component the lab axes decide.
    """
    e0 = m.e0
    vals, vecs = sym3_eigh(m.e2)
    vals = vals.copy()
    vals[(vals < 0.0) & (vals >= -EIG_CLAMP_TOL * e0)] = 0.0

    groups = [[0]]
    for i in (1, 2):
        if vals[i - 1] - vals[i] < DEGENERACY_TOL * e0:
            groups[-1].append(i)
        else:
            groups.append([i])
    for g in groups:
        if len(g) > 1:
            vals[g] = vals[g].mean()
            vecs[:, g] = _degenerate_basis(vecs[:, g], m.e1, e0)

    for j in range(3):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0.0:
            vecs[:, j] = -vecs[:, j]
    if np.linalg.det(vecs) < 0.0:
        vecs[:, 2] = -vecs[:, 2]
    return ClosureFrame(vals, vecs, vecs.T @ m.e1)


def realizability_margin(m: MomentState, frame: ClosureFrame | None = None) -> float:
    """``E0 - sum_i F_i^2 / lam_i``; non-negative exactly on the realizable set."""
    frame = frame or eigenframe(m)
    e0 = m.e0
    if frame.lam[-1] < -EIG_CLAMP_TOL * e0:
        raise BoundaryViolation(f"E2 has a negative eigenvalue {frame.lam[-1]!r}")
    total = 0.0
    for lam, f in zip(frame.lam, frame.f):
        if lam <= EIG_CLAMP_TOL * e0:
            if abs(f) > ZERO_F_TOL * e0:
                raise BoundaryViolation(f"zero eigenvalue with F = {f!r}")
            continue
        total += f * f / lam
    return e0 - total


def rotate_moments(m: MomentState, rot) -> MomentState:
    """Moments of the actively rotated intensity: E1 -> Q E1, E2 -> Q E2 Q^T."""
    q = rot.matrix if isinstance(rot, Rotation) else np.asarray(rot, dtype=float)
    e2 = q @ m.e2 @ q.T
    return build_moments(m.e0, q @ m.e1, 0.5 * (e2 + e2.T))


def _quadratic_row(i, j):
    """Express Omega_i Omega_j in the state basis (uses |Omega| = 1)."""
    row = np.zeros(9)
    i, j = min(i, j), max(i, j)
    if (i, j) == (2, 2):
        row[0], row[4], row[7] = 1.0, -1.0, -1.0
    else:
        row[4 + E2_PAIRS.index((i, j))] = 1.0
    return row


def moment_transform(rot) -> np.ndarray:
    """The 9x9 matrix T with v(Q Omega) = T v(Omega) for the state basis v."""
    q = rot.matrix if isinstance(rot, Rotation) else np.asarray(rot, dtype=float)
    t = np.zeros((9, 9))
    t[0, 0] = 1.0
    t[1:4, 1:4] = q
    for r, (a, b) in enumerate(E2_PAIRS):
        for i in range(3):
            for j in range(3):
                t[4 + r] += q[a, i] * q[b, j] * _quadratic_row(i, j)
    return t


# order of the ten independent third moments: 111, 112, 113, 122, 123, 133, 222, 223, 233, 333
E3_TRIPLES = tuple((i, j, k) for i in range(3) for j in range(i, 3) for k in range(j, 3))


@dataclass(frozen=True, eq=False)
class ThirdMoments:
    """Fully symmetric rank-3 tensor ``<Omega_i Omega_j Omega_k I>`` in the lab frame."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.array(self.tensor, dtype=float)
        if t.shape != (3, 3, 3):
            raise ClosureError("third moments must be a 3x3x3 array")
        scale = max(1.0, float(np.abs(t).max()))
        for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
            if np.max(np.abs(t - t.transpose(perm))) > 1e-12 * scale:
                raise ClosureError("third-moment tensor is not symmetric")
        t.flags.writeable = False
        object.__setattr__(self, "tensor", t)

    def entries(self) -> np.ndarray:
        """The ten independent entries in lexicographic index order."""
        return np.array([self.tensor[i, j, k] for i, j, k in E3_TRIPLES])

    @classmethod
    def from_entries(cls, values) -> "ThirdMoments":
        t = np.empty((3, 3, 3))
        for v, (i, j, k) in zip(values, E3_TRIPLES):
            for a, b, c in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                t[a, b, c] = v
        return cls(t)
