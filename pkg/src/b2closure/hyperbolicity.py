"""Flux Jacobians, real diagonalizability, and region sampling.

At ``E1 = 0`` every third moment vanishes for all ``(E0, E2)``, so the
directional Jacobian only couples ``E1`` to the ``E2`` fluxes. In the
eigenframe of ``E2`` and along an eigen-axis ``k`` its closure-dependent
entries are

    a = dE3_kkk / dE1_k = sigma_k (3 w_k - sigma_k) / (w_k (sigma_k + w_k))
    b = dE3_kkm / dE1_m = (w_m - sigma_m)^2 / (2 w_m (sigma_m + w_m))   (m != k)

and the spectrum is ``{0 (x3), +-sqrt(a), +-sqrt(b), +-sqrt(c)}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .closure import fluxes, sigma_positive, sigma_weights, third_moments_axis
from .errors import ClosureError, ClosureFailure, DegenerateState
from .moments import E2_PAIRS, MomentState

DEFAULT_TOL = 1e-9
DEFAULT_DIRS = 200
FD_STEP = 1e-6
DEGENERATE_LAMBDA = 1e-12
NONNEG_TOL = 1e-12

CSV_HEADER = ("l1", "l2", "l3", "f1", "f2", "f3", "delta", "sigma_pos", "hyperbolic", "min_eig_gap")


@dataclass(frozen=True, eq=False)
class JacobianMatrix:
    """A 9x9 flux Jacobian in state order.

    ``abc`` holds the closed-form entries ``(a, b, c)`` for an analytic
    Jacobian along an eigen-axis; it is ``None`` otherwise.
    """

    entries: np.ndarray
    direction: np.ndarray
    analytic: bool = False
    abc: tuple | None = None

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.shape != (9, 9):
            raise ValueError("Jacobian must be 9x9")
        e.flags.writeable = False
        d = np.array(self.direction, dtype=float)
        d.flags.writeable = False
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class DiagResult:
    ok: bool
    speeds: np.ndarray
    reason: str = ""


@dataclass(frozen=True)
class RegionSample:
    """One row of a region sweep."""

    lambda_hat: tuple
    f_hat: tuple
    delta: float
    sigma_pos: bool
    hyperbolic: bool | None = None
    min_eig_gap: float | None = None

    @property
    def nonneg(self) -> bool:
        """Sufficient conditions for a non-negative ansatz hold at every sample."""
        return self.delta >= -NONNEG_TOL and self.sigma_pos


# ---------------------------------------------------------------------------
# Jacobians


def _e2_column(i, j):
    """Sparse derivative of E2_ij with respect to the state vector."""
    i, j = min(i, j), max(i, j)
    if (i, j) == (2, 2):
        return {0: 1.0, 4: -1.0, 7: -1.0}
    return {4 + E2_PAIRS.index((i, j)): 1.0}


def _conservative_rows(k):
    """Rows 0-3 of J_k: fluxes of E0 and E1 are known moments."""
    j = np.zeros((9, 9))
    j[0, 1 + k] = 1.0
    for i in range(3):
        for col, val in _e2_column(k, i).items():
            j[1 + i, col] = val
    return j


def wave_coefficients(lambda_hat):
    """``(rho, tau)`` per axis at ``E1 = 0``: ``rho_l = dT_l/dF_l``, ``tau_l = (1 - rho_l)/2``.

    ``T_l`` is the axis third moment ``<(Omega.R_l)^3>``.
    """
    lam = np.asarray(lambda_hat, dtype=float)
    sigma, w = sigma_weights(lam, np.zeros_like(lam), check=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = sigma * (3.0 * w - sigma) / (w * (sigma + w))
        tau = 0.5 * (w - sigma) ** 2 / (w * (sigma + w))
    return rho, tau


def coupling_fd(lambda_hat, k: int, step: float = FD_STEP) -> float:
    """``dE3_kmm / dE1_k`` (any ``m != k``) by central differences, frame fixed."""
    lam = np.asarray(lambda_hat, dtype=float)
    vals = []
    for s in (step, -step):
        f = np.zeros(3)
        f[k] = s
        sigma, w = sigma_weights(lam, f, check=False)
        t = third_moments_axis(w[k], sigma[k], f[k])
        vals.append(0.5 * (f[k] - t))
    return (vals[0] - vals[1]) / (2.0 * step)


def jacobian_analytic_E1zero(lambda_hat, axis: int) -> JacobianMatrix:
    """Jacobian ``J_axis`` (axis = 1, 2, 3) at ``E1 = 0``, ``E2 = diag(lambda_hat)``, ``E0 = 1``.

    The eigen-axes coincide with the lab axes. Derivatives of the third
    moments with respect to E0 and E2 vanish because every state with
    ``E1 = 0`` has zero third moments.
    """
    lam = np.asarray(lambda_hat, dtype=float)
    if np.any(lam <= DEGENERATE_LAMBDA):
        raise DegenerateState(f"eigenvalue on the boundary: {lam.tolist()}")
    k = int(axis) - 1
    if k not in (0, 1, 2):
        raise ValueError("axis must be 1, 2 or 3")
    rho, tau = wave_coefficients(lam)
    j = _conservative_rows(k)
    for r, (a, b) in enumerate(E2_PAIRS):
        idx = sorted((k, a, b))
        row = 4 + r
        if idx[0] == idx[2]:  # (l, l, l)
            j[row, 1 + k] = rho[k]
        elif a == b:  # E3_kmm with m != k: coupling entry
            j[row, 1 + k] = coupling_fd(lam, k)
        elif k in (a, b):  # E3_kkm: derivative w.r.t. E1_m
            m = b if a == k else a
            j[row, 1 + m] = tau[m]
    others = [i for i in range(3) if i != k]
    direction = np.eye(3)[k]
    return JacobianMatrix(j, direction, analytic=True, abc=(rho[k], tau[others[0]], tau[others[1]]))


def axis_jacobians(lambda_hat) -> list[JacobianMatrix]:
    return [jacobian_analytic_E1zero(lambda_hat, k) for k in (1, 2, 3)]


def directional_jacobian(jacs, n) -> JacobianMatrix:
    """``sum_k n_k J_k``."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    entries = sum(nk * jk.entries for nk, jk in zip(n, jacs))
    axis_aligned = np.count_nonzero(n) == 1
    abc = None
    if axis_aligned and all(j.analytic for j in jacs):
        k = int(np.flatnonzero(n)[0])
        if n[k] > 0:
            abc = jacs[k].abc
    return JacobianMatrix(entries, n, analytic=all(j.analytic for j in jacs), abc=abc)


def _flux_dir(m: MomentState, n, strict):
    try:
        f = fluxes(m, strict=strict)
    except ClosureError as exc:
        raise ClosureFailure(f"closure not evaluable in the stencil: {exc}") from exc
    out = n @ f
    if not np.all(np.isfinite(out)):
        raise ClosureFailure("non-finite flux in the stencil")
    return out


def jacobian_fd(
    m: MomentState,
    n,
    step: float = FD_STEP,
    richardson: bool = False,
    strict: bool = False,
) -> JacobianMatrix:
    """Central-difference Jacobian of ``n . f`` with respect to the state vector.

    The step is relative to E0. ``richardson=True`` combines steps ``h`` and
    ``h/2`` to cancel the leading error term.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    v = m.as_vector()

    def central(h):
        jac = np.empty((9, 9))
        for col in range(9):
            dv = np.zeros(9)
            dv[col] = h * m.e0
            try:
                plus = MomentState.from_vector(v + dv)
                minus = MomentState.from_vector(v - dv)
            except ClosureError as exc:
                raise ClosureFailure(str(exc)) from exc
            jac[:, col] = (_flux_dir(plus, n, strict) - _flux_dir(minus, n, strict)) / (2.0 * h * m.e0)
        return jac

    jac = central(step)
    if richardson:
        jac = (4.0 * central(0.5 * step) - jac) / 3.0
    return JacobianMatrix(jac, n, analytic=False)


# ---------------------------------------------------------------------------
# diagonalizability


def _closed_form(abc, tol):
    a, b, c = abc
    ok = min(a, b, c) > tol
    roots = [math.sqrt(x) if x > 0 else 0.0 for x in (a, b, c)]
    speeds = np.sort(np.array([0.0, 0.0, 0.0, *roots, *(-r for r in roots)]))
    return DiagResult(ok, speeds, "" if ok else "non-positive wave coefficient")


def real_diagonalizable_batch(mats: np.ndarray, tol: float = DEFAULT_TOL):
    """Vectorized real-diagonalizability test for a stack of square matrices.

    Returns ``(ok, speeds)`` with ``speeds`` the sorted real parts of the
    eigenvalues. An eigenvalue cluster (spread below ``sqrt(tol) * |J|``)
    counts as semisimple when ``J - mean * I`` has at least as many singular
    values below ``tol * |J| + 2 * spread`` as the cluster has members.
    """
    mats = np.asarray(mats, dtype=float)
    nb, dim = mats.shape[0], mats.shape[-1]
    norms = np.linalg.norm(mats, axis=(1, 2))
    norms = np.where(norms > 0.0, norms, 1.0)
    ev = np.linalg.eigvals(mats)
    real_ok = np.all(np.abs(ev.imag) <= tol * norms[:, None], axis=1)
    speeds = np.sort(ev.real, axis=1)

    ctol = math.sqrt(tol) * norms
    new_cluster = np.ones((nb, dim), dtype=bool)
    new_cluster[:, 1:] = np.diff(speeds, axis=1) > ctol[:, None]
    cluster_id = np.cumsum(new_cluster, axis=1) - 1

    ok = real_ok.copy()
    checks = []  # (matrix index, shift, size, threshold)
    for b in np.flatnonzero(real_ok):
        ids = cluster_id[b]
        if ids[-1] == dim - 1:
            continue  # all eigenvalues simple
        for c in range(ids[-1] + 1):
            members = speeds[b, ids == c]
            if members.size > 1:
                spread = members[-1] - members[0]
                checks.append((b, members.mean(), members.size, tol * norms[b] + 2.0 * spread))
    if checks:
        idx = np.array([c[0] for c in checks])
        shifted = mats[idx] - np.array([c[1] for c in checks])[:, None, None] * np.eye(dim)
        sv = np.linalg.svd(shifted, compute_uv=False)
        nullity = np.sum(sv <= np.array([c[3] for c in checks])[:, None], axis=1)
        bad = nullity < np.array([c[2] for c in checks])
        ok[idx[bad]] = False
    return ok, speeds


def is_real_diagonalizable(j, tol: float = DEFAULT_TOL) -> DiagResult:
    """Test whether a Jacobian is diagonalizable with real eigenvalues.

    Analytic axis-aligned Jacobians use the closed form (all of ``a, b, c``
    must exceed ``tol``); anything else goes through the numerical test of
    :func:`real_diagonalizable_batch`.
    """
    if isinstance(j, JacobianMatrix):
        if j.abc is not None:
            return _closed_form(j.abc, tol)
        entries = j.entries
    else:
        entries = np.asarray(j, dtype=float)
    if not np.all(np.isfinite(entries)):
        return DiagResult(False, np.full(entries.shape[0], np.nan), "non-finite entries")
    norm = np.linalg.norm(entries) or 1.0
    ev = np.linalg.eigvals(entries)
    if np.any(np.abs(ev.imag) > tol * norm):
        return DiagResult(False, np.sort(ev.real), "complex eigenvalues")
    ok, speeds = real_diagonalizable_batch(entries[None], tol)
    return DiagResult(bool(ok[0]), speeds[0], "" if ok[0] else "defective eigenvalue")


# ---------------------------------------------------------------------------
# region sampling


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform unit vectors (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def barycentric_grid(grid_n: int) -> np.ndarray:
    """All ``(i, j, k) / grid_n`` with ``i + j + k = grid_n``, in lexicographic order."""
    if grid_n < 2:
        raise ValueError("grid resolution must be at least 2")
    nodes = [
        (i, j, grid_n - i - j) for i in range(grid_n + 1) for j in range(grid_n - i + 1)
    ]
    return np.array(nodes, dtype=float) / grid_n


def _box_samples(lam, f_grid_n):
    """``f_grid_n^3`` points filling the box ``|f_j| <= lam_j`` for each node; shape (nodes, S, 3)."""
    t = np.linspace(-1.0, 1.0, f_grid_n)
    tt = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
    return tt[None, :, :] * lam[:, None, :]


def iter_nonneg_region(grid_n: int, f_grid_n: int, chunk: int = 256) -> Iterator[RegionSample]:
    """Discriminant sweep over the barycentric triangle and the F-box.

    Each node reports the minimum of the discriminant over its box samples
    (and the sample attaining it) together with the sigma-positivity test.
    """
    if f_grid_n < 2:
        raise ValueError("F-grid resolution must be at least 2")
    nodes = barycentric_grid(grid_n)
    for start in range(0, len(nodes), chunk):
        lam = nodes[start:start + chunk]
        f = _box_samples(lam, f_grid_n)
        lam_b = np.broadcast_to(lam[:, None, :], f.shape)
        sigma, w = sigma_weights(lam_b, f, check=False)
        disc = np.min(w * sigma - f * f, axis=-1)
        worst = np.argmin(disc, axis=1)
        spos = sigma_positive(lam)
        for r in range(len(lam)):
            yield RegionSample(
                lambda_hat=tuple(lam[r]),
                f_hat=tuple(f[r, worst[r]]),
                delta=float(disc[r, worst[r]]),
                sigma_pos=bool(spos[r]),
            )


def sample_nonneg_region(grid_n: int, f_grid_n: int) -> list[RegionSample]:
    return list(iter_nonneg_region(grid_n, f_grid_n))


def _min_sq_speed(speeds, n_zero=3):
    """Smallest squared speed among the non-trivial eigenvalues (all but the ``n_zero`` smallest in modulus)."""
    mags = np.sort(np.abs(speeds), axis=-1)[..., n_zero:]
    return np.min(mags * mags, axis=-1)


def hyperbolic_node(lambda_hat, directions, tol: float = DEFAULT_TOL):
    """``(hyperbolic, min_eig_gap)`` at ``E1 = 0``.

    The eigen-axes are tested first with the closed form; a failure there
    settles the node without sweeping the other directions.
    """
    lam = np.asarray(lambda_hat, dtype=float)
    try:
        jacs = axis_jacobians(lam)
    except DegenerateState:
        return False, None
    abc = np.array([j.abc for j in jacs])
    axis_gap = float(abc.min())
    if not axis_gap > tol:
        return False, axis_gap
    stack = np.einsum("dk,kij->dij", directions, np.array([j.entries for j in jacs]))
    ok, speeds = real_diagonalizable_batch(stack, tol)
    gap = min(axis_gap, float(np.min(_min_sq_speed(speeds))))
    return bool(np.all(ok)), gap


def iter_hyperbolic_region(
    grid_n: int, dir_n: int = DEFAULT_DIRS, tol: float = DEFAULT_TOL
) -> Iterator[RegionSample]:
    """Hyperbolicity sweep at ``E1 = 0`` over the barycentric triangle.

    Directions are ``dir_n`` Fibonacci-sphere points; the three eigen-axes
    are always tested as well.
    """
    directions = fibonacci_sphere(dir_n)
    for lam in barycentric_grid(grid_n):
        sigma, w = sigma_weights(lam, np.zeros(3), check=False)
        hyp, gap = hyperbolic_node(lam, directions, tol)
        yield RegionSample(
            lambda_hat=tuple(lam),
            f_hat=(0.0, 0.0, 0.0),
            delta=float(np.min(w * sigma)),
            sigma_pos=bool(sigma_positive(lam)),
            hyperbolic=hyp,
            min_eig_gap=gap,
        )


def sample_hyperbolic_region(grid_n: int, dir_n: int = DEFAULT_DIRS, tol: float = DEFAULT_TOL):
    return list(iter_hyperbolic_region(grid_n, dir_n, tol))


# ---------------------------------------------------------------------------
# CSV


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return format(float(v), ".17g")


def sample_row(s: RegionSample) -> list[str]:
    vals = [*s.lambda_hat, *s.f_hat, s.delta, s.sigma_pos, s.hyperbolic, s.min_eig_gap]
    return [format_value(v) for v in vals]


def write_csv(samples: Iterable[RegionSample], fh) -> int:
    """Stream samples to an open text file; returns the number of rows."""
    fh.write(",".join(CSV_HEADER) + "\n")
    count = 0
    for s in samples:
        fh.write(",".join(sample_row(s)) + "\n")
        count += 1
    return count
