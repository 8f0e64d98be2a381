"""Command-line front end.

Subcommands::

    check         realizability and non-negativity diagnostics of one state
    close         closure parameters, third moments and fluxes of one state
    sample-nonneg discriminant sweep over the barycentric triangle (CSV)
    sample-hyp    hyperbolicity sweep at E1 = 0 (CSV)
    slab-e3       closed third moment over the slab realizability triangle (CSV)

Exit codes: 0 success / realizable, 1 malformed input or usage, 2 state not
realizable (or ``--verify`` failed).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .beta import spherical_moments
from .closure import (
    MARGIN_TOL,
    closure_params,
    fluxes,
    nonneg_diagnostics,
    slab_e3_surface,
    third_moments,
)
from .errors import BoundaryViolation, ClosureError
from .hyperbolicity import (
    DEFAULT_DIRS,
    DEFAULT_TOL,
    format_value,
    iter_hyperbolic_region,
    iter_nonneg_region,
    write_csv,
)
from .moments import E3_TRIPLES, MomentState, build_moments, eigenframe, realizability_margin

EXIT_OK, EXIT_INPUT, EXIT_UNREALIZABLE = 0, 1, 2
VERIFY_TOL_ANALYTIC = 1e-9
VERIFY_TOL_QUADRATURE = 1e-6
COMMANDS = ("check", "close", "sample-nonneg", "sample-hyp", "slab-e3")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    grid: int = 200
    fgrid: int = 11
    dirs: int = DEFAULT_DIRS
    quad_order: int = 64
    tol: float = DEFAULT_TOL
    verify: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("grid", "fgrid", "dirs", "quad_order"):
            if getattr(self, name) < 2:
                raise UsageError(f"--{name.replace('_', '-')} must be at least 2")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="b2closure", description="Three-term beta moment closure for 3D radiative transfer")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="realizability diagnostics of a JSON state")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", dest="output")

    c = sub.add_parser("close", help="evaluate the closure for a JSON state")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", dest="output")
    c.add_argument("--verify", action="store_true", help="re-integrate the ansatz and compare")
    c.add_argument("--quad-order", dest="quad_order", type=int, default=64)

    c = sub.add_parser("sample-nonneg", help="non-negativity sweep (CSV)")
    c.add_argument("--grid", type=int, default=200)
    c.add_argument("--fgrid", type=int, default=11)
    c.add_argument("--out", dest="output")

    c = sub.add_parser("sample-hyp", help="hyperbolicity sweep at E1 = 0 (CSV)")
    c.add_argument("--grid", type=int, default=200)
    c.add_argument("--dirs", type=int, default=DEFAULT_DIRS)
    c.add_argument("--tol", type=float, default=DEFAULT_TOL)
    c.add_argument("--out", dest="output")

    c = sub.add_parser("slab-e3", help="slab-geometry third moment surface (CSV)")
    c.add_argument("--grid", type=int, default=200)
    c.add_argument("--out", dest="output")
    return p


# ---------------------------------------------------------------------------
# I/O helpers


def _finite_or_none(x):
    if isinstance(x, dict):
        return {k: _finite_or_none(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite_or_none(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _finite_or_none(x.tolist())
    return x


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            yield fh


def _emit_json(doc, path):
    with _output(path) as fh:
        json.dump(_finite_or_none(doc), fh, indent=2)
        fh.write("\n")


def read_state(path) -> tuple[dict, MomentState]:
    """Parse a JSON state; structural problems raise ``UsageError``."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        e0 = float(raw["e0"])
        e1 = np.array(raw["e1"], dtype=float)
        e2 = np.array(raw["e2"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read state from {path}: {exc}") from exc
    if e1.shape != (3,) or e2.shape != (3, 3) or not (
        np.all(np.isfinite(e1)) and np.all(np.isfinite(e2)) and math.isfinite(e0)
    ):
        raise UsageError("state must have a finite scalar e0, a 3-vector e1 and a 3x3 e2")
    return raw, build_moments(e0, e1, e2)


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: RunConfig) -> int:
    try:
        _, m = read_state(cfg.input)
    except ClosureError as exc:  # parsed, but not a moment state
        _emit_json({"realizable": False, "error": f"{type(exc).__name__}: {exc}"}, cfg.output)
        return EXIT_UNREALIZABLE
    frame = eigenframe(m)
    doc = {"e0": m.e0, "e1": m.e1, "e2": m.e2, "lambda": frame.lam, "f": frame.f}
    try:
        margin = realizability_margin(m, frame)
    except BoundaryViolation as exc:
        doc.update(margin=None, realizable=False, error=str(exc))
        _emit_json(doc, cfg.output)
        return EXIT_UNREALIZABLE
    diag = nonneg_diagnostics(m)
    realizable = margin >= -MARGIN_TOL * m.e0
    doc.update(
        margin=margin,
        realizable=realizable,
        delta=diag.delta,
        box_ok=diag.box_ok,
        sigma_pos_ok=diag.sigma_pos_ok,
        nonneg_guaranteed=diag.guaranteed,
    )
    _emit_json(doc, cfg.output)
    return EXIT_OK if realizable else EXIT_UNREALIZABLE


def _verify(m: MomentState, params, order: int) -> dict:
    ref = m.as_vector()
    out = {"tol_analytic": VERIFY_TOL_ANALYTIC, "tol_quadrature": VERIFY_TOL_QUADRATURE}
    try:
        terms = params.terms()
    except ClosureError as exc:
        out.update(ok=False, error=str(exc))
        return out
    a, _ = spherical_moments(terms, method="analytic")
    out["analytic_error"] = float(np.max(np.abs(a.as_vector() - ref)) / m.e0)
    try:
        q, _ = spherical_moments(terms, method="quadrature", order=order)
        out["quadrature_error"] = float(np.max(np.abs(q.as_vector() - ref)) / m.e0)
    except ClosureError as exc:
        out["quadrature_error"] = None
        out["error"] = str(exc)
    out["ok"] = (
        out["analytic_error"] <= VERIFY_TOL_ANALYTIC
        and out["quadrature_error"] is not None
        and out["quadrature_error"] <= VERIFY_TOL_QUADRATURE
    )
    return out


def cmd_close(cfg: RunConfig) -> int:
    try:
        _, m = read_state(cfg.input)
    except ClosureError as exc:
        _emit_json({"error": f"{type(exc).__name__}: {exc}"}, cfg.output)
        return EXIT_UNREALIZABLE
    code = EXIT_OK
    doc = {"e0": m.e0, "e1": m.e1, "e2": m.e2}
    try:
        params = closure_params(m, strict=True)
    except ClosureError as exc:
        doc["strict_error"] = f"{type(exc).__name__}: {exc}"
        try:
            params = closure_params(m, strict=False)
        except ClosureError as exc2:
            doc["error"] = f"{type(exc2).__name__}: {exc2}"
            _emit_json(doc, cfg.output)
            return EXIT_UNREALIZABLE
    e3 = third_moments(params).entries()
    flux = fluxes(m, params=params)
    try:
        diag = nonneg_diagnostics(m).to_dict()
    except ClosureError as exc:
        diag = {"error": str(exc)}
        code = EXIT_UNREALIZABLE
    doc.update(
        params=params.to_dict(),
        unsafe=params.unsafe,
        e3={"".join(str(i + 1) for i in t): v for t, v in zip(E3_TRIPLES, e3)},
        fluxes={"x": flux[0], "y": flux[1], "z": flux[2]},
        diagnostics=diag,
    )
    if params.notes:
        doc["notes"] = list(params.notes)
    if cfg.verify:
        doc["verify"] = _verify(m, params, cfg.quad_order)
        if not doc["verify"]["ok"]:
            code = EXIT_UNREALIZABLE
    _emit_json(doc, cfg.output)
    return code


def cmd_sample_nonneg(cfg: RunConfig) -> int:
    with _output(cfg.output) as fh:
        write_csv(iter_nonneg_region(cfg.grid, cfg.fgrid), fh)
    return EXIT_OK


def cmd_sample_hyp(cfg: RunConfig) -> int:
    with _output(cfg.output) as fh:
        write_csv(iter_hyperbolic_region(cfg.grid, cfg.dirs, cfg.tol), fh)
    return EXIT_OK


def cmd_slab_e3(cfg: RunConfig) -> int:
    with _output(cfg.output) as fh:
        fh.write("e1,e2,e3,valid\n")
        for e1, e2, e3, valid in slab_e3_surface(cfg.grid):
            e3s = format_value(e3) if math.isfinite(e3) else ""
            fh.write(f"{format_value(e1)},{format_value(e2)},{e3s},{format_value(valid)}\n")
    return EXIT_OK


HANDLERS = {
    "check": cmd_check,
    "close": cmd_close,
    "sample-nonneg": cmd_sample_nonneg,
    "sample-hyp": cmd_sample_hyp,
    "slab-e3": cmd_slab_e3,
}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        cfg = RunConfig(**{k: v for k, v in vars(ns).items() if v is not None})
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"b2closure: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
