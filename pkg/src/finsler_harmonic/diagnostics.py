"""Regularity diagnostics measured on discrete maps.

Every quantity is integrated over the triangles selected by
:func:`~finsler_harmonic.domain.window_elements` with the barycenter rule,
and radius-indexed quantities are summarised by a log-log least-squares fit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    DomainGrid,
    is_boundary_point,
    make_window,
    window_elements,
)
from .energy import DiscreteMap
from .finsler import ContractViolation
from .minimizer import SolveConfig, StagnationError, frozen_minimize, window_free_nodes

log = logging.getLogger(__name__)

DEGENERATE_FLOOR = 1e-14


@dataclass
class DecayFit:
    radii: list
    values: list
    exponent: float | None
    constant: float | None
    residual: float | None
    degenerate: bool = False
    details: list = field(default_factory=list)

    @property
    def alpha(self):
        """Campanato Hölder exponent (exponent - 2) / 2."""
        return None if self.exponent is None else (self.exponent - 2.0) / 2.0

    def to_dict(self):
        return {
            "radii": list(map(float, self.radii)),
            "values": list(map(float, self.values)),
            "exponent": self.exponent,
            "constant": self.constant,
            "residual": self.residual,
            "degenerate": self.degenerate,
            "details": self.details,
        }


def fit_power_law(radii, values, floor: float = DEGENERATE_FLOOR) -> DecayFit:
    """OLS fit of log(value) = log(C) + e log(radius) over the positive values."""
    radii = [float(r) for r in radii]
    values = [float(v) for v in values]
    if any(a <= b for a, b in zip(radii, radii[1:])):
        raise ContractViolation("radii must be strictly decreasing")
    v = np.asarray(values)
    if np.all(v < floor):
        return DecayFit(radii, values, None, None, None, degenerate=True)
    keep = v > 0
    if keep.sum() < 2:
        return DecayFit(radii, values, None, None, None, degenerate=True)
    lr = np.log(np.asarray(radii)[keep])
    lv = np.log(v[keep])
    e, c = np.polyfit(lr, lv, 1)
    res = float(np.max(np.abs(lv - (c + e * lr))))
    return DecayFit(radii, values, float(e), float(np.exp(c)), res)


@dataclass
class GradientField:
    """Nodally recovered gradient (nodes, 2, n) and its central differences (nodes, 2, 2, n)."""

    grid: DomainGrid
    gradient: np.ndarray
    hessian: np.ndarray

    def at_elements(self, nodal):
        return nodal[self.grid.triangles].mean(axis=1)


def recover_gradient(u: DiscreteMap) -> GradientField:
    grid = u.grid
    p = u.element_gradients()  # (T, 2, n)
    w = grid.areas
    n = p.shape[2]
    idx = grid.triangles.ravel()
    wsum = np.bincount(idx, weights=np.repeat(w, 3), minlength=grid.node_count)
    G = np.empty((grid.node_count, 2, n))
    for a in range(2):
        for i in range(n):
            G[:, a, i] = np.bincount(idx, weights=np.repeat(w * p[:, a, i], 3),
                                     minlength=grid.node_count) / wsum
    N = grid.N
    Gg = G.reshape(N, N, 2, n)  # [j, i, alpha, comp]
    d_dy, d_dx = np.gradient(Gg, grid.h, axis=(0, 1))
    H = np.stack([d_dx, d_dy], axis=2).reshape(grid.node_count, 2, 2, n)
    return GradientField(grid, G, H)


def _elements(grid, x0, r):
    elems, _ = window_elements(grid, make_window(x0, r))
    return elems


def _oscillation(field_c, w):
    mean = (field_c * w[:, None, None]).sum(axis=0) / w.sum()
    return float((w * np.sum((field_c - mean) ** 2, axis=(1, 2))).sum())


def dirichlet_growth_fit(u: DiscreteMap, x0, radii) -> DecayFit:
    """Fit of the Dirichlet integral over Omega(x0, rho) against rho."""
    grid = u.grid
    dens = np.sum(u.element_gradients() ** 2, axis=(1, 2)) * grid.areas
    values = [float(dens[_elements(grid, x0, r)].sum()) for r in radii]
    return fit_power_law(radii, values)


def _check_interior(grid, x0, radii):
    if is_boundary_point(x0):
        raise ContractViolation(f"probe {tuple(x0)} is on the boundary; interior probe required")
    if min(radii) < 3 * grid.h - 1e-12:
        raise ContractViolation(f"radii must be at least 3h = {3 * grid.h:.6g}")


def campanato_fit(u: DiscreteMap, x0, radii, field: GradientField | None = None) -> DecayFit:
    """Fit of int_Q |Du - (Du)_rho|^2 over Q(x0, rho) on the recovered gradient."""
    grid = u.grid
    _check_interior(grid, x0, radii)
    field = field or recover_gradient(u)
    Gc = field.at_elements(field.gradient)
    values = []
    for r in radii:
        e = _elements(grid, x0, r)
        values.append(_oscillation(Gc[e], grid.areas[e]))
    return fit_power_law(radii, values)


@dataclass
class WindowRatio:
    center: tuple
    radius: float
    ratio: float | None
    skip_reason: str | None = None

    def to_dict(self):
        return {"center": list(self.center), "radius": self.radius, "ratio": self.ratio,
                "skip_reason": self.skip_reason}


def caccioppoli_ratio(v: DiscreteMap, windows, field: GradientField | None = None):
    """int_{Q(r/2)} |D^2 v|^2 divided by r^-2 int_{Q(r)} |Dv - (Dv)_r|^2 per window."""
    grid = v.grid
    field = field or recover_gradient(v)
    Gc = field.at_elements(field.gradient)
    Hc = field.at_elements(field.hessian)
    out = []
    for w in windows:
        if w.kind != "interior":
            raise ContractViolation(f"window {w} is not interior")
        r = w.radius
        outer = _elements(grid, w.center, r)
        inner = _elements(grid, w.center, r / 2)
        den = _oscillation(Gc[outer], grid.areas[outer]) / r**2
        num = float((grid.areas[inner] * np.sum(Hc[inner] ** 2, axis=(1, 2, 3))).sum())
        if den < DEGENERATE_FLOOR:
            out.append(WindowRatio(w.center, r, None, "oscillation below 1e-14"))
        else:
            out.append(WindowRatio(w.center, r, num / den))
    return out


def reverse_holder_ratio(v: DiscreteMap, windows, q: float, field: GradientField | None = None):
    """(mean_{Q(r/2)} |D^2 v|^q)^(1/q) / (mean_{Q(r)} |D^2 v|^2)^(1/2) per window."""
    if not 2 < q <= 3:
        raise ContractViolation("q must lie in (2, 3]")
    grid = v.grid
    field = field or recover_gradient(v)
    mag = np.sqrt(np.sum(field.at_elements(field.hessian) ** 2, axis=(1, 2, 3)))
    out = []
    for w in windows:
        if w.kind != "interior":
            raise ContractViolation(f"window {w} is not interior")
        outer = _elements(grid, w.center, w.radius)
        inner = _elements(grid, w.center, w.radius / 2)
        a_o, a_i = grid.areas[outer], grid.areas[inner]
        den = float((a_o * mag[outer] ** 2).sum() / a_o.sum())
        if den < DEGENERATE_FLOOR:
            out.append(WindowRatio(w.center, w.radius, None, "second derivatives vanish"))
            continue
        num = float((a_i * mag[inner] ** q).sum() / a_i.sum())
        out.append(WindowRatio(w.center, w.radius, num ** (1 / q) / den**0.5))
    return out


def lq_gradient_integral(u: DiscreteMap, q: float, elems=None) -> float:
    p = u.element_gradients()
    mag = np.sqrt(np.sum(p**2, axis=(1, 2)))
    a = u.grid.areas
    if elems is not None:
        mag, a = mag[elems], a[elems]
    return float((a * mag**q).sum())


def higher_integrability_check(u: DiscreteMap, phi, q: float) -> float | None:
    """int |Du|^q over int |D phi_ext|^q, phi_ext the P1 interpolant of phi.

    Returns None when the denominator vanishes (constant phi).
    """
    if not 2 < q <= 3:
        raise ContractViolation("q must lie in (2, 3]")
    ext = DiscreteMap.from_function(u.grid, phi)
    den = lq_gradient_integral(ext, q)
    if den < DEGENERATE_FLOOR:
        return None
    return lq_gradient_integral(u, q) / den


def frozen_comparison_decay(u: DiscreteMap, F, grid: DomainGrid, g, x0, radii,
                            cfg: SolveConfig | None = None, quad=None, q: float = 2.5,
                            workers: int = 1, on_solve=None) -> DecayFit:
    """Fit of int_{Q(x0,R)} |D(u - v)|^2 with v the frozen minimiser on Q(x0, R).

    Per-radius details record the solve and the L^q comparison
    int |Dv|^q / int |Du|^q over the window. ``on_solve(window, v)`` is
    called with every frozen minimiser, for callers that measure v further.
    """
    radii = list(radii)
    _check_interior(grid, x0, radii)
    cfg = cfg or SolveConfig()
    kept_r, kept_v, details = [], [], []
    for R in radii:
        window = make_window(x0, R)
        elems, _ = window_elements(grid, window)
        try:
            res = frozen_minimize(F, grid, g, window, u, cfg, quad, workers)
        except StagnationError as exc:
            log.warning("frozen solve failed at R=%g: %s", R, exc)
            details.append({"radius": R, "error": str(exc)})
            continue
        if on_solve is not None:
            on_solve(window, res.map)
        w = DiscreteMap(grid, u.values - res.map.values)
        dw2 = float((grid.areas[elems] * np.sum(w.element_gradients()[elems] ** 2, axis=(1, 2))).sum())
        lq_u = lq_gradient_integral(u, q, elems)
        lq_v = lq_gradient_integral(res.map, q, elems)
        details.append({
            "radius": R,
            "dw_sq": dw2,
            "lq_ratio": lq_v / lq_u if lq_u > 0 else None,
            "iterations": res.iterations,
            "converged": res.converged,
            "gradient_sup_norm": res.gradient_norm,
            "free_nodes": int(len(window_free_nodes(grid, elems))),
        })
        kept_r.append(R)
        kept_v.append(dw2)
    if len(kept_r) < 2:
        fit = DecayFit(kept_r, kept_v, None, None, None, degenerate=True)
    else:
        fit = fit_power_law(kept_r, kept_v)
    fit.details = details
    return fit


def holder_pairs(grid: DomainGrid, per_direction: int = 12):
    """Node pairs from the corner node along both edges and the diagonal,
    with geometrically growing separations."""
    kmax = grid.N - 1
    ks = np.unique(np.round(np.geomspace(1, kmax, per_direction)).astype(int))
    pairs = []
    for di, dj in ((1, 0), (0, 1), (1, 1)):
        for k in ks:
            pairs.append((grid.node_index(0, 0), grid.node_index(k * di, k * dj)))
    return pairs


def holder_exponent(u: DiscreteMap, pairs) -> float:
    """Least-squares slope of log|u(x) - u(y)| against log|x - y|."""
    grid = u.grid
    pairs = np.asarray(pairs)
    dx = np.linalg.norm(grid.nodes[pairs[:, 0]] - grid.nodes[pairs[:, 1]], axis=1)
    du = np.linalg.norm(u.values[pairs[:, 0]] - u.values[pairs[:, 1]], axis=1)
    keep = (dx > 0) & (du > 0)
    if keep.sum() < 20:
        raise ContractViolation("holder_exponent needs at least 20 non-coincident pairs")
    if dx[keep].max() / dx[keep].min() < 100:
        raise ContractViolation("pair separations must span two decades")
    slope, _ = np.polyfit(np.log(dx[keep]), np.log(du[keep]), 1)
    return float(slope)
