"""Descent solvers for the discrete Centore energy with pinned boundary values."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .domain import DomainGrid, WindowSpec, window_elements
from .energy import CircleQuadrature, DiscreteMap, EnergyModel
from .finsler import ContractViolation

log = logging.getLogger(__name__)

MAX_HALVINGS = 60


class StagnationError(RuntimeError):
    """The line search found no Armijo step after MAX_HALVINGS halvings."""

    def __init__(self, message, iterate=None, iterations=0):
        super().__init__(message)
        self.iterate = iterate
        self.iterations = iterations


@dataclass
class SolveConfig:
    max_iterations: int = 2000
    gradient_tolerance: float = 1e-8
    armijo_slope: float = 1e-4
    backtracking_factor: float = 0.5
    method: str = "nonlinear_cg"
    restart_interval: int = 50
    preconditioner: str = "laplacian"
    deterministic_seed: int = 0

    def __post_init__(self):
        if self.gradient_tolerance <= 0 or self.armijo_slope <= 0:
            raise ContractViolation("solver tolerances must be positive")
        if not 0 < self.backtracking_factor < 1:
            raise ContractViolation("backtracking_factor must lie in (0, 1)")
        if self.method not in ("gradient_descent", "nonlinear_cg"):
            raise ContractViolation(f"unknown solver method {self.method!r}")
        if self.preconditioner not in ("laplacian", "none"):
            raise ContractViolation(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveResult:
    map: DiscreteMap
    iterations: int
    energy: float
    gradient_norm: float
    history: list = field(default_factory=list)
    converged: bool = False
    init_digest: str = ""

    def summary(self):
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_energy": self.energy,
            "gradient_sup_norm": self.gradient_norm,
            "initial_energy": self.history[0] if self.history else None,
            "init_digest": self.init_digest,
        }


def stiffness_matrix(grid: DomainGrid) -> sp.csr_matrix:
    """Scalar P1 Dirichlet stiffness matrix on the Euclidean square."""
    G = grid.shape_gradients
    local = np.einsum("tal,tam->tlm", G, G) * grid.areas[:, None, None]
    tri = grid.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(grid.node_count,) * 2)
    return K.tocsr()


def harmonic_extension(grid: DomainGrid, phi) -> DiscreteMap:
    """Componentwise discrete harmonic extension of phi's boundary values."""
    values = np.array(phi(grid.nodes), dtype=float)
    K = stiffness_matrix(grid)
    free = grid.interior_nodes
    fixed = np.flatnonzero(grid.boundary_mask)
    # solve for the offset from one boundary value so constant data stays exact
    ref = values[fixed[0]].copy()
    rhs = -K[free][:, fixed] @ (values[fixed] - ref)
    values[free] = ref + splu(K[free][:, free].tocsc()).solve(rhs)
    return DiscreteMap(grid, values)


class _Problem:
    """Energy restricted to the free nodal values."""

    def __init__(self, model: EnergyModel, base: np.ndarray, free: np.ndarray, elems=None, frozen=None):
        self.model = model
        self.base = base
        self.free = free
        self.elems = elems
        self.frozen = frozen
        self.pinned = np.ones(model.grid.node_count, dtype=bool)
        self.pinned[free] = False

    def full(self, x):
        v = self.base.copy()
        v[self.free] = x
        return v

    def energy(self, x):
        return self.model.energy(self.full(x), self.elems, self.frozen)

    def energies(self, x):
        return self.model.energies(self.full(x), self.elems, self.frozen)

    def gradient(self, x):
        g = self.model.gradient(self.full(x), self.pinned, self.elems, self.frozen)
        return g[self.free]


def _preconditioner(grid, free, kind):
    if kind == "none":
        return lambda r: r
    K = stiffness_matrix(grid)
    lu = splu(K[free][:, free].tocsc())
    return lu.solve


def _descend(problem: _Problem, x, cfg: SolveConfig, precond):
    # Energy changes are summed element by element, so decreases far below
    # the rounding level of the total energy are still resolved.
    e = problem.energies(x)
    E = math.fsum(e)
    g = problem.gradient(x)
    history = [E]
    z = precond(g)
    d = -z
    gz = float(np.sum(g * z))
    t_init = 1.0
    k = 0
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    while gnorm > cfg.gradient_tolerance and k < cfg.max_iterations:
        slope = float(np.sum(g * d))
        if slope >= 0:
            d = -z
            slope = -gz
        t = t_init
        for _ in range(MAX_HALVINGS + 1):
            e_t = problem.energies(x + t * d)
            dE = math.fsum(e_t - e)
            if dE < 0 and dE <= cfg.armijo_slope * t * slope:
                break
            t *= cfg.backtracking_factor
        else:
            raise StagnationError(
                f"no Armijo step after {MAX_HALVINGS} halvings at iteration {k} (energy {E:.15g})",
                iterate=problem.full(x),
                iterations=k,
            )
        # one parabolic refinement through E(0), E'(0), E(t)
        curv = dE - slope * t
        if curv > 0:
            t_star = -slope * t * t / (2 * curv)
            if 0 < t_star <= 8 * t and abs(t_star - t) > 1e-3 * t:
                e_s = problem.energies(x + t_star * d)
                dE_s = math.fsum(e_s - e)
                if dE_s < dE and dE_s <= cfg.armijo_slope * t_star * slope:
                    t, e_t, dE = t_star, e_s, dE_s
        x = x + t * d
        e = e_t
        E = min(math.fsum(e), E)
        history.append(E)
        k += 1
        g_new = problem.gradient(x)
        z_new = precond(g_new)
        gz_new = float(np.sum(g_new * z_new))
        if cfg.method == "nonlinear_cg" and k % cfg.restart_interval != 0 and gz > 0:
            beta = max(0.0, float(np.sum(g_new * (z_new - z))) / gz)
        else:
            beta = 0.0
        d = -z_new + beta * d
        g, z, gz = g_new, z_new, gz_new
        t_init = t
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        log.debug("iter %d energy %.15g |g|_inf %.3e step %.3e", k, E, gnorm, t)
    return x, E, gnorm, history, k


def minimize(F, grid: DomainGrid, g, phi, init: DiscreteMap | None = None,
             cfg: SolveConfig | None = None, quad: CircleQuadrature | None = None,
             workers: int = 1) -> SolveResult:
    """Minimise the discrete energy over maps equal to phi on the boundary.

    The default start is the harmonic extension of phi.
    """
    cfg = cfg or SolveConfig()
    if init is None:
        init = harmonic_extension(grid, phi)
    else:
        bvals = np.asarray(phi(grid.nodes[grid.boundary_mask]), dtype=float)
        if not np.array_equal(init.values[grid.boundary_mask], bvals):
            raise ContractViolation("initial map does not match the boundary data")
    model = EnergyModel(F, grid, g, quad, workers)
    free = grid.interior_nodes
    problem = _Problem(model, init.values, free)
    x, E, gnorm, history, k = _descend(
        problem, init.values[free].copy(), cfg, _preconditioner(grid, free, cfg.preconditioner)
    )
    return SolveResult(
        map=DiscreteMap(grid, problem.full(x)),
        iterations=k,
        energy=E,
        gradient_norm=gnorm,
        history=history,
        converged=gnorm <= cfg.gradient_tolerance,
        init_digest=init.digest(),
    )


def window_mean(u: DiscreteMap, elems) -> np.ndarray:
    """Area-weighted mean of u over the given triangles (barycenter rule)."""
    w = u.grid.areas[elems]
    return (u.barycentric_values()[elems] * w[:, None]).sum(axis=0) / w.sum()


def window_free_nodes(grid: DomainGrid, elems) -> np.ndarray:
    """Nodes all of whose triangles lie in ``elems``, excluding the domain boundary."""
    inside = np.zeros(len(grid.triangles), dtype=bool)
    inside[elems] = True
    total = np.bincount(grid.triangles.ravel(), minlength=grid.node_count)
    hit = np.bincount(grid.triangles[elems].ravel(), minlength=grid.node_count)
    return np.flatnonzero((hit == total) & (hit > 0) & ~grid.boundary_mask)


def frozen_minimize(F, grid: DomainGrid, g, Q0: WindowSpec, u: DiscreteMap,
                    cfg: SolveConfig | None = None, quad: CircleQuadrature | None = None,
                    workers: int = 1) -> SolveResult:
    """Minimise the frozen functional on Q0 with v = u off the window interior.

    Coefficients are frozen at (x0, u_R) with u_R the mean of u over Q0.
    """
    cfg = cfg or SolveConfig()
    if Q0.kind != "interior":
        raise ContractViolation("frozen solves need an interior window")
    elems, _ = window_elements(grid, Q0)
    free = window_free_nodes(grid, elems)
    uR = window_mean(u, elems)
    model = EnergyModel(F, grid, g, quad, workers)
    problem = _Problem(model, u.values, free, elems=elems, frozen=(Q0.center, uR))
    x, E, gnorm, history, k = _descend(
        problem, u.values[free].copy(), cfg, _preconditioner(grid, free, cfg.preconditioner)
    )
    return SolveResult(
        map=DiscreteMap(grid, problem.full(x)),
        iterations=k,
        energy=E,
        gradient_norm=gnorm,
        history=history,
        converged=gnorm <= cfg.gradient_tolerance,
        init_digest=u.digest(),
    )
