"""Centore energy of P1 maps from the triangulated square into a Finsler space.

The indicatrix mean of F^2(u, du(xi)) is evaluated in an orthonormal frame,
where the unit ball of g becomes the Euclidean unit disk. Because f_ij is
0-homogeneous in X, the disk integral against xi^k xi^l reduces to a circle
integral times int_0^1 r^3 dr = 1/4, and the trapezoid rule on the circle is
spectrally accurate for smooth F.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domain import DomainGrid, build_frame
from .finsler import ContractViolation, FinslerStructure

CHUNK = 4096
U_FD_STEP = 1e-5
# (offset multiple, weight) pairs for central differences f(u + s d) - f(u - s d)
FD_STENCIL_2 = ((1, 0.5),)
# fourth order keeps the error small near the cusp of Hölder-continuous metrics
FD_STENCIL_4 = ((1, 2.0 / 3.0), (2, -1.0 / 12.0))


class CircleQuadrature:
    """Trapezoid rule on the unit circle: M equispaced directions, weight 2 pi / M."""

    def __init__(self, node_count: int = 64):
        if node_count < 16:
            raise ContractViolation("circle quadrature needs at least 16 nodes")
        self.node_count = int(node_count)
        th = 2 * np.pi * np.arange(self.node_count) / self.node_count
        self.directions = np.stack([np.cos(th), np.sin(th)], axis=1)
        self.weights = np.full(self.node_count, 2 * np.pi / self.node_count)


@dataclass
class CoefficientTensor:
    """E[alpha, beta, i, j] at one (x, u, p)."""

    entries: np.ndarray
    degenerate: bool = False

    def contract(self, p):
        return float(np.einsum("abij,ai,bj->", self.entries, p, p))


@dataclass
class DiscreteMap:
    """Nodal values of a P1 map on ``grid``; shape (N*N, n)."""

    grid: DomainGrid
    values: np.ndarray

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.array(fn(grid.nodes), dtype=float))

    @property
    def target_dim(self):
        return self.values.shape[1]

    def copy(self):
        return DiscreteMap(self.grid, self.values.copy())

    def element_gradients(self):
        return self.grid.element_gradients(self.values)

    def barycentric_values(self):
        return self.values[self.grid.triangles].mean(axis=1)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()


def frame_and_volume(g, x):
    """Frame eta and sqrt(det g) at x; sqrt(det g) = 1 / |det eta|."""
    eta = build_frame(g, x)
    return eta, 1.0 / np.abs(np.linalg.det(eta))


def _frame_vectors(p, eta):
    # q[a, i] = eta^k_a p_k^i : the images of the frame vectors under du
    return np.einsum("...ka,...ki->...ai", eta, p)


def _circle_images(q, quad):
    return np.einsum("ma,...ai->...mi", quad.directions, q)


def _circle_mean_sq(F, u, q, quad):
    """(1/(2M)) sum_m F^2(u, q^T theta_m), the indicatrix mean of (u*F)^2."""
    X = _circle_images(q, quad)
    u = np.asarray(u, dtype=float)[..., None, :]
    return F.norm_sq(u, X).sum(axis=-1) / (2 * quad.node_count)


def coefficients(x, u, p, F: FinslerStructure, quad: CircleQuadrature, frame) -> CoefficientTensor:
    """Coefficient tensor E^{ab}_{ij}(x, u, p) at a single point.

    ``frame`` is the orthonormal frame eta at x (see :func:`build_frame`).
    """
    eta = np.asarray(frame, dtype=float)
    sqrtg = 1.0 / abs(np.linalg.det(eta))
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    q = _frame_vectors(p, eta)
    X = _circle_images(q, quad)
    n = p.shape[1]
    nonzero = np.linalg.norm(X, axis=1) > 0
    f = np.empty((quad.node_count, n, n))
    f[~nonzero] = F.fill_value()
    if np.any(nonzero):
        f[nonzero] = F.tensor(np.broadcast_to(u, X[nonzero].shape), X[nonzero])
    th = quad.directions
    C = np.einsum("mij,ma,mb->abij", f, th, th) / (2 * quad.node_count)
    E = np.einsum("abij,ka,lb->klij", C, eta, eta) * sqrtg
    return CoefficientTensor(E, degenerate=not np.any(p))


def frozen_coefficients(x0, uR, p, F, quad, frame) -> CoefficientTensor:
    """Coefficients with (x, u) frozen at (x0, uR); only p varies."""
    return coefficients(x0, uR, p, F, quad, frame)


def energy_density(x, u, p, F, quad, frame) -> float:
    """Indicatrix mean of F^2(u, p xi) over the g-unit ball at x."""
    p = np.asarray(p, dtype=float)
    if not np.any(p):
        return 0.0
    q = _frame_vectors(p, np.asarray(frame, dtype=float))
    return float(_circle_mean_sq(F, u, q, quad))


class EnergyModel:
    """Discrete Centore energy and its gradient on a fixed grid.

    Element sums are accumulated per fixed-size chunk and chunk totals are
    added in index order, so results do not depend on ``workers``.
    """

    def __init__(self, F: FinslerStructure, grid: DomainGrid, g, quad: CircleQuadrature | None = None,
                 workers: int = 1):
        self.F = F
        self.grid = grid
        self.g = g
        self.quad = quad or CircleQuadrature()
        self.workers = max(1, int(workers))
        self.eta, self.sqrtg = frame_and_volume(g, grid.barycenters)
        self.weight = grid.areas * self.sqrtg
        self.gradient_is_approximate = not F.smooth_in_u
        # Hölder-in-u conformal metrics integrate u exactly over each triangle:
        # a one-point rule would turn every cusp of F^2 in u into a trap for descent.
        self.exact_u = hasattr(F, "triangle_mean_factor")

    # --- chunked map -------------------------------------------------------
    def _map(self, fn, elems):
        chunks = [elems[i:i + CHUNK] for i in range(0, len(elems), CHUNK)]
        if self.workers == 1 or len(chunks) == 1:
            return [fn(c) for c in chunks]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(fn, chunks))

    def _elements(self, elems):
        if elems is None:
            return np.arange(len(self.grid.triangles))
        return np.asarray(elems)

    def _frozen_frame(self, frozen):
        x0, uR = frozen
        eta0, sqrtg0 = frame_and_volume(self.g, np.asarray(x0, dtype=float))
        return eta0, sqrtg0, np.asarray(uR, dtype=float)

    def element_energies(self, values, elems=None, frozen=None):
        """Per-element energy for the given elements (all by default)."""
        elems = self._elements(elems)
        tri = self.grid.triangles[elems]
        p = np.einsum("tal,tli->tai", self.grid.shape_gradients[elems], values[tri])
        if frozen is None:
            q = _frame_vectors(p, self.eta[elems])
            w = self.weight[elems]
        else:
            eta0, sqrtg0, uR = self._frozen_frame(frozen)
            q = _frame_vectors(p, eta0)
            w = self.grid.areas[elems] * sqrtg0
        out = np.empty(len(elems))
        for sl in (slice(i, i + CHUNK) for i in range(0, len(elems), CHUNK)):
            if frozen is not None:
                uc = np.broadcast_to(uR, (len(q[sl]), values.shape[1]))
                out[sl] = w[sl] * _circle_mean_sq(self.F, uc, q[sl], self.quad)
            elif self.exact_u:
                factor = self.F.triangle_mean_factor(values[tri[sl]])
                X = _circle_images(q[sl], self.quad)
                out[sl] = w[sl] * factor * np.sum(X**2, axis=(-2, -1)) / (2 * self.quad.node_count)
            else:
                uc = values[tri[sl]].mean(axis=1)
                out[sl] = w[sl] * _circle_mean_sq(self.F, uc, q[sl], self.quad)
        return out

    def energies(self, values, elems=None, frozen=None) -> np.ndarray:
        """Per-element energies, evaluated chunkwise (in parallel when workers > 1)."""
        elems = self._elements(elems)
        parts = self._map(lambda c: self.element_energies(values, c, frozen), elems)
        return np.concatenate(parts) if parts else np.zeros(0)

    def energy(self, values, elems=None, frozen=None) -> float:
        # compensated sum: the line search compares totals that differ in the last digits
        return math.fsum(self.energies(values, elems, frozen))

    def gradient(self, values, pinned=None, elems=None, frozen=None) -> np.ndarray:
        """Gradient of :meth:`energy` in the nodal values; zero on ``pinned`` nodes."""
        elems = self._elements(elems)
        grid, quad, F = self.grid, self.quad, self.F
        n = values.shape[1]
        tri = grid.triangles
        G = grid.shape_gradients
        M2 = 2 * quad.node_count
        if frozen is not None:
            eta0, sqrtg0, uR = self._frozen_frame(frozen)

        def chunk_grad(c):
            Uv = values[tri[c]]
            p = np.einsum("tal,tli->tai", G[c], Uv)
            if frozen is None:
                eta = self.eta[c]
                w = self.weight[c]
                uc = Uv.mean(axis=1)
            else:
                eta = np.broadcast_to(eta0, (len(c), 2, 2))
                w = grid.areas[c] * sqrtg0
                uc = np.broadcast_to(uR, (len(c), n))
            q = _frame_vectors(p, eta)
            X = _circle_images(q, quad)
            uu = np.broadcast_to(uc[:, None, :], X.shape)
            exact = frozen is None and self.exact_u
            if exact:
                factor = F.triangle_mean_factor(Uv)
                dF = 2.0 * factor[:, None, None] * X
            else:
                dF = F.norm_sq_grad(uu, X)  # (t, m, i)
            dq = np.einsum("ma,tmi->tai", quad.directions, dF) / M2
            dp = np.einsum("tka,tai->tki", eta, dq) * w[:, None, None]
            dU = np.einsum("tkl,tki->tli", G[c], dp)
            if frozen is not None or F.u_independent:
                return dU
            stencil = FD_STENCIL_2 if F.smooth_in_u else FD_STENCIL_4
            if exact:
                # u enters through every vertex value of the triangle
                Xsq = np.sum(X**2, axis=(1, 2)) / M2 * w
                for l in range(3):
                    for k in range(n):
                        e = np.zeros((3, n))
                        e[l, k] = U_FD_STEP
                        acc = 0.0
                        for mult, coef in stencil:
                            acc = acc + coef * (F.triangle_mean_factor(Uv + mult * e)
                                                - F.triangle_mean_factor(Uv - mult * e))
                        dU[:, l, k] += acc / U_FD_STEP * Xsq
                return dU
            du = np.empty((len(c), n))
            for k in range(n):
                e = np.zeros(n)
                e[k] = U_FD_STEP
                acc = 0.0
                for mult, coef in stencil:
                    acc = acc + coef * (F.norm_sq(uu + mult * e, X) - F.norm_sq(uu - mult * e, X)).sum(axis=1)
                du[:, k] = acc / U_FD_STEP / M2 * w
            return dU + du[:, None, :] / 3.0

        parts = self._map(chunk_grad, elems)
        dU = np.concatenate(parts) if parts else np.zeros((0, 3, n))
        idx = tri[elems].ravel()
        out = np.empty((grid.node_count, n))
        for i in range(n):
            out[:, i] = np.bincount(idx, weights=dU[:, :, i].ravel(), minlength=grid.node_count)
        if pinned is None:
            pinned = grid.boundary_mask
        out[pinned] = 0.0
        return out


def total_energy(m: DiscreteMap, F, quad, g, workers: int = 1) -> float:
    return EnergyModel(F, m.grid, g, quad, workers).energy(m.values)


def energy_gradient(m: DiscreteMap, F, quad, g, workers: int = 1) -> np.ndarray:
    return EnergyModel(F, m.grid, g, quad, workers).gradient(m.values)
