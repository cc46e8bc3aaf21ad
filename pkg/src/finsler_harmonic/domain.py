"""Triangulated unit-square source domain, its Riemannian metric and windows."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .finsler import ContractViolation


class WindowTooSmall(ContractViolation):
    pass


class ResolutionTooCoarse(ContractViolation):
    pass


class DomainGrid:
    """Uniform grid on [0,1]^2, every cell split along its main diagonal.

    Node ``k = j * N + i`` sits at ``(i h, j h)``.
    """

    def __init__(self, side_nodes: int):
        if side_nodes < 3:
            raise ContractViolation("side_nodes must be at least 3")
        self.N = int(side_nodes)
        self.h = 1.0 / (self.N - 1)
        N = self.N
        ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
        self.nodes = np.stack([ii.ravel() * self.h, jj.ravel() * self.h], axis=1)
        self.boundary_mask = (
            (ii == 0) | (jj == 0) | (ii == N - 1) | (jj == N - 1)
        ).ravel()
        ci, cj = np.meshgrid(np.arange(N - 1), np.arange(N - 1), indexing="xy")
        a = (cj * N + ci).ravel()
        b, c, d = a + 1, a + N + 1, a + N
        lower = np.stack([a, b, c], axis=1)
        upper = np.stack([a, c, d], axis=1)
        self.triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
        self.areas = np.full(len(self.triangles), 0.5 * self.h**2)
        self.barycenters = self.nodes[self.triangles].mean(axis=1)

    @property
    def node_count(self):
        return self.N * self.N

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """(T, 2, 3) gradients of the three barycentric basis functions."""
        P = self.nodes[self.triangles]
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        J = np.stack([e1, e2], axis=2)  # columns are edge vectors
        Jinv = np.linalg.inv(J)
        ref = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        return np.einsum("tak,kl->tal", np.swapaxes(Jinv, 1, 2), ref)

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """(T, 2, n) exact gradient of the P1 interpolant on every triangle."""
        return np.einsum("tal,tli->tai", self.shape_gradients, values[self.triangles])

    @cached_property
    def interior_nodes(self):
        return np.flatnonzero(~self.boundary_mask)

    def node_index(self, i, j):
        return j * self.N + i

    def nearest_node(self, x):
        i = int(round(x[0] / self.h))
        j = int(round(x[1] / self.h))
        return self.node_index(min(max(i, 0), self.N - 1), min(max(j, 0), self.N - 1))


class SourceMetric:
    """Riemannian metric g on the source domain."""

    name = "abstract"
    is_euclidean = False

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def sqrt_det(self, x):
        return np.sqrt(np.linalg.det(self(x)))

    def params(self):
        return {}


class EuclideanMetric(SourceMetric):
    name = "euclidean"
    is_euclidean = True

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()

    def sqrt_det(self, x):
        return np.ones(np.asarray(x).shape[:-1])


class StretchedMetric(SourceMetric):
    """g = diag(1 + a x^1, 1)."""

    name = "stretched"

    def __init__(self, a: float = 0.5):
        if a <= -1:
            raise ContractViolation("a must exceed -1 to keep g positive definite on [0,1]^2")
        self.a = float(a)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0 + self.a * x[..., 0]
        g[..., 1, 1] = 1.0
        return g

    def sqrt_det(self, x):
        return np.sqrt(1.0 + self.a * np.asarray(x, dtype=float)[..., 0])

    def params(self):
        return {"a": self.a}


SOURCE_METRICS = {"euclidean": EuclideanMetric, "stretched": StretchedMetric}


def make_source_metric(name: str, **params) -> SourceMetric:
    try:
        return SOURCE_METRICS[name](**params)
    except KeyError:
        raise ContractViolation(
            f"unknown source metric {name!r}; registered: {', '.join(sorted(SOURCE_METRICS))}"
        ) from None


def build_frame(g, x) -> np.ndarray:
    """Orthonormal frame eta[..., kappa, alpha] with eta eta^T = g^{-1}.

    ``g`` is a :class:`SourceMetric` or an explicit (..., 2, 2) matrix.
    """
    G = g(x) if callable(g) else np.asarray(g, dtype=float)
    try:
        return np.linalg.cholesky(np.linalg.inv(G))
    except np.linalg.LinAlgError as exc:
        raise ContractViolation("source metric is not positive definite") from exc


@dataclass(frozen=True)
class WindowSpec:
    center: tuple
    radius: float
    kind: str  # "interior" | "clipped"


def make_window(x0, R: float) -> WindowSpec:
    x0 = tuple(float(c) for c in x0)
    inside = all(c - 2 * R >= -1e-12 and c + 2 * R <= 1 + 1e-12 for c in x0)
    return WindowSpec(x0, float(R), "interior" if inside else "clipped")


def window_elements(grid: DomainGrid, w: WindowSpec):
    """Triangles whose barycenters lie strictly inside the window, and their nodes."""
    if w.radius <= grid.h:
        raise WindowTooSmall(f"window radius {w.radius} must exceed the grid spacing {grid.h}")
    d = np.abs(grid.barycenters - np.asarray(w.center))
    elems = np.flatnonzero(np.all(d < w.radius, axis=1))
    nodes = np.unique(grid.triangles[elems])
    return elems, nodes


def is_boundary_point(x0, tol=1e-12):
    return any(c <= tol or c >= 1 - tol for c in x0)


def max_radius(x0) -> float:
    """Largest R with Q(x0, 2R) inside the square; at edge points the
    flattened normal direction is excluded from the constraint."""
    limits = []
    for c in x0:
        if c <= 1e-12 or c >= 1 - 1e-12:
            continue
        limits.append(min(c, 1 - c))
    if not limits:
        raise ContractViolation(f"corner point {x0} has no admissible window")
    return min(limits) / 2.0


def nested_radii(grid: DomainGrid, x0, count: int):
    if count < 3:
        raise ContractViolation("ladder count must be at least 3")
    R = max_radius(x0)
    radii = [R * 2.0**-k for k in range(count)]
    if radii[-1] < 3 * grid.h - 1e-12:
        raise ResolutionTooCoarse(
            f"smallest radius {radii[-1]:.6g} is below 3h = {3 * grid.h:.6g} at N={grid.N}"
        )
    return radii


def default_probes():
    """Center, four off-center interior points and four edge midpoints."""
    interior = [(0.5, 0.5), (0.375, 0.375), (0.625, 0.375), (0.375, 0.625), (0.625, 0.625)]
    edges = [(0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (0.0, 0.5)]
    return interior, edges


# --- boundary data -----------------------------------------------------------


class BoundaryData:
    """Map phi: [0,1]^2 -> R^n evaluated on node coordinates."""

    name = "abstract"
    smoothness = "C^inf"

    def __init__(self, target_dim: int = 2):
        self.target_dim = target_dim

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def params(self):
        return {}


class AffineBoundary(BoundaryData):
    """phi(x) = A x + c."""

    name = "affine"

    def __init__(self, A=((1.0, 0.0), (0.0, 1.0)), c=(0.0, 0.0)):
        self.A = np.asarray(A, dtype=float).reshape(-1, 2)
        self.c = np.asarray(c, dtype=float)
        super().__init__(self.A.shape[0])

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.A.T + self.c

    def params(self):
        return {"A": self.A.tolist(), "c": self.c.tolist()}


class ConstantBoundary(BoundaryData):
    name = "constant"

    def __init__(self, value=(0.0, 0.0)):
        self.value = np.asarray(value, dtype=float)
        super().__init__(self.value.shape[0])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape[:-1] + self.value.shape).copy()

    def params(self):
        return {"value": self.value.tolist()}


class WaveBoundary(BoundaryData):
    """Smooth non-affine data vanishing at the domain center:

    phi^1 = s (x^1 - 1/2) + a sin(2 pi (x^2 - 1/2)) + c^1
    phi^2 = s (x^2 - 1/2) + a sin(2 pi (x^1 - 1/2)) + c^2
    """

    name = "wave"

    def __init__(self, s: float = 1.0, a: float = 0.25, c=(0.0, 0.0)):
        self.s = float(s)
        self.a = float(a)
        self.c = np.asarray(c, dtype=float)
        super().__init__(2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float) - 0.5
        out = np.empty(x.shape)
        out[..., 0] = self.s * x[..., 0] + self.a * np.sin(2 * np.pi * x[..., 1])
        out[..., 1] = self.s * x[..., 1] + self.a * np.sin(2 * np.pi * x[..., 0])
        return out + self.c

    def params(self):
        return {"s": self.s, "a": self.a, "c": self.c.tolist()}


BOUNDARY_DATA = {"affine": AffineBoundary, "constant": ConstantBoundary, "wave": WaveBoundary}


def make_boundary(name: str, **params) -> BoundaryData:
    try:
        return BOUNDARY_DATA[name](**params)
    except KeyError:
        raise ContractViolation(
            f"unknown boundary data {name!r}; registered: {', '.join(sorted(BOUNDARY_DATA))}"
        ) from None
