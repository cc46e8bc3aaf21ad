"""Finsler structures on R^n and numerical checks of their structural axioms.

Every metric evaluates vectorised over leading axes: ``u`` and ``X`` are
arrays of shape ``(..., n)`` that broadcast against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FD_REL_STEP = 1e-4
# second differences lose eps/h^2 to rounding, so the tensor uses a wide
# step and removes the h^2 truncation term by Richardson extrapolation
FD_TENSOR_STEP = 0.06


class ContractViolation(ValueError):
    """Inputs violate an operation's precondition."""


class SlitBundleError(ContractViolation):
    """A zero tangent vector was passed where X != 0 is required."""


class ConvexityViolation(RuntimeError):
    """A fundamental tensor with a nonpositive eigenvalue was found."""

    def __init__(self, message, u=None, X=None, eigenvalue=None):
        super().__init__(message)
        self.u = u
        self.X = X
        self.eigenvalue = eigenvalue


class EmptySampleError(ValueError):
    """Every probed sample was skipped."""


@dataclass(frozen=True)
class TangentSample:
    u: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if u.shape != X.shape or u.ndim != 1:
            raise ContractViolation(f"dimension mismatch: u{u.shape} vs X{X.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "X", X)


@dataclass(frozen=True)
class ConvexityBounds:
    lambda_min: float
    lambda_max: float
    sample_count: int


@dataclass(frozen=True)
class ModulusFit:
    """Power-law fit ``omega(t) ~ c_omega * t**sigma`` of the u-modulus.

    ``sigma`` is ``None`` when every probed difference vanished (the metric
    does not depend on u within the probed range).
    """

    c_omega: float
    sigma: float | None
    max_observed_ratio: float
    t_cap: float
    sample_count: int

    def omega(self, t):
        t = np.minimum(np.asarray(t, dtype=float), self.t_cap)
        if self.sigma is None:
            return np.zeros_like(t)
        return self.c_omega * t**self.sigma


class FinslerStructure:
    """Base class for a Finsler structure F(u, X) on R^n.

    Subclasses implement :meth:`norm` and, for the analytic paths,
    :meth:`norm_sq_grad` and :meth:`tensor`.
    """

    name = "abstract"
    #: True when F does not depend on u (u-derivatives are skipped).
    u_independent = False
    #: False when F^2 is only Hölder continuous in u.
    smooth_in_u = True

    def __init__(self, target_dim: int = 2):
        if target_dim < 1:
            raise ContractViolation("target_dim must be positive")
        self.target_dim = int(target_dim)

    # --- evaluation -----------------------------------------------------
    def norm(self, u, X):
        raise NotImplementedError

    def norm_sq(self, u, X):
        return self.norm(u, X) ** 2

    def norm_sq_grad(self, u, X):
        """Gradient of F^2 in X; zero at X = 0."""
        return self._fd_grad(u, X)

    def tensor(self, u, X):
        """Analytic fundamental tensor f_ij at X != 0."""
        return self.fd_tensor(u, X)

    # --- declared analytic data ----------------------------------------
    def declared_bounds(self):
        """Analytic (lambda, Lambda) or None."""
        return None

    def declared_modulus(self):
        """Analytic (C_omega, sigma) or None."""
        return None

    def params(self) -> dict:
        return {}

    def fill_value(self):
        """Tensor returned at X = 0 (any finite choice leaves the energy unchanged)."""
        bounds = self.declared_bounds()
        scale = 0.5 * (bounds[0] + bounds[1]) if bounds else 1.0
        return scale * np.eye(self.target_dim)

    # --- finite differences --------------------------------------------
    def _fd_grad(self, u, X):
        X = np.asarray(X, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), X.shape)
        step = _fd_step(X, FD_REL_STEP)
        out = np.empty(X.shape)
        for i in range(X.shape[-1]):
            e = np.zeros(X.shape[-1])
            e[i] = 1.0
            d = step[..., None] * e
            out[..., i] = (self.norm_sq(u, X + d) - self.norm_sq(u, X - d)) / (2 * step)
        return out

    def fd_tensor(self, u, X):
        """Half the central-difference Hessian of F^2 in X, symmetrised and
        Richardson-extrapolated from steps h and h/2."""
        X = np.asarray(X, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), X.shape)
        h = _fd_step(X, FD_TENSOR_STEP)
        return (4 * self._fd_hessian(u, X, h / 2) - self._fd_hessian(u, X, h)) / 3

    def _fd_hessian(self, u, X, h):
        n = X.shape[-1]
        eye = np.eye(n)
        out = np.empty(X.shape + (n,))
        f0 = self.norm_sq(u, X)
        for i in range(n):
            di = h[..., None] * eye[i]
            fp = self.norm_sq(u, X + di)
            fm = self.norm_sq(u, X - di)
            out[..., i, i] = 0.5 * (fp - 2 * f0 + fm) / h**2
            for j in range(i + 1, n):
                dj = h[..., None] * eye[j]
                fpp = self.norm_sq(u, X + di + dj)
                fpm = self.norm_sq(u, X + di - dj)
                fmp = self.norm_sq(u, X - di + dj)
                fmm = self.norm_sq(u, X - di - dj)
                v = 0.5 * (fpp - fpm - fmp + fmm) / (4 * h**2)
                out[..., i, j] = v
                out[..., j, i] = v
        return out

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


def _fd_step(X, rel):
    # F^2 is 2-homogeneous in X, so a step proportional to |X| keeps the
    # relative truncation and rounding errors independent of scale
    r = np.linalg.norm(X, axis=-1)
    return rel * np.where(r > 0, r, 1.0)


def _as_pair(u, X):
    u = np.asarray(u, dtype=float)
    X = np.asarray(X, dtype=float)
    if u.shape[-1] != X.shape[-1]:
        raise ContractViolation(f"dimension mismatch: u{u.shape} vs X{X.shape}")
    return u, X


class Euclidean(FinslerStructure):
    name = "euclidean"
    u_independent = True

    def norm(self, u, X):
        _, X = _as_pair(u, X)
        return np.linalg.norm(X, axis=-1)

    def norm_sq(self, u, X):
        X = np.asarray(X, dtype=float)
        return np.einsum("...i,...i->...", X, X)

    def norm_sq_grad(self, u, X):
        return 2.0 * np.asarray(X, dtype=float)

    def tensor(self, u, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(np.eye(X.shape[-1]), X.shape + (X.shape[-1],)).copy()

    def declared_bounds(self):
        return (1.0, 1.0)

    def declared_modulus(self):
        return (0.0, None)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _clustered_integral(fn, weight, lo, hi):
    """Integral of fn(x) * weight(x) over [lo, hi], nodes clustered at both ends.

    The cosine map x = lo + L (1 - cos(pi t)) / 2 absorbs square-root
    endpoint singularities of fn.
    """
    L = hi - lo
    c = 0.5 * (1.0 - np.cos(np.pi * _GL_T))
    x = lo[..., None] + L[..., None] * c
    jac = L[..., None] * 0.5 * np.pi * np.sin(np.pi * _GL_T)
    return np.sum(fn(x) * weight(x) * jac * _GL_W, axis=-1)


def _tent_mean(fn, s, spacing):
    """Mean of fn(s(x)) over a triangle where s is affine with sorted vertex values s.

    fn may have square-root singularities at integer multiples of ``spacing``;
    each half of the tent is split at the singular point it contains.
    """
    s0, s1, s2 = s[..., 0], s[..., 1], s[..., 2]
    span = s2 - s0
    scale = np.maximum(1.0, np.max(np.abs(s), axis=-1))
    flat = span <= 1e-13 * scale
    span_safe = np.where(flat, 1.0, span)
    total = np.zeros(s0.shape)
    pieces = (
        (s0, s1, lambda x, a, L: 2.0 * (x - a[..., None]) / (span_safe[..., None] * L[..., None])),
        (s1, s2, lambda x, a, L: 2.0 * (a[..., None] + L[..., None] - x) / (span_safe[..., None] * L[..., None])),
    )
    for a, b, dens in pieces:
        L = b - a
        L_safe = np.where(L > 0, L, 1.0)
        k = np.round(0.5 * (a + b) / spacing)
        z = k * spacing
        inside = (z > a) & (z < b)
        split = np.where(inside, z, 0.5 * (a + b))
        for lo, hi in ((a, split), (split, b)):
            part = _clustered_integral(fn, lambda x: dens(x, a, L_safe), lo, hi)
            total = total + np.where(L > 0, part, 0.0)
    wide = (np.maximum(s1 - s0, s2 - s1) > 0.5 * spacing) & ~flat
    for idx in zip(*np.nonzero(wide)):
        total[idx] = _tent_mean_wide(fn, s[idx], spacing)
    return np.where(flat, fn(0.5 * (s0 + s2)), total)


def _tent_mean_wide(fn, s, spacing):
    """Scalar fallback for triangles whose range spans several singular points."""
    s0, s1, s2 = (float(v) for v in s)
    span = s2 - s0
    total = 0.0
    for a, b, rising in ((s0, s1, True), (s1, s2, False)):
        if b <= a:
            continue
        ks = np.arange(np.ceil(a / spacing), np.floor(b / spacing) + 1) * spacing
        cuts = np.concatenate([[a], ks[(ks > a) & (ks < b)], [b]])
        if rising:
            dens = lambda x: 2.0 * (x - a) / (span * (b - a))  # noqa: E731
        else:
            dens = lambda x: 2.0 * (b - x) / (span * (b - a))  # noqa: E731
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += float(_clustered_integral(fn, dens, np.array(lo), np.array(hi)))
    return total


class _Conformal(FinslerStructure):
    """F^2(u, X) = c(u) |X|^2."""

    def conformal_factor(self, u):
        raise NotImplementedError

    def norm_sq(self, u, X):
        u, X = _as_pair(u, X)
        return self.conformal_factor(u) * np.einsum("...i,...i->...", X, X)

    def norm(self, u, X):
        return np.sqrt(self.norm_sq(u, X))

    def norm_sq_grad(self, u, X):
        u, X = _as_pair(u, X)
        return 2.0 * self.conformal_factor(u)[..., None] * X

    def tensor(self, u, X):
        u, X = _as_pair(u, X)
        c = np.broadcast_to(self.conformal_factor(u), np.broadcast_shapes(u.shape, X.shape)[:-1])
        return c[..., None, None] * np.eye(X.shape[-1])


class RiemannianInU(_Conformal):
    """Conformal metric (1 + eps sin u^1) delta_ij; Lipschitz in u."""

    name = "riemannian_u"

    def __init__(self, eps: float = 0.1, target_dim: int = 2):
        super().__init__(target_dim)
        if not 0 <= eps < 1:
            raise ContractViolation("eps must lie in [0, 1)")
        self.eps = float(eps)

    def conformal_factor(self, u):
        return 1.0 + self.eps * np.sin(np.asarray(u)[..., 0])

    def declared_bounds(self):
        return (1.0 - self.eps, 1.0 + self.eps)

    def declared_modulus(self):
        # |sin a - sin b| <= |a - b| = t^(1/2)
        return (self.eps, 0.5)

    def params(self):
        return {"eps": self.eps}


class RoughInU(_Conformal):
    """Conformal metric (1 + eps |sin u^1|^(1/2)) delta_ij; Hölder-1/2 in u."""

    name = "rough"
    smooth_in_u = False

    def __init__(self, eps: float = 0.1, target_dim: int = 2):
        super().__init__(target_dim)
        if eps < 0:
            raise ContractViolation("eps must be nonnegative")
        self.eps = float(eps)

    def conformal_factor(self, u):
        return 1.0 + self.eps * np.sqrt(np.abs(np.sin(np.asarray(u)[..., 0])))

    def triangle_mean_factor(self, u_vertices):
        """Exact mean of the conformal factor over a triangle on which u is affine.

        ``u_vertices`` has shape (T, 3, n). Only u^1 enters; its values over
        the triangle are distributed with a tent density on
        [min, max] peaking at the middle vertex value.
        """
        s = np.sort(np.asarray(u_vertices, dtype=float)[..., 0], axis=-1)
        return 1.0 + self.eps * _tent_mean(lambda x: np.sqrt(np.abs(np.sin(x))), s, np.pi)

    def declared_bounds(self):
        return (1.0, 1.0 + self.eps)

    def declared_modulus(self):
        # ||a|^(1/2) - |b|^(1/2)| <= |a - b|^(1/2) and t = |u - v|^2
        return (self.eps, 0.25)

    def params(self):
        return {"eps": self.eps}


class Randers(FinslerStructure):
    """Randers norm |X| + b(u).X with b(u) = b * (1 + kappa sin u^1).

    ``kappa = 0`` gives a u-independent (Minkowski) Randers norm. Strong
    convexity needs ``|b| (1 + |kappa|) < 1``; this is not enforced here so
    that :func:`estimate_convexity_bounds` can detect violations.
    """

    name = "randers"

    def __init__(self, b=(0.3, 0.0), kappa: float = 0.0):
        b = np.asarray(b, dtype=float)
        super().__init__(b.shape[0])
        self.b = b
        self.kappa = float(kappa)
        self.u_independent = self.kappa == 0.0

    def drift(self, u):
        u = np.asarray(u, dtype=float)
        if self.kappa == 0.0:
            return np.broadcast_to(self.b, u.shape)
        return (1.0 + self.kappa * np.sin(u[..., 0]))[..., None] * self.b

    def norm(self, u, X):
        u, X = _as_pair(u, X)
        b = self.drift(u)
        return np.linalg.norm(X, axis=-1) + np.einsum("...i,...i->...", b, X)

    def norm_sq_grad(self, u, X):
        u, X = _as_pair(u, X)
        b = self.drift(u)
        a = np.linalg.norm(X, axis=-1)
        F = a + np.einsum("...i,...i->...", b, X)
        safe = np.where(a > 0, a, 1.0)
        dF = X / safe[..., None] + b
        return np.where((a > 0)[..., None], 2.0 * F[..., None] * dF, 0.0)

    def tensor(self, u, X):
        u, X = _as_pair(u, X)
        b = self.drift(u)
        a = np.linalg.norm(X, axis=-1)
        if np.any(a == 0):
            raise SlitBundleError("fundamental tensor requires X != 0")
        xh = X / a[..., None]
        F_over_a = 1.0 + np.einsum("...i,...i->...", b, xh)
        eye = np.eye(X.shape[-1])
        proj = eye - xh[..., :, None] * xh[..., None, :]
        l = xh + b
        return F_over_a[..., None, None] * proj + l[..., :, None] * l[..., None, :]

    def _bmax(self):
        return float(np.linalg.norm(self.b)) * (1.0 + abs(self.kappa))

    def declared_bounds(self):
        bmax = self._bmax()
        if bmax >= 1:
            return None
        return ((1.0 - bmax) ** 2, (1.0 + bmax) ** 2)

    def declared_modulus(self):
        if self.kappa == 0.0:
            return (0.0, None)
        return None

    def params(self):
        return {"b": self.b.tolist(), "kappa": self.kappa}


class QuarticMinkowski(FinslerStructure):
    """u-independent norm F(X) = (|X|^4 + kappa * sum X_i^4)^(1/4)."""

    name = "minkowski_quartic"
    u_independent = True

    def __init__(self, kappa: float = 0.2, target_dim: int = 2):
        super().__init__(target_dim)
        if kappa <= -0.5:
            raise ContractViolation("kappa must exceed -1/2")
        self.kappa = float(kappa)

    def _quartic(self, X):
        s = np.einsum("...i,...i->...", X, X)
        return s * s + self.kappa * np.sum(X**4, axis=-1)

    def norm_sq(self, u, X):
        X = np.asarray(X, dtype=float)
        return np.sqrt(self._quartic(X))

    def norm(self, u, X):
        _, X = _as_pair(u, X)
        return self._quartic(X) ** 0.25

    def norm_sq_grad(self, u, X):
        X = np.asarray(X, dtype=float)
        s = np.einsum("...i,...i->...", X, X)
        G = self._quartic(X)
        safe = np.where(G > 0, np.sqrt(G), 1.0)
        dG = 4.0 * s[..., None] * X + 4.0 * self.kappa * X**3
        return np.where((G > 0)[..., None], dG / (2.0 * safe[..., None]), 0.0)

    def tensor(self, u, X):
        X = np.asarray(X, dtype=float)
        n = X.shape[-1]
        s = np.einsum("...i,...i->...", X, X)
        G = self._quartic(X)
        if np.any(G == 0):
            raise SlitBundleError("fundamental tensor requires X != 0")
        sqG = np.sqrt(G)
        eye = np.eye(n)
        dG = 4.0 * s[..., None] * X + 4.0 * self.kappa * X**3
        d2G = (
            8.0 * X[..., :, None] * X[..., None, :]
            + (4.0 * s[..., None, None] + 12.0 * self.kappa * (X**2)[..., :, None]) * eye
        )
        hess = d2G / (2.0 * sqG[..., None, None]) - dG[..., :, None] * dG[..., None, :] / (
            4.0 * (G * sqG)[..., None, None]
        )
        return 0.5 * hess

    def params(self):
        return {"kappa": self.kappa}


METRICS = {
    "euclidean": Euclidean,
    "riemannian_u": RiemannianInU,
    "randers": Randers,
    "minkowski_quartic": QuarticMinkowski,
    "rough": RoughInU,
}


def make_metric(name: str, **params) -> FinslerStructure:
    try:
        cls = METRICS[name]
    except KeyError:
        raise ContractViolation(
            f"unknown target metric {name!r}; registered: {', '.join(sorted(METRICS))}"
        ) from None
    return cls(**params)


# --- operations ----------------------------------------------------------


def eval_norm(F: FinslerStructure, s: TangentSample) -> float:
    if s.u.shape[0] != F.target_dim:
        raise ContractViolation(f"sample dimension {s.u.shape[0]} != target_dim {F.target_dim}")
    if not np.any(s.X):
        return 0.0
    return float(F.norm(s.u, s.X))


def fundamental_tensor(F: FinslerStructure, s: TangentSample, mode: str = "analytic") -> np.ndarray:
    if not np.any(s.X):
        raise SlitBundleError("fundamental tensor is defined on the slit bundle only (X != 0)")
    if mode == "analytic":
        f = F.tensor(s.u, s.X)
    elif mode == "finite_difference":
        f = F.fd_tensor(s.u, s.X)
    else:
        raise ContractViolation(f"unknown mode {mode!r}")
    return 0.5 * (f + np.swapaxes(f, -1, -2))


def _rel(a, b):
    den = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / den)


def verify_homogeneity(F, samples, scales, mode="analytic") -> float:
    """Largest relative violation of F(u, sX) = s F(u, X) and f(u, sX) = f(u, X)."""
    worst = 0.0
    for s in samples:
        F0 = F.norm(s.u, s.X)
        f0 = fundamental_tensor(F, s, mode)
        for lam in scales:
            if lam <= 0:
                raise ContractViolation("scales must be positive")
            scaled = TangentSample(s.u, lam * s.X)
            worst = max(worst, abs(F.norm(s.u, lam * s.X) - lam * F0) / (lam * F0))
            worst = max(worst, _rel(fundamental_tensor(F, scaled, mode), f0))
    return worst


def verify_euler_identity(F, samples, mode="analytic") -> float:
    """Largest relative violation of f_ij X^i X^j = F^2."""
    worst = 0.0
    for s in samples:
        f = fundamental_tensor(F, s, mode)
        lhs = s.X @ f @ s.X
        rhs = F.norm(s.u, s.X) ** 2
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def unit_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Uniformly spaced unit vectors on the circle for n = 2; seeded sphere samples otherwise."""
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    v = np.random.default_rng(seed).standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def estimate_convexity_bounds(F, u_samples, direction_count: int = 64) -> ConvexityBounds:
    if direction_count < 8:
        raise ContractViolation("direction_count must be at least 8")
    u_samples = np.atleast_2d(np.asarray(u_samples, dtype=float))
    dirs = unit_directions(F.target_dim, direction_count)
    lo, hi = math.inf, -math.inf
    for u in u_samples:
        f = F.tensor(np.broadcast_to(u, dirs.shape), dirs)
        eig = np.linalg.eigvalsh(0.5 * (f + np.swapaxes(f, -1, -2)))
        k = int(np.argmin(eig[:, 0]))
        if eig[k, 0] <= 0:
            raise ConvexityViolation(
                f"nonpositive eigenvalue {eig[k, 0]:.6g} of f_ij at u={u.tolist()}, X={dirs[k].tolist()}",
                u=u,
                X=dirs[k],
                eigenvalue=float(eig[k, 0]),
            )
        lo = min(lo, float(eig[:, 0].min()))
        hi = max(hi, float(eig[:, -1].max()))
    return ConvexityBounds(lo, hi, len(u_samples) * direction_count)


def estimate_modulus(F, u_pairs, X_samples, bins_per_decade: int = 4) -> ModulusFit:
    """Fit |F^2(u,X) - F^2(v,X)| / |X|^2 <= c * (|u-v|^2)^sigma.

    Samples are grouped into logarithmic bins of t = |u-v|^2 and the fit runs
    through the per-bin maxima, so it tracks the upper envelope that a
    modulus of continuity bounds rather than the bulk of the samples.
    """
    u_pairs = np.asarray(u_pairs, dtype=float)
    X = np.atleast_2d(np.asarray(X_samples, dtype=float))
    if u_pairs.size == 0 or X.size == 0:
        raise EmptySampleError("no samples supplied")
    if np.any(np.linalg.norm(X, axis=1) == 0):
        raise SlitBundleError("X samples must be nonzero")
    u, v = u_pairs[:, 0], u_pairs[:, 1]
    t = np.sum((u - v) ** 2, axis=1)
    keep = t > 0
    if not np.any(keep):
        raise EmptySampleError("every (u, v) pair was identical")
    u, v, t = u[keep], v[keep], t[keep]
    X2 = np.sum(X**2, axis=1)
    d = np.abs(F.norm_sq(u[:, None, :], X[None]) - F.norm_sq(v[:, None, :], X[None])) / X2
    d = d.max(axis=1)
    span = np.concatenate([u, v])
    diam = float(np.linalg.norm(span.max(axis=0) - span.min(axis=0)))
    t_cap = 4.0 * diam**2
    count = int(keep.sum())
    scale = max(1.0, float(np.max(F.norm_sq(u[:, None, :], X[None]) / X2)))
    live = d > 1e-13 * scale
    if not np.any(live):
        return ModulusFit(0.0, None, 0.0, t_cap, count)
    lt = np.log10(t[live])
    ld = np.log10(d[live])
    bins = np.floor(lt * bins_per_decade).astype(int)
    keys = np.unique(bins)
    bt = np.array([lt[bins == k][np.argmax(ld[bins == k])] for k in keys])
    bd = np.array([ld[bins == k].max() for k in keys])
    if len(keys) < 2:
        raise EmptySampleError("modulus fit needs separations spanning at least two bins")
    sigma, logc = np.polyfit(bt, bd, 1)
    ratio = d[live] / (10**logc * t[live] ** sigma)
    c_env = float(np.max(d[live] / t[live] ** sigma))
    return ModulusFit(c_env, float(sigma), float(ratio.max()), t_cap, count)


# --- default probe sets ----------------------------------------------------


def random_samples(n: int, count: int, seed: int = 0, u_range: float = 2.0):
    rng = np.random.default_rng(seed)
    us = rng.uniform(-u_range, u_range, (count, n))
    Xs = rng.standard_normal((count, n))
    Xs *= np.exp(rng.uniform(-1, 1, (count, 1))) / np.linalg.norm(Xs, axis=1, keepdims=True)
    return [TangentSample(a, b) for a, b in zip(us, Xs)]


def modulus_pairs(n: int, seed: int = 0, u_range: float = 2.0, grid_points: int = 5,
                  random_points: int = 20, decades=(-4.0, 0.0), levels: int = 17):
    """Pairs (u, u + s e) on a symmetric base grid plus random bases.

    The base grid has an odd point count per axis so it contains the origin.
    """
    rng = np.random.default_rng(seed)
    axis = np.linspace(-u_range, u_range, grid_points)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    bases = np.concatenate([grid, rng.uniform(-u_range, u_range, (random_points, n))])
    dirs = np.concatenate([np.eye(n), -np.eye(n)])
    extra = rng.standard_normal((4, n))
    dirs = np.concatenate([dirs, extra / np.linalg.norm(extra, axis=1, keepdims=True)])
    mags = np.logspace(decades[0], decades[1], levels)
    pairs = [
        (b, b + s * e) for b in bases for e in dirs for s in mags
    ]
    return np.array(pairs)


@dataclass
class VerificationTable:
    metric: str
    params: dict
    homogeneity_analytic: float
    homogeneity_fd: float
    euler_analytic: float
    euler_fd: float
    bounds: ConvexityBounds
    modulus: ModulusFit
    samples: int = field(default=0)

    def to_dict(self):
        return {
            "metric": self.metric,
            "params": self.params,
            "samples": self.samples,
            "homogeneity_deviation_analytic": float(self.homogeneity_analytic),
            "homogeneity_deviation_fd": float(self.homogeneity_fd),
            "euler_deviation_analytic": float(self.euler_analytic),
            "euler_deviation_fd": float(self.euler_fd),
            "lambda_min": float(self.bounds.lambda_min),
            "lambda_max": float(self.bounds.lambda_max),
            "c_omega": float(self.modulus.c_omega),
            "sigma": None if self.modulus.sigma is None else float(self.modulus.sigma),
            "modulus_max_ratio": float(self.modulus.max_observed_ratio),
        }


def verify_structure(F: FinslerStructure, sample_budget: int = 200, seed: int = 0) -> VerificationTable:
    """Run every structural check on F with a shared sample budget."""
    samples = random_samples(F.target_dim, sample_budget, seed)
    scales = (0.5, 2.0, 10.0)
    u_grid = np.array([s.u for s in samples[: max(8, sample_budget // 10)]])
    bounds = estimate_convexity_bounds(F, u_grid, 64)
    modulus = estimate_modulus(
        F, modulus_pairs(F.target_dim, seed), unit_directions(F.target_dim, 8)
    )
    return VerificationTable(
        metric=F.name,
        params=F.params(),
        homogeneity_analytic=verify_homogeneity(F, samples, scales),
        homogeneity_fd=verify_homogeneity(F, samples, scales, "finite_difference"),
        euler_analytic=verify_euler_identity(F, samples),
        euler_fd=verify_euler_identity(F, samples, "finite_difference"),
        bounds=bounds,
        modulus=modulus,
        samples=len(samples),
    )
