"""Closed-form Fourier ground truth for the Laplacian on the unit disk.

Traces are trigonometric polynomials; the Dirichlet-to-Neumann map multiplies
mode k by k, products are computed by exact mode convolution, and interior
values come from the power-series solution of the Dirichlet problem.
"""

from __future__ import annotations

import numpy as np

DEFAULT_MODE_CAP = 128


class FourierTrace:
    """Real trigonometric polynomial sum_k a_k cos(k t) + b_k sin(k t)."""

    def __init__(self, cos_coeffs, sin_coeffs=None, mode_cap=DEFAULT_MODE_CAP):
        cos_coeffs = np.atleast_1d(np.asarray(cos_coeffs, dtype=float))
        if sin_coeffs is None:
            sin_coeffs = np.zeros_like(cos_coeffs)
        sin_coeffs = np.atleast_1d(np.asarray(sin_coeffs, dtype=float))
        n = max(len(cos_coeffs), len(sin_coeffs))
        if n - 1 > mode_cap:
            raise ValueError(f"mode count {n - 1} exceeds the cap {mode_cap}")
        self.cos = np.zeros(n)
        self.sin = np.zeros(n)
        self.cos[: len(cos_coeffs)] = cos_coeffs
        self.sin[: len(sin_coeffs)] = sin_coeffs
        self.sin[0] = 0.0
        if not (np.all(np.isfinite(self.cos)) and np.all(np.isfinite(self.sin))):
            raise ValueError("coefficients must be finite")

    @classmethod
    def mode(cls, k, amplitude=1.0, kind="cos"):
        cos = np.zeros(k + 1)
        sin = np.zeros(k + 1)
        if kind == "cos":
            cos[k] = amplitude
        else:
            sin[k] = amplitude
        return cls(cos, sin)

    @property
    def n_modes(self):
        return len(self.cos) - 1

    def __add__(self, other):
        n = max(len(self.cos), len(other.cos))
        cos = np.zeros(n)
        sin = np.zeros(n)
        cos[: len(self.cos)] += self.cos
        cos[: len(other.cos)] += other.cos
        sin[: len(self.sin)] += self.sin
        sin[: len(other.sin)] += other.sin
        return FourierTrace(cos, sin, mode_cap=max(DEFAULT_MODE_CAP, n))

    def scaled(self, t):
        return FourierTrace(t * self.cos, t * self.sin, mode_cap=max(DEFAULT_MODE_CAP, len(self.cos)))

    def sample(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = np.arange(len(self.cos))
        ang = np.multiply.outer(theta, k)
        return np.cos(ang) @ self.cos + np.sin(ang) @ self.sin

    def _complex(self):
        """Coefficients c_k, k = -N..N, with f = sum c_k e^{i k t}."""
        n = self.n_modes
        c = np.zeros(2 * n + 1, dtype=complex)
        c[n] = self.cos[0]
        for k in range(1, n + 1):
            c[n + k] = 0.5 * (self.cos[k] - 1j * self.sin[k])
            c[n - k] = 0.5 * (self.cos[k] + 1j * self.sin[k])
        return c

    @classmethod
    def _from_complex(cls, c):
        n = (len(c) - 1) // 2
        cos = np.zeros(n + 1)
        sin = np.zeros(n + 1)
        cos[0] = c[n].real
        for k in range(1, n + 1):
            cos[k] = (c[n + k] + c[n - k]).real
            sin[k] = (c[n - k] - c[n + k]).imag
        return cls(cos, sin, mode_cap=max(DEFAULT_MODE_CAP, n + 1))


def trace_l2(f):
    """L2 norm over the unit circle, |f|^2 integrated in arclength."""
    return float(
        np.sqrt(
            2.0 * np.pi * f.cos[0] ** 2
            + np.pi * (np.sum(f.cos[1:] ** 2) + np.sum(f.sin[1:] ** 2))
        )
    )


def trace_inner(f, g):
    n = max(len(f.cos), len(g.cos))
    fc = np.zeros(n)
    fs = np.zeros(n)
    gc = np.zeros(n)
    gs = np.zeros(n)
    fc[: len(f.cos)] = f.cos
    fs[: len(f.sin)] = f.sin
    gc[: len(g.cos)] = g.cos
    gs[: len(g.sin)] = g.sin
    return float(
        2.0 * np.pi * fc[0] * gc[0] + np.pi * (fc[1:] @ gc[1:] + fs[1:] @ gs[1:])
    )


def disk_dtn_apply(f):
    """Mode k maps to k times itself (radial derivative of r^k at r = 1)."""
    k = np.arange(len(f.cos), dtype=float)
    return FourierTrace(k * f.cos, k * f.sin, mode_cap=max(DEFAULT_MODE_CAP, len(f.cos)))


def trace_product(g, f):
    """Exact product of two trigonometric polynomials by mode convolution."""
    cg = g._complex()
    cf = f._complex()
    return FourierTrace._from_complex(np.convolve(cg, cf))


def disk_commutator_fourier(g, f):
    """Lambda(g f) - g Lambda(f) computed entirely in Fourier space."""
    first = disk_dtn_apply(trace_product(g, f))
    second = trace_product(g, disk_dtn_apply(f))
    return first + second.scaled(-1.0)


def disk_harmonic_eval(f, points):
    """Power-series solution of the Dirichlet problem at interior points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(pts, axis=1)
    if np.any(r > 1.0 + 1e-12):
        raise ValueError("points must lie in the closed unit disk")
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    k = np.arange(len(f.cos))
    rk = np.power.outer(np.clip(r, 0.0, 1.0), k)
    ang = np.multiply.outer(theta, k)
    vals = (rk * np.cos(ang)) @ f.cos + (rk * np.sin(ang)) @ f.sin
    if np.asarray(points).ndim == 1:
        return float(vals[0])
    return vals
