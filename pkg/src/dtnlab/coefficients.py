"""Coefficient tensors a_ij^{ab}(x) with ellipticity, symmetry, and Hoelder
metadata, plus validation sweeps and the Carleson norm of |grad A|^2 delta.

Tensor layout everywhere: shape (..., 2, 2, m, m) indexed [i, j, alpha, beta]
(derivative slots first, component slots last).
"""

from __future__ import annotations

import numpy as np

from . import functionals


class CoefficientField:
    """Evaluable tensor field with declared ellipticity and Hoelder data.

    ``evaluate(points)`` maps (P, 2) points to (P, 2, 2, m, m) tensors.  An
    analytic ``gradient`` may be registered; otherwise central differences
    are used with a caller-chosen step.
    """

    def __init__(
        self,
        m,
        evaluate,
        mu,
        holder_exponent=1.0,
        holder_seminorm=0.0,
        symmetric_flag=True,
        preset_tag="custom",
        gradient=None,
    ):
        self.m = int(m)
        self._evaluate = evaluate
        self.mu = float(mu)
        self.holder_exponent = float(holder_exponent)
        self.holder_seminorm = float(holder_seminorm)
        self.symmetric_flag = bool(symmetric_flag)
        self.preset_tag = preset_tag
        self._gradient = gradient
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ValueError("holder exponent must lie in (0, 1]")
        if self.mu <= 0:
            raise ValueError("ellipticity constant must be positive")

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self._evaluate(pts)
        expected = (len(pts), 2, 2, self.m, self.m)
        if out.shape != expected:
            raise ValueError(f"coefficient evaluation returned {out.shape}, wanted {expected}")
        return out

    def gradient(self, points, step):
        """d/dx_k of the tensor at ``points``; shape (P, 2, 2, 2, m, m), axis 1 = k."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._gradient is not None:
            return self._gradient(pts)
        out = np.empty((len(pts), 2, 2, 2, self.m, self.m))
        for k in range(2):
            shift = np.zeros(2)
            shift[k] = step
            out[:, k] = (self.evaluate(pts + shift) - self.evaluate(pts - shift)) / (
                2.0 * step
            )
        return out

    def adjoint(self):
        """Field with the transposed tensor a_ji^{ba}."""
        if self.symmetric_flag:
            return self
        return CoefficientField(
            self.m,
            lambda pts: np.transpose(self.evaluate(pts), (0, 2, 1, 4, 3)),
            self.mu,
            self.holder_exponent,
            self.holder_seminorm,
            symmetric_flag=False,
            preset_tag=self.preset_tag + "_adjoint",
            gradient=None if self._gradient is None else (
                lambda pts: np.transpose(self._gradient(pts), (0, 1, 3, 2, 5, 4))
            ),
        )


def _kron_identity(m):
    eye2 = np.eye(2)
    eyem = np.eye(m)
    return np.einsum("ij,ab->ijab", eye2, eyem)


def identity_field(m=1):
    base = _kron_identity(m)

    def ev(pts):
        return np.broadcast_to(base, (len(pts),) + base.shape).copy()

    def grad(pts):
        return np.zeros((len(pts), 2) + base.shape)

    return CoefficientField(m, ev, 1.0, 1.0, 0.0, True, "identity", grad)


def scalar_smooth_field(omega=1.0, base=2.0, amplitude=1.0, m=1):
    """a(x) = base + amplitude sin(omega pi x1) sin(omega pi x2) times the identity."""
    if base - abs(amplitude) <= 0:
        raise ValueError("amplitude too large for ellipticity")
    ker = _kron_identity(m)
    w = omega * np.pi

    def scal(pts):
        return base + amplitude * np.sin(w * pts[:, 0]) * np.sin(w * pts[:, 1])

    def ev(pts):
        return scal(pts)[:, None, None, None, None] * ker

    def grad(pts):
        d = np.empty((len(pts), 2))
        d[:, 0] = amplitude * w * np.cos(w * pts[:, 0]) * np.sin(w * pts[:, 1])
        d[:, 1] = amplitude * w * np.sin(w * pts[:, 0]) * np.cos(w * pts[:, 1])
        return d[:, :, None, None, None, None] * ker

    # two-sided constant: mu |xi|^2 <= a |xi|^2 <= (1/mu) |xi|^2
    mu = min(base - abs(amplitude), 1.0 / (base + abs(amplitude)))
    seminorm = abs(amplitude) * w * np.sqrt(2.0 * m)
    return CoefficientField(m, ev, mu, 1.0, seminorm, True, "scalar_smooth", grad)


def rotated_anisotropic_field(theta, lam, m=1):
    """Constant matrix R(theta) diag(1, lam) R(theta)^T, scalar (m=1) by default."""
    if lam <= 0:
        raise ValueError("anisotropy ratio must be positive")
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    mat = rot @ np.diag([1.0, lam]) @ rot.T
    eyem = np.eye(m)
    base = np.einsum("ij,ab->ijab", mat, eyem)

    def ev(pts):
        return np.broadcast_to(base, (len(pts),) + base.shape).copy()

    def grad(pts):
        return np.zeros((len(pts), 2) + base.shape)

    mu = min(min(1.0, lam), 1.0 / max(1.0, lam))
    return CoefficientField(m, ev, mu, 1.0, 0.0, True, "rotated_anisotropic", grad)


def system_coupled_field(kappa=0.5):
    """m = 2 system with a smooth off-component coupling of strength kappa."""
    if not 0 <= kappa < 1:
        raise ValueError("coupling strength must lie in [0, 1)")
    eye = _kron_identity(2)
    sigma = np.array([[0.0, 1.0], [1.0, 0.0]])
    coupling = np.einsum("ij,ab->ijab", np.eye(2), sigma)

    def q(pts):
        return np.sin(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1])

    def ev(pts):
        return eye + kappa * q(pts)[:, None, None, None, None] * coupling

    def grad(pts):
        d = np.empty((len(pts), 2))
        d[:, 0] = np.pi * np.cos(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1])
        d[:, 1] = -np.pi * np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
        return kappa * d[:, :, None, None, None, None] * coupling

    seminorm = 2.0 * kappa * np.pi
    return CoefficientField(2, ev, 1.0 - kappa, 1.0, seminorm, True, "system_coupled", grad)


_PRESETS = {
    "identity": identity_field,
    "scalar_smooth": scalar_smooth_field,
    "rotated_anisotropic": rotated_anisotropic_field,
    "system_coupled": system_coupled_field,
}


def coefficient_preset(name, **params):
    if name not in _PRESETS:
        raise ValueError(f"unknown coefficient preset {name!r}")
    return _PRESETS[name](**params)


def coefficient_from_grid(path):
    """Tensor samples on a uniform grid with bilinear interpolation.

    Plain-text format: header line ``nx ny m`` optionally followed by
    ``x0 y0 x1 y1`` bounds on the same line (default unit square), then
    nx*ny lines in row-major order (x fastest), each holding the 4 m^2
    tensor entries in [i, j, alpha, beta] order.
    """
    with open(path) as fh:
        header = fh.readline().split()
        nx, ny, m = int(header[0]), int(header[1]), int(header[2])
        if len(header) >= 7:
            x0, y0, x1, y1 = map(float, header[3:7])
        else:
            x0, y0, x1, y1 = 0.0, 0.0, 1.0, 1.0
        data = np.loadtxt(fh).reshape(ny, nx, 2, 2, m, m)

    def ev(pts):
        fx = np.clip((pts[:, 0] - x0) / (x1 - x0) * (nx - 1), 0, nx - 1 - 1e-12)
        fy = np.clip((pts[:, 1] - y0) / (y1 - y0) * (ny - 1), 0, ny - 1 - 1e-12)
        ix, iy = fx.astype(int), fy.astype(int)
        tx, ty = fx - ix, fy - iy
        out = (
            data[iy, ix] * ((1 - tx) * (1 - ty))[:, None, None, None, None]
            + data[iy, ix + 1] * (tx * (1 - ty))[:, None, None, None, None]
            + data[iy + 1, ix] * ((1 - tx) * ty)[:, None, None, None, None]
            + data[iy + 1, ix + 1] * (tx * ty)[:, None, None, None, None]
        )
        return out

    # declared constants measured from the samples themselves
    flat = data.reshape(-1, 2, 2, m, m)
    q = flat.transpose(0, 1, 3, 2, 4).reshape(len(flat), 2 * m, 2 * m)
    sym = 0.5 * (q + q.transpose(0, 2, 1))
    eigs = np.linalg.eigvalsh(sym)
    mu = max(min(eigs.min(), 1.0 / max(eigs.max(), 1e-12)), 1e-12)
    symmetric = bool(
        np.max(np.abs(flat - flat.transpose(0, 2, 1, 4, 3))) <= 1e-12 * np.abs(flat).max()
    )
    return CoefficientField(m, ev, mu, 1.0, 0.0, symmetric, "grid")


class MultiplierField:
    """Boundary multiplier: scalar, or an m x m matrix expected to commute
    with the coefficient blocks."""

    def __init__(self, evaluate, m=1, mode="scalar", tag="custom"):
        self._evaluate = evaluate
        self.m = int(m)
        if mode not in ("scalar", "matrix"):
            raise ValueError("mode must be 'scalar' or 'matrix'")
        self.mode = mode
        self.tag = tag

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(self._evaluate(pts), dtype=float)
        if self.mode == "scalar":
            if out.shape != (len(pts),):
                raise ValueError("scalar multiplier must return one value per point")
        elif out.shape != (len(pts), self.m, self.m):
            raise ValueError("matrix multiplier must return (P, m, m)")
        return out


def scalar_multiplier(fn, tag="custom"):
    return MultiplierField(lambda pts: np.asarray(fn(pts), dtype=float), 1, "scalar", tag)


def commuting_matrix_multiplier(c0_fn, c1_fn):
    """g(x) = c0(x) I + c1(x) [[0,1],[1,0]]; commutes with the coupled preset."""
    sigma = np.array([[0.0, 1.0], [1.0, 0.0]])

    def ev(pts):
        c0 = np.asarray(c0_fn(pts), dtype=float)
        c1 = np.asarray(c1_fn(pts), dtype=float)
        return c0[:, None, None] * np.eye(2) + c1[:, None, None] * sigma

    return MultiplierField(ev, 2, "matrix", "commuting_pair")


def validate(field, sample_points, xi_grid=None):
    """Empirical ellipticity, symmetry, and Hoelder report over sample points.

    mu_emp is the smallest Rayleigh quotient of the quadratic form (exact
    eigenvalue minimum, plus any supplied directions); mu_upper_emp the
    largest.  holder_emp is the largest difference quotient at the declared
    exponent over sampled pairs separated by at least 1e-6.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if len(pts) == 0:
        raise ValueError("need at least one sample point")
    tensors = field.evaluate(pts)
    m = field.m
    q = tensors.transpose(0, 1, 3, 2, 4).reshape(len(pts), 2 * m, 2 * m)
    sym = 0.5 * (q + q.transpose(0, 2, 1))
    eigs = np.linalg.eigvalsh(sym)
    mu_emp = float(eigs[:, 0].min())
    mu_upper = float(eigs[:, -1].max())
    argmin_pt = pts[int(np.argmin(eigs[:, 0]))]
    if xi_grid is not None:
        xi = np.asarray(xi_grid, dtype=float).reshape(-1, 2 * m)
        xi = xi / np.linalg.norm(xi, axis=1, keepdims=True)
        ray = np.einsum("pkl,nk,nl->pn", sym, xi, xi)
        mu_emp = min(mu_emp, float(ray.min()))

    scale = np.abs(tensors).max() + 1e-300
    sym_resid = float(np.max(np.abs(tensors - tensors.transpose(0, 2, 1, 4, 3))))
    symmetric = sym_resid <= 1e-14 * scale

    if len(pts) > 400:
        stride = len(pts) // 400 + 1
        hp = pts[::stride]
        ht = tensors[::stride]
    else:
        hp, ht = pts, tensors
    diff = ht[:, None] - ht[None, :]
    dist = np.linalg.norm(hp[:, None, :] - hp[None, :, :], axis=2)
    mask = dist >= 1e-6
    quot = np.zeros_like(dist)
    fro = np.sqrt(np.sum(diff.reshape(diff.shape[:2] + (-1,)) ** 2, axis=2))
    quot[mask] = fro[mask] / dist[mask] ** field.holder_exponent
    holder_emp = float(quot.max()) if mask.any() else 0.0

    report = {
        "mu_emp": mu_emp,
        "mu_upper_emp": mu_upper,
        "symmetric": symmetric,
        "symmetry_residual": sym_resid,
        "holder_emp": holder_emp,
        "violations": [],
    }
    if mu_emp <= 0:
        report["violations"].append(
            f"nonpositive form {mu_emp:.3e} at point {argmin_pt.tolist()}"
        )
    if mu_emp < field.mu * (1.0 - 1e-10):
        report["violations"].append(
            f"empirical lower bound {mu_emp:.6g} below declared {field.mu:.6g}"
        )
    if mu_upper > (1.0 / field.mu) * (1.0 + 1e-10):
        report["violations"].append(
            f"empirical upper bound {mu_upper:.6g} above declared {1.0 / field.mu:.6g}"
        )
    return report


def grad_carleson_norm(field, mesh):
    """Carleson norm of the cell measure |grad A(x_T)|^2 delta(x_T) area(T)."""
    grads = field.gradient(mesh.centroids, step=mesh.h / 4.0)
    dens = np.sum(grads.reshape(len(mesh.triangles), -1) ** 2, axis=1)
    weights = dens * mesh.centroid_boundary_distance * mesh.areas
    return functionals.carleson_norm(functionals.CellMeasure(mesh, weights))
