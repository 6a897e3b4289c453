"""P1 finite elements for divergence-form elliptic systems.

Assembles the stiffness form with one-point (centroid) quadrature, solves the
Dirichlet problem and the divergence-source problem with a sparse direct
factorization of the interior block, and provides the weighted gradient
functionals used throughout the experiments.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError


class DiscreteField:
    """Nodal finite-element function with m components; values shape (N, m)."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(mesh.nodes) or not np.all(np.isfinite(values)):
            raise ValueError("values must be finite with one row per mesh node")
        self.mesh = mesh
        self.values = values

    @property
    def m(self):
        return self.values.shape[1]

    def boundary_values(self):
        return self.values[self.mesh.boundary_nodes]

    def component_magnitude(self):
        """Per-node Euclidean magnitude across components."""
        return np.linalg.norm(self.values, axis=1)


class BoundaryTrace:
    """Per-boundary-node data, aligned with ``mesh.boundary_nodes``."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(mesh.boundary_nodes):
            raise ValueError("trace length must match the boundary node count")
        self.mesh = mesh
        self.values = values

    @property
    def m(self):
        return self.values.shape[1]


def trace_from_function(mesh, fn, m=1):
    """Nodal interpolation of a callable on boundary node coordinates."""
    vals = np.asarray(fn(mesh.nodes[mesh.boundary_nodes]), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[1] != m:
        raise ValueError("trace function returned wrong component count")
    return BoundaryTrace(mesh, vals)


class StiffnessSystem:
    """Assembled stiffness matrix with its interior/boundary dof partition."""

    def __init__(self, mesh, coefficient, matrix, m):
        self.mesh = mesh
        self.coefficient = coefficient
        self.matrix = matrix
        self.m = m
        nb = mesh.boundary_nodes
        self.boundary_dofs = (nb[:, None] * m + np.arange(m)[None, :]).ravel()
        ni = mesh.interior_nodes
        self.interior_dofs = (ni[:, None] * m + np.arange(m)[None, :]).ravel()
        self._lu = None
        self._kib = None
        self._kbb = None

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    def blocks(self):
        if self._kib is None:
            K = self.matrix.tocsr()
            self._kii = K[self.interior_dofs][:, self.interior_dofs].tocsc()
            self._kib = K[self.interior_dofs][:, self.boundary_dofs].tocsr()
            self._kbi = K[self.boundary_dofs][:, self.interior_dofs].tocsr()
            self._kbb = K[self.boundary_dofs][:, self.boundary_dofs].tocsr()
        return self._kii, self._kib, self._kbi, self._kbb

    def interior_solve(self, rhs):
        kii, _, _, _ = self.blocks()
        if self._lu is None:
            try:
                self._lu = spla.splu(kii)
            except RuntimeError as exc:  # singular factorization
                raise SolverError(f"interior block factorization failed: {exc}") from exc
        sol = self._lu.solve(rhs)
        res = kii @ sol - rhs
        scale = np.linalg.norm(rhs) + 1e-300
        if np.linalg.norm(res) > 1e-10 * scale:
            raise SolverError("interior solve residual exceeds 1e-10 of the data")
        return sol


def assemble(mesh, coefficient, adjoint=False):
    """Stiffness matrix for the tensor field, centroid quadrature.

    Entry ((p, a), (q, b)) = sum_T area * a_ij^{ab}(x_T) dphi_p/dx_i dphi_q/dx_j.
    With ``adjoint`` the transposed tensor a_ji^{ba} is assembled instead.
    """
    m = coefficient.m
    tensors = coefficient.evaluate(mesh.centroids)  # (T, 2, 2, m, m)
    if adjoint:
        tensors = np.transpose(tensors, (0, 2, 1, 4, 3))
    g = mesh.grad_hats  # (T, 3, 2)
    local = np.einsum("tpi,tijab,tqj->tpaqb", g, tensors, g, optimize=True)
    local *= mesh.areas[:, None, None, None, None]

    tris = mesh.triangles
    comp = np.arange(m)
    dof = tris[:, :, None] * m + comp[None, None, :]  # (T, 3, m)
    rows = np.broadcast_to(dof[:, :, :, None, None], local.shape).ravel()
    cols = np.broadcast_to(dof[:, None, None, :, :], local.shape).ravel()
    n = len(mesh.nodes) * m
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return StiffnessSystem(mesh, coefficient, matrix, m)


def adjoint_system(sys):
    """System for the transposed tensor; reuses the matrix when it is symmetric."""
    if getattr(sys.coefficient, "symmetric_flag", False):
        return sys
    return assemble(sys.mesh, sys.coefficient, adjoint=True)


def solve_dirichlet(sys, trace):
    """Solution with nodally interpolated boundary data ``trace``."""
    if trace.m != sys.m:
        raise ValueError("trace component count does not match the system")
    u = np.zeros((len(sys.mesh.nodes), sys.m))
    u[sys.mesh.boundary_nodes] = trace.values
    _, kib, _, _ = sys.blocks()
    rhs = -kib @ trace.values.ravel()
    u_int = sys.interior_solve(rhs)
    u[sys.mesh.interior_nodes] = u_int.reshape(-1, sys.m)
    return DiscreteField(sys.mesh, u)


def solve_div_source(sys, f_cell):
    """Zero-boundary solution of the divergence-source problem.

    ``f_cell`` holds per-triangle tensors of shape (T, 2, m); the weak form is
    <A grad u, grad phi> = <-f, grad phi> with centroid quadrature on the right.
    """
    f_cell = np.asarray(f_cell, dtype=float)
    if f_cell.ndim == 2:
        f_cell = f_cell[:, :, None]
    if f_cell.shape != (len(sys.mesh.triangles), 2, sys.m):
        raise ValueError("f_cell must have shape (n_triangles, 2, m)")
    if not np.all(np.isfinite(f_cell)):
        raise ValueError("f_cell must be finite")
    contrib = -np.einsum(
        "t,tia,tpi->tpa", sys.mesh.areas, f_cell, sys.mesh.grad_hats
    )
    rhs = np.zeros((len(sys.mesh.nodes), sys.m))
    np.add.at(rhs, sys.mesh.triangles.ravel(), contrib.reshape(-1, sys.m))
    u = np.zeros_like(rhs)
    u_int = sys.interior_solve(rhs.ravel()[sys.interior_dofs])
    u[sys.mesh.interior_nodes] = u_int.reshape(-1, sys.m)
    return DiscreteField(sys.mesh, u)


def scalar_laplace_system(mesh):
    """Cached identity-coefficient scalar system on this mesh."""
    sys = getattr(mesh, "_scalar_laplace", None)
    if sys is None:
        from .coefficients import identity_field

        sys = assemble(mesh, identity_field(1))
        mesh._scalar_laplace = sys
    return sys


def harmonic_extend_many(mesh, boundary_values):
    """Columnwise harmonic extension of (NB, K) boundary data; returns (N, K)."""
    bv = np.asarray(boundary_values, dtype=float)
    if bv.ndim == 1:
        bv = bv[:, None]
    sys = scalar_laplace_system(mesh)
    _, kib, _, _ = sys.blocks()
    out = np.zeros((len(mesh.nodes), bv.shape[1]))
    out[mesh.boundary_nodes] = bv
    out[mesh.interior_nodes] = sys.interior_solve(-(kib @ bv))
    return out


def cell_gradients(mesh, values):
    """Cellwise gradient of nodal data; (N, ...) values -> (T, 2, ...) array."""
    values = np.asarray(values, dtype=float)
    tri_vals = values[mesh.triangles]  # (T, 3, ...)
    return np.einsum("tpi,tp...->ti...", mesh.grad_hats, tri_vals)


def cell_means(mesh, values):
    """Centroid (vertex-average) value of nodal data per triangle."""
    return np.asarray(values, dtype=float)[mesh.triangles].mean(axis=1)


def field_gradient(u):
    return cell_gradients(u.mesh, u.values)


def energy(sys, u, w=None):
    """Discrete bilinear form a(u, w); w defaults to u."""
    uv = u.values.ravel()
    wv = uv if w is None else w.values.ravel()
    return float(wv @ (sys.matrix @ uv))


def log_weight(t):
    """(|ln t| + 1)^2, the logarithmic correction in the weighted estimates."""
    t = np.asarray(t, dtype=float)
    return (np.abs(np.log(t)) + 1.0) ** 2


def weighted_grad_norm(u, alpha, log_factor=False):
    """sum_T |grad u|^2 delta^alpha (log weight if requested) area."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    grad = field_gradient(u)  # (T, 2, m)
    dens = np.einsum("tim,tim->t", grad, grad)
    delta = u.mesh.centroid_boundary_distance
    w = delta**alpha
    if log_factor:
        w = w * log_weight(delta)
    return float(np.sum(dens * w * u.mesh.areas))


def weighted_cell_norm(mesh, cell_values, alpha, log_factor=False):
    """Same weight as :func:`weighted_grad_norm` applied to given cell tensors."""
    vals = np.asarray(cell_values, dtype=float).reshape(len(mesh.triangles), -1)
    dens = np.sum(vals * vals, axis=1)
    delta = mesh.centroid_boundary_distance
    w = delta**alpha
    if log_factor:
        w = w * log_weight(delta)
    return float(np.sum(dens * w * mesh.areas))


def write_matrix_coo(matrix, path):
    """Coordinate text dump: one 'row col value' line per stored entry."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
