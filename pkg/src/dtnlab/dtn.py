"""Dirichlet-to-Neumann operator on boundary degrees of freedom, the
multiplication commutator, boundary norms, operator norms, and the discrete
trilinear identity linking the commutator to interior integrals.

The operator is realized weakly as the boundary Schur complement of the
stiffness matrix composed with the inverse lumped boundary mass, so that
<Lambda f, w>_M equals the energy pairing a(u_f, E w) for any extension E w.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from . import fem
from .fem import BoundaryTrace


class DtNOperator:
    """Dense boundary realization of the Dirichlet-to-Neumann map.

    ``schur`` is the Schur complement S (the weak conormal pairing matrix);
    ``mass`` the lumped boundary weights per boundary dof; ``matrix`` is
    M^{-1} S, whose action returns nodal values of the conormal derivative.
    """

    def __init__(self, mesh, coefficient, schur, mass):
        self.mesh = mesh
        self.coefficient = coefficient
        self.m = coefficient.m
        self.schur = schur
        self.mass = mass
        self.matrix = schur / mass[:, None]

    @property
    def n_boundary(self):
        return len(self.mesh.boundary_nodes)

    def apply(self, trace_values):
        """Nodal values of Lambda f for nodal boundary data f, shape (NB, m)."""
        vals = np.asarray(trace_values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        out = self.matrix @ vals.ravel()
        return out.reshape(-1, self.m)

    def sym_matrix(self):
        """M^{1/2} Lambda M^{-1/2} = M^{-1/2} S M^{-1/2}."""
        d = np.sqrt(self.mass)
        return self.schur / d[:, None] / d[None, :]

    def eigenvalues(self):
        """Eigenvalues of the mass-symmetrized operator, ascending."""
        return np.sort(sla.eigvalsh(0.5 * (self.sym_matrix() + self.sym_matrix().T)))


def steklov_poincare(sys):
    """Boundary Schur complement of the stiffness system as a DtNOperator."""
    kii, kib, kbi, kbb = sys.blocks()
    x = sys.interior_solve(kib.toarray())
    schur = kbb.toarray() - kbi @ x
    mass = np.repeat(sys.mesh.boundary_masses, sys.m)
    return DtNOperator(sys.mesh, sys.coefficient, schur, mass)


def structure_report(dtn_op):
    """Residuals for the structural invariants of the operator.

    mass_symmetry: relative Frobenius asymmetry of S (= M Lambda);
    min_quadform: smallest eigenvalue of the symmetrized similarity transform
    (the quadratic form per unit boundary L2 norm); const_kernel: relative
    size of Lambda applied to per-component constants.
    """
    s = dtn_op.schur
    mass_sym = float(np.linalg.norm(s - s.T) / (np.linalg.norm(s) + 1e-300))
    sym = dtn_op.sym_matrix()
    eigs = sla.eigvalsh(0.5 * (sym + sym.T))
    ones = np.zeros((dtn_op.n_boundary, dtn_op.m))
    worst = 0.0
    opn = operator_norm(dtn_op.matrix, dtn_op.mass)
    for a in range(dtn_op.m):
        ones[:] = 0.0
        ones[:, a] = 1.0
        lam1 = dtn_op.apply(ones)
        num = np.sqrt(np.sum(dtn_op.mass * (lam1.ravel() ** 2)))
        den = opn * np.sqrt(np.sum(dtn_op.mass * (ones.ravel() ** 2))) + 1e-300
        worst = max(worst, float(num / den))
    return {
        "mass_symmetry": mass_sym,
        "min_quadform": float(eigs[0]),
        "max_quadform": float(eigs[-1]),
        "const_kernel": worst,
        "operator_norm": opn,
    }


def operator_norm(op_matrix, mass):
    """Largest singular value of M^{1/2} Op M^{-1/2} (discrete boundary L2 norm)."""
    d = np.sqrt(np.asarray(mass, dtype=float))
    return float(sla.svdvals(d[:, None] * op_matrix / d[None, :]).max())


def _multiplier_boundary_values(g, mesh):
    pts = mesh.nodes[mesh.boundary_nodes]
    return g.evaluate(pts)


def check_commuting(g, coefficient, mesh, tol=1e-12):
    """Max residual of g(x) A_block(x) - A_block(x) g(x) at boundary nodes."""
    pts = mesh.nodes[mesh.boundary_nodes]
    gv = g.evaluate(pts)  # (P, m, m)
    tensors = coefficient.evaluate(pts)  # (P, 2, 2, m, m)
    left = np.einsum("pab,pijbc->pijac", gv, tensors)
    right = np.einsum("pijab,pbc->pijac", tensors, gv)
    scale = np.abs(tensors).max() * max(np.abs(gv).max(), 1.0) + 1e-300
    return float(np.max(np.abs(left - right)) / scale)


def multiply_trace(g, trace):
    """Nodal multiplication of a boundary trace by a multiplier field."""
    gv = _multiplier_boundary_values(g, trace.mesh)
    if g.mode == "scalar":
        return BoundaryTrace(trace.mesh, gv[:, None] * trace.values)
    return BoundaryTrace(trace.mesh, np.einsum("pab,pb->pa", gv, trace.values))


def apply_commutator(dtn_op, g, trace):
    """[Lambda, g] f = Lambda(g f) - g Lambda(f) with nodal multiplication."""
    if g.mode == "matrix":
        resid = check_commuting(g, dtn_op.coefficient, dtn_op.mesh)
        if resid > 1e-12:
            raise ValueError(
                f"matrix multiplier does not commute with the coefficient blocks "
                f"(residual {resid:.2e})"
            )
    lam_gf = dtn_op.apply(multiply_trace(g, trace).values)
    g_lam_f = multiply_trace(g, BoundaryTrace(trace.mesh, dtn_op.apply(trace.values)))
    return BoundaryTrace(trace.mesh, lam_gf - g_lam_f.values)


def commutator_matrix(dtn_op, g):
    """Dense matrix of [Lambda, g] on boundary dofs."""
    gv = _multiplier_boundary_values(g, dtn_op.mesh)
    m = dtn_op.m
    n = dtn_op.n_boundary * m
    if g.mode == "scalar":
        gd = np.repeat(gv, m)
        return dtn_op.matrix * gd[None, :] - gd[:, None] * dtn_op.matrix
    gblock = np.zeros((n, n))
    for b in range(dtn_op.n_boundary):
        gblock[b * m : (b + 1) * m, b * m : (b + 1) * m] = gv[b]
    return dtn_op.matrix @ gblock - gblock @ dtn_op.matrix


def boundary_norm(trace, kind):
    """Boundary norms of a piecewise-linear-in-arclength trace.

    l2:   lumped-mass L2 norm; h1: l2 plus the L2 norm of the edgewise
    arclength difference quotient; c01: sup norm plus the largest quotient;
    linf: sup norm.  Component magnitudes are Euclidean.
    """
    mesh = trace.mesh
    vals = trace.values
    mag2 = np.sum(vals * vals, axis=1)
    lens = mesh.boundary_edge_lengths
    diffs = np.roll(vals, -1, axis=0) - vals
    quot2 = np.sum(diffs * diffs, axis=1) / lens**2
    if kind == "l2":
        return float(np.sqrt(np.sum(mesh.boundary_masses * mag2)))
    if kind == "h1":
        semi2 = float(np.sum(quot2 * lens))
        return float(np.sqrt(np.sum(mesh.boundary_masses * mag2) + semi2))
    if kind == "c01":
        return float(np.sqrt(mag2.max()) + np.sqrt(quot2.max()))
    if kind == "linf":
        return float(np.sqrt(mag2.max()))
    raise ValueError("kind must be one of l2, h1, c01, linf")


def trilinear_residual(sys, dtn_op, f, g, hb, v):
    """Both sides of the commutator/extension identity and their mismatch.

    lhs = <Lambda(g f) - g Lambda(f), hb>_M with the adjoint-system solution H
    extending hb; rhs is the pair of interior integrals of grad v against u
    and H weighted by the coefficient tensor (centroid quadrature).  ``v``
    must be a scalar field whose boundary restriction equals g nodally.
    """
    if g.mode != "scalar":
        raise ValueError("the trilinear identity is formulated for scalar multipliers")
    mesh = sys.mesh
    gb = _multiplier_boundary_values(g, mesh)
    vb = v.values[mesh.boundary_nodes, 0]
    scale_g = np.abs(gb).max() + 1e-300
    if np.abs(vb - gb).max() > 1e-12 * scale_g:
        raise ValueError("v does not extend g: boundary restriction mismatch")

    u = fem.solve_dirichlet(sys, f)
    h_field = fem.solve_dirichlet(fem.adjoint_system(sys), hb)

    comm = apply_commutator(dtn_op, g, f)
    mass = mesh.boundary_masses
    lhs = float(np.sum(mass[:, None] * comm.values * hb.values))

    grad_v = fem.cell_gradients(mesh, v.values[:, 0])  # (T, 2)
    grad_u = fem.field_gradient(u)  # (T, 2, m)
    grad_h = fem.field_gradient(h_field)
    u_bar = fem.cell_means(mesh, u.values)  # (T, m)
    h_bar = fem.cell_means(mesh, h_field.values)
    tensors = sys.coefficient.evaluate(mesh.centroids)

    term1 = float(
        np.einsum("t,ti,ta,tjiba,tjb->", mesh.areas, grad_v, u_bar, tensors, grad_h)
    )
    term2 = float(
        np.einsum("t,ti,tijab,tjb,ta->", mesh.areas, grad_v, tensors, grad_u, h_bar)
    )
    rhs = term1 - term2
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}
