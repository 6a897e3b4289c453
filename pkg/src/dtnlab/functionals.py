"""Harmonic-analysis functionals on a mesh: square-function integrals,
nontangential maximal functions, Carleson norms, the Carleson embedding
check, and both sides of the bilinear gradient estimate.

Distance to the boundary always means the exact polygon distance, measures
live on triangles (density at the centroid times area), and suprema over
boundary balls run over boundary nodes and dyadic radii.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import fem
from .geometry import cone_memberships


@dataclass
class CellMeasure:
    """Nonnegative weight per triangle: density at the centroid times area."""

    mesh: object
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.mesh.triangles),):
            raise ValueError("one weight per triangle required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        self.weights = w

    @property
    def total_mass(self):
        return float(self.weights.sum())


class VectorField:
    """d x m field with both nodal and cellwise representatives.

    Cell values are vertex averages of nodal ones; nodal values of a cellwise
    field are area-weighted averages over adjacent triangles.
    """

    def __init__(self, mesh, nodal=None, cellwise=None):
        if (nodal is None) == (cellwise is None):
            raise ValueError("provide exactly one of nodal or cellwise values")
        self.mesh = mesh
        if nodal is not None:
            nodal = np.asarray(nodal, dtype=float)
            if nodal.ndim == 2:
                nodal = nodal[:, :, None]
            self.nodal = nodal
            self.cellwise = fem.cell_means(mesh, nodal)
        else:
            cellwise = np.asarray(cellwise, dtype=float)
            if cellwise.ndim == 2:
                cellwise = cellwise[:, :, None]
            self.cellwise = cellwise
            flat = cellwise.reshape(len(mesh.triangles), -1)
            acc = np.zeros((len(mesh.nodes), flat.shape[1]))
            wsum = np.zeros(len(mesh.nodes))
            np.add.at(
                acc, mesh.triangles.ravel(), np.repeat(flat * mesh.areas[:, None], 3, axis=0)
            )
            np.add.at(wsum, mesh.triangles.ravel(), np.repeat(mesh.areas, 3))
            self.nodal = (acc / wsum[:, None]).reshape(
                (len(mesh.nodes),) + cellwise.shape[1:]
            )

    @property
    def m(self):
        return self.nodal.shape[2]

    def nodal_magnitude(self):
        return np.linalg.norm(self.nodal.reshape(len(self.mesh.nodes), -1), axis=1)


def square_function_integral(u):
    """sum_T |grad u|^2 dist(x_T, boundary) area(T)."""
    grad = fem.field_gradient(u)
    dens = np.einsum("tim,tim->t", grad, grad)
    return float(np.sum(dens * u.mesh.centroid_boundary_distance * u.mesh.areas))


def _cone_data(mesh, cone):
    cache = getattr(mesh, "_cone_cache", None)
    if cache is None:
        cache = {}
        mesh._cone_cache = cache
    key = round(cone.alpha0, 12)
    if key not in cache:
        q_pos, members, counts = cone_memberships(mesh, cone)
        # nearest interior node per boundary node, for empty-cone fallback
        qs = mesh.nodes[mesh.boundary_nodes]
        interior = mesh.interior_nodes
        if len(interior):
            d = np.linalg.norm(qs[:, None, :] - mesh.nodes[interior][None, :, :], axis=2)
            nearest = interior[np.argmin(d, axis=1)]
        else:
            nearest = np.zeros(len(qs), dtype=np.int64)
        cache[key] = (q_pos, members, counts, nearest)
    return cache[key]


def nt_max(w, cone):
    """Nontangential maximal function of |w| at every boundary node.

    ``w`` may be a DiscreteField or a VectorField; returns (values, empty_mask)
    where boundary nodes with an empty cone get |w| at the nearest interior
    node and are flagged in ``empty_mask``.
    """
    if isinstance(w, fem.DiscreteField):
        mesh, mag = w.mesh, w.component_magnitude()
    elif isinstance(w, VectorField):
        mesh, mag = w.mesh, w.nodal_magnitude()
    else:
        raise TypeError("w must be a DiscreteField or VectorField")
    q_pos, members, counts, nearest = _cone_data(mesh, cone)
    out = np.zeros(len(mesh.boundary_nodes))
    np.maximum.at(out, q_pos, mag[members])
    empty = counts == 0
    if np.any(empty):
        warnings.warn(
            f"{int(empty.sum())} boundary cones are empty at aperture "
            f"{cone.alpha0:g}; using the nearest interior node",
            stacklevel=2,
        )
        out[empty] = mag[nearest[empty]]
    return out, empty


def dyadic_radii(h, diam):
    radii = []
    r = h
    while r < diam:
        radii.append(r)
        r *= 2.0
    radii.append(diam)
    return np.array(radii)


def carleson_sup(centers, weights, boundary_points, radii):
    """sup over boundary points and radii of (mass within radius) / radius."""
    centers = np.asarray(centers, dtype=float)
    weights = np.asarray(weights, dtype=float)
    boundary_points = np.asarray(boundary_points, dtype=float)
    radii = np.asarray(radii, dtype=float)
    best = 0.0
    chunk = max(1, int(4e6 // max(len(centers), 1)))
    for start in range(0, len(boundary_points), chunk):
        q = boundary_points[start : start + chunk]
        d = np.linalg.norm(q[:, None, :] - centers[None, :, :], axis=2)
        for r in radii:
            mass = (d < r) @ weights
            best = max(best, float(mass.max()) / r)
    return best


def carleson_norm(nu):
    """Carleson norm of a cell measure: sup_{Q, r} nu(B(Q, r))/r over
    boundary nodes and dyadic radii from h up to the domain diameter."""
    mesh = nu.mesh
    radii = dyadic_radii(mesh.h, mesh.domain.diameter)
    return carleson_sup(
        mesh.centroids, nu.weights, mesh.nodes[mesh.boundary_nodes], radii
    )


def carleson_embedding_check(w, nu, cone):
    """Both sides of the Carleson embedding inequality for |w| against nu.

    lhs = integral of |w| d nu; rhs = carleson norm times the boundary L1 norm
    of the nontangential maximal function.  C_emp = lhs/rhs (zero when both
    vanish).
    """
    mesh = nu.mesh
    if isinstance(w, fem.DiscreteField):
        cellw = np.linalg.norm(fem.cell_means(mesh, w.values), axis=1)
    elif isinstance(w, VectorField):
        cellw = np.linalg.norm(w.cellwise.reshape(len(mesh.triangles), -1), axis=1)
    else:
        raise TypeError("w must be a DiscreteField or VectorField")
    lhs = float(np.sum(cellw * nu.weights))
    star, _ = nt_max(w, cone)
    norm = carleson_norm(nu)
    rhs = norm * float(np.sum(mesh.boundary_masses * star))
    if rhs == 0.0:
        if lhs > 0.0:
            warnings.warn("positive mass but zero right-hand side: cone coverage defect")
            c_emp = np.inf
        else:
            c_emp = 0.0
    else:
        c_emp = lhs / rhs
    return {"lhs": lhs, "rhs": rhs, "C_emp": c_emp, "carleson_norm": norm}


def _trace_l2(u):
    bvals = u.boundary_values()
    mag2 = np.sum(bvals * bvals, axis=1)
    return float(np.sqrt(np.sum(u.mesh.boundary_masses * mag2)))


def bilinear_sides(u, v, cone, variant, sys=None):
    """Left and right sides of the bilinear gradient estimate.

    lhs = |sum_T grad u . v area|.  The v-bracket is the weighted gradient
    integral of the nodal representative plus the boundary L2 norm squared of
    the maximal function of v.  ``variant`` selects the left factor of the
    right side: 'square_weight' uses the square-function integral of u,
    'boundary_l2' uses the boundary L2 norm of u.

    The estimate is only meaningful when u solves the homogeneous system;
    pass ``sys`` to have the interior residual checked (warning on failure).
    """
    if variant not in ("square_weight", "boundary_l2"):
        raise ValueError("variant must be 'square_weight' or 'boundary_l2'")
    mesh = u.mesh
    if not isinstance(v, VectorField):
        v = VectorField(mesh, nodal=v)
    if sys is not None:
        resid = (sys.matrix @ u.values.ravel())[sys.interior_dofs]
        scale = np.abs(sys.matrix) @ np.abs(u.values.ravel())
        rel = np.linalg.norm(resid) / (np.linalg.norm(scale) + 1e-300)
        if rel > 1e-8:
            warnings.warn(
                f"u does not solve the homogeneous system (relative interior "
                f"residual {rel:.2e}); the bilinear estimate makes no claim"
            )

    grad_u = fem.field_gradient(u)  # (T, 2, m)
    lhs = abs(float(np.einsum("t,tim,tim->", mesh.areas, grad_u, v.cellwise)))

    grad_v = fem.cell_gradients(mesh, v.nodal)  # (T, 2, 2, m)
    dens_v = np.einsum("tkim,tkim->t", grad_v, grad_v)
    delta = mesh.centroid_boundary_distance
    v_grad_term = float(np.sum(dens_v * delta * mesh.areas))
    v_star, _ = nt_max(v, cone)
    v_star_term = float(np.sum(mesh.boundary_masses * v_star**2))
    bracket = np.sqrt(v_grad_term + v_star_term)

    if variant == "square_weight":
        left = np.sqrt(square_function_integral(u))
    else:
        left = _trace_l2(u)
    return {"lhs": lhs, "rhs": left * bracket}
