"""The three extension constructions the estimates hinge on: the mollified
(smoothed) extension of Lipschitz boundary data built from overlapping
boundary charts, plain harmonic extension, and the entrywise harmonic
extension of a coefficient tensor.

The mollified extension follows the chart recipe: the boundary is covered by
per-vertex and per-edge windows carrying a partition of unity in arclength;
inside each chart the data is pushed to a graph frame, extended into the
half-plane by convolution with a rescaled bump at height s, pulled back
through the graph-flattening map, and glued with smooth spatial cutoffs.
"""

from __future__ import annotations

import numpy as np

from . import fem, functionals
from .errors import ChartError
from .geometry import (
    BUMP_ABS_MOMENT,
    GraphMap,
    bump,
)

_GL8 = np.polynomial.legendre.leggauss(8)


def _half_panel_rule():
    # 16-point composite rule (two 8-point panels split at the origin)
    x = np.concatenate([0.5 * (_GL8[0] - 1.0), 0.5 * (_GL8[0] + 1.0)])
    w = np.concatenate([0.5 * _GL8[1], 0.5 * _GL8[1]])
    return x, w


_FQ_X, _FQ_W = _half_panel_rule()


def smoothstep(t):
    """Cubic smoothstep: 0 below 0, 1 above 1, t^2(3-2t) between.

    Complementary by construction: smoothstep(t) + smoothstep(1-t) = 1, so
    adjacent windows sharing a transition zone form an exact partition of
    unity without normalization.
    """
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


class BoundaryChart:
    """One chart: frame, arclength window with its bump, graph map, cutoff.

    The window is a plateau with smoothstep transitions at both ends, stored
    as signed arclength offsets (lo < plateau_lo <= plateau_hi < hi) from the
    chart center.
    """

    def __init__(self, origin, tangent, normal, tau_center, window):
        self.origin = np.asarray(origin, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)
        self.normal = np.asarray(normal, dtype=float)
        self.tau_center = float(tau_center)
        self.window = tuple(float(w) for w in window)
        self.graph = None
        self.rho = None
        self.radius = None
        self._grid_tau = None
        self._core_mask = None

    def local_coords(self, points):
        rel = np.atleast_2d(points) - self.origin
        return rel @ self.tangent, rel @ self.normal

    def window_bump(self, tau, perimeter):
        lo, plo, phi, hi = self.window
        d = (tau - self.tau_center + 0.5 * perimeter) % perimeter - 0.5 * perimeter
        rising = smoothstep((d - lo) / (plo - lo))
        falling = 1.0 - smoothstep((d - phi) / (hi - phi))
        return np.where((d >= lo) & (d <= hi), np.minimum(rising, falling), 0.0)

    def cutoff(self, points):
        r = np.linalg.norm(np.atleast_2d(points) - self.origin, axis=1)
        return 1.0 - smoothstep((r - self.rho) / (self.radius - self.rho))


# window layout per edge of length l, as fractions of l measured from the
# starting vertex: the vertex window owns [0, 0.08], the transition to the
# edge window spans [0.08, 0.35], the edge plateau is [0.35, 0.65], and so on
# symmetrically.  Transitions of adjacent charts coincide exactly, so the
# windows sum to one; wide transitions keep the glued gradient gentle.
_VERTEX_PLATEAU = 0.08
_VERTEX_SUPPORT = 0.35


def _chart_frames(domain):
    """Vertex charts (bisector frames) and edge charts (edge frames)."""
    verts = domain.vertices
    n = len(verts)
    lens = domain.edge_lengths
    starts = domain.vertex_arclengths()
    frames = []
    for i in range(n):
        e_prev = verts[i] - verts[i - 1]
        e_next = verts[(i + 1) % n] - verts[i]
        n_prev = np.array([-e_prev[1], e_prev[0]]) / np.linalg.norm(e_prev)
        n_next = np.array([-e_next[1], e_next[0]]) / np.linalg.norm(e_next)
        normal = n_prev + n_next
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            raise ChartError("degenerate corner: adjacent edges fold back")
        normal /= norm
        tangent = np.array([normal[1], -normal[0]])
        lp, ln = lens[i - 1], lens[i]
        window = (
            -_VERTEX_SUPPORT * lp,
            -_VERTEX_PLATEAU * lp,
            _VERTEX_PLATEAU * ln,
            _VERTEX_SUPPORT * ln,
        )
        frames.append(BoundaryChart(verts[i], tangent, normal, starts[i], window))
    for i in range(n):
        mid = 0.5 * (verts[i] + verts[(i + 1) % n])
        tangent = (verts[(i + 1) % n] - verts[i]) / lens[i]
        normal = np.array([-tangent[1], tangent[0]])
        ell = lens[i]
        window = (
            -(0.5 - _VERTEX_PLATEAU) * ell,
            -(0.5 - _VERTEX_SUPPORT) * ell,
            (0.5 - _VERTEX_SUPPORT) * ell,
            (0.5 - _VERTEX_PLATEAU) * ell,
        )
        frames.append(
            BoundaryChart(mid, tangent, normal, starts[i] + 0.5 * lens[i], window)
        )
    return frames


def _sample_graph(chart, domain, reach_tau, m):
    """Boundary graph samples around the chart, trimmed to the maximal
    monotone-x portion containing the center."""
    L = domain.perimeter
    taus = np.linspace(chart.tau_center - reach_tau, chart.tau_center + reach_tau, m)
    taus = np.union1d(taus, _vertex_taus_in(domain, taus[0], taus[-1]))
    keep = np.concatenate([[True], np.diff(taus) > 1e-12 * max(1.0, reach_tau)])
    taus = taus[keep]
    pts = domain.boundary_point(taus % L)
    xp, tp = chart.local_coords(pts)
    center_idx = int(np.argmin(np.abs(taus - chart.tau_center)))
    dx = np.diff(xp)
    lo = center_idx
    while lo > 0 and dx[lo - 1] > 1e-14:
        lo -= 1
    hi = center_idx
    while hi < len(xp) - 1 and dx[hi] > 1e-14:
        hi += 1
    return xp[lo : hi + 1], tp[lo : hi + 1], taus[lo : hi + 1]


def _fit_chart(chart, domain, delta_floor):
    """Sample the boundary graph around the chart and size the cutoff.

    The graph grid covers the window support plus the mollifier reach; where
    the true boundary stops being a graph (e.g. past a square corner) the
    samples are continued at constant height, which is harmless because the
    extended data vanishes there.
    """
    L = domain.perimeter
    lo, _, _, hi = chart.window
    tau_sup = np.linspace(chart.tau_center + lo, chart.tau_center + hi, 129)
    sup_pts = domain.boundary_point(tau_sup % L)
    chart.rho = 1.02 * float(np.linalg.norm(sup_pts - chart.origin, axis=1).max())
    chart.radius = 1.9 * chart.rho

    reach_tau = 1.3 * (chart.radius + max(-lo, hi))
    # coarse pass to learn the local slope, hence the stretch constant
    xp_c, tp_c, tau_c = _sample_graph(chart, domain, reach_tau, 513)
    if len(xp_c) < 9:
        raise ChartError(
            f"boundary is not a graph near arclength {chart.tau_center:.4g}"
        )
    # keep the cutoff ball away from boundary pieces beyond the graphed core,
    # so every selected mesh node lies above the chart graph
    probe = np.linspace(tau_c[-1], tau_c[0] + L, 1024)[1:-1]
    d_out = float(
        np.linalg.norm(domain.boundary_point(probe % L) - chart.origin, axis=1).min()
    )
    chart.radius = min(chart.radius, 0.95 * d_out)
    if chart.radius <= 1.05 * chart.rho:
        raise ChartError(
            f"boundary pinches too close to the chart at arclength "
            f"{chart.tau_center:.4g} for a usable cutoff"
        )
    lip = float(np.max(np.abs(np.diff(tp_c) / np.diff(xp_c))))
    # lean stretch: keeps the vertical derivative of the flattening above one
    # (verified below) while leaving the smoothing scale close to the height
    c_est = 1.25 + 2.0 * BUMP_ABS_MOMENT * lip
    s_floor = delta_floor / (c_est + BUMP_ABS_MOMENT * lip + 0.5)
    spacing = min(0.9 * s_floor / 8.0, reach_tau / 256.0)
    m = int(np.ceil(2.0 * reach_tau / max(spacing, 1e-7))) + 1
    m = int(np.clip(m, 513, 400001))
    xp_g, tp_g, tau_g = _sample_graph(chart, domain, reach_tau, m)
    spacing = float(np.diff(xp_g).max())

    sup_x, _ = chart.local_coords(sup_pts)
    s_max = (chart.radius - min(0.0, float(tp_g.min()))) / (
        c_est - BUMP_ABS_MOMENT * lip
    )
    need_lo = float(sup_x.min()) - 1.1 * s_max
    need_hi = float(sup_x.max()) + 1.1 * s_max
    if xp_g[0] > float(sup_x.min()) or xp_g[-1] < float(sup_x.max()):
        raise ChartError(
            f"window support at arclength {chart.tau_center:.4g} is not a graph"
        )
    if xp_g[0] > need_lo:
        n_pad = int(np.ceil((xp_g[0] - need_lo) / spacing)) + 1
        pad_x = xp_g[0] - spacing * np.arange(n_pad, 0, -1)
        xp_g = np.concatenate([pad_x, xp_g])
        tp_g = np.concatenate([np.full(n_pad, tp_g[0]), tp_g])
        tau_g = np.concatenate([np.full(n_pad, np.nan), tau_g])
    if xp_g[-1] < need_hi:
        n_pad = int(np.ceil((need_hi - xp_g[-1]) / spacing)) + 1
        pad_x = xp_g[-1] + spacing * np.arange(1, n_pad + 1)
        xp_g = np.concatenate([xp_g, pad_x])
        tp_g = np.concatenate([tp_g, np.full(n_pad, tp_g[-1])])
        tau_g = np.concatenate([tau_g, np.full(n_pad, np.nan)])
    chart.graph = GraphMap(xp_g, tp_g, c=c_est)
    probe_y = np.linspace(xp_g[0] + 0.05, xp_g[-1] - 0.05, 41)
    probe_s = np.geomspace(chart.graph.spacing * 8.0001, chart.radius, 17)
    fs_min = float(
        np.min(chart.graph._convolutions(probe_y[:, None], probe_s[None, :])["F_s"])
    )
    if fs_min < 1.0:
        raise ChartError(
            f"vertical stretch too small at arclength {chart.tau_center:.4g} "
            f"(min dF/ds = {fs_min:.3f})"
        )
    chart._grid_tau = tau_g
    chart._core_mask = ~np.isnan(tau_g)
    # data is faded out by flattened height (c s is the mollified height above
    # the graph, so this is smooth where the graph itself has corners); it has
    # died before the spatial cutoff starts to decay, and it tends to one at
    # the boundary, keeping the trace
    chart.s_damp = 0.85 * chart.rho / chart.graph.c


def _vertex_taus_in(domain, t0, t1):
    """Polygon-vertex arclengths falling in [t0, t1] modulo the perimeter."""
    L = domain.perimeter
    base = domain.vertex_arclengths()
    shifts = np.arange(np.floor(t0 / L), np.ceil(t1 / L) + 1)
    all_t = (base[None, :] + shifts[:, None] * L).ravel()
    return all_t[(all_t >= t0) & (all_t <= t1)]


def build_boundary_charts(domain, delta_floor=1e-3):
    """Charts covering the boundary; ``delta_floor`` is the smallest boundary
    clearance at which the extension will be evaluated (sets grid density)."""
    charts = _chart_frames(domain)
    for ch in charts:
        _fit_chart(ch, domain, delta_floor)
    return charts


def _boundary_data_interp(g, mesh):
    """Periodic arclength interpolant of a scalar boundary trace."""
    domain = mesh.domain
    taus = domain.arclength_of(mesh.nodes[mesh.boundary_nodes])
    order = np.argsort(taus)
    taus_s = taus[order]
    vals_s = g.values[order, 0]
    L = domain.perimeter
    taus_ext = np.concatenate([taus_s - L, taus_s, taus_s + L])
    vals_ext = np.concatenate([vals_s, vals_s, vals_s])

    def interp(t):
        return np.interp(t, taus_ext, vals_ext)

    return interp


def lipschitz_extension(g, mesh, charts=None):
    """Smooth interior extension of Lipschitz boundary data via chart gluing.

    Returns a dict with the extension ``v`` (exact at boundary nodes), the
    largest cellwise gradient magnitude ``grad_sup``, and the Carleson norm
    ``hessian_carleson`` of the second-difference-quotient measure.
    """
    if g.m != 1:
        raise ValueError("the chart extension is defined for scalar boundary data")
    if not np.all(np.isfinite(g.values)):
        raise ValueError("boundary data has non-finite entries")
    domain = mesh.domain
    L = domain.perimeter
    if charts is None:
        delta_floor = float(
            mesh.node_boundary_distance[mesh.interior_nodes].min()
        ) if len(mesh.interior_nodes) else mesh.h
        charts = build_boundary_charts(domain, delta_floor)

    g_of_tau = _boundary_data_interp(g, mesh)
    gbar = float(
        np.sum(mesh.boundary_masses * g.values[:, 0]) / np.sum(mesh.boundary_masses)
    )

    values = np.full(len(mesh.nodes), gbar)
    interior = mesh.interior_nodes
    pts = mesh.nodes[interior]
    for ch in charts:
        phi = ch.cutoff(pts)
        sel = phi > 0.0
        if not np.any(sel):
            continue
        xp, tp = ch.local_coords(pts[sel])
        gap = tp - np.interp(xp, ch.graph.grid, ch.graph.values)
        if np.any(gap <= 0):
            raise ChartError(
                "a mesh node inside a chart cutoff lies below the chart graph; "
                "the cutoff radius is too large for this boundary"
            )
        s = ch.graph.invert_height(xp, tp)
        # windowed, centered boundary data in this chart, on the graph grid
        tau_core = ch._grid_tau[ch._core_mask] % L
        f_samples = np.zeros(len(ch.graph.grid))
        f_samples[ch._core_mask] = ch.window_bump(tau_core, L) * (
            g_of_tau(tau_core) - gbar
        )
        f_at = np.interp(
            xp[:, None] - s[:, None] * _FQ_X[None, :], ch.graph.grid, f_samples
        )
        f_mollified = (f_at * bump(_FQ_X)) @ _FQ_W
        fade = (1.0 - np.minimum(s / ch.s_damp, 1.0) ** 2) ** 2
        values[interior[sel]] += phi[sel] * fade * f_mollified

    values[mesh.boundary_nodes] = g.values[:, 0]
    v = fem.DiscreteField(mesh, values)
    grad = fem.field_gradient(v)
    grad_sup = float(np.sqrt(np.einsum("tim,tim->t", grad, grad)).max())
    nu = discrete_hessian_measure(v)
    return {
        "v": v,
        "grad_sup": grad_sup,
        "hessian_carleson": functionals.carleson_norm(nu),
        "charts": charts,
    }


def discrete_hessian_measure(field):
    """|D^2 v|^2 delta as a cell measure, from gradient jumps across edges.

    P1 fields have no second derivatives; the surrogate at a triangle is the
    rms of |grad jump| / centroid distance over its interior edges.
    """
    mesh = field.mesh
    _, t1, t2 = mesh.interior_edge_pairs()
    grads = fem.field_gradient(field) if isinstance(field, fem.DiscreteField) else None
    if grads is None:
        raise TypeError("expected a DiscreteField")
    jump = (grads[t1] - grads[t2]).reshape(len(t1), -1)
    dist = np.linalg.norm(mesh.centroids[t1] - mesh.centroids[t2], axis=1)
    q2 = np.sum(jump * jump, axis=1) / dist**2
    acc = np.zeros(len(mesh.triangles))
    cnt = np.zeros(len(mesh.triangles))
    np.add.at(acc, t1, q2)
    np.add.at(acc, t2, q2)
    np.add.at(cnt, t1, 1.0)
    np.add.at(cnt, t2, 1.0)
    hess2 = acc / np.maximum(cnt, 1.0)
    weights = hess2 * mesh.centroid_boundary_distance * mesh.areas
    return functionals.CellMeasure(mesh, weights)


def harmonic_extension(g, mesh):
    """Identity-coefficient Dirichlet extension of a boundary trace."""
    vals = fem.harmonic_extend_many(mesh, g.values)
    return fem.DiscreteField(mesh, vals)


def matrix_extension(coefficient, mesh):
    """Entrywise harmonic extension of the boundary values of a tensor field.

    Returns the nodal tensor ``B`` (N, 2, 2, m, m) together with the two
    scale-invariant profiles: sup of |grad B| delta^{1-eta} and sup of
    |A - B| delta^{-eta} over triangle centroids.
    """
    m = coefficient.m
    eta = coefficient.holder_exponent
    bpts = mesh.nodes[mesh.boundary_nodes]
    traces = coefficient.evaluate(bpts).reshape(len(bpts), -1)
    nodal = fem.harmonic_extend_many(mesh, traces)
    b_nodal = nodal.reshape(len(mesh.nodes), 2, 2, m, m)

    delta = mesh.centroid_boundary_distance
    grads = fem.cell_gradients(mesh, nodal)  # (T, 2, K)
    grad_mag = np.sqrt(np.einsum("tik,tik->t", grads, grads))
    grad_profile = float((grad_mag * delta ** (1.0 - eta)).max())

    a_cent = coefficient.evaluate(mesh.centroids).reshape(len(mesh.triangles), -1)
    b_cent = fem.cell_means(mesh, nodal)
    dev = np.linalg.norm(a_cent - b_cent, axis=1)
    dev_profile = float((dev * delta ** (-eta)).max())

    return {
        "B": b_nodal,
        "grad_bound_profile": grad_profile,
        "deviation_profile": dev_profile,
    }


def extension_ellipticity(b_nodal, mesh):
    """Smallest Rayleigh quotient of the extended tensor over nodes and centroids."""
    n, m = b_nodal.shape[0], b_nodal.shape[3]
    cent = b_nodal[mesh.triangles].mean(axis=1)
    allt = np.concatenate([b_nodal, cent]).reshape(-1, 2, 2, m, m)
    q = allt.transpose(0, 1, 3, 2, 4).reshape(len(allt), 2 * m, 2 * m)
    sym = 0.5 * (q + q.transpose(0, 2, 1))
    return float(np.linalg.eigvalsh(sym)[:, 0].min())
