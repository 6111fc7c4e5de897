"""Adaptive isogeometric Galerkin solver for the Poisson model problem.

The solution is sought as u_h = sum c_i (b_i o G^-1) with b_i the spline
basis over the parameter square and G the spline geometry map.  One
adaptive round assembles and solves the Galerkin system, evaluates the
per-cell residual indicator

    eta^2 = h^2 ||laplace(u_h) + f||^2_(cell) + h ||g_N - du_h/dn||^2_(Neumann edges)

with h the physical cell diameter, marks the current-level cells above a
threshold, labels them from the directional curvatures of the discrete
solution, and refines with the anisotropic strategy.  The geometry is
carried to the refined space exactly, so the physical domain never
changes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss

from .fitting import _directional_curvatures, _sample_grid
from .refine import RefinementRequest, refine
from .reporting import AdaptiveReport, LevelRecord
from .space import SplineField, advance_level

__all__ = [
    "SolveConfig", "DiscreteSolution", "ErrorIndicator", "assemble",
    "impose_boundary_conditions", "solve_linear", "error_indicators",
    "label_by_solution", "exact_error_norms", "adaptive_solve",
]

_EDGE_GEOM = {
    # edge name -> (fixed coordinate accessor, outward parameter normal)
    "s0": ((0, 0.0), (-1.0, 0.0)),
    "s1": ((0, 1.0), (1.0, 0.0)),
    "t0": ((1, 0.0), (0.0, -1.0)),
    "t1": ((1, 1.0), (0.0, 1.0)),
}


@dataclass
class SolveConfig:
    threshold: float = 1e-4          # mark when eta exceeds this
    delta0: float = 2.0              # label 'V' above this curvature ratio
    delta1: float = 0.5              # label 'H' below this
    samples: int = 9
    quadrature: int = 5
    max_levels: int = 8
    lin_tol: float = 1e-10
    direct_limit: int = 50_000
    dorfler: float = None            # optional bulk-marking fraction

    def __post_init__(self):
        if not (self.delta0 > 1.0 > self.delta1 > 0.0):
            raise ValueError("need delta0 > 1 > delta1 > 0")
        if self.quadrature < 4:
            raise ValueError("bicubic integrands need quadrature order >= 4")


@dataclass
class DiscreteSolution:
    field: SplineField              # scalar coefficients over the parameter square
    geometry: object
    problem: object

    @property
    def space(self):
        return self.field.space


@dataclass
class ErrorIndicator:
    eta: dict                        # cell id -> eta >= 0
    diameters: dict                  # cell id -> physical diameter

    @property
    def total(self):
        return float(np.sqrt(sum(e * e for e in self.eta.values())))


def _gauss01(q):
    x, w = leggauss(q)
    return (x + 1.0) / 2.0, w / 2.0


def _cell_quadrature(space, geometry, cid, q):
    """Gauss nodes on one cell: parameters, basis data, geometry data."""
    c = space.mesh.cell(cid)
    x, w = _gauss01(q)
    uu, vv = np.meshgrid(x, x, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    ww = np.outer(w, w).ravel() * float(c.width) * float(c.height)
    s = float(c.s0) + float(c.width) * uu
    t = float(c.t0) + float(c.height) * vv
    return s, t, ww


def _boundary_edges_of_cell(mesh, cid):
    c = mesh.cell(cid)
    s0, s1, t0, t1 = mesh.domain
    out = []
    if c.s0 == s0:
        out.append(("s0", float(c.t0), float(c.t1)))
    if c.s1 == s1:
        out.append(("s1", float(c.t0), float(c.t1)))
    if c.t0 == t0:
        out.append(("t0", float(c.s0), float(c.s1)))
    if c.t1 == t1:
        out.append(("t1", float(c.s0), float(c.s1)))
    return out


def _segment_overlap(edge, lo, hi, segments):
    """Portion of [lo, hi] on `edge` covered by the segment list."""
    spans = []
    for (e, a, b) in segments:
        if e == edge:
            aa, bb = max(lo, a), min(hi, b)
            if bb > aa + 1e-14:
                spans.append((aa, bb))
    return spans


def _edge_points(edge, lo, hi, q):
    x, w = _gauss01(q)
    par = lo + (hi - lo) * x
    if edge in ("s0", "s1"):
        s = np.full(q, _EDGE_GEOM[edge][0][1])
        t = par
    else:
        s = par
        t = np.full(q, _EDGE_GEOM[edge][0][1])
    return s, t, w * (hi - lo)


def assemble(space, geometry, problem, q=5):
    """Stiffness matrix and load vector of the Galerkin system.

    A_ij = integral grad(psi_i) . grad(psi_j) dx, F_i = integral f psi_i dx
    plus the Neumann boundary term, via q x q Gauss points per active cell
    (q points per Neumann cell edge), pulled back with the geometry map.
    """
    mesh = space.mesh
    n = space.dim
    rows, cols, vals = [], [], []
    F = np.zeros(n)
    for cid in mesh.active_cells():
        s, t, ww = _cell_quadrature(space, geometry, cid, q)
        c = mesh.cell(cid)
        u = (s - float(c.s0)) / float(c.width)
        v = (t - float(c.t0)) / float(c.height)
        fids, bas = space.basis_on_cell(cid, u, v, ((0, 0), (1, 0), (0, 1)))
        if not fids:
            continue
        xy, J, _ = geometry.derivatives_on_cell(cid, s, t)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(np.abs(det) < 1e-14):
            raise RuntimeError(
                f"singular geometry Jacobian at a quadrature point of cell {cid}")
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1] / det
        Jinv[:, 0, 1] = -J[:, 0, 1] / det
        Jinv[:, 1, 0] = -J[:, 1, 0] / det
        Jinv[:, 1, 1] = J[:, 0, 0] / det
        # physical gradient: grad_x b = Jinv^T grad_param b
        gp = np.stack([bas[1], bas[2]], axis=-1)              # (nf, nq, 2)
        gx = np.einsum("fqp,qpx->fqx", gp, Jinv)
        wdet = ww * np.abs(det)
        loc = np.einsum("fqx,gqx,q->fg", gx, gx, wdet)
        ids = np.asarray(fids)
        rows.append(np.repeat(ids, len(ids)))
        cols.append(np.tile(ids, len(ids)))
        vals.append(loc.ravel())
        fv = problem.f(xy[:, 0], xy[:, 1])
        F[ids] += np.einsum("fq,q->f", bas[0], fv * wdet)

    if problem.g_neumann is not None and problem.neumann:
        for cid in mesh.active_cells():
            for (edge, lo, hi) in _boundary_edges_of_cell(mesh, cid):
                for (a, b) in _segment_overlap(edge, lo, hi, problem.neumann):
                    s, t, w = _edge_points(edge, a, b, q)
                    c = mesh.cell(cid)
                    u = (s - float(c.s0)) / float(c.width)
                    v = (t - float(c.t0)) / float(c.height)
                    fids, bas = space.basis_on_cell(cid, u, v, ((0, 0),))
                    xy, J, _ = geometry.derivatives_on_cell(cid, s, t)
                    tangent = J[:, :, 1] if edge in ("s0", "s1") else J[:, :, 0]
                    arc = np.linalg.norm(tangent, axis=1)
                    nx, ny = _physical_normal(J, edge)
                    g = problem.g_neumann(xy[:, 0], xy[:, 1], nx, ny)
                    F[np.asarray(fids)] += np.einsum("fq,q->f", bas[0], g * arc * w)

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    A.sum_duplicates()
    return A, F


def _physical_normal(J, edge):
    """Outward unit normal along a parameter-boundary edge."""
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    npar = np.array(_EDGE_GEOM[edge][1])
    # n_phys ~ J^{-T} n_par (scaled); build J^{-T} columns explicitly
    JinvT = np.empty_like(J)
    JinvT[:, 0, 0] = J[:, 1, 1]
    JinvT[:, 0, 1] = -J[:, 1, 0]
    JinvT[:, 1, 0] = -J[:, 0, 1]
    JinvT[:, 1, 1] = J[:, 0, 0]
    nvec = np.einsum("qxy,y->qx", JinvT, npar) * np.sign(det)[:, None]
    norm = np.linalg.norm(nvec, axis=1)
    nvec /= norm[:, None]
    return nvec[:, 0], nvec[:, 1]


class ConstrainedSystem:
    """Reduced SPD system plus the data to re-embed the solution."""

    def __init__(self, matrix, rhs, free, fixed_values, n):
        self.matrix = matrix
        self.rhs = rhs
        self.free = free
        self.fixed_values = fixed_values
        self.n = n

    def embed(self, reduced):
        full = np.array(self.fixed_values)
        full[self.free] = reduced
        return full


def _constrained_functions(space, problem, samples_per_edge=8):
    """Indices of functions not vanishing on the Dirichlet part, together
    with dense sample points for the boundary fit."""
    mesh = space.mesh
    ticks = np.linspace(0.0, 1.0, samples_per_edge)
    pinned = set()
    pts = []
    for cid in mesh.active_cells():
        for (edge, lo, hi) in _boundary_edges_of_cell(mesh, cid):
            for (a, b) in _segment_overlap(edge, lo, hi, problem.dirichlet):
                par = a + (b - a) * ticks
                if edge in ("s0", "s1"):
                    s = np.full_like(par, _EDGE_GEOM[edge][0][1])
                    t = par
                else:
                    s = par
                    t = np.full_like(par, _EDGE_GEOM[edge][0][1])
                c = mesh.cell(cid)
                u = (s - float(c.s0)) / float(c.width)
                v = (t - float(c.t0)) / float(c.height)
                fids, bas = space.basis_on_cell(cid, u, v, ((0, 0),))
                live = np.max(np.abs(bas[0]), axis=1) > 1e-10
                pinned.update(np.asarray(fids)[live].tolist())
                pts.append((cid, s, t))
    return sorted(pinned), pts


def impose_boundary_conditions(system, space, geometry, problem):
    """Constrain the assembled system by the problem's Dirichlet data.

    Homogeneous data pins the non-vanishing boundary coefficients to
    zero; inhomogeneous data sets them from a least-squares fit of g_D
    along the Dirichlet part.  Rows/columns are eliminated symmetrically.
    """
    A, F = system
    n = space.dim
    pinned, pts = _constrained_functions(space, problem)
    fixed = np.zeros(n)
    if problem.g_dirichlet is not None and pinned:
        cols = {fid: k for k, fid in enumerate(pinned)}
        blocks = []
        targets = []
        for (cid, s, t) in pts:
            c = space.mesh.cell(cid)
            u = (s - float(c.s0)) / float(c.width)
            v = (t - float(c.t0)) / float(c.height)
            fids, bas = space.basis_on_cell(cid, u, v, ((0, 0),))
            xy = geometry.field.eval_on_cell(cid, s, t)[0]
            row = np.zeros((len(s), len(pinned)))
            for k, fid in enumerate(fids):
                if fid in cols:
                    row[:, cols[fid]] = bas[0][k]
            blocks.append(row)
            targets.append(problem.g_dirichlet(xy[:, 0], xy[:, 1]))
        Amat = np.vstack(blocks)
        rhs = np.concatenate(targets)
        sol, *_ = np.linalg.lstsq(Amat, rhs, rcond=None)
        fixed[pinned] = sol
    free = np.array(sorted(set(range(n)) - set(pinned)), dtype=int)
    if len(free) == 0:
        raise ValueError("all degrees of freedom are constrained")
    Ff = F[free] - A[free][:, pinned] @ fixed[pinned] if pinned else F[free]
    Aff = A[free][:, free].tocsr()
    return ConstrainedSystem(Aff, Ff, free, fixed, n)


def solve_linear(system, tol=1e-10, direct_limit=50_000):
    """Solve the constrained SPD system; returns full coefficient vector.

    Direct sparse factorization up to `direct_limit` unknowns, conjugate
    gradients with a diagonal preconditioner beyond.  The relative
    residual must meet `tol`.
    """
    A, b = system.matrix, system.rhs
    if A.shape[0] != A.shape[1]:
        raise ValueError("system matrix must be square")
    if A.shape[0] <= direct_limit:
        x = spla.spsolve(A.tocsc(), b)
    else:
        dia = A.diagonal()
        M = sp.diags(np.where(dia > 0, 1.0 / dia, 1.0))
        x, info = spla.cg(A, b, rtol=tol * 1e-2, maxiter=20 * A.shape[0], M=M)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
    bn = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if bn > 0 and res / bn > tol:
        raise RuntimeError(f"linear solve residual {res / bn:.2e} exceeds {tol:.2e}")
    if not np.all(np.isfinite(x)):
        raise RuntimeError("linear solve produced non-finite values")
    return system.embed(x)


def _physical_second_derivatives(field, geometry, cid, s, t):
    """(xy, u values, physical gradient, physical Hessian) at cell points."""
    d = field.eval_on_cell(cid, s, t, ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)))
    xy, J, H = geometry.derivatives_on_cell(cid, s, t)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / det
    Jinv[:, 0, 1] = -J[:, 0, 1] / det
    Jinv[:, 1, 0] = -J[:, 1, 0] / det
    Jinv[:, 1, 1] = J[:, 0, 0] / det
    grad_par = np.stack([d[1], d[2]], axis=-1)
    grad_x = np.einsum("qp,qpx->qx", grad_par, Jinv)
    Hpar = np.empty((len(s), 2, 2))
    Hpar[:, 0, 0] = d[3]
    Hpar[:, 0, 1] = Hpar[:, 1, 0] = d[4]
    Hpar[:, 1, 1] = d[5]
    # subtract the geometry curvature term, then pull back both indices
    rhs = Hpar - np.einsum("qx,qxab->qab", grad_x, H)
    Hx = np.einsum("qpa,qab,qbr->qpr", np.transpose(Jinv, (0, 2, 1)), rhs, Jinv)
    return xy, d[0], grad_x, Hx


def error_indicators(u_h, problem=None, q=5):
    """Residual indicator per active cell of the discrete solution."""
    problem = problem or u_h.problem
    space = u_h.space
    geometry = u_h.geometry
    mesh = space.mesh
    eta = {}
    diam = {}
    for cid in mesh.active_cells():
        s, t, ww = _cell_quadrature(space, geometry, cid, q)
        xy, _, _, Hx = _physical_second_derivatives(u_h.field, geometry, cid, s, t)
        J = geometry.derivatives_on_cell(cid, s, t)[1]
        det = np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
        resid = Hx[:, 0, 0] + Hx[:, 1, 1] + problem.f(xy[:, 0], xy[:, 1])
        interior = float(np.sum(resid ** 2 * ww * det))
        h = geometry.physical_diameter(cid)
        boundary = 0.0
        if problem.g_neumann is not None and problem.neumann:
            for (edge, lo, hi) in _boundary_edges_of_cell(mesh, cid):
                for (a, b) in _segment_overlap(edge, lo, hi, problem.neumann):
                    es, et, w = _edge_points(edge, a, b, q)
                    exy, _, egrad, _ = _physical_second_derivatives(
                        u_h.field, geometry, cid, es, et)
                    eJ = geometry.derivatives_on_cell(cid, es, et)[1]
                    tangent = eJ[:, :, 1] if edge in ("s0", "s1") else eJ[:, :, 0]
                    arc = np.linalg.norm(tangent, axis=1)
                    nx, ny = _physical_normal(eJ, edge)
                    g = problem.g_neumann(exy[:, 0], exy[:, 1], nx, ny)
                    mismatch = g - (egrad[:, 0] * nx + egrad[:, 1] * ny)
                    boundary += float(np.sum(mismatch ** 2 * arc * w))
        eta[cid] = float(np.sqrt(h * h * interior + h * boundary))
        diam[cid] = h
    return ErrorIndicator(eta, diam)


def label_by_solution(u_h, cells, delta0=2.0, delta1=0.5, samples=9):
    """Anisotropy labels of marked cells from the parametric graph
    curvatures of the discrete solution."""
    u, v = _sample_grid(samples)
    labels = {}
    for cid in cells:
        c = u_h.space.mesh.cell(cid)
        s = float(c.s0) + float(c.width) * u
        t = float(c.t0) + float(c.height) * v
        (num_s, den_s, ok_s), (num_t, den_t, ok_t) = \
            _directional_curvatures(u_h.field, cid, s, t)
        k_s = float(np.mean(num_s[ok_s] / den_s[ok_s])) if ok_s.any() else 0.0
        k_t = float(np.mean(num_t[ok_t] / den_t[ok_t])) if ok_t.any() else 0.0
        tiny = 1e-12 * max(k_s, k_t, 1.0)
        if k_t <= tiny:
            labels[cid] = "C" if k_s <= tiny else "V"
        elif k_s <= tiny:
            labels[cid] = "H"
        else:
            ratio = k_s / k_t
            labels[cid] = "V" if ratio > delta0 else ("H" if ratio < delta1 else "C")
    return labels


def exact_error_norms(u_h, u_exact=None, grad_exact=None, q=5):
    """(L2 error, H1 seminorm error) against a known solution."""
    problem = u_h.problem
    u_exact = u_exact or problem.u_exact
    grad_exact = grad_exact or problem.grad_exact
    space = u_h.space
    geometry = u_h.geometry
    l2 = h1 = 0.0
    for cid in space.mesh.active_cells():
        s, t, ww = _cell_quadrature(space, geometry, cid, q)
        xy, vals, grad, _ = _physical_second_derivatives(u_h.field, geometry, cid, s, t)
        J = geometry.derivatives_on_cell(cid, s, t)[1]
        det = np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
        du = vals - u_exact(xy[:, 0], xy[:, 1])
        l2 += float(np.sum(du ** 2 * ww * det))
        if grad_exact is not None:
            dg = grad - grad_exact(xy[:, 0], xy[:, 1])
            h1 += float(np.sum(np.sum(dg ** 2, axis=1) * ww * det))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def _solve_round(space, geometry, problem, config):
    A, F = assemble(space, geometry, problem, config.quadrature)
    system = impose_boundary_conditions((A, F), space, geometry, problem)
    coeffs = solve_linear(system, config.lin_tol, config.direct_limit)
    return DiscreteSolution(SplineField(space, coeffs), geometry, problem)


def adaptive_solve(problem, geometry, config=None, strategy="modified"):
    """Solve -> estimate & mark -> refine until nothing is marked.

    Marking uses the absolute threshold (or the optional bulk fraction)
    on the current-level cells only.  Returns the last solution and the
    per-level report.
    """
    config = config or SolveConfig()
    if strategy not in ("modified", "cross_only"):
        raise ValueError(f"unknown strategy {strategy!r}")
    space = geometry.space
    report = AdaptiveReport(strategy=strategy)
    solution = None
    pending_new = space.dim
    pending_mod = 0
    for level in range(config.max_levels + 1):
        t0 = time.perf_counter()
        solution = _solve_round(space, geometry, problem, config)
        solve_time = time.perf_counter() - t0
        t0 = time.perf_counter()
        ind = error_indicators(solution, problem, config.quadrature)
        est_time = time.perf_counter() - t0
        rec = LevelRecord(level=level, dof=space.dim,
                          new_functions=pending_new, modified_functions=pending_mod,
                          eta_total=ind.total,
                          seconds={"solve": solve_time, "estimate": est_time})
        if problem.u_exact is not None:
            rec.l2_error, rec.h1_error = exact_error_norms(solution, q=config.quadrature)
        current = space.mesh.cells_of_level(level)
        if config.dorfler is not None:
            order = sorted(current, key=lambda c: -ind.eta[c])
            total2 = sum(ind.eta[c] ** 2 for c in current)
            acc, marked = 0.0, []
            for cid in order:
                if acc >= config.dorfler * total2 or ind.eta[cid] <= 0:
                    break
                marked.append(cid)
                acc += ind.eta[cid] ** 2
        else:
            marked = [cid for cid in current if ind.eta[cid] > config.threshold]
        rec.marked = len(marked)
        report.add(rec)
        if not marked or level == config.max_levels:
            break
        labels = label_by_solution(solution, marked, config.delta0, config.delta1,
                                   config.samples)
        if strategy == "cross_only":
            labels = {cid: "C" for cid in labels}
        t0 = time.perf_counter()
        old_space = space
        mesh2, rrep = refine(space.mesh, RefinementRequest(labels))
        space = advance_level(space, rrep)
        geometry = geometry.advance(space)
        rec.seconds["refine"] = time.perf_counter() - t0
        hist = {}
        for lab in rrep.final_labels.values():
            hist[lab] = hist.get(lab, 0) + 1
        rec.labels = hist
        pending_new = 4 * len(rrep.new_basis_vertices)
        pending_mod = sum(1 for i, f in enumerate(space.functions[:old_space.dim])
                          if f is not old_space.functions[i])
    report.converged = report.final.marked == 0
    return solution, report
