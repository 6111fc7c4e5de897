"""Geometry maps for the isogeometric solver.

A geometry is a spline field with 2D point coefficients mapping the
parameter square onto the physical domain.  It lives in the same spline
space as the solution, so refining the space carries the map over
exactly (nested-space transfer), and the physical domain never moves.

The L-shaped benchmark domain (-1,1)^2 minus the closed first-quadrant
unit square is covered by a single C1 bicubic patch.  The patch bends
around the reentrant corner along the parameter line s = 1/2: the
s-velocity vanishes at the two boundary points (1/2, 0) -> (0, 0) and
(1/2, 1) -> (-1, -1) (doubled control points), which lets a C1 map trace
the boundary's right angles exactly.  The Jacobian is positive
everywhere else; quadrature never hits the two degenerate parameter
corners because Gauss points are interior to cells.
"""

from __future__ import annotations

import json

import numpy as np

from .space import SplineField, SplineSpace, build_initial_space, field_from_vertex_data, transfer_field
from .tmesh import create_tensor_mesh

__all__ = ["Geometry", "linear_geometry", "lshape_geometry"]

GEOMETRY_FORMAT_VERSION = 1


class Geometry:
    """Differentiable parameter-to-physical map with singular-point list."""

    def __init__(self, field, degenerate_params=()):
        if field.arity != 2:
            raise ValueError("geometry needs 2D point coefficients")
        self.field = field
        self.degenerate_params = tuple((float(a), float(b)) for a, b in degenerate_params)

    @property
    def space(self):
        return self.field.space

    def advance(self, new_space):
        """Same map, represented in a once-refined space."""
        return Geometry(transfer_field(self.field, new_space), self.degenerate_params)

    def point(self, s, t):
        return self.field.value(s, t)

    def derivatives_on_cell(self, cid, s, t):
        """Map values, Jacobians and parameter Hessians at points of one cell.

        Returns (xy (n,2), J (n,2,2), H (n,2,2,2)) where J[:, i, j] =
        d x_i / d param_j and H[n, a] is the parameter Hessian of
        coordinate a.
        """
        d = self.field.eval_on_cell(
            cid, s, t, ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)))
        xy = d[0]
        J = np.stack([np.stack([d[1][:, 0], d[2][:, 0]], axis=-1),
                      np.stack([d[1][:, 1], d[2][:, 1]], axis=-1)], axis=1)
        H = np.empty((len(xy), 2, 2, 2))
        for a in (0, 1):
            H[:, a, 0, 0] = d[3][:, a]
            H[:, a, 0, 1] = H[:, a, 1, 0] = d[4][:, a]
            H[:, a, 1, 1] = d[5][:, a]
        return xy, J, H

    def jacobian(self, s, t):
        d = self.field.eval_many([s], [t], ((1, 0), (0, 1)))
        return np.array([[d[0, 0, 0], d[1, 0, 0]],
                         [d[0, 0, 1], d[1, 0, 1]]])

    def physical_diameter(self, cid):
        c = self.space.mesh.cell(cid)
        corners = [(c.s0, c.t0), (c.s1, c.t0), (c.s0, c.t1), (c.s1, c.t1)]
        pts = np.array([self.field.value(float(a), float(b)) for a, b in corners])
        best = 0.0
        for i in range(4):
            for j in range(i + 1, 4):
                best = max(best, float(np.linalg.norm(pts[i] - pts[j])))
        return best

    def to_json_dict(self):
        return {
            "version": GEOMETRY_FORMAT_VERSION,
            "degenerate_params": [list(p) for p in self.degenerate_params],
            "field": self.field.to_json_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_json_dict(), **kw)

    @classmethod
    def from_json_dict(cls, d):
        if d.get("version") != GEOMETRY_FORMAT_VERSION:
            raise ValueError(f"unsupported geometry format version {d.get('version')!r}")
        return cls(SplineField.from_json_dict(d["field"]), d.get("degenerate_params", ()))

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


def linear_geometry(space, rect=(0.0, 1.0, 0.0, 1.0)):
    """Affine map of the parameter square onto an axis-aligned rectangle."""
    x0, x1, y0, y1 = rect
    s0, s1, t0, t1 = (float(v) for v in space.mesh.domain)
    gx = (x1 - x0) / (s1 - s0)
    gy = (y1 - y0) / (t1 - t0)
    data = {}
    for vid in space.mesh.basis_vertices():
        v = space.mesh.vertex(vid)
        x = x0 + gx * (float(v.s) - s0)
        y = y0 + gy * (float(v.t) - t0)
        data[vid] = np.array([[x, gx, 0.0, 0.0],
                              [y, 0.0, gy, 0.0]])
    return Geometry(field_from_vertex_data(space, data))


def _lshape_vertex_data(s, t):
    """Exact Hermite data of the folded two-quadrilateral map.

    First half covers the quadrilateral (1,0)(0,0)(1,-1)(-1,-1), second
    half (0,0)(0,1)(-1,-1)(-1,1); across s = 1/2 the s-velocity turns
    through the bisector (-1, 1) with a magnitude profile that vanishes
    at the two boundary corners.
    """
    if s < 0.5:
        xi = 2.0 * s
        g = np.array([1.0 - xi * (1.0 + t), -t])
        gs = np.array([-2.0 * (1.0 + t), 0.0])
        gt = np.array([-xi, -1.0])
        gst = np.array([-2.0, 0.0])
    elif s > 0.5:
        ze = 2.0 * s - 1.0
        g = np.array([-t, ze * (1.0 + t) - t])
        gs = np.array([0.0, 2.0 * (1.0 + t)])
        gt = np.array([-1.0, ze - 1.0])
        gst = np.array([0.0, 2.0])
    else:
        c = (1.0 + t) * np.sin(np.pi * t)
        cp = np.sin(np.pi * t) + (1.0 + t) * np.pi * np.cos(np.pi * t)
        g = np.array([-t, -t])
        gs = c * np.array([-1.0, 1.0])
        gt = np.array([-1.0, -1.0])
        gst = cp * np.array([-1.0, 1.0])
    return np.stack([np.array([g[0], gs[0], gt[0], gst[0]]),
                     np.array([g[1], gs[1], gt[1], gst[1]])])


def lshape_geometry(n=4):
    """Single-patch map onto (-1,1)^2 minus the unit square, on an n x n mesh.

    n must be even so the fold line s = 1/2 is a mesh line.  The
    reentrant corner (0,0) is the image of parameter (1/2, 0); (-1,-1)
    is the image of (1/2, 1); both are the declared degenerate points.
    """
    if n % 2:
        raise ValueError("the L-shape patch needs an even cell count so the "
                         "fold line s=1/2 is a mesh line")
    mesh = create_tensor_mesh(n, n)
    space = build_initial_space(mesh)
    data = {}
    for vid in mesh.basis_vertices():
        v = mesh.vertex(vid)
        data[vid] = _lshape_vertex_data(float(v.s), float(v.t))
    field = field_from_vertex_data(space, data)
    return Geometry(field, degenerate_params=[(0.5, 0.0), (0.5, 1.0)])
