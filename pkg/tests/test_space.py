"""Spline space construction, modification, evaluation, verification."""

import random

import numpy as np
import pytest

from anisoline import bezier
from anisoline.refine import RefinementRequest, refine
from anisoline.space import (
    DERIV_ORDERS, SplineField, SplineSpace, advance_level, build_initial_space,
    collocation_block, evaluate, field_from_vertex_data, transfer_field,
    verify_space,
)
from anisoline.tmesh import create_mesh_from_knots, create_tensor_mesh


def make_space(seed=0, start=(2, 2), depth=0, max_marks=6):
    """Randomly refined space driven through the full pipeline."""
    rng = random.Random(seed)
    mesh = create_tensor_mesh(*start)
    space = build_initial_space(mesh)
    for level in range(depth):
        cells = mesh.cells_of_level(level)
        if not cells:
            break
        k = rng.randint(1, min(max_marks, len(cells)))
        labels = {c: rng.choice("HVC") for c in rng.sample(cells, k)}
        mesh, report = refine(mesh, RefinementRequest(labels))
        space = advance_level(space, report)
    return space


def test_single_cell_space_is_bernstein():
    space = build_initial_space(create_tensor_mesh(1, 1))
    assert space.dim == 16
    # the double-end-knot construction degenerates to the Bernstein basis:
    # each patch has exactly one unit ordinate
    seen = set()
    for f in space.functions:
        (patch,) = f.support.values()
        nz = np.argwhere(patch != 0)
        assert len(nz) == 1
        assert patch[tuple(nz[0])] == pytest.approx(1.0)
        seen.add(tuple(nz[0]))
    assert len(seen) == 16


def test_initial_space_counts_and_unity():
    space = build_initial_space(create_tensor_mesh(2, 2))
    assert space.dim == 36
    rng = np.random.default_rng(0)
    s, t = rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
    ones = SplineField(space, np.ones(space.dim))
    assert np.max(np.abs(ones.eval_many(s, t)[0] - 1)) < 1e-12


def test_initial_space_supports_are_incident_cells():
    mesh = create_tensor_mesh(3, 3)
    space = build_initial_space(mesh)
    for f in space.functions:
        incident = set(mesh.vertex_cells(f.anchor))
        assert set(f.support) == incident
        assert len(f.support) <= 4


def test_initial_space_rejects_refined_mesh():
    mesh = create_tensor_mesh(2, 2)
    mesh.split_cell(mesh.active_cells()[0], "C")
    with pytest.raises(ValueError):
        build_initial_space(mesh)


def test_noop_report_returns_same_space():
    mesh = create_tensor_mesh(2, 2)
    space = build_initial_space(mesh)
    _, report = refine(mesh, RefinementRequest({}))
    assert advance_level(space, report) is space


def test_one_cross_on_single_cell():
    mesh = create_tensor_mesh(1, 1)
    space = build_initial_space(mesh)
    mesh2, report = refine(mesh, RefinementRequest({mesh.active_cells()[0]: "C"}))
    space2 = advance_level(space, report)
    assert space2.dim == 36
    rng = np.random.default_rng(1)
    s, t = rng.uniform(0, 1, 400), rng.uniform(0, 1, 400)
    ones = SplineField(space2, np.ones(space2.dim))
    assert np.max(np.abs(ones.eval_many(s, t)[0] - 1)) < 1e-12
    # the 16 modified functions carry zero Hermite data at every new vertex
    for vid in report.new_basis_vertices:
        for fid in range(16):
            assert np.max(np.abs(space2.basis_data_at_vertex(fid, vid))) < 1e-13


def test_functions_away_from_marks_unchanged():
    mesh = create_tensor_mesh(3, 3)
    space = build_initial_space(mesh)
    corner_cell = mesh.locate_cell(0.1, 0.1)
    far_vertex = mesh.vertex_at(1, 1)
    mesh2, report = refine(mesh, RefinementRequest({corner_cell: "C"}))
    space2 = advance_level(space, report)
    for fid in space.vertex_index[far_vertex]:
        old, new = space.functions[fid], space2.functions[fid]
        assert old is new  # untouched functions are reused, patches bitwise equal


def test_evaluate_sparse_and_unity():
    space = make_space(seed=3, depth=2)
    rng = np.random.default_rng(2)
    for _ in range(80):
        s, t = rng.uniform(0, 1, 2)
        hits = evaluate(space, s, t, max_deriv=0)
        assert len(hits) >= 1
        assert sum(v[0] for _, v in hits) == pytest.approx(1.0, abs=1e-12)


def test_initial_space_sixteen_per_cell():
    # on a tensor mesh every cell carries exactly its 4 corners x 4 slots
    space = build_initial_space(create_tensor_mesh(3, 2))
    for cid in space.mesh.active_cells():
        assert len(space.functions_on_cell(cid)) == 16


def test_transition_cell_keeps_coarse_functions():
    # a child bordering the unrefined region keeps the modified functions
    # anchored at old vertices that are not among its corners, while the
    # far corner's functions die because their residue sits entirely in
    # the zeroed new-vertex block
    mesh = create_tensor_mesh(2, 2)
    space = build_initial_space(mesh)
    mesh2, report = refine(mesh, RefinementRequest({mesh.locate_cell(0.25, 0.25): "C"}))
    space2 = advance_level(space, report)
    child = mesh2.locate_cell(0.3, 0.3)  # upper-right child of the split cell
    assert mesh2.cell(child).bounds_float() == (0.25, 0.5, 0.25, 0.5)
    fids = space2.functions_on_cell(child)
    assert len(fids) == 16
    anchors = {space2.functions[f].anchor for f in fids}
    assert anchors == {mesh2.vertex_at(0.5, 0), mesh2.vertex_at(0, 0.5),
                       mesh2.vertex_at(0.5, 0.5), mesh2.vertex_at(0.25, 0.25)}
    ones = SplineField(space2, np.ones(space2.dim))
    assert ones.value(0.3, 0.3) == pytest.approx(1.0, abs=1e-12)


def test_evaluate_rejects_outside_domain():
    space = build_initial_space(create_tensor_mesh(2, 2))
    with pytest.raises(ValueError):
        evaluate(space, 1.5, 0.5)


def test_lop_data_vanishes_for_non_anchored():
    space = make_space(seed=5, depth=2)
    mesh = space.mesh
    finest = max(mesh.vertex(v).level for v in mesh.basis_vertices())
    vids = [v for v in mesh.basis_vertices() if mesh.vertex(v).level == finest]
    for vid in vids:
        anchored = set(space.vertex_index[vid])
        cid = mesh.vertex_cells(vid)[0]
        for fid in space.functions_on_cell(cid):
            data = space.basis_data_at_vertex(fid, vid)
            if fid not in anchored:
                assert np.max(np.abs(data)) < 1e-12


def test_collocation_dual_path_oracle():
    """B(v) from stored Bezier data equals the knot-formula prediction."""
    mesh = create_tensor_mesh(2, 2)
    space = build_initial_space(mesh)
    center = mesh.vertex_at(0.5, 0.5)
    block = collocation_block(space, center)
    # knot construction at a symmetric interior breakpoint, spacing 1/2:
    # variant 0: value wR/(wL+wR)=1/2, slope -3/(wL+wR)=-3; variant 1 mirrored
    pairs = [(0.5, -3.0), (0.5, 3.0)]
    want = np.empty((4, 4))
    for slot in range(4):
        (vs, ds), (vt, dt) = pairs[slot % 2], pairs[slot // 2]
        want[slot] = [vs * vt, ds * vt, vs * dt, ds * dt]
    assert np.allclose(block.matrix, want, atol=1e-12)


def test_collocation_scaling():
    small = build_initial_space(create_tensor_mesh(2, 2))
    big = build_initial_space(create_tensor_mesh(2, 2, (0, 2, 0, 2)))
    bs = collocation_block(small, small.mesh.vertex_at(0.5, 0.5)).matrix
    bb = collocation_block(big, big.mesh.vertex_at(1, 1)).matrix
    assert np.allclose(bb[:, 0], bs[:, 0], atol=1e-13)       # values unchanged
    assert np.allclose(bb[:, 1], bs[:, 1] / 2, atol=1e-13)   # d_s halves


def test_collocation_rejects_non_basis_vertex():
    mesh = create_tensor_mesh(2, 2)
    space = build_initial_space(mesh)
    mesh2, report = refine(mesh, RefinementRequest({mesh.locate_cell(0.25, 0.25): "C"}))
    space2 = advance_level(space, report)
    tv = mesh2.vertex_at(0.5, 0.25)  # T-junction on the shared edge
    with pytest.raises(ValueError):
        collocation_block(space2, tv)


@pytest.mark.parametrize("seed,depth", [(0, 1), (1, 2), (2, 3), (7, 3)])
def test_verify_space_randomized(seed, depth):
    space = make_space(seed=seed, start=(2, 2), depth=depth)
    rep = verify_space(space, n_samples=1500, seed=seed)
    assert rep["dim_ok"], rep
    assert rep["max_partition_error"] <= 1e-10
    assert rep["min_value"] >= -1e-12
    assert rep["c1_max_jump"] <= 1e-9
    assert rep["hermite_roundtrip_error"] <= 1e-8


def test_nonuniform_level0_space():
    mesh = create_mesh_from_knots([0, 0.5, 0.75, 1], [0, 0.25, 1])
    space = build_initial_space(mesh)
    rep = verify_space(space, n_samples=800, seed=3)
    assert rep["dim_ok"]
    assert rep["max_partition_error"] <= 1e-10
    assert rep["c1_max_jump"] <= 1e-9


def test_nested_space_reproduces_old_field():
    rng = np.random.default_rng(4)
    mesh = create_tensor_mesh(2, 2)
    space = build_initial_space(mesh)
    coeffs = rng.standard_normal(space.dim)
    field = SplineField(space, coeffs)
    random_pts = rng.uniform(0, 1, size=(200, 2))
    want = field.eval_many(random_pts[:, 0], random_pts[:, 1])[0]

    r = random.Random(9)
    for level in range(3):
        cells = mesh.cells_of_level(level)
        labels = {c: r.choice("HVC") for c in r.sample(cells, min(4, len(cells)))}
        mesh, report = refine(mesh, RefinementRequest(labels))
        new_space = advance_level(field.space, report)
        field = transfer_field(field, new_space)
        got = field.eval_many(random_pts[:, 0], random_pts[:, 1])[0]
        assert np.max(np.abs(got - want)) <= 1e-10


def test_field_from_vertex_data_reproduces_bicubic():
    # Hermite data of a global bicubic; collocation must reproduce it exactly
    space = make_space(seed=11, depth=2)

    def f(s, t):
        return (1 + 2 * s - t) * (s - 0.3) * (t + 0.2)  # bicubic in each variable

    import sympy
    ss, tt = sympy.symbols("s t")
    expr = (1 + 2 * ss - tt) * (ss - sympy.Rational(3, 10)) * (tt + sympy.Rational(1, 5))
    fs = sympy.lambdify((ss, tt), sympy.diff(expr, ss))
    ft = sympy.lambdify((ss, tt), sympy.diff(expr, tt))
    fst = sympy.lambdify((ss, tt), sympy.diff(expr, ss, tt))
    data = {}
    for vid in space.vertex_index:
        v = space.mesh.vertex(vid)
        s, t = float(v.s), float(v.t)
        data[vid] = np.array([f(s, t), fs(s, t), ft(s, t), fst(s, t)])
    field = field_from_vertex_data(space, data)
    rng = np.random.default_rng(5)
    s, t = rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
    got = field.eval_many(s, t)[0]
    want = np.array([f(a, b) for a, b in zip(s, t)])
    assert np.max(np.abs(got - want)) < 1e-10


def test_gram_matrix_full_rank_small_spaces():
    from numpy.polynomial.legendre import leggauss
    for seed in (0, 1):
        space = make_space(seed=seed, start=(2, 2), depth=1, max_marks=3)
        if space.dim > 200:
            continue
        x, w = leggauss(4)
        x = (x + 1) / 2
        w = w / 2
        G = np.zeros((space.dim, space.dim))
        for cid in space.mesh.active_cells():
            c = space.mesh.cell(cid)
            area = float(c.width) * float(c.height)
            uu, vv = np.meshgrid(x, x, indexing="ij")
            ww = np.outer(w, w).ravel()
            fids, vals = space.basis_on_cell(cid, uu.ravel(), vv.ravel())
            ids = np.array(fids)
            local = np.einsum("fn,gn,n->fg", vals[0], vals[0], ww) * area
            G[np.ix_(ids, ids)] += local
        sv = np.linalg.svd(G, compute_uv=False)
        assert sv[-1] > 1e-10 * sv[0]


def test_support_stays_local_and_connected():
    for seed in (1, 4, 6):
        space = make_space(seed=seed, depth=3)
        mesh = space.mesh
        for f in space.functions:
            v = mesh.vertex(f.anchor)
            cells = [mesh.cell(c) for c in f.support]
            assert cells, f
            # birth neighborhood: cells of the birth level whose closure
            # contains the anchor (the full tree is retained, so these
            # records exist even after later subdivision)
            birth = [c for c in mesh._cells.values()
                     if c.level == f.birth_level and c.contains_point(v.s, v.t)]
            s_lo = min(c.s0 for c in birth)
            s_hi = max(c.s1 for c in birth)
            t_lo = min(c.t0 for c in birth)
            t_hi = max(c.t1 for c in birth)
            for c in cells:
                assert (s_lo <= c.s0 and c.s1 <= s_hi and
                        t_lo <= c.t0 and c.t1 <= t_hi), (f, c)
            # support is edge-connected
            ids = list(f.support)
            seen = {ids[0]}
            stack = [ids[0]]
            while stack:
                cur = mesh.cell(stack.pop())
                for other in ids:
                    if other in seen:
                        continue
                    o = mesh.cell(other)
                    share_v = (cur.s1 == o.s0 or o.s1 == cur.s0) and \
                        min(cur.t1, o.t1) > max(cur.t0, o.t0)
                    share_h = (cur.t1 == o.t0 or o.t1 == cur.t0) and \
                        min(cur.s1, o.s1) > max(cur.s0, o.s0)
                    if share_v or share_h:
                        seen.add(other)
                        stack.append(other)
            assert seen == set(ids), f


def test_vertex_index_covers_every_basis_vertex():
    space = make_space(seed=8, depth=3)
    assert set(space.vertex_index) == set(space.mesh.basis_vertices())
    assert all(len(v) == 4 for v in space.vertex_index.values())


def test_space_json_roundtrip():
    space = make_space(seed=2, depth=2)
    text = space.to_json()
    back = SplineSpace.from_json(text)
    assert back.dim == space.dim
    rng = np.random.default_rng(6)
    s, t = rng.uniform(0, 1, 50), rng.uniform(0, 1, 50)
    coeffs = rng.standard_normal(space.dim)
    a = SplineField(space, coeffs).eval_many(s, t)
    b = SplineField(back, coeffs).eval_many(s, t)
    assert np.allclose(a, b, atol=1e-14)


def test_vector_field_evaluation():
    space = build_initial_space(create_tensor_mesh(2, 2))
    rng = np.random.default_rng(7)
    field = SplineField(space, rng.standard_normal((space.dim, 3)))
    out = field.eval_many([0.3], [0.7], DERIV_ORDERS)
    assert out.shape == (6, 1, 3)
    lop = field.lop(0.3, 0.7)
    assert lop.shape == (3, 4)
