"""Refinement strategy: groups, label resolution, guarantees."""

import random

import pytest

from anisoline.refine import (
    RefinementRequest, check_refinement_invariants, flood_fill_groups,
    naive_subdivide, refine, resolve_labels, simulate_new_basis_vertices,
)
from anisoline.tmesh import VertexKind, create_tensor_mesh


def cell_at(mesh, s, t):
    return mesh.locate_cell(s, t)


def test_flood_fill_block_is_one_group():
    m = create_tensor_mesh(2, 2)
    groups = flood_fill_groups(m, m.active_cells())
    assert len(groups) == 1
    assert len(groups[0].members) == 4


def test_flood_fill_partial_edge_separates():
    m = create_tensor_mesh(2, 1, (0, 2, 0, 1))
    x = cell_at(m, 0.5, 0.5)
    y = cell_at(m, 1.5, 0.5)
    m.split_cell(x, "H")
    m.split_cell(y, "V")
    m.advance_current_level()
    a = cell_at(m, 0.5, 0.25)   # bottom half of x
    b = cell_at(m, 1.25, 0.5)   # left half of y
    groups = flood_fill_groups(m, [a, b])
    assert len(groups) == 2
    assert all(len(g.members) == 1 for g in groups)


def test_flood_fill_three_groups():
    # an all-'H' round first, then a marked set that the aligned-adjacency
    # rules classify into exactly three connected groups
    m = create_tensor_mesh(3, 3)
    m, _ = refine(m, RefinementRequest({c: "H" for c in m.active_cells()}))
    mk = [cell_at(m, 1 / 6, 1 / 12), cell_at(m, 3 / 6, 1 / 12),   # bottom pair
          cell_at(m, 1 / 6, 5 / 12),                              # lone cell
          cell_at(m, 5 / 6, 9 / 12), cell_at(m, 5 / 6, 11 / 12)]  # stacked pair
    groups = flood_fill_groups(m, mk)
    assert len(groups) == 3
    assert sorted(len(g.members) for g in groups) == [1, 2, 2]


def test_flood_fill_rejects_stale():
    m = create_tensor_mesh(2, 2)
    c = m.active_cells()[0]
    m.split_cell(c, "C")
    m.advance_current_level()
    with pytest.raises(ValueError):
        flood_fill_groups(m, [m.cells_of_level(0)[-1]])  # frozen level 0 cell


def test_resolve_singleton_interior_h_becomes_c():
    m = create_tensor_mesh(3, 3)
    mid = cell_at(m, 0.5, 0.5)
    (group,) = flood_fill_groups(m, [mid])
    out = resolve_labels(m, group, {mid: "H"})
    assert out == {mid: "C"}


def test_resolve_singleton_corner_h_stays():
    m = create_tensor_mesh(3, 3)
    corner = cell_at(m, 1 / 6, 1 / 6)
    (group,) = flood_fill_groups(m, [corner])
    out = resolve_labels(m, group, {corner: "H"})
    assert out == {corner: "H"}


def test_resolve_mixed_pair_takes_neighbor_direction():
    m = create_tensor_mesh(2, 1, (0, 2, 0, 1))
    a = cell_at(m, 0.5, 0.5)
    b = cell_at(m, 1.5, 0.5)
    (group,) = flood_fill_groups(m, [a, b])
    out = resolve_labels(m, group, {a: "H", b: "V"})
    assert out == {a: "H", b: "H"}


def test_resolve_mixed_lshape():
    m = create_tensor_mesh(2, 2)
    a = cell_at(m, 0.25, 0.25)
    b = cell_at(m, 0.75, 0.25)
    c = cell_at(m, 0.25, 0.75)
    (group,) = flood_fill_groups(m, [a, b, c])
    out = resolve_labels(m, group, {a: "H", b: "V", c: "H"})
    assert out[a] == "C"      # both directions present
    assert out[b] == "H"      # only a horizontal neighbor
    assert out[c] == "V"      # only a vertical neighbor


def test_resolve_missing_label():
    m = create_tensor_mesh(2, 2)
    cells = m.active_cells()
    (group,) = flood_fill_groups(m, cells)
    with pytest.raises(ValueError):
        resolve_labels(m, group, {cells[0]: "H"})


def test_resolve_all_h_column_relabeled():
    # one column of an all-'H' group has no horizontal partners and no
    # boundary midpoints: the whole column flips to 'C'
    m = create_tensor_mesh(4, 4)
    col = [cell_at(m, 3 / 8, 3 / 8), cell_at(m, 3 / 8, 5 / 8)]
    (group,) = flood_fill_groups(m, col)
    out = resolve_labels(m, group, {c: "H" for c in col})
    assert out == {c: "C" for c in col}


def test_simulate_counts_boundary_and_joint_midpoints():
    m = create_tensor_mesh(2, 1, (0, 2, 0, 1))
    a = cell_at(m, 0.5, 0.5)
    b = cell_at(m, 1.5, 0.5)
    sim = simulate_new_basis_vertices(m, {a: "H", b: "H"})
    # left midpoint of a is on the boundary, shared midpoint cut from both sides
    assert len(sim[a]) == 2 and len(sim[b]) == 2
    sim = simulate_new_basis_vertices(m, {a: "H"})
    assert len(sim[a]) == 1  # only the boundary midpoint remains


def test_refine_empty_request():
    m = create_tensor_mesh(2, 2)
    out, report = refine(m, RefinementRequest({}))
    assert out is m
    assert report.performed == {}
    assert report.new_basis_vertices == []


def test_refine_all_c_gives_uniform():
    m = create_tensor_mesh(3, 3)
    out, report = refine(m, RefinementRequest({c: "C" for c in m.active_cells()}))
    assert out.dimension() == 196
    assert len(out.active_cells()) == 36
    assert out.current_level == 1
    assert out.validate() == []
    ok, diags = check_refinement_invariants(m, out, report)
    assert ok, diags


def test_refine_all_h_gives_halved_tensor():
    m = create_tensor_mesh(3, 3)
    out, report = refine(m, RefinementRequest({c: "H" for c in m.active_cells()}))
    assert report.final_labels == {c: "H" for c in report.final_labels}
    assert len(out.active_cells()) == 18
    ref = create_tensor_mesh(3, 6)
    assert out.dimension() == ref.dimension() == 112
    # the refined mesh is exactly the 3x6 tensor grid
    got = sorted(out.cell(c).bounds_float() for c in out.active_cells())
    want = sorted(ref.cell(c).bounds_float() for c in ref.active_cells())
    assert got == want
    ok, diags = check_refinement_invariants(m, out, report)
    assert ok, diags


def test_refine_reports_new_basis_per_cell():
    m = create_tensor_mesh(2, 2)
    req = RefinementRequest({c: "C" for c in m.active_cells()})
    out, report = refine(m, req)
    assert set(report.cell_new_basis) == set(req.marked)
    assert all(len(v) >= 1 for v in report.cell_new_basis.values())
    assert report.transition_count == 0


def _naive_t_to_crossing_setup():
    """Two rounds of verbatim splitting that promote a T-vertex."""
    m = create_tensor_mesh(2, 1, (0, 2, 0, 1))
    x = m.locate_cell(0.5, 0.5)
    y = m.locate_cell(1.5, 0.5)
    m1, _ = naive_subdivide(m, RefinementRequest({x: "H", y: "V"}))
    v = m1.vertex_at(1, 0.5)
    assert m1.classify_vertex(v) is VertexKind.T_JUNCTION
    yl = m1.locate_cell(1.25, 0.5)
    return m1, yl


def test_naive_t_to_crossing_rejected():
    m1, yl = _naive_t_to_crossing_setup()
    m2, report = naive_subdivide(m1, RefinementRequest({yl: "H"}))
    v = m2.vertex_at(1, 0.5)
    assert m2.classify_vertex(v) is VertexKind.CROSSING
    ok, diags = check_refinement_invariants(m1, m2, report)
    assert not ok
    assert any("became a crossing" in d for d in diags)
    assert report.transition_count == 1


def test_strategy_avoids_t_to_crossing():
    # same marks the naive sequence starts from; the strategy relabels the
    # mixed pair so the shared midpoint is cut from both sides at once
    m = create_tensor_mesh(2, 1, (0, 2, 0, 1))
    x = m.locate_cell(0.5, 0.5)
    y = m.locate_cell(1.5, 0.5)
    out, report = refine(m, RefinementRequest({x: "H", y: "V"}))
    assert report.final_labels == {x: "H", y: "H"}
    v = out.vertex_at(1, 0.5)
    assert out.classify_vertex(v) is VertexKind.CROSSING
    assert v in report.new_basis_vertices
    ok, diags = check_refinement_invariants(m, out, report)
    assert ok, diags


def test_naive_no_basis_vertex_rejected():
    m = create_tensor_mesh(3, 3)
    mid = m.locate_cell(0.5, 0.5)
    out, report = naive_subdivide(m, RefinementRequest({mid: "H"}))
    ok, diags = check_refinement_invariants(m, out, report)
    assert not ok
    assert any("no new basis vertex" in d for d in diags)


def test_refine_deterministic():
    def run():
        m = create_tensor_mesh(3, 3)
        req = RefinementRequest({c: lab for c, lab in
                                 zip(m.active_cells(), "HHVVCCHVC")})
        out, rep = refine(m, req)
        return out.to_json(), str(rep.to_json_dict())
    assert run() == run()


def random_refine_rounds(rng, depth=4, start=(3, 3), max_marks=8):
    """Drive the strategy with random marks/labels; yields every report."""
    m = create_tensor_mesh(*start)
    for level in range(depth):
        cells = m.cells_of_level(level)
        if not cells:
            break
        k = rng.randint(1, min(max_marks, len(cells)))
        marked = rng.sample(cells, k)
        labels = {c: rng.choice("HVC") for c in marked}
        before = m
        m, report = refine(m, RefinementRequest(labels))
        yield before, m, report


def test_randomized_invariants():
    rng = random.Random(99)
    for trial in range(60):
        for before, after, report in random_refine_rounds(rng):
            ok, diags = check_refinement_invariants(before, after, report)
            assert ok, (trial, diags)
            assert after.validate() == []


def test_group_images_connected_and_disjoint():
    rng = random.Random(5)
    for trial in range(20):
        for before, after, report in random_refine_rounds(rng, depth=3):
            for g in report.groups:
                kids = [k for c in g.members for k in report.performed[c][1]]
                images = flood_fill_groups(after, kids)
                assert len(images) == 1
