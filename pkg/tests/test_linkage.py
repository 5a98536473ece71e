import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from builders import atom, random_linkage, random_q
from oracles import fd_jacobian, matrix_stack_fk
from kinsample.errors import ModelError
from kinsample.linkage import (build_kinematic_tree, build_linkage, build_molecular_graph,
                               contract_to_rigid_bodies, forward_kinematics, pentameric_ring_edges,
                               position_jacobian, wrap_angle)
from kinsample.templates import BondOrder, TemplateTable


def chain(n, spacing=1.5):
    return [atom(i + 1, [spacing * i, 0.2 * (i % 2), 0.0]) for i in range(n)]


# -- molecular graph ---------------------------------------------------------

def test_bond_inferred_within_covalent_cutoff():
    g = build_molecular_graph([atom(1, [0, 0, 0]), atom(2, [1.4, 0, 0])])
    assert list(g.edges) == [(1, 2)]


def test_no_bond_beyond_cutoff():
    g = build_molecular_graph([atom(1, [0, 0, 0]), atom(2, [3.0, 0, 0])])
    assert g.edges == {}


def test_explicit_bonds_override_distance():
    g = build_molecular_graph([atom(1, [0, 0, 0]), atom(2, [10.0, 0, 0])], bonds=[(1, 2)])
    assert (1, 2) in g.edges


def test_cutoff_boundary():
    # 0.77 + 0.77 + 0.4 = 1.94
    assert build_molecular_graph([atom(1, [0, 0, 0]), atom(2, [1.93, 0, 0])]).edges
    assert not build_molecular_graph([atom(1, [0, 0, 0]), atom(2, [1.95, 0, 0])]).edges


def test_duplicate_ids_rejected():
    with pytest.raises(ModelError):
        build_molecular_graph([atom(1, [0, 0, 0]), atom(1, [1, 0, 0])])


def test_empty_and_nonfinite_rejected():
    with pytest.raises(ModelError):
        build_molecular_graph([])
    with pytest.raises(ModelError):
        build_molecular_graph([atom(1, [np.nan, 0, 0])])


def test_bad_explicit_bonds_rejected():
    atoms = [atom(1, [0, 0, 0]), atom(2, [1.5, 0, 0])]
    for bonds in ([(1, 1)], [(1, 3)], [(1, 2), (2, 1)]):
        with pytest.raises(ModelError):
            build_molecular_graph(atoms, bonds=bonds)


def test_isolated_atom_warns(caplog):
    g = build_molecular_graph([atom(1, [0, 0, 0]), atom(2, [1.5, 0, 0]), atom(3, [9, 9, 9])])
    assert "no covalent bonds" in caplog.text
    lk = build_kinematic_tree(contract_to_rigid_bodies(g))
    assert len(lk.chains) == 2


def test_templates_tag_peptide_and_carbonyl():
    kw = dict(residue_name="ALA", chain_id="A")
    atoms = [atom(1, [0, 0, 0], "N", name="N", residue_id=1, **kw),
             atom(2, [1.46, 0, 0], name="CA", residue_id=1, **kw),
             atom(3, [2.0, 1.4, 0], name="C", residue_id=1, **kw),
             atom(4, [1.4, 2.4, 0], "O", name="O", residue_id=1, **kw),
             atom(5, [3.3, 1.5, 0], "N", name="N", residue_id=2, **kw)]
    g = build_molecular_graph(atoms, templates=TemplateTable())
    assert g.edges[(3, 4)] is BondOrder.DOUBLE
    assert g.edges[(3, 5)] is BondOrder.PARTIAL_DOUBLE
    assert g.edges[(1, 2)] is BondOrder.SINGLE


# -- rigid bodies ------------------------------------------------------------

def test_double_bond_contracts_to_one_body():
    g = build_molecular_graph(chain(2), bonds=[(1, 2, "double")])
    rg = contract_to_rigid_bodies(g)
    assert len(rg.bodies) == 1 and rg.edges == []


def test_single_bond_chain_keeps_all_bodies():
    rg = contract_to_rigid_bodies(build_molecular_graph(chain(4), bonds=[(1, 2), (2, 3), (3, 4)]))
    assert len(rg.bodies) == 4 and len(rg.edges) == 3


def pentagon_with_tail():
    pts = [[math.cos(2 * math.pi * k / 5) * 1.3, math.sin(2 * math.pi * k / 5) * 1.3, 0] for k in range(5)]
    atoms = [atom(k + 1, p) for k, p in enumerate(pts)] + [atom(6, [2.8, 0, 0])]
    bonds = [(k + 1, (k + 1) % 5 + 1) for k in range(5)] + [(1, 6)]
    return atoms, bonds


def test_five_ring_contracted():
    atoms, bonds = pentagon_with_tail()
    g = build_molecular_graph(atoms, bonds=bonds)
    assert len(pentameric_ring_edges(g)) == 5
    rg = contract_to_rigid_bodies(g)
    assert sorted(map(len, rg.bodies)) == [1, 5]
    assert len(rg.edges) == 1


def test_six_ring_not_contracted():
    pts = [[math.cos(2 * math.pi * k / 6) * 1.5, math.sin(2 * math.pi * k / 6) * 1.5, 0] for k in range(6)]
    atoms = [atom(k + 1, p) for k, p in enumerate(pts)]
    g = build_molecular_graph(atoms, bonds=[(k + 1, (k + 1) % 6 + 1) for k in range(6)])
    assert pentameric_ring_edges(g) == set()
    lk = build_kinematic_tree(contract_to_rigid_bodies(g))
    assert len(lk.leftover_edges) == 1


def brute_five_cycles(edges):
    """Edge set of every 5-cycle, by trying all 5-subsets of vertices in order."""
    from itertools import combinations, permutations
    es = {frozenset(e) for e in edges}
    verts = sorted({v for e in edges for v in e})
    out = set()
    for combo in combinations(verts, 5):
        first = combo[0]
        for perm in permutations(combo[1:]):
            cyc = (first,) + perm
            ring = [frozenset((cyc[k], cyc[(k + 1) % 5])) for k in range(5)]
            if all(e in es for e in ring):
                out.update(ring)
    return out


@given(st.integers(0, 2**32 - 1))
def test_ring5_detection_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 10))
    edges = {(i, i + 1) for i in range(1, n)}
    for _ in range(int(rng.integers(1, 6))):
        a, b = sorted(rng.choice(np.arange(1, n + 1), 2, replace=False).tolist())
        edges.add((a, b))
    atoms = [atom(k, [2.0 * k, 0, 0]) for k in range(1, n + 1)]
    g = build_molecular_graph(atoms, bonds=sorted(edges))
    got = {frozenset(e) for e in pentameric_ring_edges(g)}
    assert got == brute_five_cycles(edges)


def test_bodies_partition_atoms():
    lk = random_linkage(np.random.default_rng(3), 40, 2)
    flat = sorted(int(i) for b in lk.body_atoms for i in b)
    assert flat == list(range(lk.n_atoms))


# -- kinematic tree ----------------------------------------------------------

def test_acyclic_three_body_chain():
    lk = build_linkage(chain(3), bonds=[(1, 2), (2, 3)])
    assert lk.dof_count == 8 and lk.leftover_edges == []


def test_three_body_cycle_leaves_one_edge():
    atoms = [atom(1, [0, 0, 0]), atom(2, [1.5, 0, 0]), atom(3, [0.75, 1.3, 0])]
    lk = build_linkage(atoms, bonds=[(1, 2), (2, 3), (1, 3)])
    assert lk.dof_count == 8
    assert len(lk.leftover_edges) == 1
    # MST keeps the two lightest id-sum edges: (1,2)=3 and (1,3)=4
    assert lk.leftover_edges == [(1, 2)]


def test_two_disconnected_chains():
    atoms = chain(2) + [atom(3, [20, 0, 0]), atom(4, [21.5, 0, 0])]
    lk = build_linkage(atoms, bonds=[(1, 2), (3, 4)])
    assert lk.dof_count == 14
    assert len(lk.chains) == 2
    assert lk.chains[0].root_body == lk.atom_body[0]
    assert lk.chains[1].root_body == lk.atom_body[2]


def test_root_holds_lowest_atom_id():
    atoms = [atom(7, [0, 0, 0]), atom(3, [1.5, 0, 0]), atom(9, [3.0, 0.2, 0])]
    lk = build_linkage(atoms, bonds=[(7, 3), (3, 9)])
    root = lk.chains[0].root_body
    assert lk.atoms[lk.body_atoms[root][0]].id == 3


def test_dof_count_formula():
    rng = np.random.default_rng(11)
    for _ in range(10):
        lk = random_linkage(rng, int(rng.integers(3, 60)), int(rng.integers(1, 4)))
        assert lk.dof_count == 6 * len(lk.chains) + len(lk.joints)
        assert len(lk.joints) == lk.n_bodies - len(lk.chains)
        tree = {frozenset(e) for e in lk.tree_edges}
        assert not tree & {frozenset(e) for e in lk.leftover_edges}


def test_empty_rigid_graph_rejected():
    from kinsample.linkage import MolecularGraph, RigidBodyGraph
    with pytest.raises(ModelError):
        build_kinematic_tree(RigidBodyGraph(MolecularGraph([], {}), [], [], {}))


# -- forward kinematics ------------------------------------------------------

def z_axis_hinge():
    atoms = [atom(1, [0, 0, 0]), atom(2, [0, 0, 1.0]), atom(3, [1.0, 0, 0])]
    return build_linkage(atoms, bonds=[(1, 2, "single"), (2, 3, "double")])


def test_fk_identity_at_zero():
    lk = random_linkage(np.random.default_rng(1), 30)
    np.testing.assert_array_equal(forward_kinematics(lk, np.zeros(lk.dof_count)), lk.ref_positions)


def test_fk_quarter_turn_about_z():
    lk = z_axis_hinge()
    q = np.zeros(lk.dof_count)
    q[6] = math.pi / 2
    np.testing.assert_allclose(lk.forward_kinematics(q)[2], [0, 1, 0], atol=1e-15)


def test_fk_matches_matrix_stack_on_ten_joint_chain():
    rng = np.random.default_rng(2)
    from kinsample.fixtures import random_chain, chain_atoms, chain_bonds
    pos = random_chain(11, rng)
    lk = build_linkage(chain_atoms(pos), chain_bonds(11))
    assert len(lk.joints) == 10
    for _ in range(20):
        q = random_q(rng, lk)
        np.testing.assert_allclose(lk.forward_kinematics(q), matrix_stack_fk(lk, q), atol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_fk_matches_matrix_stack_random(seed):
    rng = np.random.default_rng(seed)
    lk = random_linkage(rng, int(rng.integers(2, 40)), int(rng.integers(1, 3)))
    q = random_q(rng, lk)
    np.testing.assert_allclose(lk.forward_kinematics(q), matrix_stack_fk(lk, q), atol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_rigid_bodies_and_bond_geometry_preserved(seed):
    rng = np.random.default_rng(seed)
    lk = random_linkage(rng, int(rng.integers(3, 40)), p_double=0.4)
    P0 = lk.ref_positions
    P = lk.forward_kinematics(random_q(rng, lk))
    for body in lk.body_atoms:
        if len(body) > 1:
            d0 = np.linalg.norm(P0[body][:, None] - P0[body][None], axis=-1)
            d = np.linalg.norm(P[body][:, None] - P[body][None], axis=-1)
            np.testing.assert_allclose(d, d0, atol=1e-9)
    for j in lk.joints:
        a, b = j.parent_atom, j.child_atom
        assert abs(np.linalg.norm(P[a] - P[b]) - np.linalg.norm(P0[a] - P0[b])) < 1e-9
        # angles at both ends of the rotatable bond
        closures = {frozenset(e) for e in lk.leftover_edges}
        for center, other in ((a, b), (b, a)):
            for nb in lk.adjacency[lk.atoms[center].id]:
                k = lk.index_of[nb]
                if k == other or frozenset((center, k)) in closures:
                    continue
                def ang(X):
                    u, v = X[k] - X[center], X[other] - X[center]
                    return np.arccos(np.clip(u @ v / np.linalg.norm(u) / np.linalg.norm(v), -1, 1))
                assert abs(ang(P) - ang(P0)) < 1e-9


def test_fk_rejects_wrong_length():
    lk = z_axis_hinge()
    with pytest.raises(ValueError):
        lk.forward_kinematics(np.zeros(3))


def test_wrap_angle_range():
    x = np.array([math.pi, -math.pi, 3 * math.pi, 0.5, -7.0])
    w = wrap_angle(x)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert w[1] == math.pi


# -- position Jacobian -------------------------------------------------------

def test_jacobian_column_for_z_hinge():
    lk = z_axis_hinge()
    J = position_jacobian(lk, np.zeros(lk.dof_count), 2)
    np.testing.assert_allclose(J[:, 6], [0, 1, 0], atol=1e-15)


def test_jacobian_zero_off_root_path():
    # star: atom 1 bonded to 2, 3, 4; each arm carries one more atom
    atoms = [atom(1, [0, 0, 0]), atom(2, [1.5, 0, 0]), atom(3, [0, 1.5, 0]), atom(4, [0, 0, 1.5]),
             atom(5, [2.0, 1.4, 0]), atom(6, [-1.4, 2.0, 0]), atom(7, [1.4, 0, 2.0])]
    lk = build_linkage(atoms, bonds=[(1, 2), (1, 3), (1, 4), (2, 5), (3, 6), (4, 7)])
    q = random_q(np.random.default_rng(0), lk)
    J = lk.position_jacobian(q, lk.index_of[6])
    on_path = set(lk.body_path[lk.atom_body[lk.index_of[6]]].tolist())
    for j in lk.joints:
        if j.dof not in on_path:
            assert np.all(J[:, j.dof] == 0)
    assert np.any(J[:, sorted(on_path)] != 0)


def test_global_columns():
    lk = random_linkage(np.random.default_rng(4), 12)
    q = random_q(np.random.default_rng(5), lk)
    fr = lk.frames(q)
    for a in range(lk.n_atoms):
        J = lk.position_jacobian(fr, a)
        np.testing.assert_array_equal(J[:, :3], np.eye(3))


@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    lk = random_linkage(rng, int(rng.integers(2, 30)), int(rng.integers(1, 3)))
    q = random_q(rng, lk, scale=1.2)
    fr = lk.frames(q)
    J = np.array([lk.position_jacobian(fr, a) for a in range(lk.n_atoms)])
    assert np.abs(J - fd_jacobian(lk, q)).max() <= 1e-6


def test_null_dof_flagged_for_terminal_atom():
    lk = build_linkage(chain(4), bonds=[(1, 2), (2, 3), (3, 4)])
    assert lk.null_dofs.tolist() == [False] * 6 + [False, False, True]


def test_infer_conformation_roundtrip():
    rng = np.random.default_rng(9)
    lk = random_linkage(rng, 40, p_double=0.5)
    q = lk.wrap(random_q(rng, lk))
    q_hat = lk.infer_conformation(lk.forward_kinematics(q), template=q)
    np.testing.assert_allclose(lk.forward_kinematics(q_hat), lk.forward_kinematics(q), atol=1e-9)
