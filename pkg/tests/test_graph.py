import itertools

import numpy as np
from hypothesis import given, settings, strategies as st

from umbra.graph import DependencyGraph, compute_sccs, tarjan, to_dot
from umbra.manifest import load_manifest

from _models import CASES

RAD_ORDER = ["gp", "um", "umc", "dp"]


def rad():
    return load_manifest(CASES / "rad" / "manifest.json").world


def graph_of(n, edges):
    vs = tuple(f"v{i}" for i in range(n))
    return DependencyGraph(vs, frozenset((vs[a], vs[b]) for a, b in edges))


def brute_force_sccs(g):
    vs = list(g.vertices)
    n = len(vs)
    idx = {v: i for i, v in enumerate(vs)}
    reach = np.eye(n, dtype=bool)
    for a, b in g.edges:
        reach[idx[a], idx[b]] = True
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    mutual = reach & reach.T
    return {frozenset(vs[j] for j in np.flatnonzero(mutual[i])) for i in range(n)}, reach, idx


def longest_path_levels(g, part):
    comps = list(part.components)
    cof = {v: i for i, c in enumerate(comps) for v in c}
    cedges = {(cof[a], cof[b]) for a, b in g.edges if cof[a] != cof[b]}

    def depth(c):
        preds = [a for a, b in cedges if b == c]
        return max((depth(a) + 1 for a in preds), default=0)
    return {v: depth(cof[v]) for v in g.vertices}


def test_rad_edges_follow_the_example():
    g = rad().graph()
    index = {m: i + 1 for i, m in enumerate(RAD_ORDER)}
    assert set(g.vertices) == set(RAD_ORDER)
    assert {(index[a], index[b]) for a, b in g.edges} == {(1, 4), (2, 3), (2, 4), (3, 2)}


def test_rad_partition_and_levels():
    part = rad().sccs()
    assert set(part.components) == {frozenset({"gp"}), frozenset({"um", "umc"}), frozenset({"dp"})}
    assert part.scc("um") == part.scc("umc")
    assert part.levels == {"gp": 0, "um": 0, "umc": 0, "dp": 1}


def test_edge_labels_name_parameters():
    labels = rad().graph().labels
    assert labels[("gp", "dp")] == ("pPickGarment",)
    assert set(labels[("um", "dp")]) == {"pOkCorrect", "pNotOkCorrect"}
    assert set(labels[("umc", "um")]) == {"pModel1", "pModel2"}


def test_trivial_graphs():
    part = compute_sccs(graph_of(1, []))
    assert part.components == (frozenset({"v0"}),) and part.levels == {"v0": 0}
    part = compute_sccs(graph_of(2, [(0, 1), (1, 0)]))
    assert part.components == (frozenset({"v0", "v1"}),)
    part = compute_sccs(graph_of(3, []))
    assert len(part.components) == 3 and set(part.levels.values()) == {0}


def test_against_transitive_closure():
    rng = np.random.default_rng(31)
    for _ in range(200):
        n = int(rng.integers(1, 11))
        density = rng.uniform(0, 0.4)
        edges = [(a, b) for a in range(n) for b in range(n) if rng.random() < density]
        g = graph_of(n, edges)
        part = compute_sccs(g)
        want, reach, idx = brute_force_sccs(g)
        assert set(part.components) == want
        assert sorted(v for c in part.components for v in c) == sorted(g.vertices)
        # reverse topological: a component never reaches a later one
        for i, j in itertools.combinations(range(len(part.components)), 2):
            a, b = next(iter(part.components[i])), next(iter(part.components[j]))
            assert not reach[idx[a], idx[b]]
        assert part.levels == longest_path_levels(g, part)


def test_deep_chain_does_not_recurse():
    n = 5000
    succ = {i: [i + 1] if i + 1 < n else [] for i in range(n)}
    comps = tarjan(range(n), succ.get)
    assert len(comps) == n and comps[0] == [n - 1]


def test_dot_clusters():
    world = rad()
    text = to_dot(world.graph(), world.sccs(), "rad")
    assert text.count("subgraph cluster_") == 3
    assert text.count(" -> ") == 4
    assert '"um" -> "umc" [label="pOkCorrect, pNotOkCorrect"]' in text
    for v in RAD_ORDER:
        assert f'"{v}" [label=' in text


def test_dot_singletons_and_two_cycle():
    text = to_dot(graph_of(3, []), compute_sccs(graph_of(3, [])))
    assert text.count("subgraph cluster_") == 3
    g = graph_of(2, [(0, 1), (1, 0)])
    text = to_dot(g, compute_sccs(g))
    assert text.count("subgraph cluster_") == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=20))))
def test_condensation_is_acyclic(case):
    n, edges = case
    g = graph_of(n, edges)
    part = compute_sccs(g)
    cof = part.component_of
    for a, b in g.edges:
        assert cof[a] >= cof[b]
        if cof[a] != cof[b]:
            assert part.levels[b] > part.levels[a]
