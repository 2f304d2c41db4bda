import json

import numpy as np
import pytest

from irdiff.design import generate_design
from irdiff.graph import (
    DegenerateDesignError,
    DesignGraph,
    GraphError,
    NetlistAttributes,
    build_graph,
    netlist_from_design,
    normalize_node_features,
    validate_graph,
)
from irdiff.rng import Rng


def brute_force_adjacency(attrs: NetlistAttributes, fanout_cap: int = 64) -> np.ndarray:
    """O(pairs x nets) membership oracle."""
    n = len(attrs.node_attr)
    members = {net: set() for net in attrs.net_attr}
    for _, net, node in attrs.pin_attr:
        members[net].add(node)
    a = np.zeros((n, n))
    for net, nodes in members.items():
        nodes = sorted(nodes)
        if len(nodes) > fanout_cap:
            hub = nodes[0]
            for v in nodes[1:]:
                a[hub, v] = a[v, hub] = 1.0
            continue
        for i in range(n):
            for j in range(n):
                if i != j and i in nodes and j in nodes:
                    a[i, j] = 1.0
    return a


def random_netlist(stream, max_nodes=20, max_nets=30, max_fanout=5):
    n = int(stream.integers(2, max_nodes + 1))
    n_nets = int(stream.integers(1, max_nets + 1))
    pin_attr = []
    net_attr = {}
    for net in range(n_nets):
        net_attr[net] = f"net{net}"
        k = int(stream.integers(2, min(max_fanout, n) + 1))
        for node in stream.choice(n, k):
            pin_attr.append((f"p{net}_{node}", net, int(node)))
    node_attr = {v: (f"inst_{v}", "CELL") for v in range(n)}
    placement = {v: (float(v), 0.0, float(v) + 1.0, 1.0) for v in range(n)}
    return NetlistAttributes(pin_attr, net_attr, node_attr), placement


def test_worked_example():
    # Pins I, P1, P3, P4 on nets {0,1,1,2} and nodes {0,0,1,1}:
    # net 1 connects NAND_1 and INV_1, nets 0 and 2 are single-instance.
    attrs = NetlistAttributes(
        pin_attr=[("I", 0, 0), ("P1", 1, 0), ("P3", 1, 1), ("P4", 2, 1)],
        net_attr={0: "a", 1: "n1", 2: "out"},
        node_attr={0: ("NAND_1", "NAND"), 1: ("INV_1", "INV")},
    )
    placement = {0: (0.0, 0.0, 1.0, 1.0), 1: (2.0, 0.0, 3.0, 1.0)}
    g = build_graph(attrs, placement)
    assert g.n_nodes == 2
    assert set(attrs.node_attr[v][0] for v in range(g.n_nodes)) == {"NAND_1", "INV_1"}
    assert g.edges == [(0, 1)]
    np.testing.assert_array_equal(g.node_features[0], [0.5, 0.5, 0.0, 0.0, 1.0, 1.0, 2.0])
    np.testing.assert_array_equal(g.node_features[1], [2.5, 0.5, 2.0, 0.0, 3.0, 1.0, 2.0])


def test_brute_force_equivalence_random():
    stream = Rng(0).stream("design")
    for _ in range(100):
        attrs, placement = random_netlist(stream)
        g = build_graph(attrs, placement)
        np.testing.assert_array_equal(g.adjacency(), brute_force_adjacency(attrs))


def test_design_graphs_match_oracle():
    for seed in range(5):
        d = generate_design(seed, 16, 16, 20, 15)
        attrs, placement = netlist_from_design(d)
        g = build_graph(attrs, placement)
        np.testing.assert_array_equal(g.adjacency(), brute_force_adjacency(attrs))


def test_star_fallback_above_fanout_cap():
    n = 10
    attrs = NetlistAttributes(
        pin_attr=[(f"p{v}", 0, v) for v in range(n)],
        net_attr={0: "big"},
        node_attr={v: (f"i{v}", "CELL") for v in range(n)},
    )
    placement = {v: (float(v), 0.0, float(v) + 1.0, 1.0) for v in range(n)}
    g = build_graph(attrs, placement, fanout_cap=4)
    assert sorted(g.edges) == [(0, v) for v in range(1, n)]
    # and matches the oracle with the same cap
    np.testing.assert_array_equal(g.adjacency(), brute_force_adjacency(attrs, fanout_cap=4))


def test_edges_sorted_unique_no_self_loops():
    d = generate_design(3, 16, 16, 40, 30)
    attrs, placement = netlist_from_design(d)
    g = build_graph(attrs, placement)
    report = validate_graph(g)
    assert report["violations"] == []
    assert report["n_nodes"] == 40
    assert sum(k * v for k, v in report["degree_histogram"].items()) == 2 * report["n_edges"]


def test_degenerate_design_rejected():
    attrs = NetlistAttributes(
        pin_attr=[("a", 0, 0), ("b", 0, 1)],
        net_attr={0: "n"},
        node_attr={0: ("i0", "C"), 1: ("i1", "C")},
    )
    placement = {0: (0.0, 0.0, 0.0, 0.0), 1: (0.0, 0.0, 0.0, 0.0)}
    with pytest.raises(DegenerateDesignError):
        build_graph(attrs, placement)


def test_dangling_references_rejected():
    with pytest.raises(GraphError):
        NetlistAttributes([("p", 5, 0)], {0: "n"}, {0: ("i", "C")}).validate()
    with pytest.raises(GraphError):
        NetlistAttributes([("p", 0, 5)], {0: "n"}, {0: ("i", "C")}).validate()


def test_non_dense_indices_rejected():
    with pytest.raises(GraphError):
        NetlistAttributes([], {}, {0: ("a", "C"), 2: ("b", "C")}).validate()


def test_missing_placement_rejected():
    attrs = NetlistAttributes([("p", 0, 0), ("q", 0, 1)], {0: "n"}, {0: ("a", "C"), 1: ("b", "C")})
    with pytest.raises(GraphError):
        build_graph(attrs, {0: (0.0, 0.0, 1.0, 1.0)})


def test_json_roundtrip():
    d = generate_design(4, 16, 16, 20, 15)
    attrs, placement = netlist_from_design(d)
    g = build_graph(attrs, placement)
    g2 = DesignGraph.from_json(g.to_json())
    np.testing.assert_array_equal(g2.node_features, g.node_features)
    assert g2.edges == g.edges


def test_normalize_node_features():
    feats = np.array([[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]])
    out = normalize_node_features(feats)
    np.testing.assert_array_equal(out[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(out[:, 1], 0.0)  # constant column -> 0


def test_degrees_and_adjacency_consistent():
    d = generate_design(5, 16, 16, 30, 25)
    attrs, placement = netlist_from_design(d)
    g = build_graph(attrs, placement)
    np.testing.assert_array_equal(g.degrees(), g.adjacency().sum(axis=1).astype(int))
