"""Netlist graph construction from pin/net/node attribute arrays.

Two instances are connected iff they share at least one net. Nets are
clique-expanded; nets touching more than ``fanout_cap`` instances fall back
to a star rooted at the lowest node index to bound edge count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

FANOUT_CAP = 64


class GraphError(ValueError):
    pass


class DegenerateDesignError(GraphError):
    """All-zero placements cannot produce geometric node features."""


@dataclass
class NetlistAttributes:
    pin_attr: list[tuple[str, int, int]]  # (pin_name, net_index, node_index)
    net_attr: dict[int, str]  # net_index -> net_name
    node_attr: dict[int, tuple[str, str]]  # node_index -> (instance_name, cell_type)

    def validate(self) -> None:
        for name, net, node in self.pin_attr:
            if net not in self.net_attr:
                raise GraphError(f"pin {name}: dangling net index {net}")
            if node not in self.node_attr:
                raise GraphError(f"pin {name}: dangling node index {node}")
        for m, label in (("net", self.net_attr), ("node", self.node_attr)):
            if label and sorted(label) != list(range(len(label))):
                raise GraphError(f"{m} indices are not dense 0..n-1")


@dataclass
class DesignGraph:
    node_features: np.ndarray  # N x 7 rows [c_x, c_y, l, b, r, t, p]
    edges: list[tuple[int, int]]  # undirected, i < j, no duplicates

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def to_json(self) -> str:
        return json.dumps(
            {
                "nodes": [[float(v) for v in row] for row in self.node_features],
                "edges": [[int(i), int(j)] for i, j in self.edges],
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "DesignGraph":
        doc = json.loads(text)
        return DesignGraph(
            node_features=np.asarray(doc["nodes"], dtype=np.float64).reshape(len(doc["nodes"]), 7),
            edges=[tuple(e) for e in doc["edges"]],
        )


def build_graph(
    attrs: NetlistAttributes,
    placement: dict[int, tuple[float, float, float, float]],
    fanout_cap: int = FANOUT_CAP,
) -> DesignGraph:
    """Edges between instances sharing a net; node rows [c_x,c_y,l,b,r,t,p]."""
    attrs.validate()
    n = len(attrs.node_attr)
    for node in range(n):
        if node not in placement:
            raise GraphError(f"node {node} missing placement")

    if n > 0 and all(not any(placement[v]) for v in range(n)):
        raise DegenerateDesignError("all instance bounding boxes are zero")

    pin_counts = np.zeros(n, dtype=np.int64)
    net_members: dict[int, set[int]] = {k: set() for k in attrs.net_attr}
    for _, net, node in attrs.pin_attr:
        pin_counts[node] += 1
        net_members[net].add(node)

    edges: set[tuple[int, int]] = set()
    for net in sorted(net_members):
        members = sorted(net_members[net])
        if len(members) < 2:
            continue
        if len(members) > fanout_cap:
            hub = members[0]
            for m in members[1:]:
                edges.add((hub, m))
        else:
            for a_i in range(len(members)):
                for b_i in range(a_i + 1, len(members)):
                    edges.add((members[a_i], members[b_i]))

    feats = np.zeros((n, 7), dtype=np.float64)
    for v in range(n):
        l, b, r, t = placement[v]
        feats[v] = [(l + r) / 2.0, (b + t) / 2.0, l, b, r, t, pin_counts[v]]
    return DesignGraph(node_features=feats, edges=sorted(edges))


def validate_graph(g: DesignGraph) -> dict:
    """Check all graph invariants; returns a report instead of throwing."""
    violations = []
    n = g.n_nodes
    seen = set()
    for i, j in g.edges:
        if i == j:
            violations.append(f"self-loop at node {i}")
        if not (0 <= i < n and 0 <= j < n):
            violations.append(f"edge ({i},{j}) out of range")
            continue
        if i > j:
            violations.append(f"edge ({i},{j}) not stored with i<j")
        key = (min(i, j), max(i, j))
        if key in seen:
            violations.append(f"duplicate edge {key}")
        seen.add(key)
    deg = g.degrees()
    hist: dict[int, int] = {}
    for d in deg.tolist():
        hist[d] = hist.get(d, 0) + 1
    return {
        "violations": violations,
        "n_nodes": n,
        "n_edges": len(g.edges),
        "degree_histogram": hist,
    }


def netlist_from_design(design) -> tuple[NetlistAttributes, dict]:
    """Derive pin/net/node attribute arrays and placement from a design."""
    pin_attr = []
    for net in design.nets:
        for k, inst_id in enumerate(net.instance_ids):
            pin_attr.append((f"{net.name}_p{k}", net.id, inst_id))
    attrs = NetlistAttributes(
        pin_attr=pin_attr,
        net_attr={net.id: net.name for net in design.nets},
        node_attr={inst.id: (f"inst_{inst.id}", inst.cell_type) for inst in design.instances},
    )
    placement = {inst.id: tuple(inst.bbox) for inst in design.instances}
    return attrs, placement


def normalize_node_features(feats: np.ndarray) -> np.ndarray:
    """Per-design min-max normalization of each node-feature column."""
    out = np.zeros_like(feats)
    for c in range(feats.shape[1]):
        lo, hi = feats[:, c].min(), feats[:, c].max()
        if hi > lo:
            out[:, c] = (feats[:, c] - lo) / (hi - lo)
    return out
