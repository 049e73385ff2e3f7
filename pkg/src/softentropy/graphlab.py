"""Mutation graph over the sampled neighbourhood and its surviving subgraph.

Two programs are adjacent when their mutation sets differ by exactly one
mutation. The implemented program is the node with the empty set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .matrix import SurvivorSet
from .mutagen import Mutant

IMPL = "impl"


class UnknownNode(KeyError):
    pass


@dataclass(frozen=True)
class MutationGraph:
    nodes: tuple[str, ...]
    edges: frozenset  # frozenset of 2-tuples (a, b) with a < b in node order

    def adjacency(self) -> dict[str, set[str]]:
        adj = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def edge_list(self) -> list[tuple[str, str]]:
        pos = {n: i for i, n in enumerate(self.nodes)}
        return sorted(self.edges, key=lambda e: (pos[e[0]], pos[e[1]]))

    def to_text(self) -> str:
        """One ``u v`` edge per line, then isolated nodes on their own line."""
        lines = [f"{a} {b}" for a, b in self.edge_list()]
        touched = {n for e in self.edges for n in e}
        lines += [n for n in self.nodes if n not in touched]
        return "\n".join(lines) + ("\n" if lines else "")


def _edge(a: str, b: str, pos: dict) -> tuple[str, str]:
    return (a, b) if pos[a] < pos[b] else (b, a)


def build_graph(mutants: Sequence[Mutant], include_impl: bool = True) -> MutationGraph:
    ids = [m.id for m in mutants]
    if len(set(ids)) != len(ids):
        raise ValueError("mutant ids must be unique")
    if IMPL in ids:
        raise ValueError(f"{IMPL!r} is reserved for the implemented program")
    nodes = ([IMPL] if include_impl else []) + sorted(ids)
    pos = {n: i for i, n in enumerate(nodes)}
    by_keys = {m.key_set: m.id for m in mutants}
    if include_impl:
        by_keys[frozenset()] = IMPL
    edges = set()
    for m in mutants:
        keys = m.key_set
        for k in keys:
            other = by_keys.get(keys - {k})
            if other is not None:
                edges.add(_edge(m.id, other, pos))
    return MutationGraph(tuple(nodes), frozenset(edges))


def induced_subgraph(graph: MutationGraph, keep: Iterable[str]) -> MutationGraph:
    keep = set(keep)
    unknown = keep - set(graph.nodes)
    if unknown:
        raise UnknownNode(sorted(unknown)[0])
    nodes = tuple(n for n in graph.nodes if n in keep)
    edges = frozenset(e for e in graph.edges if e[0] in keep and e[1] in keep)
    return MutationGraph(nodes, edges)


def surviving_subgraph(
    graph: MutationGraph, survivors: SurvivorSet, include_uncertain: bool = False
) -> MutationGraph:
    """Subgraph on confirmed survivors (plus uncertain ones if asked).

    The implemented program, when present in ``graph``, always survives.
    """
    keep = set(survivors.confirmed)
    if include_uncertain:
        keep |= set(survivors.uncertain)
    if IMPL in graph.nodes:
        keep.add(IMPL)
    return induced_subgraph(graph, keep)


@dataclass(frozen=True)
class ComponentStats:
    component_count: int
    largest_component_size: int
    component_sizes: tuple[int, ...]
    impl_component_size: int | None

    @property
    def contains_impl(self) -> bool:
        return self.impl_component_size is not None

    def to_json(self) -> dict:
        return {
            "component_count": self.component_count,
            "largest_component_size": self.largest_component_size,
            "component_sizes": list(self.component_sizes),
            "contains_impl": self.contains_impl,
            "impl_component_size": self.impl_component_size,
        }


def component_labels(graph: MutationGraph) -> dict[str, int]:
    # sorted node order makes labels independent of how the graph was built
    nodes = sorted(graph.nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    src = np.array([pos[a] for a, _ in graph.edges], dtype=np.int64)
    dst = np.array([pos[b] for _, b in graph.edges], dtype=np.int64)
    labels = kernels.label_components(len(nodes), src, dst)
    return {n: int(labels[i]) for n, i in pos.items()}


def component_stats(graph: MutationGraph) -> ComponentStats:
    labels = component_labels(graph)
    if not labels:
        return ComponentStats(0, 0, (), None)
    sizes: dict[int, int] = {}
    for lab in labels.values():
        sizes[lab] = sizes.get(lab, 0) + 1
    ordered = tuple(sorted(sizes.values(), reverse=True))
    impl = sizes[labels[IMPL]] if IMPL in labels else None
    return ComponentStats(len(ordered), ordered[0], ordered, impl)
