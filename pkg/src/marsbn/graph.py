"""Directed acyclic graphs over integer-indexed nodes, plus edge-list file IO."""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence


class CycleError(ValueError):
    pass


@dataclass(frozen=True)
class Dag:
    """A DAG stored as one parent set per node.

    ``parents[i]`` is the frozenset of node indices with an edge into ``i``.
    Construction verifies acyclicity.
    """

    parents: tuple[frozenset[int], ...]

    def __post_init__(self):
        n = len(self.parents)
        fixed = tuple(frozenset(int(p) for p in ps) for ps in self.parents)
        object.__setattr__(self, "parents", fixed)
        for i, ps in enumerate(fixed):
            if i in ps:
                raise CycleError(f"self loop on node {i}")
            bad = [p for p in ps if not 0 <= p < n]
            if bad:
                raise ValueError(f"node {i} has out-of-range parents {sorted(bad)}")
        if topological_order(fixed) is None:
            raise CycleError("parent assignment contains a directed cycle")

    @classmethod
    def empty(cls, n: int) -> "Dag":
        return cls(tuple(frozenset() for _ in range(n)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        ps: list[set[int]] = [set() for _ in range(n)]
        for a, b in edges:
            ps[b].add(a)
        return cls(tuple(frozenset(p) for p in ps))

    @property
    def n(self) -> int:
        return len(self.parents)

    def edges(self) -> list[tuple[int, int]]:
        """Edges as (parent, child), child-major then parent index."""
        return [(p, c) for c in range(self.n) for p in sorted(self.parents[c])]

    @property
    def n_edges(self) -> int:
        return sum(len(ps) for ps in self.parents)

    def children(self) -> list[set[int]]:
        ch: list[set[int]] = [set() for _ in range(self.n)]
        for p, c in self.edges():
            ch[p].add(c)
        return ch

    def topological_order(self) -> list[int]:
        order = topological_order(self.parents)
        assert order is not None
        return order

    def skeleton(self) -> set[frozenset[int]]:
        return {frozenset(e) for e in self.edges()}

    def v_structures(self) -> set[tuple[int, int, int]]:
        """Triples (a, c, b) with a < b, a -> c <- b and a, b non-adjacent."""
        skel = self.skeleton()
        out = set()
        for c, ps in enumerate(self.parents):
            srt = sorted(ps)
            for i, a in enumerate(srt):
                for b in srt[i + 1:]:
                    if frozenset((a, b)) not in skel:
                        out.add((a, c, b))
        return out


def topological_order(parents: Sequence[Iterable[int]]) -> list[int] | None:
    """Kahn's algorithm with smallest-index-first; None if there is a cycle."""

    n = len(parents)
    indeg = [0] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for c, ps in enumerate(parents):
        for p in ps:
            indeg[c] += 1
            children[p].append(c)
    heap = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    return order if len(order) == n else None


def is_acyclic(parents: Sequence[Iterable[int]]) -> bool:
    return topological_order(parents) is not None


def descendants(children: Sequence[Iterable[int]], v: int) -> set[int]:
    """Nodes reachable from ``v`` (excluding ``v`` unless on a cycle)."""
    seen: set[int] = set()
    queue = deque(children[v])
    while queue:
        u = queue.popleft()
        if u in seen:
            continue
        seen.add(u)
        queue.extend(children[u])
    return seen


def write_edges(dag: Dag, names: Sequence[str], path) -> None:
    """Edge list, one ``parent child`` per line; isolated nodes listed alone."""
    lines = []
    touched = set()
    for p, c in dag.edges():
        lines.append(f"{names[p]} {names[c]}")
        touched.update((p, c))
    for i in range(dag.n):
        if i not in touched:
            lines.append(names[i])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(line + "\n" for line in lines))


def read_edges(path, names: Sequence[str] | None = None) -> tuple[Dag, list[str]]:
    """Read an edge-list file.

    If ``names`` is given, node indices follow it and unknown names are an
    error. Otherwise names are taken in order of first appearance.
    """
    order: list[str] = list(names) if names is not None else []
    index = {nm: i for i, nm in enumerate(order)}
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) > 2:
                raise ValueError(f"{path}:{lineno}: expected 'parent child' or a single node name")
            for t in toks:
                if t not in index:
                    if names is not None:
                        raise ValueError(f"{path}:{lineno}: unknown node name {t!r}")
                    index[t] = len(order)
                    order.append(t)
            if len(toks) == 2:
                pairs.append((index[toks[0]], index[toks[1]]))
    return Dag.from_edges(len(order), pairs), order
