"""Dependency graphs, Tarjan's strongly connected components and dependency levels."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DependencyGraph:
    """Vertices are model ids; an edge (j, i) means model i uses a value computed on j."""
    vertices: tuple
    edges: frozenset
    labels: dict = None  # (j, i) -> tuple of parameter names

    def successors(self, v):
        return sorted((e[1] for e in self.edges if e[0] == v), key=self.vertices.index)

    def predecessors(self, v):
        return sorted((e[0] for e in self.edges if e[1] == v), key=self.vertices.index)


def tarjan(vertices, successors):
    """Strongly connected components, each emitted after every component it reaches.

    Iterative, so deep graphs do not hit the recursion limit.  *successors*
    maps a vertex to an iterable of vertices.
    """
    index, low, on_stack = {}, {}, set()
    stack, out = [], []
    counter = 0
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(successors(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(successors(w))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


@dataclass(frozen=True)
class SccPartition:
    """SCCs in reverse topological order of the condensation, plus levels."""
    components: tuple  # tuple of frozensets
    component_of: dict  # vertex -> index into components
    levels: dict  # vertex -> dependency level

    def scc(self, v):
        return self.components[self.component_of[v]]

    def is_trivial(self, v, graph):
        comp = self.scc(v)
        return len(comp) == 1 and (v, v) not in graph.edges


def compute_sccs(g: DependencyGraph) -> SccPartition:
    succ = {v: g.successors(v) for v in g.vertices}
    comps = tarjan(g.vertices, lambda v: succ[v])
    order = {v: i for i, v in enumerate(g.vertices)}
    components = tuple(frozenset(c) for c in comps)
    comp_of = {v: i for i, c in enumerate(components) for v in c}
    # longest path into each component; emitted order is reverse topological,
    # so walk it backwards (sources first)
    depth = [0] * len(components)
    for ci in range(len(components) - 1, -1, -1):
        for v in sorted(components[ci], key=order.get):
            for w in succ[v]:
                cj = comp_of[w]
                if cj != ci:
                    depth[cj] = max(depth[cj], depth[ci] + 1)
    levels = {v: depth[comp_of[v]] for v in g.vertices}
    return SccPartition(components, comp_of, levels)


def to_dot(g: DependencyGraph, part: SccPartition, name="world") -> str:
    """Graphviz text with one cluster per SCC and edges labelled by parameter names."""
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;"]
    order = {v: i for i, v in enumerate(g.vertices)}
    comps = sorted(part.components, key=lambda c: min(order[v] for v in c))
    for i, comp in enumerate(comps):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f"    label={_quote('SCC ' + str(i))};")
        for v in sorted(comp, key=order.get):
            lines.append(f"    {_quote(v)} [label={_quote(f'{v} (level {part.levels[v]})')}];")
        lines.append("  }")
    for a, b in sorted(g.edges, key=lambda e: (order[e[0]], order[e[1]])):
        names = ", ".join((g.labels or {}).get((a, b), ()))
        lines.append(f"  {_quote(a)} -> {_quote(b)} [label={_quote(names)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _quote(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'
