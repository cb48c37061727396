"""Reduced edge words on a finite graph.

A finite directed multigraph with a marked basepoint carries a groupoid of
paths: words of oriented edges in which consecutive letters match head to
tail and no letter is immediately followed by its own inverse.  Words are
stored in traversal order (``letters[0]`` is walked first).  Composition is
written like operator application: ``compose(p, q)`` walks ``q`` first and
``p`` second, so holonomy maps defined later satisfy
``hol(compose(p, q)) == hol(p) @ hol(q)``.

Edges may be traversed against their direction; a letter is a pair
``(edge_id, orientation)`` with orientation ``+1`` (src to dst) or ``-1``.
Free cancellation of ``e . e^-1`` is confluent, so every word has a unique
reduced normal form regardless of cancellation order.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence


class CompositionError(ValueError):
    """Raised when adjacent letters or words do not match head to tail."""


class ConnectivityError(ValueError):
    """Raised by operations that need a connected graph."""


class UnknownEdgeError(KeyError):
    """Raised when a word refers to an edge id the graph does not have."""


def _id_key(i):
    # deterministic order for possibly mixed int/str ids
    return (0, i, "") if isinstance(i, int) else (1, 0, str(i))


@dataclass(frozen=True)
class Edge:
    id: object
    src: object
    dst: object
    curve: tuple | None = None  # optional chart polyline from src to dst


class Graph:
    """Finite directed multigraph with basepoint and optional chart geometry.

    Parameters
    ----------
    vertices : iterable of vertex ids
    edges : iterable of Edge (or (id, src, dst) tuples)
    basepoint : vertex id
    positions : optional mapping vertex id -> chart point (tuple of floats)

    Self-loops and parallel edges are allowed.  Vertex and edge ids must be
    hashable; edge ids must be unique.
    """

    def __init__(self, vertices, edges, basepoint, positions=None):
        self.vertices = tuple(vertices)
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex ids")
        vset = set(self.vertices)
        self.edges = {}
        for e in edges:
            if not isinstance(e, Edge):
                e = Edge(*e)
            if e.id in self.edges:
                raise ValueError(f"duplicate edge id {e.id!r}")
            if e.src not in vset or e.dst not in vset:
                raise ValueError(f"edge {e.id!r} has endpoint outside the vertex set")
            if e.curve is not None:
                e = Edge(e.id, e.src, e.dst, tuple(tuple(float(c) for c in pt) for pt in e.curve))
            self.edges[e.id] = e
        if basepoint not in vset:
            raise ValueError("basepoint is not a vertex")
        self.basepoint = basepoint
        self.positions = {v: tuple(float(c) for c in p) for v, p in (positions or {}).items()}
        incident = collections.defaultdict(list)
        for e in self.edges.values():
            incident[e.src].append(e.id)
            if e.dst != e.src:
                incident[e.dst].append(e.id)
        self._incident = {v: tuple(sorted(ids, key=_id_key)) for v, ids in incident.items()}

    def edge(self, eid) -> Edge:
        try:
            return self.edges[eid]
        except KeyError:
            raise UnknownEdgeError(f"no edge with id {eid!r}") from None

    def incident_edges(self, v) -> tuple:
        return self._incident.get(v, ())

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        seen = {self.vertices[0]}
        queue = collections.deque(seen)
        while queue:
            v = queue.popleft()
            for eid in self.incident_edges(v):
                e = self.edges[eid]
                w = e.dst if e.src == v else e.src
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == len(self.vertices)

    def __repr__(self):
        return (f"Graph({len(self.vertices)} vertices, {len(self.edges)} edges, "
                f"basepoint={self.basepoint!r})")


def letter_endpoints(graph: Graph, letter) -> tuple:
    """Source and range of a single oriented letter ``(edge_id, orientation)``."""
    eid, o = letter
    e = graph.edge(eid)
    if o == 1:
        return e.src, e.dst
    if o == -1:
        return e.dst, e.src
    raise ValueError(f"orientation must be +1 or -1, got {o!r}")


@dataclass(frozen=True)
class PathWord:
    """Reduced word of oriented edges with source/range bookkeeping.

    The unit at a vertex is the empty word with source == range.  Instances
    are immutable; build them with :func:`reduce_word`, :func:`edge_word`,
    :func:`unit`, :func:`compose` and :func:`inverse`.
    """

    letters: tuple
    source: object
    range: object

    def is_unit(self) -> bool:
        return not self.letters

    def is_loop(self) -> bool:
        return self.source == self.range

    def __len__(self) -> int:
        return len(self.letters)

    def __repr__(self):
        body = " ".join(f"{eid}" if o == 1 else f"{eid}^-1" for eid, o in self.letters)
        return f"<{self.source!r} --[{body}]--> {self.range!r}>"


def unit(graph: Graph, vertex) -> PathWord:
    if vertex not in set(graph.vertices):
        raise ValueError(f"{vertex!r} is not a vertex")
    return PathWord((), vertex, vertex)


def edge_word(graph: Graph, eid, orientation: int = 1) -> PathWord:
    s, r = letter_endpoints(graph, (eid, orientation))
    return PathWord(((eid, orientation),), s, r)


def reduce_word(graph: Graph, letters: Sequence, source=None) -> PathWord:
    """Reduce a raw letter sequence to its normal form.

    Checks that consecutive letters compose (range of letter k equals source
    of letter k+1) and cancels every adjacent ``e . e^-1`` pair.  Free
    cancellation is confluent, so a single left-to-right stack pass gives
    the unique normal form.  ``source`` is required only for the empty word.
    """
    letters = list(letters)
    if not letters:
        if source is None:
            raise ValueError("empty word needs an explicit source vertex")
        return unit(graph, source)
    s0, prev_r = letter_endpoints(graph, letters[0])
    if source is not None and source != s0:
        raise CompositionError(f"word starts at {s0!r}, expected {source!r}")
    for k in range(1, len(letters)):
        s, r = letter_endpoints(graph, letters[k])
        if s != prev_r:
            raise CompositionError(
                f"letters {k-1} and {k} do not compose: range {prev_r!r} != source {s!r}")
        prev_r = r
    stack = []
    for eid, o in letters:
        if stack and stack[-1][0] == eid and stack[-1][1] == -o:
            stack.pop()
        else:
            stack.append((eid, o))
    if not stack:
        return PathWord((), s0, s0)
    src, _ = letter_endpoints(graph, stack[0])
    _, rng = letter_endpoints(graph, stack[-1])
    return PathWord(tuple(stack), src, rng)


def compose(p: PathWord, q: PathWord) -> PathWord:
    """Compose two paths, walking ``q`` first; requires range(q) == source(p)."""
    if q.range != p.source:
        raise CompositionError(
            f"cannot compose: range {q.range!r} of the right word "
            f"!= source {p.source!r} of the left word")
    merged = list(q.letters) + list(p.letters)
    # only cancellations across the seam are possible, both inputs are reduced
    i = len(q.letters)
    while 0 < i < len(merged):
        a, b = merged[i - 1], merged[i]
        if a[0] == b[0] and a[1] == -b[1]:
            del merged[i - 1:i + 1]
            i -= 1
        else:
            break
    if not merged:
        return PathWord((), q.source, q.source)
    return PathWord(tuple(merged), q.source, p.range)


def compose_all(words: Sequence[PathWord]) -> PathWord:
    """Product of a left-to-right factor list (the rightmost factor walks first)."""
    if not words:
        raise ValueError("empty factor list")
    out = words[-1]
    for w in reversed(words[:-1]):
        out = compose(w, out)
    return out


def inverse(p: PathWord) -> PathWord:
    return PathWord(tuple((eid, -o) for eid, o in reversed(p.letters)), p.range, p.source)


def power(p: PathWord, k: int) -> PathWord:
    if not p.is_loop():
        raise CompositionError("powers need a loop")
    if k == 0:
        return PathWord((), p.source, p.source)
    base = p if k > 0 else inverse(p)
    out = base
    for _ in range(abs(k) - 1):
        out = compose(base, out)
    return out


def abelianize(p: PathWord) -> dict:
    """Net signed traversal count per edge; zero entries are dropped."""
    counts = collections.Counter()
    for eid, o in p.letters:
        counts[eid] += o
    return {eid: c for eid, c in counts.items() if c != 0}


def spanning_tree(graph: Graph) -> dict:
    """Breadth-first spanning tree rooted at the basepoint.

    Returns a map vertex -> PathWord from the basepoint to that vertex along
    tree edges.  Ties are broken by edge id, so the result is deterministic.
    Raises ConnectivityError if some vertex is unreachable.
    """
    root = graph.basepoint
    paths = {root: unit(graph, root)}
    queue = collections.deque([root])
    while queue:
        v = queue.popleft()
        for eid in graph.incident_edges(v):
            e = graph.edges[eid]
            w, o = (e.dst, 1) if e.src == v else (e.src, -1)
            if w not in paths:
                paths[w] = compose(edge_word(graph, eid, o), paths[v])
                queue.append(w)
    if len(paths) != len(graph.vertices):
        missing = [v for v in graph.vertices if v not in paths]
        raise ConnectivityError(f"vertices unreachable from basepoint: {missing!r}")
    return paths


def tree_edge_ids(graph: Graph, tree: Mapping) -> set:
    return {eid for p in tree.values() for eid, _ in p.letters}


def depends_on(graph: Graph, p: PathWord, family: Sequence[PathWord],
               bound: int):
    """Search for a factorization of ``p`` as a word in ``family`` members.

    Exhaustive breadth-first search over reduced factor sequences of length
    at most ``bound``.  Returns the factor list ``[(index, orientation), ...]``
    in product order (the last entry walks first), or None when no
    factorization with at most ``bound`` factors exists.
    """
    if bound < 0:
        raise ValueError("bound must be >= 0")
    if p.is_unit():
        return []
    factors = []
    for i, f in enumerate(family):
        factors.append((i, 1, f))
        factors.append((i, -1, inverse(f)))
    start = PathWord((), p.source, p.source)
    frontier = [(start, [])]
    seen = {(start.letters, start.range)}
    for _ in range(bound):
        nxt = []
        for word, hist in frontier:
            for i, o, f in factors:
                if hist and hist[-1] == (i, -o):
                    continue  # immediately cancelling factor, never shortest
                if f.source != word.range:
                    continue
                cand = compose(f, word)
                new_hist = hist + [(i, o)]
                if cand.letters == p.letters and cand.range == p.range:
                    return list(reversed(new_hist))
                key = (cand.letters, cand.range)
                if key not in seen:
                    seen.add(key)
                    nxt.append((cand, new_hist))
        frontier = nxt
        if not frontier:
            break
    return None


def is_independent_family(graph: Graph, family: Sequence[PathWord], bound: int) -> bool:
    """True when no member factors through the others within the given bound."""
    for k, p in enumerate(family):
        rest = [f for i, f in enumerate(family) if i != k]
        if depends_on(graph, p, rest, bound) is not None:
            return False
    return True


# ---------------------------------------------------------------------------
# serialization

def graph_from_dict(data: Mapping) -> Graph:
    """Build a Graph from the JSON document layout.

    Expected shape::

        {"vertices": [{"id": .., "pos": [..]?}, ...],
         "edges": [{"id": .., "src": .., "dst": .., "curve": [[..], ...]?}, ...],
         "basepoint": ..}

    The loaded graph must be connected.
    """
    try:
        vertices = [v["id"] for v in data["vertices"]]
        positions = {v["id"]: tuple(v["pos"]) for v in data["vertices"] if "pos" in v}
        edges = [Edge(e["id"], e["src"], e["dst"],
                      tuple(tuple(pt) for pt in e["curve"]) if "curve" in e else None)
                 for e in data["edges"]]
        basepoint = data["basepoint"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed graph document: {exc}") from exc
    g = Graph(vertices, edges, basepoint, positions)
    if not g.is_connected():
        raise ConnectivityError("graph document describes a disconnected graph")
    return g


def graph_to_dict(graph: Graph) -> dict:
    verts = []
    for v in graph.vertices:
        item = {"id": v}
        if v in graph.positions:
            item["pos"] = list(graph.positions[v])
        verts.append(item)
    edges = []
    for e in graph.edges.values():
        item = {"id": e.id, "src": e.src, "dst": e.dst}
        if e.curve is not None:
            item["curve"] = [list(pt) for pt in e.curve]
        edges.append(item)
    return {"vertices": verts, "edges": edges, "basepoint": graph.basepoint}


def word_to_tokens(p: PathWord) -> list:
    """Serialize a word as signed edge ids (ints stay ints, strings get a '-')."""
    out = []
    for eid, o in p.letters:
        if isinstance(eid, int):
            out.append(eid * o)
        else:
            out.append(str(eid) if o == 1 else "-" + str(eid))
    return out


def word_from_tokens(graph: Graph, tokens: Iterable, source=None) -> PathWord:
    letters = []
    for t in tokens:
        if isinstance(t, int):
            if t == 0:
                raise ValueError("0 is not a valid signed edge id")
            letters.append((abs(t), 1 if t > 0 else -1))
        else:
            t = str(t).strip()
            o = 1
            if t.endswith("^-1"):
                o, t = -1, t[:-3]
            elif t.startswith("-"):
                o, t = -1, t[1:]
            eid = int(t) if t.lstrip("-").isdigit() else t
            letters.append((eid, o))
    return reduce_word(graph, letters, source=source)
