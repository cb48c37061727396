"""Spanning-tree coordinates, orbit normal forms and closure tests.

A spanning tree turns an edge assignment into frame data along the tree
plus one free holonomy per leftover edge: value(e) factors as
frame(dst) h(loop_e) frame(src)^-1 where loop_e runs root -> src, across e,
and back down the tree.  The decomposition is exact and gauge covariant,
so every question about gauge orbits reduces to simultaneous conjugation
of the loop holonomies at the root.

orbit_representative picks a canonical point on such a conjugation orbit.
closure_membership decides (at desk scale, up to explicit search bounds)
whether prescribed loop values can arise from connections at all: abelian
targets kill every word with vanishing edge exponents, semisimple targets
impose only functoriality, and central quotients inherit both through a
finite search over center lifts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import block_diag

from . import matrixgroups as mg
from .connections import (
    GeneralizedConnection,
    SmoothConnection,
    holonomy_general,
    holonomy_smooth_path,
    interpolate_connection,
    InterpolationTarget,
)
from .pathgroupoid import (
    Graph,
    PathWord,
    abelianize,
    compose,
    depends_on,
    edge_word,
    inverse,
    spanning_tree,
    tree_edge_ids,
    word_to_tokens,
    _id_key,
)

CLUSTER_ATOL = 1e-6
ENTRY_ATOL = 1e-7


# ---------------------------------------------------------------------------
# spanning-tree coordinates

@dataclass(frozen=True)
class TreeBasis:
    """Spanning tree of a graph together with its loop generators."""

    graph: Graph
    vertex_words: Mapping
    tree_edges: frozenset
    loops: Mapping
    loop_ids: tuple


def tree_basis(graph: Graph) -> TreeBasis:
    tree = spanning_tree(graph)
    edges = tree_edge_ids(graph, tree)
    loop_ids = tuple(sorted((eid for eid in graph.edges if eid not in edges), key=_id_key))
    loops = {}
    for eid in loop_ids:
        e = graph.edges[eid]
        loops[eid] = compose(inverse(tree[e.dst]),
                             compose(edge_word(graph, eid), tree[e.src]))
    return TreeBasis(graph, tree, frozenset(edges), loops, loop_ids)


@dataclass(frozen=True)
class TreeDecomposition:
    basis: TreeBasis
    frames: Mapping
    loop_values: Mapping


def tree_decompose(basis: TreeBasis, conn: GeneralizedConnection) -> TreeDecomposition:
    frames = {v: holonomy_general(conn, w) for v, w in basis.vertex_words.items()}
    loop_values = {eid: holonomy_general(conn, w) for eid, w in basis.loops.items()}
    return TreeDecomposition(basis, frames, loop_values)


def tree_reconstruct(basis: TreeBasis, descriptor, loop_values: Mapping,
                     frames: Mapping = None) -> GeneralizedConnection:
    """Rebuild the edge assignment from tree frames and loop holonomies.

    Tree edges carry frame(dst)^-1-free transport (identity loop part), so
    omitting ``frames`` lands on the canonical section where every tree edge
    holds the identity.
    """
    extra = set(loop_values) - set(basis.loop_ids)
    missing = set(basis.loop_ids) - set(loop_values)
    if extra or missing:
        raise ValueError(f"loop values must cover exactly the non-tree edges "
                         f"(missing {sorted(map(str, missing))}, extra {sorted(map(str, extra))})")
    ident = mg.identity(descriptor)

    def as_element(v):
        return v if isinstance(v, mg.GroupElement) else mg.GroupElement(descriptor, v)

    if frames is None:
        frame = {v: ident for v in basis.graph.vertices}
    else:
        frame = {v: as_element(frames[v]) for v in basis.graph.vertices}
    values = {}
    for eid, e in basis.graph.edges.items():
        h = as_element(loop_values[eid]) if eid in basis.loops else ident
        values[eid] = mg.mul(mg.mul(frame[e.dst], h), mg.inv(frame[e.src]))
    return GeneralizedConnection(basis.graph, descriptor, values, check=False)


# ---------------------------------------------------------------------------
# canonical representatives of conjugation orbits

def _split_clusters(values: np.ndarray, tol: float):
    """Group sorted real values into clusters separated by gaps > tol."""
    order = np.argsort(values, kind="stable")
    groups = [[order[0]]]
    for idx in order[1:]:
        if values[idx] - values[groups[-1][-1]] <= tol:
            groups[-1].append(idx)
        else:
            groups.append([idx])
    return groups


def _refine_frame(mats: np.ndarray, tol: float) -> np.ndarray:
    """Unitary V making every generator block-diagonal with sorted spectra.

    Blocks are refined generator by generator, first by the hermitian part
    of the compression, then by the skew part; indices inside a finished
    block see every generator as a scalar.
    """
    n = mats.shape[-1]
    V = np.eye(n, dtype=complex)
    blocks = [list(range(n))]
    for g in mats:
        for use_herm in (True, False):
            refined = []
            for B in blocks:
                if len(B) == 1:
                    refined.append(B)
                    continue
                C = (V.conj().T @ g @ V)[np.ix_(B, B)]
                H = 0.5 * (C + C.conj().T) if use_herm else -0.5j * (C - C.conj().T)
                w, U = np.linalg.eigh(H)
                if w[-1] - w[0] <= tol:
                    refined.append(B)
                    continue
                Vb = V[:, B] @ U
                V = V.copy()
                V[:, B] = Vb
                for cluster in _split_clusters(w, tol):
                    refined.append([B[i] for i in cluster])
            blocks = refined
    return V


def _fix_phases(mats: np.ndarray, tol: float) -> np.ndarray:
    """Diagonal phases making the first significant entries real positive.

    Spreads outward from index 0 through significant off-diagonal entries,
    scanning generators in order; indices never reached keep phase one.
    """
    n = mats.shape[-1]
    phase = np.ones(n, dtype=complex)
    known = np.zeros(n, dtype=bool)
    known[0] = True
    changed = True
    while changed:
        changed = False
        for g in mats:
            for r in range(n):
                for c in range(n):
                    if r == c or abs(g[r, c]) <= tol:
                        continue
                    if known[r] and not known[c]:
                        phase[c] = phase[r] * np.conj(g[r, c]) / abs(g[r, c])
                        known[c] = True
                        changed = True
                    elif known[c] and not known[r]:
                        phase[r] = g[r, c] * phase[c] / abs(g[r, c])
                        known[r] = True
                        changed = True
    # anchor any indices in unreached components
    for r in range(n):
        if not known[r]:
            phase[r] = 1.0
    return phase


def _unitary_representative(mats: np.ndarray, tol: float) -> np.ndarray:
    V = _refine_frame(mats, tol)
    conj = np.einsum("ij,kjl,lm->kim", V.conj().T, mats, V)
    phase = _fix_phases(conj, ENTRY_ATOL)
    return np.conj(phase)[None, :, None] * conj * phase[None, None, :]


def _stack_key(mats: np.ndarray) -> np.ndarray:
    flat = mats.reshape(-1)
    return np.stack([flat.real, flat.imag], axis=-1).reshape(-1)


def _stack_lex_less(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    ka, kb = _stack_key(a), _stack_key(b)
    diff = ka - kb
    sig = np.abs(diff) > tol
    if not np.any(sig):
        return False
    return diff[np.argmax(sig)] < 0


def _as_matrices(values) -> np.ndarray:
    return np.asarray([v.matrix if isinstance(v, mg.GroupElement) else v for v in values],
                      dtype=complex)


def orbit_representative(descriptor, values, tol: float = CLUSTER_ATOL):
    """Canonical point on the simultaneous-conjugation orbit of a tuple.

    Conjugation-invariant by construction for tuples whose refinement ends
    in singleton blocks (generic tuples, and any tuple some generator of
    which separates the spectrum), and for tuples of scalars, which are
    fixed points of conjugation anyway.
    """
    mats = _as_matrices(values)
    if mats.ndim != 3 or mats.shape[0] == 0:
        raise ValueError("need a nonempty stack of square matrices")

    if isinstance(descriptor, mg.Torus):
        out = mats
    elif isinstance(descriptor, (mg.Unitary, mg.SpecialUnitary)):
        out = _unitary_representative(mats, tol)
    elif isinstance(descriptor, mg.ProductGroup):
        parts = []
        for sl, f in mg.block_slices(descriptor):
            sub = orbit_representative(f, mats[:, sl, sl], tol)
            parts.append(_as_matrices(sub))
        out = np.array([block_diag(*[p[k] for p in parts])
                        for k in range(mats.shape[0])])
    elif isinstance(descriptor, mg.CentralQuotient):
        center = descriptor.center_matrices()
        best = None
        for choice in itertools.product(range(len(center)), repeat=mats.shape[0]):
            shifted = np.array([center[z] @ m for z, m in zip(choice, mats)])
            cand = _as_matrices(orbit_representative(descriptor.base, shifted, tol))
            if best is None or _stack_lex_less(cand, best):
                best = cand
        out = best
    else:
        raise TypeError(f"no representative rule for {type(descriptor).__name__}")
    return [mg.GroupElement(descriptor, m, check=False) for m in out]


# ---------------------------------------------------------------------------
# interpolation experiments

@dataclass(frozen=True)
class ApproximationReport:
    experiment: str
    descriptor: dict
    seed: int
    errors: tuple
    bound: float
    verdict: bool

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "descriptor": self.descriptor,
            "seed": self.seed,
            "errors": list(self.errors),
            "max_error": max(self.errors),
            "bound": self.bound,
            "verdict": bool(self.verdict),
        }


def default_windows(graph: Graph, words: Sequence[PathWord]) -> list:
    """Interior of each word's final edge, a natural private segment."""
    out = []
    for w in words:
        if w.is_unit():
            raise ValueError("unit words have no window")
        counts = []
        for eid, _ in w.letters:
            curve = graph.edges[eid].curve
            counts.append(len(curve) if curve is not None else 2)
        total = sum(counts) - (len(counts) - 1) - 1  # last point index
        last = counts[-1]
        out.append((total - last + 2, total))
    return out


def approximation_experiment(graph: Graph, words: Sequence[PathWord], descriptor,
                             seed: int, windows: Sequence = None,
                             bound: float = 1e-6, label: str = "interpolation",
                             clearance: float = 0.7,
                             steps: int = 8, tol: float = 1e-9) -> ApproximationReport:
    """Draw Haar targets, interpolate, and measure the holonomy errors."""
    rng = np.random.default_rng(seed)
    targets_mats = mg.haar_batch(descriptor, len(words), rng)
    if windows is None:
        windows = default_windows(graph, words)
    targets = [InterpolationTarget(w, mg.GroupElement(descriptor, m, check=False), tuple(win))
               for w, m, win in zip(words, targets_mats, windows)]
    conn = interpolate_connection(graph, targets, clearance=clearance)
    errors = []
    for t in targets:
        got = holonomy_smooth_path(conn, graph, t.word, steps, tol)
        errors.append(float(mg.distance(got, t.value)))
    return ApproximationReport(label, mg.descriptor_to_dict(descriptor), seed,
                               tuple(errors), bound, max(errors) <= bound)


# ---------------------------------------------------------------------------
# the abelian obstruction

def commutator_word(a: PathWord, b: PathWord) -> PathWord:
    """The loop a b a^-1 b^-1 (walked in that order)."""
    return compose(inverse(b), compose(inverse(a), compose(b, a)))


_QI = np.array([[1j, 0.0], [0.0, -1j]])
_QJ = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class ObstructionWitness:
    """A zero-exponent loop that abelian connections cannot move.

    ``word`` retraces every edge equally often in both directions, so any
    connection with commuting values holds it at the identity; the packaged
    nonabelian edge assignment sends it to minus the identity instead,
    which is as far from forced as it gets.
    """

    graph: Graph
    loop_a: PathWord
    loop_b: PathWord
    word: PathWord
    nonabelian_connection: GeneralizedConnection
    nonabelian_defect: float

    def abelian_defect(self, conn, graph: Graph = None,
                       steps: int = 8, tol: float = 1e-9) -> float:
        """Distance of the witness word's holonomy from the identity."""
        if isinstance(conn, GeneralizedConnection):
            h = holonomy_general(conn, self.word)
        elif isinstance(conn, SmoothConnection):
            h = holonomy_smooth_path(conn, graph if graph is not None else self.graph,
                                     self.word, steps, tol)
        else:
            raise TypeError(f"cannot evaluate holonomy of {type(conn).__name__}")
        return float(mg.distance(h, mg.identity(h.descriptor)))

    def to_dict(self) -> dict:
        return {
            "word": word_to_tokens(self.word),
            "abelianization": {},
            "loop_a": word_to_tokens(self.loop_a),
            "loop_b": word_to_tokens(self.loop_b),
            "nonabelian_defect": self.nonabelian_defect,
        }


def abelian_obstruction_witness(graph: Graph) -> ObstructionWitness:
    """Commutator of the first two tree-basis loops, with a nonabelian foil."""
    basis = tree_basis(graph)
    if len(basis.loop_ids) < 2:
        raise ValueError("need at least two independent loops for a commutator")
    ea, eb = basis.loop_ids[0], basis.loop_ids[1]
    la, lb = basis.loops[ea], basis.loops[eb]
    word = commutator_word(la, lb)
    if word.is_unit():
        raise ValueError("tree-basis loops reduced to a trivial commutator")
    if abelianize(word):
        raise AssertionError("commutators always have zero edge exponents")
    su2 = mg.SpecialUnitary(2)
    loop_values = {eid: mg.identity(su2) for eid in basis.loop_ids}
    loop_values[ea] = mg.GroupElement(su2, _QI)
    loop_values[eb] = mg.GroupElement(su2, _QJ)
    conn = tree_reconstruct(basis, su2, loop_values)
    h = holonomy_general(conn, word)
    defect = float(mg.distance(h, mg.identity(su2)))
    return ObstructionWitness(graph, la, lb, word, conn, defect)


# ---------------------------------------------------------------------------
# closure membership

@dataclass(frozen=True)
class LoopAssignment:
    """Prescribed holonomies on a family of loops at a common basepoint."""

    graph: Graph
    loops: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "loops", tuple(self.loops))
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.loops) != len(self.values):
            raise ValueError("one value per loop")
        if not self.loops:
            raise ValueError("empty loop family")
        base = {self.loops[0].source}
        for w in self.loops:
            if not w.is_loop():
                raise ValueError(f"{w!r} is not a loop")
            base.add(w.source)
        if len(base) != 1:
            raise ValueError("loops must share a single basepoint")
        descs = {v.descriptor for v in self.values}
        if len(descs) != 1:
            raise mg.DescriptorMismatchError("values mix group descriptors")

    @property
    def descriptor(self):
        return self.values[0].descriptor


@dataclass(frozen=True)
class ClosureVerdict:
    member: bool
    mode: str
    certified: bool
    witness: tuple
    detail: str
    checked: int

    def to_dict(self) -> dict:
        return {
            "member": bool(self.member),
            "mode": self.mode,
            "certified": bool(self.certified),
            "witness": list(self.witness) if self.witness else None,
            "detail": self.detail,
            "checked": self.checked,
        }


def closure_mode(descriptor) -> str:
    if isinstance(descriptor, mg.Torus):
        return "torus-abelianized"
    if isinstance(descriptor, mg.SpecialUnitary):
        return "semisimple-full"
    if isinstance(descriptor, mg.Unitary):
        return "unitary-determinant"
    if isinstance(descriptor, mg.ProductGroup):
        return "product-split"
    if isinstance(descriptor, mg.CentralQuotient):
        return "quotient-pushforward"
    raise TypeError(f"no closure rule for {type(descriptor).__name__}")


def _exponent_vectors(k: int, bound: int):
    """All nonzero integer vectors with L1 norm at most ``bound``."""
    rng = range(-bound, bound + 1)
    for m in itertools.product(rng, repeat=k):
        if m == (0,) * k:
            continue
        if sum(abs(c) for c in m) <= bound:
            yield m


def _abelian_check(loops, diagonals, bound, tol, mode):
    """Zero-exponent words must multiply the abelian values to one.

    ``diagonals`` holds one complex vector of unit phases per loop; the
    value of an exponent vector m is the entrywise product of powers.
    """
    exps = [abelianize(w) for w in loops]
    edge_ids = sorted({eid for a in exps for eid in a}, key=_id_key)
    A = np.array([[a.get(eid, 0) for eid in edge_ids] for a in exps], dtype=int)
    diag = np.asarray(diagonals, dtype=complex)
    checked = 0
    for m in _exponent_vectors(len(loops), bound):
        if np.any(A.T @ np.asarray(m) != 0):
            continue
        checked += 1
        prod = np.prod(diag ** np.asarray(m)[:, None], axis=0)
        if np.max(np.abs(prod - 1.0)) > tol:
            return ClosureVerdict(False, mode, True, tuple(m),
                                  "zero-exponent word with nontrivial abelian value",
                                  checked)
    trivial_kernel = (len(edge_ids) > 0
                      and np.linalg.matrix_rank(A.astype(float)) == len(loops))
    detail = ("exponent relations have no nonzero solutions"
              if trivial_kernel else
              f"no violation among exponent vectors with L1 norm <= {bound}")
    return ClosureVerdict(True, mode, trivial_kernel, (), detail, checked)


def _functoriality_check(graph, loops, values, bound, tol, mode):
    """Loop values must respect word factorizations found within the bound."""
    checked = 0
    dependent = False
    for j, w in enumerate(loops):
        rest = [f for i, f in enumerate(loops) if i != j]
        dep = depends_on(graph, w, rest, bound)
        checked += 1
        if dep is None:
            continue
        dependent = True
        required = mg.identity(values[j].descriptor)
        for idx, o in dep:
            real = idx if idx < j else idx + 1
            v = values[real]
            required = mg.mul(required, v if o == 1 else mg.inv(v))
        if mg.distance(required, values[j]) > tol:
            return ClosureVerdict(False, mode, True,
                                  (j, tuple((idx if idx < j else idx + 1, o) for idx, o in dep)),
                                  "loop value contradicts a word factorization",
                                  checked)
    detail = ("family is independent within the search bound"
              if not dependent else
              "factorizations found within the bound are consistent")
    return ClosureVerdict(True, mode, not dependent, (), detail, checked)


def _loop_verdict(graph, loops, values, descriptor, bound, tol) -> ClosureVerdict:
    mode = closure_mode(descriptor)
    if isinstance(descriptor, mg.Torus):
        diags = [np.diagonal(v.matrix) for v in values]
        return _abelian_check(loops, diags, bound, tol, mode)
    if isinstance(descriptor, mg.SpecialUnitary):
        return _functoriality_check(graph, loops, values, bound, tol, mode)
    if isinstance(descriptor, mg.Unitary):
        fun = _functoriality_check(graph, loops, values, bound, tol, mode)
        if not fun.member:
            return fun
        dets = [np.array([np.linalg.det(v.matrix)]) for v in values]
        det_check = _abelian_check(loops, dets, bound, tol, mode)
        if not det_check.member:
            return ClosureVerdict(False, mode, True, det_check.witness,
                                  "zero-exponent word with nontrivial determinant",
                                  fun.checked + det_check.checked)
        return ClosureVerdict(True, mode, fun.certified and det_check.certified, (),
                              f"{fun.detail}; {det_check.detail}",
                              fun.checked + det_check.checked)
    if isinstance(descriptor, mg.ProductGroup):
        total = 0
        details = []
        certified = True
        for idx, (sl, factor) in enumerate(mg.block_slices(descriptor)):
            sub_values = [mg.GroupElement(factor, v.matrix[sl, sl], check=False)
                          for v in values]
            sub = _loop_verdict(graph, loops, sub_values, factor, bound, tol)
            total += sub.checked
            certified = certified and sub.certified
            details.append(f"factor {idx}: {sub.detail}")
            if not sub.member:
                return ClosureVerdict(False, mode, sub.certified,
                                      (idx,) + sub.witness,
                                      f"factor {idx}: {sub.detail}", total)
        return ClosureVerdict(True, mode, certified, (), "; ".join(details), total)
    if isinstance(descriptor, mg.CentralQuotient):
        center = descriptor.center_matrices()
        k = len(loops)
        if len(center) ** k > 4096:
            raise ValueError("too many center lifts to search exhaustively")
        total = 0
        certified = True
        first_failure = None
        for choice in itertools.product(range(len(center)), repeat=k):
            lifted = [mg.GroupElement(descriptor.base, center[z] @ v.matrix, check=False)
                      for z, v in zip(choice, values)]
            sub = _loop_verdict(graph, loops, lifted, descriptor.base, bound, tol)
            total += sub.checked
            if sub.member:
                return ClosureVerdict(True, mode, sub.certified, tuple(choice),
                                      f"lift {choice} works: {sub.detail}", total)
            certified = certified and sub.certified
            if first_failure is None:
                first_failure = sub
        return ClosureVerdict(False, mode, certified, first_failure.witness,
                              f"no center lift works; identity lift: {first_failure.detail}",
                              total)
    raise TypeError(f"no closure rule for {type(descriptor).__name__}")


def closure_membership(data, bound: int = 6, tol: float = 1e-8) -> ClosureVerdict:
    """Decide whether loop or edge data lies in the holonomy closure.

    Edge assignments always do: each mode's relations telescope on edges.
    Loop families are checked against the mode's relations up to the
    search ``bound``; ``certified`` records whether the search was
    conclusive or merely found nothing within the bound.
    """
    if isinstance(data, GeneralizedConnection):
        mode = closure_mode(data.descriptor)
        return ClosureVerdict(True, mode, True, (),
                              "edge assignments satisfy every closure relation "
                              "automatically", 0)
    if isinstance(data, LoopAssignment):
        return _loop_verdict(data.graph, data.loops, data.values,
                             data.descriptor, bound, tol)
    raise TypeError(f"cannot test closure membership of {type(data).__name__}")


def loop_assignment_to_dict(data: LoopAssignment) -> dict:
    return {
        "group": mg.descriptor_to_dict(data.descriptor),
        "basepoint": data.loops[0].source,
        "loops": [word_to_tokens(w) for w in data.loops],
        "values": [mg.matrix_to_pairs(v.matrix) for v in data.values],
    }


def loop_assignment_from_dict(graph: Graph, data: Mapping) -> LoopAssignment:
    from .pathgroupoid import word_from_tokens

    desc = mg.descriptor_from_dict(data["group"])
    loops = [word_from_tokens(graph, t, source=data.get("basepoint"))
             for t in data["loops"]]
    values = [mg.GroupElement(desc, mg.matrix_from_pairs(p)) for p in data["values"]]
    return LoopAssignment(graph, tuple(loops), tuple(values))
