"""Cylindrical functions of holonomies and their gauge averages.

A cylindrical function depends on a connection only through the holonomies
of finitely many paths: F(A) = expr(H_A(p_1), ..., H_A(p_k)).  The
expression tree bottoms out in matrix entries and traces of those
holonomies, so everything evaluates on batches of sampled matrices with
plain array arithmetic.

Gauge transformations touch F only through the path endpoints,
H_i -> g(range_i)^-1 H_i g(source_i), so averaging F over the gauge group
is an integral over one Haar factor per distinct endpoint vertex.  The
Monte Carlo estimator draws those factors in fixed-size chunks, which makes
every estimate reproducible from (samples, seed) alone.

Entry and trace indices are 1-based throughout (path 1 is the first path,
H_11 the top-left entry), matching the usual matrix notation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import matrixgroups as mg
from .connections import (
    GeneralizedConnection,
    SmoothConnection,
    holonomy_general,
    holonomy_smooth_path,
)
from .pathgroupoid import Graph, PathWord, word_from_tokens, word_to_tokens

MEAN_CHUNK = 8192


# ---------------------------------------------------------------------------
# expression trees

class Expr:
    """Base class; subclasses evaluate on a stack of shape (N, k, n, n)."""

    def eval(self, stack: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def max_path(self) -> int:
        return 0


@dataclass(frozen=True)
class Const(Expr):
    value: complex

    def eval(self, stack):
        return np.full(stack.shape[0], complex(self.value))


@dataclass(frozen=True)
class Entry(Expr):
    """Matrix entry H_ij of path number ``path`` (all indices 1-based)."""

    path: int
    row: int
    col: int

    def __post_init__(self):
        if min(self.path, self.row, self.col) < 1:
            raise ValueError("entry indices are 1-based")

    def eval(self, stack):
        return stack[:, self.path - 1, self.row - 1, self.col - 1]

    def max_path(self):
        return self.path


@dataclass(frozen=True)
class TraceOf(Expr):
    path: int

    def __post_init__(self):
        if self.path < 1:
            raise ValueError("path index is 1-based")

    def eval(self, stack):
        return np.einsum("nii->n", stack[:, self.path - 1])

    def max_path(self):
        return self.path


@dataclass(frozen=True)
class Conj(Expr):
    inner: Expr

    def eval(self, stack):
        return np.conj(self.inner.eval(stack))

    def max_path(self):
        return self.inner.max_path()


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def eval(self, stack):
        out = np.zeros(stack.shape[0], dtype=complex)
        for t in self.terms:
            out += t.eval(stack)
        return out

    def max_path(self):
        return max((t.max_path() for t in self.terms), default=0)


@dataclass(frozen=True)
class Prod(Expr):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    def eval(self, stack):
        out = np.ones(stack.shape[0], dtype=complex)
        for f in self.factors:
            out *= f.eval(stack)
        return out

    def max_path(self):
        return max((f.max_path() for f in self.factors), default=0)


def expr_to_dict(expr: Expr) -> dict:
    if isinstance(expr, Const):
        return {"const": [float(np.real(expr.value)), float(np.imag(expr.value))]}
    if isinstance(expr, Entry):
        return {"entry": [expr.path, expr.row, expr.col]}
    if isinstance(expr, TraceOf):
        return {"trace": expr.path}
    if isinstance(expr, Conj):
        return {"conj": expr_to_dict(expr.inner)}
    if isinstance(expr, Sum):
        return {"add": [expr_to_dict(t) for t in expr.terms]}
    if isinstance(expr, Prod):
        return {"mul": [expr_to_dict(f) for f in expr.factors]}
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def expr_from_dict(data: Mapping) -> Expr:
    if len(data) != 1:
        raise ValueError("expression nodes have exactly one key")
    key, val = next(iter(data.items()))
    if key == "const":
        return Const(complex(val[0], val[1]))
    if key == "entry":
        return Entry(int(val[0]), int(val[1]), int(val[2]))
    if key == "trace":
        return TraceOf(int(val))
    if key == "conj":
        return Conj(expr_from_dict(val))
    if key == "add":
        return Sum(tuple(expr_from_dict(t) for t in val))
    if key == "mul":
        return Prod(tuple(expr_from_dict(f) for f in val))
    raise ValueError(f"unknown expression key {key!r}")


# ---------------------------------------------------------------------------
# cylindrical functions

class CylFunction:
    """An expression applied to the holonomies of a fixed path tuple."""

    def __init__(self, paths: Sequence[PathWord], expr: Expr):
        self.paths = tuple(paths)
        self.expr = expr
        if expr.max_path() > len(self.paths):
            raise ValueError(f"expression uses path {expr.max_path()} "
                             f"but only {len(self.paths)} paths are given")

    def endpoint_vertices(self) -> tuple:
        seen = []
        for p in self.paths:
            for v in (p.source, p.range):
                if v not in seen:
                    seen.append(v)
        return tuple(seen)


def wilson_loop(word: PathWord, n: int) -> CylFunction:
    """Normalized trace of a single loop holonomy."""
    if not word.is_loop():
        raise ValueError("wilson functions are built on loops")
    return CylFunction((word,), Prod((Const(1.0 / n), TraceOf(1))))


def entry_function(word: PathWord, row: int, col: int) -> CylFunction:
    return CylFunction((word,), Entry(1, row, col))


def entry_abs_square(word: PathWord, row: int, col: int) -> CylFunction:
    e = Entry(1, row, col)
    return CylFunction((word,), Prod((e, Conj(e))))


def cyl_to_dict(f: CylFunction) -> dict:
    out = {"paths": [], "expr": expr_to_dict(f.expr)}
    for p in f.paths:
        item = {"tokens": word_to_tokens(p)}
        if p.is_unit():
            item["source"] = p.source
        out["paths"].append(item)
    return out


def cyl_from_dict(graph: Graph, data: Mapping) -> CylFunction:
    paths = []
    for item in data["paths"]:
        if isinstance(item, Mapping):
            paths.append(word_from_tokens(graph, item["tokens"], source=item.get("source")))
        else:
            paths.append(word_from_tokens(graph, item))
    return CylFunction(paths, expr_from_dict(data["expr"]))


# ---------------------------------------------------------------------------
# evaluation

def holonomy_stack(f: CylFunction, conn, graph: Graph = None,
                   steps: int = 8, tol: float = 1e-9) -> np.ndarray:
    """Holonomy matrices of the function's paths, shape (k, n, n)."""
    if isinstance(conn, GeneralizedConnection):
        return np.array([holonomy_general(conn, p).matrix for p in f.paths])
    if isinstance(conn, SmoothConnection):
        if graph is None:
            raise ValueError("smooth connections need the graph to trace out paths")
        return np.array([holonomy_smooth_path(conn, graph, p, steps, tol).matrix
                         for p in f.paths])
    raise TypeError(f"cannot take holonomies of {type(conn).__name__}")


def evaluate(f: CylFunction, conn, graph: Graph = None,
             steps: int = 8, tol: float = 1e-9) -> complex:
    stack = holonomy_stack(f, conn, graph, steps, tol)
    return complex(f.expr.eval(stack[None, ...])[0])


def evaluate_stack(f: CylFunction, stack) -> complex:
    """Evaluate on explicit holonomy matrices (one per path)."""
    arr = np.asarray([m.matrix if isinstance(m, mg.GroupElement) else m for m in stack],
                     dtype=complex)
    return complex(f.expr.eval(arr[None, ...])[0])


def _endpoint_slots(f: CylFunction):
    verts = f.endpoint_vertices()
    index = {v: i for i, v in enumerate(verts)}
    src = np.array([index[p.source] for p in f.paths])
    dst = np.array([index[p.range] for p in f.paths])
    return len(verts), src, dst


def _transform_batch(stack: np.ndarray, gauges: np.ndarray, src, dst) -> np.ndarray:
    """stack (k,n,n), gauges (N,V,n,n) -> (N,k,n,n) transformed holonomies."""
    out = np.empty((gauges.shape[0],) + stack.shape, dtype=complex)
    for k in range(stack.shape[0]):
        gd = np.conj(np.swapaxes(gauges[:, dst[k]], -1, -2))
        out[:, k] = gd @ stack[k] @ gauges[:, src[k]]
    return out


# ---------------------------------------------------------------------------
# gauge averaging

@dataclass(frozen=True)
class MeanEstimate:
    value: complex
    stderr: float
    samples: int
    layers: int


class HaarMean:
    """Monte Carlo gauge average of a cylindrical function.

    ``layers`` composes that many independent gauge draws pointwise before
    transforming, which realizes repeated averaging; by translation
    invariance of the Haar measure every layer count estimates the same
    number, so stacking layers is an idempotence check, not a refinement.
    """

    def __init__(self, function: CylFunction, descriptor, layers: int = 1):
        if layers < 1:
            raise ValueError("layers must be at least 1")
        self.function = function
        self.descriptor = descriptor
        self.layers = layers

    def estimate(self, conn, samples: int, seed: int, graph: Graph = None,
                 steps: int = 8, tol: float = 1e-9) -> MeanEstimate:
        stack = holonomy_stack(self.function, conn, graph, steps, tol)
        return self.estimate_stack(stack, samples, seed)

    def estimate_stack(self, stack, samples: int, seed: int) -> MeanEstimate:
        arr = np.asarray([m.matrix if isinstance(m, mg.GroupElement) else m for m in stack],
                         dtype=complex)
        if samples < 2:
            raise ValueError("need at least two samples for an error bar")
        nverts, src, dst = _endpoint_slots(self.function)
        n = mg.dim(self.descriptor)
        rng = np.random.default_rng(seed)
        total = 0.0 + 0.0j
        total_sq = 0.0
        done = 0
        while done < samples:
            count = min(MEAN_CHUNK, samples - done)
            gauges = None
            for _ in range(self.layers):
                layer = mg.haar_batch(self.descriptor, count * nverts, rng)
                layer = layer.reshape(count, nverts, n, n)
                gauges = layer if gauges is None else gauges @ layer
            vals = self.function.expr.eval(_transform_batch(arr, gauges, src, dst))
            total += vals.sum()
            total_sq += float(np.sum(np.abs(vals) ** 2))
            done += count
        mean = total / samples
        var = max(total_sq / samples - abs(mean) ** 2, 0.0)
        return MeanEstimate(complex(mean), float(np.sqrt(var / samples)), samples, self.layers)


def invariance_check(f: CylFunction, conn, descriptor, gauges: int = 20, seed: int = 0,
                     graph: Graph = None, steps: int = 8, tol: float = 1e-9) -> float:
    """Largest deviation |F(A.g) - F(A)| over random gauge tuples."""
    stack = holonomy_stack(f, conn, graph, steps, tol)
    nverts, src, dst = _endpoint_slots(f)
    n = mg.dim(descriptor)
    rng = np.random.default_rng(seed)
    base = complex(f.expr.eval(stack[None, ...])[0])
    g = mg.haar_batch(descriptor, gauges * nverts, rng).reshape(gauges, nverts, n, n)
    vals = f.expr.eval(_transform_batch(stack, g, src, dst))
    return float(np.max(np.abs(vals - base)))


# ---------------------------------------------------------------------------
# separation by trace invariants

@dataclass(frozen=True)
class SeparationVerdict:
    """Outcome of a trace-invariant comparison of two holonomy tuples.

    ``separated`` True is conclusive: some invariant differs by more than
    the threshold, so no simultaneous conjugation matches the tuples.
    False only says no witness exists among products of length at most the
    bound that was searched.
    """

    separated: bool
    gap: float
    witness: tuple
    threshold: float
    words_checked: int


def _index_words(k: int, max_len: int):
    """Nonempty products over k symbols and inverses, no adjacent backtrack."""
    alphabet = [(i, +1) for i in range(k)] + [(i, -1) for i in range(k)]
    frontier = [(s,) for s in alphabet]
    out = list(frontier)
    for _ in range(max_len - 1):
        nxt = []
        for w in frontier:
            last = w[-1]
            for s in alphabet:
                if s[0] == last[0] and s[1] == -last[1]:
                    continue
                nxt.append(w + (s,))
        out.extend(nxt)
        frontier = nxt
    return out


def _word_trace(stack: np.ndarray, word) -> complex:
    n = stack.shape[-1]
    acc = np.eye(n, dtype=complex)
    for idx, o in word:
        m = stack[idx]
        acc = (m if o == 1 else m.conj().T) @ acc
    return complex(np.trace(acc))


def separation_test(stack_a, stack_b, max_len: int = 3,
                    threshold: float = 1e-8) -> SeparationVerdict:
    """Compare all trace invariants of two same-length holonomy tuples.

    The inputs are loop holonomies at a common basepoint, as matrices or
    group elements.  Traces of products are invariant under simultaneous
    conjugation, so a gap larger than the threshold certifies the tuples
    lie on different gauge orbits.
    """
    a = np.asarray([m.matrix if isinstance(m, mg.GroupElement) else m for m in stack_a],
                   dtype=complex)
    b = np.asarray([m.matrix if isinstance(m, mg.GroupElement) else m for m in stack_b],
                   dtype=complex)
    if a.shape != b.shape:
        raise ValueError("holonomy tuples must have matching shapes")
    best_gap, best_word = 0.0, None
    words = _index_words(a.shape[0], max_len)
    for w in words:
        gap = abs(_word_trace(a, w) - _word_trace(b, w))
        if gap > best_gap:
            best_gap, best_word = gap, w
    return SeparationVerdict(best_gap > threshold, best_gap,
                             best_word if best_word is not None else (),
                             threshold, len(words))


def loop_stack(conn, loops: Sequence[PathWord], graph: Graph = None,
               steps: int = 8, tol: float = 1e-9) -> np.ndarray:
    """Holonomy matrices of a loop family at a common basepoint."""
    base = {w.source for w in loops} | {w.range for w in loops}
    if len(base) != 1:
        raise ValueError("loops must share a single basepoint")
    f = CylFunction(tuple(loops), Const(0.0))
    return holonomy_stack(f, conn, graph, steps, tol)
