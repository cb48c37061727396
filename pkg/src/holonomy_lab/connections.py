"""Connections on an embedded graph and their holonomy maps.

Two kinds of connection live here.  A :class:`GeneralizedConnection` is the
purely combinatorial object: one group element per edge, extended to reduced
words multiplicatively.  A :class:`SmoothConnection` is a Lie-algebra valued
one-form on the chart, a finite sum of compactly supported bump terms

    A(x)[v] = sum_k  phi_k(x) <u_k, v> X_k

where ``phi_k`` is a smooth bump (identically 1 inside half its radius, 0
outside the radius), ``u_k`` a constant covector and ``X_k`` anti-hermitian.

Holonomy of a smooth connection along a curve solves U' = -A(c(t))[c'(t)] U,
U(0) = 1, so that walking eta then lam multiplies as H(lam eta) = H(lam) H(eta)
and a gauge transformation g acts by H ->  g(end)^-1 H g(start).  The
integrator takes one fourth-order Magnus step (two Gauss nodes) per
sub-interval and doubles the step count per polyline segment until the
result is stable.

Conventions match the combinatorial side: traversing an edge against its
direction contributes the inverse transport, and the transport of a
reversed sub-segment is the exact matrix inverse of the forward one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import matrixgroups as mg
from .pathgroupoid import Graph, PathWord, UnknownEdgeError

DEFAULT_STEPS = 8
DEFAULT_TOL = 1e-9
MAX_DOUBLINGS = 14


class IndependenceError(ValueError):
    """Raised when interpolation targets do not have private room."""


class GeometryError(ValueError):
    """Raised when a graph lacks the chart data an operation needs."""


# ---------------------------------------------------------------------------
# generalized (combinatorial) connections

class GeneralizedConnection:
    """One group element per edge; holonomy extends multiplicatively."""

    def __init__(self, graph: Graph, descriptor, values: Mapping, check: bool = True):
        missing = set(graph.edges) - set(values)
        extra = set(values) - set(graph.edges)
        if missing or extra:
            raise ValueError(f"edge values do not match the graph "
                             f"(missing {sorted(map(str, missing))}, extra {sorted(map(str, extra))})")
        store = {}
        for eid, v in values.items():
            m = v.matrix if isinstance(v, mg.GroupElement) else np.asarray(v, dtype=complex)
            store[eid] = mg.GroupElement(descriptor, m, check=check).matrix
        self.graph = graph
        self.descriptor = descriptor
        self.values = store

    def value(self, eid) -> mg.GroupElement:
        if eid not in self.values:
            raise UnknownEdgeError(f"no edge with id {eid!r}")
        return mg.GroupElement(self.descriptor, self.values[eid], check=False)


def holonomy_general(conn: GeneralizedConnection, word: PathWord) -> mg.GroupElement:
    """Holonomy of a reduced word: the first-walked letter acts first."""
    acc = mg.identity(conn.descriptor)
    for eid, o in reversed(word.letters):
        v = conn.value(eid)
        acc = mg.mul(acc, v if o == 1 else mg.inv(v))
    return acc


def random_generalized_connection(graph: Graph, descriptor, seed: int) -> GeneralizedConnection:
    rng = np.random.default_rng(seed)
    ids = sorted(graph.edges, key=lambda i: (isinstance(i, str), str(i)))
    mats = mg.haar_batch(descriptor, len(ids), rng)
    return GeneralizedConnection(graph, descriptor, dict(zip(ids, mats)), check=True)


class DiscreteGauge:
    """One group element per vertex."""

    def __init__(self, graph: Graph, descriptor, values: Mapping, check: bool = True):
        if set(values) != set(graph.vertices):
            raise ValueError("gauge values must cover exactly the vertex set")
        self.graph = graph
        self.descriptor = descriptor
        self.values = {v: mg.GroupElement(descriptor, m.matrix if isinstance(m, mg.GroupElement) else m,
                                          check=check).matrix
                       for v, m in values.items()}

    def value(self, vertex) -> mg.GroupElement:
        return mg.GroupElement(self.descriptor, self.values[vertex], check=False)


def random_discrete_gauge(graph: Graph, descriptor, seed: int) -> DiscreteGauge:
    rng = np.random.default_rng(seed)
    verts = list(graph.vertices)
    mats = mg.haar_batch(descriptor, len(verts), rng)
    return DiscreteGauge(graph, descriptor, dict(zip(verts, mats)), check=False)


def gauge_act_general(conn: GeneralizedConnection, gauge: DiscreteGauge) -> GeneralizedConnection:
    """Edge-wise action value(e) -> g(dst)^-1 value(e) g(src)."""
    if gauge.descriptor != conn.descriptor:
        raise mg.DescriptorMismatchError("gauge and connection descriptors differ")
    out = {}
    for eid, e in conn.graph.edges.items():
        v = conn.value(eid)
        out[eid] = mg.mul(mg.mul(mg.inv(gauge.value(e.dst)), v), gauge.value(e.src))
    return GeneralizedConnection(conn.graph, conn.descriptor, out, check=False)


# ---------------------------------------------------------------------------
# smooth bump one-forms

def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~lo & ~hi
    out = np.where(hi, 1.0, 0.0)
    tm = np.clip(t, 1e-12, 1.0 - 1e-12)
    f = np.exp(-1.0 / tm)
    g = np.exp(-1.0 / (1.0 - tm))
    out = np.where(mid, f / (f + g), out)
    return out


def bump_value(points, center, radius):
    """Bump profile: 1 inside radius/2, 0 outside radius, smooth in between."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=-1)
    return smoothstep(2.0 - 2.0 * r / radius)


@dataclass(frozen=True)
class BumpTerm:
    """One term phi(x) <u, dx> X of a smooth connection."""

    X: np.ndarray
    center: tuple
    radius: float
    direction: tuple

    def __post_init__(self):
        X = np.array(self.X, dtype=complex)
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        d = np.asarray(self.direction, dtype=float)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if np.linalg.norm(d) < 1e-12:
            raise ValueError("bump direction must be nonzero")
        object.__setattr__(self, "direction", tuple(float(c) for c in d))


class SmoothConnection:
    """Finite sum of bump terms with a common group descriptor."""

    def __init__(self, descriptor, terms: Iterable[BumpTerm]):
        self.descriptor = descriptor
        self.terms = tuple(terms)
        adesc = mg.algebra_descriptor(descriptor)
        for t in self.terms:
            mg.LieAlgebraElement(adesc, t.X)  # validation only
        n = mg.dim(descriptor)
        if self.terms:
            self._X = np.array([t.X for t in self.terms])
            self._centers = np.array([t.center for t in self.terms], dtype=float)
            self._radii = np.array([t.radius for t in self.terms], dtype=float)
            self._dirs = np.array([t.direction for t in self.terms], dtype=float)
        else:
            self._X = np.zeros((0, n, n), dtype=complex)
            self._centers = np.zeros((0, 1))
            self._radii = np.zeros(0)
            self._dirs = np.zeros((0, 1))

    def coefficients(self, points) -> np.ndarray:
        """phi_k at each point: shape (npoints, nterms)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.terms:
            return np.zeros((pts.shape[0], 0))
        d = np.linalg.norm(pts[:, None, :] - self._centers[None, :, :], axis=-1)
        return smoothstep(2.0 - 2.0 * d / self._radii[None, :])

    def apply(self, point, vector) -> np.ndarray:
        """A(x)[v] as a matrix."""
        n = mg.dim(self.descriptor)
        if not self.terms:
            return np.zeros((n, n), dtype=complex)
        w = self.coefficients([point])[0] * (self._dirs @ np.asarray(vector, dtype=float))
        return np.tensordot(w, self._X, axes=(0, 0))


def random_smooth_connection(descriptor, graph: Graph, n_terms: int, seed: int,
                             scale: float = 0.8, radius: float = 0.6) -> SmoothConnection:
    """Random bump terms centered on curve points of the graph."""
    rng = np.random.default_rng(seed)
    pool = []
    for e in graph.edges.values():
        if e.curve:
            pool.extend(e.curve)
    if not pool:
        raise GeometryError("graph has no curve data to anchor bump terms")
    pool = np.asarray(pool, dtype=float)
    terms = []
    for _ in range(n_terms):
        c = pool[rng.integers(len(pool))] + rng.normal(scale=0.1, size=pool.shape[1])
        d = rng.normal(size=pool.shape[1])
        d /= np.linalg.norm(d)
        X = mg.random_algebra(descriptor, rng, scale=scale)
        terms.append(BumpTerm(X.matrix, tuple(c), radius, tuple(d)))
    return SmoothConnection(descriptor, terms)


# ---------------------------------------------------------------------------
# curves of words

def edge_polyline(graph: Graph, eid, orientation: int = 1) -> np.ndarray:
    e = graph.edge(eid)
    if e.curve is not None:
        pts = np.asarray(e.curve, dtype=float)
    else:
        try:
            pts = np.asarray([graph.positions[e.src], graph.positions[e.dst]], dtype=float)
        except KeyError:
            raise GeometryError(f"edge {eid!r} has no curve and its endpoints have no positions")
    return pts if orientation == 1 else pts[::-1]


def letters_polyline(graph: Graph, letters: Sequence) -> np.ndarray:
    """Concatenated curve of a raw letter sequence (no reduction applied)."""
    if not letters:
        raise ValueError("empty letter sequence has no curve; handle units separately")
    chunks = []
    for k, (eid, o) in enumerate(letters):
        pts = edge_polyline(graph, eid, o)
        if chunks:
            if np.linalg.norm(chunks[-1][-1] - pts[0]) > 1e-9:
                raise GeometryError(f"edge curves do not join at letter {k}")
            pts = pts[1:]
        chunks.append(pts)
    return np.concatenate(chunks, axis=0)


def path_polyline(graph: Graph, word: PathWord) -> np.ndarray:
    if word.is_unit():
        try:
            return np.asarray([graph.positions[word.source]], dtype=float)
        except KeyError:
            raise GeometryError(f"vertex {word.source!r} has no position")
    return letters_polyline(graph, word.letters)


# ---------------------------------------------------------------------------
# parallel transport

def _exp_antiherm_batch(M: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(-1j * M)
    return np.einsum("sij,sj,skj->sik", v, np.exp(1j * w), v.conj())


def _chain(mats: np.ndarray) -> np.ndarray:
    """Ordered product mats[-1] @ ... @ mats[0] by pairwise folding."""
    while mats.shape[0] > 1:
        m = mats.shape[0]
        even = mats[0:m - m % 2]
        paired = even[1::2] @ even[0::2]
        mats = np.concatenate([paired, mats[m - m % 2:]], axis=0)
    return mats[0]


_GAUSS_OFFSET = 0.5 / np.sqrt(3.0)


def _segment_transport(conn: SmoothConnection, p: np.ndarray, q: np.ndarray,
                       steps: int) -> np.ndarray:
    """One fourth-order Magnus step per sub-interval (two Gauss nodes)."""
    n = mg.dim(conn.descriptor)
    if not conn.terms:
        return np.eye(n, dtype=complex)
    delta = (q - p) / steps
    base = np.arange(steps)[:, None] + 0.5
    scale = conn._dirs @ delta
    c1 = conn.coefficients(p + (base - _GAUSS_OFFSET) * delta) * scale
    c2 = conn.coefficients(p + (base + _GAUSS_OFFSET) * delta) * scale
    if max(np.max(np.abs(c1)), np.max(np.abs(c2))) == 0.0:
        return np.eye(n, dtype=complex)
    M1 = np.tensordot(c1, conn._X, axes=(1, 0))
    M2 = np.tensordot(c2, conn._X, axes=(1, 0))
    omega = -0.5 * (M1 + M2) - (np.sqrt(3.0) / 12.0) * (M1 @ M2 - M2 @ M1)
    return _chain(_exp_antiherm_batch(omega))


def _segment_far(conn: SmoothConnection, p: np.ndarray, q: np.ndarray) -> bool:
    if not conn.terms:
        return True
    d = q - p
    L2 = float(d @ d)
    if L2 == 0.0:
        dist = np.linalg.norm(conn._centers - p, axis=1)
    else:
        t = np.clip((conn._centers - p) @ d / L2, 0.0, 1.0)
        proj = p + t[:, None] * d
        dist = np.linalg.norm(conn._centers - proj, axis=1)
    return bool(np.all(dist >= conn._radii))


def transport(conn: SmoothConnection, polyline, steps: int = DEFAULT_STEPS,
              tol: float = DEFAULT_TOL) -> np.ndarray:
    """Transport matrix along a polyline, adaptive per segment.

    Each segment starts at ``steps`` Magnus sub-steps and the count doubles
    until two successive refinements differ by less than ``tol`` in
    Frobenius norm.  Segments outside every bump contribute the identity
    exactly.
    """
    pts = np.atleast_2d(np.asarray(polyline, dtype=float))
    n = mg.dim(conn.descriptor)
    acc = np.eye(n, dtype=complex)
    for p, q in zip(pts[:-1], pts[1:]):
        if _segment_far(conn, p, q):
            continue
        s = steps
        u = _segment_transport(conn, p, q, s)
        prev = None
        for _ in range(MAX_DOUBLINGS):
            s *= 2
            u2 = _segment_transport(conn, p, q, s)
            diff = np.linalg.norm(u2 - u)
            u = u2
            # stop on target accuracy; a stall check guards against spinning
            # on a tolerance below the roundoff floor, but only once the
            # change is already tiny (convergence need not be monotone)
            if diff <= tol or (prev is not None and diff > 0.5 * prev and diff < 1e-10):
                break
            prev = diff
        acc = u @ acc
    return acc


def transport_field(field: Callable[[np.ndarray, np.ndarray], np.ndarray], polyline,
                    n: int, steps: int = 64) -> np.ndarray:
    """Transport for an arbitrary one-form ``field(x, v) -> matrix``.

    Plain fixed-step midpoint integrator used for cross-checks; no bump
    structure is assumed so nothing is skipped or vectorized.
    """
    pts = np.atleast_2d(np.asarray(polyline, dtype=float))
    acc = np.eye(n, dtype=complex)
    for p, q in zip(pts[:-1], pts[1:]):
        delta = (q - p) / steps
        for i in range(steps):
            mid = p + (i + 0.5) * delta
            M = -field(mid, delta)
            w, v = np.linalg.eigh(-1j * M)
            acc = ((v * np.exp(1j * w)) @ v.conj().T) @ acc
    return acc


def holonomy_smooth(conn: SmoothConnection, polyline, steps: int = DEFAULT_STEPS,
                    tol: float = DEFAULT_TOL) -> mg.GroupElement:
    m = transport(conn, polyline, steps, tol)
    if isinstance(conn.descriptor, mg.CentralQuotient):
        return mg.quotient_project(conn.descriptor, m)
    return mg.GroupElement(conn.descriptor, m)


def holonomy_smooth_path(conn: SmoothConnection, graph: Graph, word: PathWord,
                         steps: int = DEFAULT_STEPS, tol: float = DEFAULT_TOL) -> mg.GroupElement:
    return holonomy_smooth(conn, path_polyline(graph, word), steps, tol)


def split_holonomy(conn: SmoothConnection, polyline, steps: int = DEFAULT_STEPS,
                   tol: float = DEFAULT_TOL):
    """Factor-wise holonomies of a product-group connection.

    The factors commute inside the block-diagonal embedding, so the full
    transport is the block-diagonal assembly of the returned elements.
    """
    desc = conn.descriptor
    if not isinstance(desc, mg.ProductGroup):
        raise TypeError("split_holonomy needs a ProductGroup connection")
    out = []
    for sl, f in mg.block_slices(desc):
        terms = [BumpTerm(t.X[sl, sl], t.center, t.radius, t.direction) for t in conn.terms]
        part = SmoothConnection(f, terms)
        out.append(holonomy_smooth(part, polyline, steps, tol))
    return tuple(out)


# ---------------------------------------------------------------------------
# smooth gauge transformations

@dataclass(frozen=True)
class GaugeBump:
    Y: np.ndarray
    center: tuple
    radius: float

    def __post_init__(self):
        Y = np.array(self.Y, dtype=complex)
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")


class SmoothGauge:
    """Pointwise g(x) = exp(sum_j psi_j(x) Y_j) with smooth bumps psi_j."""

    def __init__(self, descriptor, terms: Iterable[GaugeBump]):
        self.descriptor = descriptor
        self.terms = tuple(terms)
        adesc = mg.algebra_descriptor(descriptor)
        for t in self.terms:
            mg.LieAlgebraElement(adesc, t.Y)

    def at(self, point) -> np.ndarray:
        n = mg.dim(self.descriptor)
        M = np.zeros((n, n), dtype=complex)
        for t in self.terms:
            M = M + float(bump_value([point], t.center, t.radius)[0]) * t.Y
        w, v = np.linalg.eigh(-1j * M)
        return (v * np.exp(1j * w)) @ v.conj().T

    def element_at(self, point) -> mg.GroupElement:
        m = self.at(point)
        if isinstance(self.descriptor, mg.CentralQuotient):
            return mg.quotient_project(self.descriptor, m)
        return mg.GroupElement(self.descriptor, m, check=False)

    def as_discrete(self, graph: Graph) -> DiscreteGauge:
        try:
            vals = {v: self.element_at(graph.positions[v]) for v in graph.vertices}
        except KeyError as exc:
            raise GeometryError("every vertex needs a position to discretize a gauge") from exc
        return DiscreteGauge(graph, self.descriptor, vals, check=False)


def random_smooth_gauge(descriptor, graph: Graph, n_terms: int, seed: int,
                        scale: float = 0.7, radius: float = 0.9) -> SmoothGauge:
    rng = np.random.default_rng(seed)
    pool = []
    for e in graph.edges.values():
        if e.curve:
            pool.extend(e.curve)
    pool = np.asarray(pool if pool else [graph.positions[v] for v in graph.vertices], dtype=float)
    terms = []
    for _ in range(n_terms):
        c = pool[rng.integers(len(pool))] + rng.normal(scale=0.15, size=pool.shape[1])
        Y = mg.random_algebra(descriptor, rng, scale=scale)
        terms.append(GaugeBump(Y.matrix, tuple(c), radius))
    return SmoothGauge(descriptor, terms)


class TransformedSmoothHolonomy:
    """Holonomy evaluator of a gauge-transformed smooth connection.

    Evaluates through the covariance identity
    ``H'(curve) = g(end)^-1 H(curve) g(start)`` rather than by
    differentiating the gauge; the one-form picture is exercised separately
    by finite-difference cross-checks in the test suite.
    """

    def __init__(self, conn: SmoothConnection, gauge: SmoothGauge):
        if gauge.descriptor != conn.descriptor:
            raise mg.DescriptorMismatchError("gauge and connection descriptors differ")
        self.connection = conn
        self.gauge = gauge

    def holonomy(self, polyline, steps: int = DEFAULT_STEPS, tol: float = DEFAULT_TOL) -> mg.GroupElement:
        pts = np.atleast_2d(np.asarray(polyline, dtype=float))
        m = transport(self.connection, pts, steps, tol)
        out = self.gauge.at(pts[-1]).conj().T @ m @ self.gauge.at(pts[0])
        if isinstance(self.connection.descriptor, mg.CentralQuotient):
            return mg.quotient_project(self.connection.descriptor, out)
        return mg.GroupElement(self.connection.descriptor, out)

    def holonomy_path(self, graph: Graph, word: PathWord,
                      steps: int = DEFAULT_STEPS, tol: float = DEFAULT_TOL) -> mg.GroupElement:
        return self.holonomy(path_polyline(graph, word), steps, tol)


def gauge_act_smooth(conn: SmoothConnection, gauge: SmoothGauge) -> TransformedSmoothHolonomy:
    return TransformedSmoothHolonomy(conn, gauge)


# ---------------------------------------------------------------------------
# interpolation on an independent family

@dataclass(frozen=True)
class InterpolationTarget:
    """A path, the value its holonomy should take, and a private window.

    ``window`` is a pair of indices into the path's polyline; the
    sub-polyline between them must be crossed by no other family path.
    Detecting privacy automatically is out of scope: the window is the
    caller's independence witness and is only verified, not discovered.
    """

    word: PathWord
    value: mg.GroupElement
    window: tuple


def _point_polyline_distance(point: np.ndarray, pts: np.ndarray) -> float:
    if pts.shape[0] == 1:
        return float(np.linalg.norm(point - pts[0]))
    best = np.inf
    for p, q in zip(pts[:-1], pts[1:]):
        d = q - p
        L2 = float(d @ d)
        t = 0.0 if L2 == 0.0 else float(np.clip((point - p) @ d / L2, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(point - (p + t * d))))
    return best


def _scalar_line_integral(center, radius, direction, polyline, base_steps=64):
    """Refined midpoint quadrature of phi(x) <u, dx> along a polyline."""
    pts = np.atleast_2d(np.asarray(polyline, dtype=float))
    u = np.asarray(direction, dtype=float)

    def once(per_seg):
        total = 0.0
        for p, q in zip(pts[:-1], pts[1:]):
            delta = (q - p) / per_seg
            mids = p + (np.arange(per_seg)[:, None] + 0.5) * delta
            total += float(bump_value(mids, center, radius).sum() * (u @ delta))
        return total

    s = base_steps
    val = once(s)
    for _ in range(12):
        s *= 2
        nxt = once(s)
        if abs(nxt - val) <= 1e-12 * max(1.0, abs(nxt)):
            return nxt
        val = nxt
    return val


_BRANCH_SHIFTS = (0.0, 0.41, -0.41, 0.97, 2.19)


def _robust_log(value: mg.GroupElement) -> np.ndarray:
    for shift in _BRANCH_SHIFTS:
        try:
            return mg.log_map(value, branch_shift=shift).matrix
        except mg.BranchCutError:
            continue
    raise mg.BranchCutError("logarithm failed for every branch shift; retarget the value")


def interpolate_connection(graph: Graph, targets: Sequence[InterpolationTarget],
                           extra_paths: Sequence[PathWord] = (),
                           clearance: float = 0.7,
                           min_coefficient: float = 1e-8) -> SmoothConnection:
    """Smooth connection whose holonomy hits each target on its path.

    Places one bump term on each target's private window and solves for the
    generator, using that a single path meets only its own bump: the
    transport collapses to ``exp(-c X)`` with ``c`` the scalar bump line
    integral, so ``X = -log(value)/c`` is exact up to integration error.

    Raises IndependenceError when a window has no clearance from the other
    family paths (the bump radius would have to be zero or would leak onto
    another path).
    """
    if not targets:
        raise ValueError("no targets")
    desc = targets[0].value.descriptor
    polylines = [path_polyline(graph, t.word) for t in targets]
    others = [path_polyline(graph, w) for w in extra_paths]
    terms = []
    geometry = []
    for k, t in enumerate(targets):
        if t.value.descriptor != desc:
            raise mg.DescriptorMismatchError("targets mix group descriptors")
        pts = polylines[k]
        lo, hi = t.window
        if not (0 <= lo < hi < pts.shape[0]):
            raise ValueError(f"target {k}: window {t.window} outside the polyline")
        window = pts[lo:hi + 1]
        lengths = np.linalg.norm(np.diff(window, axis=0), axis=1)
        total = float(lengths.sum())
        if total <= 0:
            raise ValueError(f"target {k}: window has zero length")
        # arc-length midpoint of the window
        acc, mid = 0.0, window[0]
        for p, q, L in zip(window[:-1], window[1:], lengths):
            if acc + L >= total / 2.0:
                mid = p + (total / 2.0 - acc) / L * (q - p)
                break
            acc += L
        direction = window[-1] - window[0]
        direction = direction / np.linalg.norm(direction)
        room = total / 2.0
        for j, other in enumerate(polylines):
            if j != k:
                room = min(room, _point_polyline_distance(mid, other))
        for other in others:
            room = min(room, _point_polyline_distance(mid, other))
        # keep away from our own path outside the window too
        before, after = pts[:lo + 1], pts[hi:]
        if before.shape[0] > 1:
            room = min(room, _point_polyline_distance(mid, before))
        if after.shape[0] > 1:
            room = min(room, _point_polyline_distance(mid, after))
        radius = clearance * room
        if radius <= 1e-9:
            raise IndependenceError(
                f"target {k}: window has no clearance; paths overlap its segment")
        geometry.append((mid, radius, direction))
    for k, t in enumerate(targets):
        mid, radius, direction = geometry[k]
        c = _scalar_line_integral(mid, radius, direction, polylines[k])
        if abs(c) < min_coefficient:
            raise IndependenceError(
                f"target {k}: path barely meets its own bump (coefficient {c:.2e})")
        X = -_robust_log(t.value) / c
        terms.append(BumpTerm(X, tuple(mid), float(radius), tuple(direction)))
    conn = SmoothConnection(desc, terms)
    # final safety net: no bump may touch a foreign path
    all_lines = polylines + others
    for k, (mid, radius, _) in enumerate(geometry):
        for j, line in enumerate(all_lines):
            if j == k:
                continue
            if _point_polyline_distance(np.asarray(mid), line) <= radius:
                raise IndependenceError(f"bump {k} leaks onto family path {j}")
    return conn


# ---------------------------------------------------------------------------
# serialization

def generalized_to_dict(conn: GeneralizedConnection) -> dict:
    return {
        "group": mg.descriptor_to_dict(conn.descriptor),
        "values": {str(eid): mg.matrix_to_pairs(m) for eid, m in conn.values.items()},
    }


def generalized_from_dict(graph: Graph, data: Mapping) -> GeneralizedConnection:
    desc = mg.descriptor_from_dict(data["group"])
    if "haar_seed" in data:
        return random_generalized_connection(graph, desc, int(data["haar_seed"]))
    by_name = {str(eid): eid for eid in graph.edges}
    values = {}
    for key, pairs in data["values"].items():
        if key not in by_name:
            raise UnknownEdgeError(f"no edge with id {key!r}")
        values[by_name[key]] = mg.matrix_from_pairs(pairs)
    return GeneralizedConnection(graph, desc, values)


def smooth_to_dict(conn: SmoothConnection) -> dict:
    return {
        "group": mg.descriptor_to_dict(conn.descriptor),
        "terms": [
            {
                "X": mg.matrix_to_pairs(t.X),
                "center": list(t.center),
                "radius": t.radius,
                "direction": list(t.direction),
            }
            for t in conn.terms
        ],
    }


def smooth_from_dict(data: Mapping) -> SmoothConnection:
    desc = mg.descriptor_from_dict(data["group"])
    terms = [
        BumpTerm(mg.matrix_from_pairs(t["X"]), tuple(t["center"]),
                 float(t["radius"]), tuple(t["direction"]))
        for t in data["terms"]
    ]
    return SmoothConnection(desc, terms)


def gauge_to_dict(gauge: DiscreteGauge) -> dict:
    return {
        "group": mg.descriptor_to_dict(gauge.descriptor),
        "values": {str(v): mg.matrix_to_pairs(m) for v, m in gauge.values.items()},
    }


def gauge_from_dict(graph: Graph, data: Mapping) -> DiscreteGauge:
    desc = mg.descriptor_from_dict(data["group"])
    if "haar_seed" in data:
        return random_discrete_gauge(graph, desc, int(data["haar_seed"]))
    by_name = {str(v): v for v in graph.vertices}
    values = {by_name[key]: mg.matrix_from_pairs(pairs) for key, pairs in data["values"].items()}
    return DiscreteGauge(graph, desc, values)


# ---------------------------------------------------------------------------
# quotient pushforward

def pushforward_hom(quotient: mg.CentralQuotient, conn: GeneralizedConnection) -> GeneralizedConnection:
    """Compose an edge assignment in the base group with the quotient map."""
    if conn.descriptor != quotient.base:
        raise mg.DescriptorMismatchError("connection does not live in the quotient's base group")
    vals = {eid: mg.quotient_project(quotient, m) for eid, m in conn.values.items()}
    return GeneralizedConnection(conn.graph, quotient, vals, check=False)
