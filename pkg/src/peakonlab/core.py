"""Exact algebra of peaked fields.

A peaked field is a finite signed combination u(x) = sum_i a_i exp(-|x - r_i|).
This class is closed under the operations the rest of the package needs:
multipeakon solutions, peakon trains and their differences all live here, and
the H^1 inner product int(uv + u_x v_x) reduces to the explicit Gram form
2 sum_ij a_i b_j exp(-|r_i - s_j|), so distances and energies are computed
without any discretization.

Between its nodes a peaked field is A e^x + B e^{-x}; the ``segments``
representation makes that explicit and is the substrate for all closed-form
quadrature in :mod:`peakonlab.functionals`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NODE_MERGE_TOL",
    "PeakedField",
    "SegmentForm",
    "h1_inner",
    "h1_dist",
]

# Nodes closer than this are merged (amplitudes summed) on construction:
# exp(-|r_i - r_j|) is indistinguishable from 1 below round-off and the Gram
# matrix degenerates.
NODE_MERGE_TOL = 1e-12


def _as_float_array(values, name):
    arr = np.asarray(values, dtype=float).reshape(-1).copy()
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class PeakedField:
    """Signed combination ``sum_i amps[i] * exp(-|x - nodes[i]|)``.

    Construction sorts the terms by node and merges nodes closer than
    ``NODE_MERGE_TOL`` (amplitudes summed), so ``nodes`` is always strictly
    increasing. Instances are immutable.
    """

    amps: np.ndarray
    nodes: np.ndarray

    def __init__(self, amps, nodes):
        amps = _as_float_array(amps, "amps")
        nodes = _as_float_array(nodes, "nodes")
        if amps.shape != nodes.shape:
            raise ValueError("amps and nodes must have the same length")
        if nodes.size:
            order = np.argsort(nodes, kind="stable")
            nodes = nodes[order]
            amps = amps[order]
            merged_nodes = [nodes[0]]
            merged_amps = [amps[0]]
            for r, a in zip(nodes[1:], amps[1:]):
                if r - merged_nodes[-1] < NODE_MERGE_TOL:
                    merged_amps[-1] += a
                else:
                    merged_nodes.append(r)
                    merged_amps.append(a)
            nodes = np.array(merged_nodes)
            amps = np.array(merged_amps)
        amps.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "amps", amps)
        object.__setattr__(self, "nodes", nodes)

    def __len__(self):
        return self.amps.size

    def eval(self, x):
        """Value at ``x`` (compensated summation; exact at the kinks)."""
        if not math.isfinite(x):
            raise ValueError("x must be finite")
        if not len(self):
            return 0.0
        return math.fsum(
            a * math.exp(-abs(x - r)) for a, r in zip(self.amps, self.nodes)
        )

    def eval_dx(self, x):
        """A.e. derivative at ``x`` with the sgn(0)=0 convention."""
        if not math.isfinite(x):
            raise ValueError("x must be finite")
        if not len(self):
            return 0.0
        terms = []
        for a, r in zip(self.amps, self.nodes):
            s = x - r
            if s != 0.0:
                terms.append(-math.copysign(1.0, s) * a * math.exp(-abs(s)))
        return math.fsum(terms)

    def eval_grid(self, xs):
        """Vectorized values on an array of points (plain numpy summation)."""
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise ValueError("grid points must be finite")
        if not len(self):
            return np.zeros_like(xs)
        return np.exp(-np.abs(xs[..., None] - self.nodes)) @ self.amps

    def eval_dx_grid(self, xs):
        """Vectorized a.e. derivative on an array of points."""
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise ValueError("grid points must be finite")
        if not len(self):
            return np.zeros_like(xs)
        diff = xs[..., None] - self.nodes
        return (-np.sign(diff) * np.exp(-np.abs(diff))) @ self.amps

    def segment_index(self, x):
        """Index k such that x lies in the closure of segment k."""
        return int(np.searchsorted(self.nodes, x, side="left"))

    def components_at(self, k, x):
        """Growing/decaying parts (P, Q) of segment ``k`` evaluated at ``x``.

        On segment k the field is P(x) + Q(x) with P(x) = sum_{i>=k} a_i
        e^{x-r_i} and Q(x) = sum_{i<k} a_i e^{r_i-x}; for x inside the
        segment's closure every exponent is <= 0, so both sums are
        overflow-safe even for widely spread nodes.
        """
        grow = math.fsum(
            self.amps[i] * math.exp(x - self.nodes[i]) for i in range(k, len(self))
        )
        decay = math.fsum(
            self.amps[i] * math.exp(self.nodes[i] - x) for i in range(k)
        )
        return grow, decay

    def segments(self):
        """Piecewise-exponential form with per-segment reference shifts."""
        n = len(self)
        if n == 0:
            x0 = np.zeros(1)
            zero = np.zeros(1)
            return SegmentForm(np.zeros(0), x0, zero, zero.copy())
        x0 = np.empty(n + 1)
        x0[0] = self.nodes[0]
        x0[1:] = self.nodes
        grow = np.empty(n + 1)
        decay = np.empty(n + 1)
        for k in range(n + 1):
            g, d = self.components_at(k, x0[k])
            grow[k] = g
            decay[k] = d
        grow[n] = 0.0
        decay[0] = 0.0
        return SegmentForm(self.nodes.copy(), x0, grow, decay)

    def scaled(self, factor):
        return PeakedField(self.amps * factor, self.nodes)

    def shifted(self, offset):
        return PeakedField(self.amps, self.nodes + offset)

    def to_dict(self):
        return {"amps": list(map(float, self.amps)), "nodes": list(map(float, self.nodes))}

    @classmethod
    def from_dict(cls, d):
        return cls(d["amps"], d["nodes"])

    @classmethod
    def zero(cls):
        return cls([], [])


@dataclass(frozen=True)
class SegmentForm:
    """Per-interval exponential coefficients of a peaked field.

    On segment k (between ``breakpoints[k-1]`` and ``breakpoints[k]``, with
    unbounded end intervals) the field is

        u(x) = grow[k] * e^{x - x0[k]} + decay[k] * e^{-(x - x0[k])}

    where ``x0[k]`` is the left breakpoint (the right one for the leftmost
    segment), keeping the stored coefficients in range for nodes far from the
    origin. ``grow`` vanishes on the last segment and ``decay`` on the first.
    """

    breakpoints: np.ndarray
    x0: np.ndarray
    grow: np.ndarray
    decay: np.ndarray

    def __post_init__(self):
        for arr in (self.breakpoints, self.x0, self.grow, self.decay):
            arr.setflags(write=False)

    @property
    def n_segments(self):
        return self.x0.size

    def value(self, x):
        k = int(np.searchsorted(self.breakpoints, x, side="left"))
        t = x - self.x0[k]
        return self.grow[k] * math.exp(t) + self.decay[k] * math.exp(-t)


def _gram_terms(amps_a, nodes_a, amps_b, nodes_b):
    diff = np.abs(nodes_a[:, None] - nodes_b[None, :])
    return 2.0 * (amps_a[:, None] * amps_b[None, :]) * np.exp(-diff)


def h1_inner(u, v):
    """H^1 inner product int(uv + u_x v_x) in the exact Gram form.

    Equals ``2 sum_ij a_i b_j exp(-|r_i - s_j|)``; in particular pairing with
    a unit peakon at z reproduces the point value: <u, e^{-|.-z|}> = 2 u(z).
    """
    if not len(u) or not len(v):
        return 0.0
    terms = _gram_terms(u.amps, u.nodes, v.amps, v.nodes)
    return math.fsum(terms.ravel())


def h1_dist(u, v):
    """H^1 distance ||u - v|| via the joint Gram form (clamped at zero)."""
    terms = []
    if len(u):
        terms.append(_gram_terms(u.amps, u.nodes, u.amps, u.nodes).ravel())
    if len(v):
        terms.append(_gram_terms(v.amps, v.nodes, v.amps, v.nodes).ravel())
    if len(u) and len(v):
        terms.append(-2.0 * _gram_terms(u.amps, u.nodes, v.amps, v.nodes).ravel())
    if not terms:
        return 0.0
    sq = math.fsum(np.concatenate(terms))
    return math.sqrt(sq) if sq > 0.0 else 0.0
