"""Conserved functionals, localized weights and the Helmholtz inverse.

The two invariants of the flow are computed exactly on peaked fields:

* energy  E(u) = int u^2 + u_x^2      (Gram form)
* moment  F(u) = int u^3 + u u_x^2    (closed-form piecewise integration)

Localized variants weight the densities by a smooth step ``psi`` scaled to a
window K, or by the partition profiles built from differences of steps. Off
the step's blend interval every integrand is a short sum of exponentials and
is integrated in closed form; on the blend interval (where the step is a
quintic polynomial) a fixed composite Gauss-Legendre rule is used.

The smooth step has half-scaled exponential tails

    psi(x) = e^x / 2            x <= -1/2
    psi(x) = 1 - e^{-x} / 2     x >= +1/2

joined by the quintic Hermite blend matching value and first two derivatives
at +-1/2. This profile is strictly increasing, C^2, satisfies
|psi'''| <= 10 psi' on the blend and psi <= 2 e^{-|x|} on [-1/2, 0]
(mirrored on [0, 1/2]); the constraints are re-checked numerically on first
use. psi' equals e^{-|x|}/2 on the tails, i.e. the Helmholtz kernel itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PeakedField, h1_inner

__all__ = [
    "energy",
    "moment_f",
    "psi",
    "psi_deriv",
    "psi_scaled",
    "psi_metadata",
    "WeightProfile",
    "partition",
    "sigma0",
    "weighted_energy",
    "weighted_moment_f",
    "PiecewiseExponential",
    "helmholtz_source",
    "helmholtz_inverse",
]

_BLEND_LO = -0.5
_BLEND_HI = 0.5


def _blend_coefficients():
    # Quintic Hermite: match value/slope/curvature of the two tails at -+1/2.
    a, b = _BLEND_LO, _BLEND_HI
    va = 0.5 * math.exp(a)
    vb = 1.0 - 0.5 * math.exp(-b)
    db = 0.5 * math.exp(-b)
    rows = []
    for x, der in ((a, 0), (a, 1), (a, 2), (b, 0), (b, 1), (b, 2)):
        row = np.zeros(6)
        for k in range(der, 6):
            fac = 1.0
            for j in range(der):
                fac *= k - j
            row[k] = fac * x ** (k - der)
        rows.append(row)
    rhs = np.array([va, va, va, vb, db, -db])
    return np.linalg.solve(np.array(rows), rhs)


_BLEND = _blend_coefficients()


def _blend_eval(x, order=0):
    tot = 0.0
    for k in range(order, 6):
        fac = 1.0
        for j in range(order):
            fac *= k - j
        tot += _BLEND[k] * fac * x ** (k - order)
    return tot


def psi(x):
    """Smooth monotone step: 0 at -inf, 1 at +inf, exponential tails."""
    if x <= _BLEND_LO:
        return 0.5 * math.exp(x)
    if x >= _BLEND_HI:
        return 1.0 - 0.5 * math.exp(-x)
    return _blend_eval(x)


def psi_deriv(x, order=1):
    """Derivative of the step (order 1..3)."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if x <= _BLEND_LO:
        return 0.5 * math.exp(x)
    if x >= _BLEND_HI:
        sign = -1.0 if order % 2 == 0 else 1.0
        return sign * 0.5 * math.exp(-x)
    return _blend_eval(x, order)


def psi_scaled(x, K, y):
    """psi((x - y) / K)."""
    return psi((x - y) / K)


def psi_metadata():
    """Convention record embedded in reports for reproducibility."""
    return {
        "tails": "psi(x) = exp(x)/2 for x <= -1/2, 1 - exp(-x)/2 for x >= 1/2",
        "blend": "quintic Hermite on [-1/2, 1/2], C^2 at the junctions",
        "blend_coefficients": [float(c) for c in _BLEND],
    }


_PSI_CHECKED = False


def _check_psi_constraints():
    """Dense numerical check of the step's constraints (run once)."""
    global _PSI_CHECKED
    if _PSI_CHECKED:
        return
    xs = np.linspace(-2.0, 2.0, 10_000)
    vals = np.array([psi(x) for x in xs])
    d1 = np.array([psi_deriv(x, 1) for x in xs])
    if not (np.all(vals > 0.0) and np.all(vals <= 1.0) and np.all(d1 > 0.0)):
        raise RuntimeError("step profile violates 0 < psi <= 1 or psi' > 0")
    blend = np.linspace(_BLEND_LO, _BLEND_HI, 10_000)
    d1b = np.array([psi_deriv(x, 1) for x in blend])
    d3b = np.array([psi_deriv(x, 3) for x in blend])
    if not np.all(np.abs(d3b) <= 10.0 * d1b):
        raise RuntimeError("step profile violates |psi'''| <= 10 psi'")
    left = np.linspace(_BLEND_LO, 0.0, 2_500)
    right = np.linspace(0.0, _BLEND_HI, 2_500)
    if not np.all([psi(x) <= 2.0 * math.exp(-abs(x)) for x in left]):
        raise RuntimeError("step profile violates psi <= 2 exp(-|x|) on [-1/2, 0]")
    if not np.all([1.0 - psi(x) <= 2.0 * math.exp(-abs(x)) for x in right]):
        raise RuntimeError("step profile violates 1 - psi <= 2 exp(-|x|) on [0, 1/2]")
    _PSI_CHECKED = True


@dataclass(frozen=True)
class WeightProfile:
    """Weight built from scaled steps: const0 + sum_c sign_c psi((x-y_c)/K).

    Kinds: ``one`` (constant 1), ``psi``, ``one-minus-psi`` and
    ``psi-difference`` (the interior partition profiles).
    """

    kind: str
    K: float
    const0: float
    signs: tuple
    centers: tuple

    def __post_init__(self):
        if self.kind != "one":
            _check_psi_constraints()
            if not (self.K >= 4.0):
                raise ValueError("K must be >= 4")

    @classmethod
    def one(cls):
        return cls("one", math.inf, 1.0, (), ())

    @classmethod
    def psi(cls, K, y):
        return cls("psi", float(K), 0.0, (1.0,), (float(y),))

    @classmethod
    def one_minus_psi(cls, K, y):
        return cls("one-minus-psi", float(K), 1.0, (-1.0,), (float(y),))

    @classmethod
    def psi_difference(cls, K, y, y2):
        return cls("psi-difference", float(K), 0.0, (1.0, -1.0), (float(y), float(y2)))

    def value(self, x):
        tot = self.const0
        for s, y in zip(self.signs, self.centers):
            tot += s * psi((x - y) / self.K)
        return tot

    def deriv(self, x, order=1):
        tot = 0.0
        for s, y in zip(self.signs, self.centers):
            tot += s * psi_deriv((x - y) / self.K, order) / self.K**order
        return tot

    def value_grid(self, xs):
        return np.array([self.value(x) for x in np.asarray(xs, dtype=float)])

    def blend_intervals(self):
        return [
            (y + _BLEND_LO * self.K, y + _BLEND_HI * self.K) for y in self.centers
        ]

    def breakpoints(self):
        pts = []
        for lo, hi in self.blend_intervals():
            pts.extend((lo, hi))
        return sorted(pts)

    def exp_pieces(self, a, b):
        """Representation const + sum gamma e^{lambda (x - y_c)} on [a, b].

        Only valid when [a, b] avoids every blend interval; each step
        component is then on a single exponential branch there.
        """
        ref = a if math.isfinite(a) else b
        if not math.isfinite(ref):
            ref = 0.0
        mid = 0.5 * (a + b) if (math.isfinite(a) and math.isfinite(b)) else ref
        const = self.const0
        pieces = []
        for s, y in zip(self.signs, self.centers):
            t = (mid - y) / self.K
            if t <= _BLEND_LO:
                pieces.append((0.5 * s, 1.0 / self.K, y))
            elif t >= _BLEND_HI:
                const += s
                pieces.append((-0.5 * s, -1.0 / self.K, y))
            else:
                raise ValueError("interval overlaps a blend region")
        return const, pieces

    def to_dict(self):
        return {
            "kind": self.kind,
            "K": self.K if math.isfinite(self.K) else None,
            "centers": list(self.centers),
        }


def partition(y, K):
    """Partition of unity Phi_1..Phi_N from interior boundaries y (len N-1).

    Phi_1 = 1 - psi_K(. - y_1), Phi_i = psi_K(. - y_{i-1}) - psi_K(. - y_i),
    Phi_N = psi_K(. - y_{N-1}); the profiles sum to one pointwise.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size and not np.all(np.diff(y) > 0.0):
        raise ValueError("partition boundaries must be strictly increasing")
    if not (K >= 4.0):
        raise ValueError("K must be >= 4")
    n = y.size + 1
    if n == 1:
        return [WeightProfile.one()]
    profiles = [WeightProfile.one_minus_psi(K, y[0])]
    for i in range(1, n - 1):
        profiles.append(WeightProfile.psi_difference(K, y[i - 1], y[i]))
    profiles.append(WeightProfile.psi(K, y[-1]))
    return profiles


def sigma0(speeds):
    """Quarter of the smallest speed gap (first gap measured from zero)."""
    c = np.asarray(speeds, dtype=float).reshape(-1)
    if c.size == 0:
        raise ValueError("speeds must be non-empty")
    if not (np.all(c > 0.0) and np.all(np.diff(c) > 0.0)):
        raise ValueError("speeds must be positive and strictly increasing")
    gaps = np.concatenate(([c[0]], np.diff(c)))
    return 0.25 * float(gaps.min())


def energy(u):
    """E(u) = int u^2 + u_x^2, exact Gram form."""
    return h1_inner(u, u)


def _components_grid(u, k, xs):
    """Vectorized (P, Q) segment components at points inside segment k."""
    xs = np.asarray(xs, dtype=float)
    nodes = u.nodes
    amps = u.amps
    grow = np.zeros_like(xs)
    decay = np.zeros_like(xs)
    if k < len(u):
        grow = np.exp(xs[:, None] - nodes[None, k:]) @ amps[k:]
    if k > 0:
        decay = np.exp(nodes[None, :k] - xs[:, None]) @ amps[:k]
    return grow, decay


def _cubic_antiderivative(p, q):
    # Antiderivative of u^3 + u u_x^2 = 2A^3 e^{3x} + 2A^2B e^x + 2AB^2 e^{-x}
    # + 2B^3 e^{-3x}, written in the bounded endpoint components P, Q.
    return (2.0 / 3.0) * p**3 + 2.0 * p**2 * q - 2.0 * p * q**2 - (2.0 / 3.0) * q**3


def moment_f(u):
    """F(u) = int u^3 + u u_x^2 by closed-form piecewise integration."""
    n = len(u)
    if n == 0:
        return 0.0
    parts = []
    for k in range(n + 1):
        if k > 0:
            p, q = u.components_at(k, u.nodes[k - 1])
            parts.append(-_cubic_antiderivative(p, q))
        if k < n:
            p, q = u.components_at(k, u.nodes[k])
            parts.append(_cubic_antiderivative(p, q))
    return math.fsum(parts)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_PANELS = 8

# density descriptions: list of (exponent mu, value_fn(P, Q)) where value_fn
# gives the bounded endpoint value of the corresponding coefficient term
_ENERGY_TERMS = (
    (2, lambda p, q: 2.0 * p * p),
    (-2, lambda p, q: 2.0 * q * q),
)
_CUBIC_TERMS = (
    (3, lambda p, q: 2.0 * p**3),
    (1, lambda p, q: 2.0 * p * p * q),
    (-1, lambda p, q: 2.0 * p * q * q),
    (-3, lambda p, q: 2.0 * q**3),
)


def _energy_density_grid(u, k, xs):
    p, q = _components_grid(u, k, xs)
    return 2.0 * p * p + 2.0 * q * q


def _cubic_density_grid(u, k, xs):
    p, q = _components_grid(u, k, xs)
    return 2.0 * p**3 + 2.0 * p * p * q + 2.0 * p * q * q + 2.0 * q**3


def _gl_panel_integral(fn, a, b):
    parts = []
    edges = np.linspace(a, b, _GL_PANELS + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        xs = 0.5 * (hi + lo) + half * _GL_NODES
        parts.append(half * float(_GL_WEIGHTS @ fn(xs)))
    return math.fsum(parts)


def _weighted_integral(u, w, terms, density_grid):
    n = len(u)
    if n == 0:
        return 0.0
    if w.kind == "one":
        edges = list(u.nodes)
        blends = []
    else:
        edges = sorted(set(map(float, u.nodes)) | set(w.breakpoints()))
        blends = w.blend_intervals()
    bounds = [-math.inf] + edges + [math.inf]
    parts = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        # refinement edges never fall strictly inside a field segment's
        # interior interval, so the count of nodes <= a identifies it
        k = int(np.searchsorted(u.nodes, a, side="right")) if math.isfinite(a) else 0
        in_blend = any(a < hi and b > lo for lo, hi in blends)
        if in_blend:
            parts.append(
                _gl_panel_integral(
                    lambda xs: density_grid(u, k, xs) * np.array([w.value(x) for x in xs]),
                    a,
                    b,
                )
            )
            continue
        const, pieces = (w.const0, []) if w.kind == "one" else w.exp_pieces(a, b)
        ends = []
        for x, sgn in ((a, -1.0), (b, 1.0)):
            if not math.isfinite(x):
                ends.append((x, sgn, 0.0, 0.0))
            else:
                p, q = u.components_at(k, x)
                ends.append((x, sgn, p, q))
        for mu, value_fn in terms:
            for x, sgn, p, q in ends:
                if not math.isfinite(x):
                    continue  # decaying contribution vanishes at the far end
                tval = value_fn(p, q)
                if const != 0.0:
                    parts.append(sgn * const * tval / mu)
                for gamma, lam, yc in pieces:
                    parts.append(
                        sgn * gamma * math.exp(lam * (x - yc)) * tval / (mu + lam)
                    )
    return math.fsum(parts)


def weighted_energy(u, w):
    """int (u^2 + u_x^2) w, closed form off the blend, Gauss-Legendre on it."""
    return _weighted_integral(u, w, _ENERGY_TERMS, _energy_density_grid)


def weighted_moment_f(u, w):
    """int (u^3 + u u_x^2) w, same splitting as :func:`weighted_energy`."""
    return _weighted_integral(u, w, _CUBIC_TERMS, _cubic_density_grid)


@dataclass(frozen=True)
class PiecewiseExponential:
    """Piecewise sum of anchored exponential terms.

    ``terms[k]`` lists ``(coeff, rate, anchor)`` triples for segment k, the
    segment meaning coeff * exp(rate * (x - anchor)); segment k spans
    (breakpoints[k-1], breakpoints[k]) with unbounded end segments.
    """

    breakpoints: np.ndarray
    terms: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "breakpoints", np.asarray(self.breakpoints, dtype=float)
        )
        self.breakpoints.setflags(write=False)
        if len(self.terms) != self.breakpoints.size + 1:
            raise ValueError("need one term list per segment")

    def value(self, x):
        k = int(np.searchsorted(self.breakpoints, x, side="left"))
        return math.fsum(_term_value(c, mu, x0, x) for c, mu, x0 in self.terms[k])

    def decays(self):
        left_ok = all(c == 0.0 or mu > 0.0 for c, mu, x0 in self.terms[0])
        right_ok = all(c == 0.0 or mu < 0.0 for c, mu, x0 in self.terms[-1])
        return left_ok and right_ok

    @classmethod
    def from_field(cls, u):
        seg = u.segments()
        terms = []
        for k in range(seg.n_segments):
            terms.append(
                tuple(
                    (c, mu, float(seg.x0[k]))
                    for c, mu in ((float(seg.grow[k]), 1), (float(seg.decay[k]), -1))
                    if c != 0.0
                )
            )
        return cls(seg.breakpoints, tuple(terms))


def _term_value(c, mu, x0, y):
    if c == 0.0:
        return 0.0
    e = mu * (y - x0)
    if abs(e) > 690.0:
        m = math.log(abs(c)) + e
        if m > 700.0:
            raise OverflowError("piecewise-exponential term overflows")
        return math.copysign(math.exp(m), c)
    return c * math.exp(e)


def helmholtz_source(u):
    """2u^2 + u_x^2 as a piecewise exponential (3A^2e^{2x} + 2AB + 3B^2e^{-2x})."""
    seg = u.segments()
    terms = []
    for k in range(seg.n_segments):
        p = float(seg.grow[k])
        q = float(seg.decay[k])
        x0 = float(seg.x0[k])
        tl = []
        if p != 0.0:
            tl.append((3.0 * p * p, 2, x0))
        if p != 0.0 and q != 0.0:
            tl.append((2.0 * p * q, 0, x0))
        if q != 0.0:
            tl.append((3.0 * q * q, -2, x0))
        terms.append(tuple(tl))
    return PiecewiseExponential(seg.breakpoints, tuple(terms))


def _exp_segment_integral(term, alpha, beta, x, side):
    """int of coeff e^{mu (y - anchor)} e^{-(x-y) or -(y-x)} over [alpha, beta].

    side=-1 integrates against e^{y-x} (piece left of x), side=+1 against
    e^{x-y}. Evaluated through the bounded endpoint values W(y); stable for
    arbitrary rates including the removable singularities at mu = -+1.
    """
    c, mu, x0 = term
    if c == 0.0:
        return 0.0
    rho = mu + 1.0 if side < 0 else mu - 1.0

    def wval(y):
        base = _term_value(c, mu, x0, y)
        return base * math.exp(y - x if side < 0 else x - y)

    if not math.isfinite(alpha):  # (-inf, beta], requires rho > 0
        if rho <= 0.0:
            raise ValueError("divergent tail in helmholtz_inverse")
        return wval(beta) / rho
    if not math.isfinite(beta):  # [alpha, +inf), requires rho < 0
        if rho >= 0.0:
            raise ValueError("divergent tail in helmholtz_inverse")
        return -wval(alpha) / rho
    delta = beta - alpha
    if rho == 0.0:
        return wval(alpha) * delta
    if abs(rho * delta) < 0.5:
        return wval(alpha) * math.expm1(rho * delta) / rho
    return (wval(beta) - wval(alpha)) / rho


def helmholtz_inverse(f, x):
    """((1 - d^2/dx^2)^{-1} f)(x) = (1/2) int e^{-|x-y|} f(y) dy.

    ``f`` is a :class:`PiecewiseExponential` (or a peaked field, converted on
    the fly) and must decay at both infinities.
    """
    if isinstance(f, PeakedField):
        f = PiecewiseExponential.from_field(f)
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if not f.decays():
        raise ValueError("helmholtz_inverse requires a decaying input")
    bounds = [-math.inf] + list(map(float, f.breakpoints)) + [math.inf]
    parts = []
    for k, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        if lo >= hi:
            continue
        pieces = []
        if lo < x:
            pieces.append((lo, min(hi, x), -1))
        if hi > x:
            pieces.append((max(lo, x), hi, +1))
        for alpha, beta, side in pieces:
            if alpha == beta:
                continue
            for term in f.terms[k]:
                parts.append(_exp_segment_integral(term, alpha, beta, x, side))
    return 0.5 * math.fsum(parts)
