"""Multipeakon dynamics.

The field u(t,x) = sum_i p_i(t) e^{-|x - q_i(t)|} solves the Camassa-Holm
equation exactly when (p, q) follow the Hamiltonian system

    dq_i/dt = sum_j p_j e^{-|q_i - q_j|}
    dp_i/dt = sum_j p_i p_j sgn(q_i - q_j) e^{-|q_i - q_j|}

with sgn(0) = 0. For positive momenta and ordered positions the ordering and
positivity persist for all time, so the ODE is smooth along every admissible
trajectory; an adaptive Dormand-Prince 5(4) pair with PI step control and a
quartic dense-output interpolant integrates it to tight tolerances in either
time direction. Steps that would break the ordering/positivity guards are
rejected and retried with half the step, failing loudly if the step
underflows (pure-peakon data never collides, so a trip means bad input or an
unreasonable tolerance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PeakedField
from .functionals import energy, moment_f
from . import spectral

__all__ = [
    "PeakonState",
    "Trajectory",
    "NearCollisionError",
    "rhs",
    "field",
    "hamiltonian",
    "integrate",
]


class NearCollisionError(RuntimeError):
    """Step control underflowed while separating peakons i and i+1."""

    def __init__(self, pair, time):
        self.pair = pair
        self.time = time
        super().__init__(
            f"integration step underflow near t={time:.6g}: "
            f"peakon pair {pair} approaches the gap/positivity guard"
        )


@dataclass(frozen=True)
class PeakonState:
    """Instantaneous multipeakon data: time, momenta p > 0, ordered q."""

    t: float
    p: np.ndarray
    q: np.ndarray

    def __init__(self, t, p, q):
        p = np.asarray(p, dtype=float).reshape(-1).copy()
        q = np.asarray(q, dtype=float).reshape(-1).copy()
        if p.shape != q.shape:
            raise ValueError("p and q must have the same length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("state entries must be finite")
        if p.size and not np.all(p > 0.0):
            raise ValueError("momenta must be positive")
        if p.size > 1 and not np.all(np.diff(q) > 0.0):
            raise ValueError("positions must be strictly increasing")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "t", float(t))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def __len__(self):
        return self.p.size

    def field(self):
        return PeakedField(self.p, self.q)

    def mirrored(self):
        """Spatial reflection (p_i, q_i) -> (p_{N+1-i}, -q_{N+1-i})."""
        return PeakonState(-self.t, self.p[::-1], -self.q[::-1])


def field(s):
    """Peaked field carried by the state (amps = p, nodes = q)."""
    return s.field()


def _rhs_arrays(p, q):
    diff = q[:, None] - q[None, :]
    kern = np.exp(-np.abs(diff))
    dq = kern @ p
    dp = p * ((np.sign(diff) * kern) @ p)
    return dq, dp


def rhs(s):
    """Right-hand side (dq, dp) of the multipeakon system."""
    dq, dp = _rhs_arrays(s.p, s.q)
    return dq, dp


def hamiltonian(s):
    """H = (1/2) sum_ij p_i p_j e^{-|q_i - q_j|} = E/4."""
    if not len(s):
        return 0.0
    diff = np.abs(s.q[:, None] - s.q[None, :])
    terms = 0.5 * (s.p[:, None] * s.p[None, :]) * np.exp(-diff)
    return math.fsum(terms.ravel())


@dataclass(frozen=True)
class Trajectory:
    """Sampled trajectory with per-sample conserved-quantity observables."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    moment_f: np.ndarray
    sum_p: np.ndarray
    eigenvalues: np.ndarray | None

    def __len__(self):
        return self.times.size

    def state(self, i):
        return PeakonState(self.times[i], self.p[i], self.q[i])

    def states(self):
        return [self.state(i) for i in range(len(self))]


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B5 - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
# dense-output weights (quartic interpolant)
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)


def _state_ok(y, n, gap_tol):
    p = y[n:]
    if np.any(p <= 0.0) or not np.all(np.isfinite(y)):
        return False
    if n > 1:
        q = y[:n]
        if np.any(np.diff(q) < gap_tol):
            return False
    return True


def _worst_pair(y, n, gap_tol):
    p = y[n:]
    bad_p = np.nonzero(p <= 0.0)[0]
    if bad_p.size:
        i = int(bad_p[0])
        return (i, i)
    gaps = np.diff(y[:n])
    i = int(np.argmin(gaps))
    return (i, i + 1)


def _initial_step(f, t0, y0, f0, direction, span, tol):
    sc = tol + tol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / sc) ** 2))) if y0.size else 0.0
    d1 = math.sqrt(float(np.mean((f0 / sc) ** 2))) if y0.size else 0.0
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = f(y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / sc) ** 2))) / h0 if h0 > 0 else 0.0
    dm = max(d1, d2)
    h1 = (0.01 / dm) ** 0.2 if dm > 1e-15 else max(1e-6, h0 * 1e3)
    return min(100.0 * h0, h1, span)


def integrate(
    s0,
    t_end,
    tol=1e-10,
    *,
    sample_times=None,
    n_samples=200,
    record_spectrum=True,
    gap_tol=1e-9,
    min_step=1e-12,
    max_steps=10_000_000,
):
    """Integrate the multipeakon system from ``s0`` to ``t_end``.

    Returns a :class:`Trajectory` sampled at ``sample_times`` (defaults to a
    uniform grid of ``n_samples`` points including both endpoints) via the
    integrator's dense output. ``t_end`` may precede ``s0.t``; the system is
    time reversible and is integrated backward in that case.
    """
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    n = len(s0)
    t0 = s0.t
    if sample_times is None:
        sample_times = np.linspace(t0, t_end, int(n_samples))
    else:
        sample_times = np.asarray(sample_times, dtype=float).reshape(-1)
    direction = 1.0 if t_end >= t0 else -1.0
    if sample_times.size:
        inside = (sample_times - t0) * direction >= -1e-14
        inside &= (sample_times - t_end) * direction <= 1e-14
        if not np.all(inside):
            raise ValueError("sample times must lie between t0 and t_end")
        if sample_times.size > 1 and not np.all(np.diff(sample_times) * direction > 0):
            raise ValueError("sample times must be strictly monotone toward t_end")

    samples_y = np.empty((sample_times.size, 2 * n))
    sample_idx = 0

    y = np.concatenate([s0.q, s0.p])

    def f(yv):
        dq, dp = _rhs_arrays(yv[n:], yv[:n])
        return np.concatenate([dq, dp])

    # trivial spans and empty states short-circuit the stepper
    span = abs(t_end - t0)
    if n == 0 or span == 0.0:
        while sample_idx < sample_times.size:
            samples_y[sample_idx] = y
            sample_idx += 1
        return _build_trajectory(sample_times, samples_y, n, record_spectrum)

    f0 = f(y)
    h = _initial_step(f, t0, y, f0, direction, span, tol)
    t = t0
    k1 = f0
    facold = 1e-4
    steps = 0
    while (t - t_end) * direction < 0.0:
        steps += 1
        if steps > max_steps:
            raise RuntimeError("integrator exceeded the step budget")
        h = min(h, abs(t_end - t))
        if h < min_step:
            raise NearCollisionError(_worst_pair(y, n, gap_tol), t)
        hs = direction * h
        k = [k1]
        for i in range(1, 7):
            yi = y + hs * (np.stack(k, axis=0).T @ _A[i])
            k.append(f(yi))
        kmat = np.stack(k, axis=0)
        y_new = y + hs * (kmat.T @ _B5)
        err_vec = hs * (kmat.T @ _E)
        sc = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / sc) ** 2)))

        if err <= 1.0 and _state_ok(y_new, n, gap_tol):
            # accepted: fill dense output for samples inside (t, t+hs]
            t_new = t + hs
            ydiff = y_new - y
            bspl = hs * k[0] - ydiff
            rc = (
                y,
                ydiff,
                bspl,
                ydiff - hs * k[6] - bspl,
                hs * (kmat.T @ _D),
            )
            while sample_idx < sample_times.size:
                ts = sample_times[sample_idx]
                if (ts - t_new) * direction > 1e-14 * max(1.0, abs(t_new)):
                    break
                theta = (ts - t) / hs if hs != 0.0 else 0.0
                theta = min(max(theta, 0.0), 1.0)
                th1 = 1.0 - theta
                samples_y[sample_idx] = rc[0] + theta * (
                    rc[1] + th1 * (rc[2] + theta * (rc[3] + th1 * rc[4]))
                )
                sample_idx += 1
            t = t_new
            y = y_new
            k1 = k[6]  # FSAL
            fac11 = err**0.17 if err > 0.0 else 1e-10
            fac = fac11 / facold**0.04
            fac = max(0.1, min(5.0, fac / 0.9))
            h = h / fac
            facold = max(err, 1e-4)
        elif err <= 1.0:
            # error fine but a guard tripped: retry with half the step
            h *= 0.5
        else:
            fac11 = err**0.17
            h = h / min(5.0, fac11 / 0.9)

    while sample_idx < sample_times.size:
        samples_y[sample_idx] = y
        sample_idx += 1
    return _build_trajectory(sample_times, samples_y, n, record_spectrum)


def _build_trajectory(times, ys, n, record_spectrum):
    m = times.size
    qs = ys[:, :n].copy()
    ps = ys[:, n:].copy()
    es = np.empty(m)
    fs = np.empty(m)
    sp = np.empty(m)
    lam = np.empty((m, n)) if record_spectrum else None
    for i in range(m):
        u = PeakedField(ps[i], qs[i])
        es[i] = energy(u)
        fs[i] = moment_f(u)
        sp[i] = math.fsum(ps[i])
        if record_spectrum:
            state = PeakonState(times[i], ps[i], qs[i])
            lam[i] = spectral.spectrum(state).values
    for arr in (times, qs, ps, es, fs, sp):
        arr.setflags(write=False)
    if lam is not None:
        lam.setflags(write=False)
    return Trajectory(times, qs, ps, es, fs, sp, lam)
