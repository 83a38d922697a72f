"""Time-domain verification of synthesized loops.

Unity feedback, one compensator per channel acting on its own error:

    e_i = r_i - y_i,   u_i = Gc_i(e_i),   y_i = sum_j g_ij( phi_j( u_j(t - T_ij) ) )

Every rational part is realized in controllable canonical form.  Delays are
tapped buffers sampled once per step and held over the step.  Integration is
fixed-step classical RK4.  When the nonlinearity only ever sees delayed
signals (or is the identity) the stage dynamics are linear with a held
input, and RK4 collapses to the one-step map ``X+ = P X + Q z`` with
``P = sum_{k<=4} (hA)^k / k!``; that map is precomputed once.
"""

import collections
import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ImproperTransferFunction, NonFiniteState
from .lti import TFMatrix

BLOWUP = 1e6


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def order(self):
        return self.A.shape[0]

    def freqresp(self, omega):
        """C (jwI - A)^-1 B + D at a scalar frequency."""
        n = self.order
        if n == 0:
            return complex(self.D)
        x = np.linalg.solve(1j * omega * np.eye(n) - self.A, self.B)
        return complex((self.C @ x).item() + self.D)


def realize(tf):
    """Controllable canonical realization of the delay-free part of ``tf``.

    The delay is not part of the returned model; it stays on ``tf.delay``.
    """
    if not tf.is_proper:
        raise ImproperTransferFunction(
            f"numerator degree {tf.num.degree} exceeds denominator degree {tf.den.degree}")
    den = np.asarray(tf.den.coeffs, dtype=float)
    num = np.zeros_like(den)
    num[:len(tf.num.coeffs)] = tf.num.coeffs
    lead = den[-1]
    den = den / lead
    num = num / lead
    n = den.size - 1
    d = num[-1]
    c = num[:-1] - d * den[:-1]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -den[:-1]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = c.reshape(1, n)
    return StateSpaceModel(A, B, C, float(d))


class DelayLine:
    """Fixed-length FIFO delaying a sampled signal by ``round(delay / h)`` steps."""

    def __init__(self, delay, h):
        self.delay = float(delay)
        self.h = float(h)
        self.length = int(round(self.delay / self.h))
        if self.delay and not math.isclose(self.length * self.h, self.delay,
                                           rel_tol=1e-9, abs_tol=1e-12):
            warnings.warn(f"delay {delay} is not a multiple of step {h}; "
                          f"using {self.length} steps", stacklevel=2)
        self._buf = collections.deque([0.0] * self.length)

    def output(self):
        """Value pushed ``length`` steps ago (zero before that)."""
        return self._buf[0] if self.length else None

    def push(self, x):
        """Push the newest sample and return the delayed one."""
        if not self.length:
            return x
        self._buf.append(x)
        return self._buf.popleft()


# -- nonlinearities -----------------------------------------------------------

class Nonlinearity:
    is_identity = False

    def __call__(self, x):
        raise NotImplementedError


class Identity(Nonlinearity):
    is_identity = True

    def __call__(self, x):
        return x

    def __repr__(self):
        return "Identity()"


@dataclass(frozen=True)
class Saturation(Nonlinearity):
    lo: float = -0.2
    hi: float = 0.2

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("saturation needs lo < hi")

    def __call__(self, x):
        return np.clip(x, self.lo, self.hi)


class SinusoidalGain(Nonlinearity):
    """phi(x) = (3x + x sin 5x) / 4, inside the sector [0.5, 1]."""

    def __call__(self, x):
        return (3.0 * x + x * np.sin(5.0 * x)) / 4.0

    def __repr__(self):
        return "SinusoidalGain()"


@dataclass(frozen=True)
class SectorTable(Nonlinearity):
    """Piecewise-linear map through the breakpoints ``(xs[k], ys[k])``.

    Outside the table the end segments are extended linearly.
    """

    xs: tuple
    ys: tuple

    def __post_init__(self):
        xs = tuple(float(x) for x in self.xs)
        ys = tuple(float(y) for y in self.ys)
        if len(xs) != len(ys) or len(xs) < 2:
            raise ValueError("sector table needs >= 2 matching breakpoints")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("sector table x values must increase")
        if not xs[0] <= 0.0 <= xs[-1]:
            raise ValueError("sector table must cover x = 0")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if abs(float(np.interp(0.0, xs, ys))) > 1e-12:
            raise ValueError("sector table must satisfy phi(0) = 0")

    def __call__(self, x):
        xs, ys = self.xs, self.ys
        x = np.asarray(x, dtype=float)
        y = np.interp(x, xs, ys)
        lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        y = np.where(x < xs[0], ys[0] + lo_slope * (x - xs[0]), y)
        y = np.where(x > xs[-1], ys[-1] + hi_slope * (x - xs[-1]), y)
        return y if y.ndim else float(y)


# -- closed loop --------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray                 # (K, M)
    u: np.ndarray                 # (K, M) compensator outputs
    v: np.ndarray                 # (K, M) input into the diagonal plant entries
    bounded: bool = True
    horizon: float = 0.0

    @property
    def n_outputs(self):
        return self.y.shape[1]

    def channel(self, i):
        return Trajectory(self.t, self.y[:, i:i + 1], self.u[:, i:i + 1],
                          self.v[:, i:i + 1], self.bounded, self.horizon)

    def to_csv(self):
        m = self.n_outputs
        if m == 1:
            header = ["t", "y", "u"]
        else:
            header = ["t"] + [f"y{i + 1}" for i in range(m)] + [f"u{i + 1}" for i in range(m)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for k in range(self.t.size):
            row = [self.t[k], *self.y[k], *self.u[k]]
            w.writerow([f"{x:.15g}" for x in row])
        return buf.getvalue()


@dataclass
class _Entry:
    i: int
    j: int
    model: StateSpaceModel
    line: Optional[DelayLine]
    offset: int


def _block_diag(blocks):
    n = sum(b.shape[0] for b in blocks)
    m = sum(b.shape[1] for b in blocks)
    out = np.zeros((n, m))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


class _Loop:
    """Assembled M-channel loop; see the module docstring for the topology."""

    def __init__(self, plants, chains, nonlinearities, h):
        m = plants.size
        self.m = m
        self.h = h
        self.phi = list(nonlinearities)
        entries = []
        off = 0
        for i in range(m):
            for j in range(m):
                g = plants[i, j]
                if g.is_zero():
                    continue
                model = realize(g)
                line = DelayLine(g.delay, h) if g.delay > 0 else None
                if line is not None and line.length == 0:
                    line = None
                entries.append(_Entry(i, j, model, line, off))
                off += model.order
        self.entries = entries
        self.n_p = off
        comps = [realize(c.to_tf()) for c in chains]
        self.comps = comps
        self.n_c = sum(c.order for c in comps)
        E = len(entries)
        self.E = E

        Ap = _block_diag([e.model.A for e in entries]) if entries else np.zeros((0, 0))
        Bp = _block_diag([e.model.B for e in entries]) if entries else np.zeros((0, 0))
        Cp = np.zeros((m, self.n_p))
        Dp = np.zeros((m, E))
        Sd = np.zeros((E, E))
        Su = np.zeros((E, m))
        for k, e in enumerate(entries):
            Cp[e.i, e.offset:e.offset + e.model.order] = e.model.C
            Dp[e.i, k] = e.model.D
            if e.line is not None:
                Sd[k, k] = 1.0
            else:
                Su[k, e.j] = 1.0
        Ac = _block_diag([c.A for c in comps]) if comps else np.zeros((0, 0))
        Bc = _block_diag([c.B for c in comps]) if comps else np.zeros((0, m))
        Cc = _block_diag([c.C for c in comps]) if comps else np.zeros((m, 0))
        Dc = np.diag([c.D for c in comps])
        self.Ap, self.Bp, self.Cp, self.Dp = Ap, Bp, Cp, Dp
        self.Sd, self.Su = Sd, Su
        self.Ac, self.Bc, self.Cc, self.Dc = Ac, Bc, Cc, Dc

        undelayed_ft = Dp @ Su
        # phi only matters on undelayed paths; delayed taps enter as held inputs
        self.linear = all(self.phi[j].is_identity for j in range(m) if np.any(Su[:, j]))
        if np.any(undelayed_ft) and not self.linear:
            raise ValueError("algebraic loop through a nonlinearity is not supported")
        K = undelayed_ft
        M_loop = np.eye(m) + K @ Dc
        if abs(np.linalg.det(M_loop)) < 1e-12:
            raise ValueError("ill-posed loop: feedthrough loop gain equals 1")
        self.K = K
        self.L = np.linalg.inv(M_loop)
        if self.linear:
            self._build_linear()

    def _build_linear(self):
        m, E, n_p, n_c = self.m, self.E, self.n_p, self.n_c
        L, K = self.L, self.K
        Cp, Dp, Sd, Su = self.Cp, self.Dp, self.Sd, self.Su
        Cc, Dc, Bc, Bp = self.Cc, self.Dc, self.Bc, self.Bp
        # z = [r (m), w_delayed (E)]
        Cy = L @ np.hstack([Cp, K @ Cc])
        Dy = L @ np.hstack([K @ Dc, Dp @ Sd])
        Cu = np.hstack([np.zeros((m, n_p)), Cc]) - Dc @ Cy
        Du = np.hstack([Dc, np.zeros((m, E))]) - Dc @ Dy
        Cw = Su @ Cu
        Dw = np.hstack([np.zeros((E, m)), Sd]) + Su @ Du
        n = n_p + n_c
        A = np.zeros((n, n))
        A[:n_p, :n_p] = self.Ap
        A[n_p:, n_p:] = self.Ac
        A[:n_p] += Bp @ Cw
        A[n_p:] -= Bc @ Cy
        B = np.zeros((n, m + E))
        B[:n_p] = Bp @ Dw
        B[n_p:] = Bc @ (np.hstack([np.eye(m), np.zeros((m, E))]) - Dy)
        hA = self.h * A
        I = np.eye(n)
        hA2 = hA @ hA
        hA3 = hA2 @ hA
        self.P = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
        self.Q = self.h * (I + hA / 2 + hA2 / 6 + hA3 / 24) @ B
        self.Cy, self.Dy, self.Cu, self.Du, self.Dw = Cy, Dy, Cu, Du, Dw

    # nonlinear path: phi acts on undelayed u inside the RK4 stages
    def _signals(self, X, r, wd):
        xp, xc = X[:self.n_p], X[self.n_p:]
        y = self.Cp @ xp + self.Dp @ (self.Sd @ wd)
        u = self.Cc @ xc + self.Dc @ (r - y)
        phi_u = np.array([self.phi[j](u[j]) for j in range(self.m)])
        w = self.Sd @ wd + self.Su @ phi_u
        return y, u, w

    def _deriv(self, X, r, wd):
        y, u, w = self._signals(X, r, wd)
        xp, xc = X[:self.n_p], X[self.n_p:]
        return np.concatenate([self.Ap @ xp + self.Bp @ w, self.Ac @ xc + self.Bc @ (r - y)])

    def run(self, references, horizon):
        m, h, E = self.m, self.h, self.E
        r = np.asarray(references, dtype=float)
        steps = int(round(horizon / h))
        X = np.zeros(self.n_p + self.n_c)
        ts = np.arange(steps + 1) * h
        Y = np.full((steps + 1, m), np.nan)
        U = np.full((steps + 1, m), np.nan)
        Vin = np.full((steps + 1, m), np.nan)
        diag_entry = {e.i: k for k, e in enumerate(self.entries) if e.i == e.j}
        bounded = True
        last = steps
        wd = np.zeros(E)
        for k in range(steps + 1):
            for q, e in enumerate(self.entries):
                if e.line is not None:
                    wd[q] = self.phi[e.j](e.line.output())
            if self.linear:
                z = np.concatenate([r, wd])
                y = self.Cy @ X + self.Dy @ z
                u = self.Cu @ X + self.Du @ z
                w = self.Dw @ z + self.Su @ (self.Cu @ X) if E else np.zeros(0)
            else:
                y, u, w = self._signals(X, r, wd)
            Y[k], U[k] = y, u
            for i, q in diag_entry.items():
                Vin[k, i] = w[q]
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
                raise NonFiniteState(f"non-finite state at t={ts[k]:.6g}")
            # internal signals can diverge well ahead of the output
            if max(np.max(np.abs(y), initial=0.0), np.max(np.abs(u), initial=0.0),
                   np.max(np.abs(X), initial=0.0)) > BLOWUP:
                bounded = False
                last = k
                break
            if k == steps:
                break
            for e in self.entries:
                if e.line is not None:
                    e.line.push(float(u[e.j]))
            if self.linear:
                X = self.P @ X + self.Q @ z
            else:
                k1 = self._deriv(X, r, wd)
                k2 = self._deriv(X + 0.5 * h * k1, r, wd)
                k3 = self._deriv(X + 0.5 * h * k2, r, wd)
                k4 = self._deriv(X + h * k3, r, wd)
                X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        sl = slice(0, last + 1)
        return Trajectory(ts[sl], Y[sl], U[sl], Vin[sl], bounded, horizon)


def simulate_mimo_closed_loop(plants, chains, references, horizon=60.0, h=1e-3,
                              nonlinearities=None):
    """Decentralized unity-feedback simulation of a square TFMatrix plant."""
    m = plants.size
    if len(chains) != m or len(references) != m:
        raise ValueError("need one chain and one reference per channel")
    nls = list(nonlinearities) if nonlinearities is not None else [Identity()] * m
    return _Loop(plants, chains, nls, h).run(references, horizon)


def simulate_closed_loop(plant, chain, nl=None, reference=1.0, horizon=60.0, h=1e-3):
    """Single-loop simulation with ``nl`` between the (delayed) compensator output and the plant."""
    return simulate_mimo_closed_loop(TFMatrix([[plant]]), [chain], [reference],
                                     horizon, h, [nl or Identity()])


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class StepResponseMetrics:
    overshoot: float
    settling_time: Optional[float]
    steady_state_error: float
    bounded: bool
    settled: bool
    final_value: float


def step_metrics(traj, reference, channel=0, band=0.02):
    """Overshoot, 2%-settling time and offset of one output.

    The final value is the last sample and the band is relative to it (to the
    reference when the final value is zero).  The response counts as settled when
    it stays inside the band around the final value for the last 10% of the
    horizon or longer.
    """
    t = traj.t
    y = traj.y[:, channel]
    if y.size == 0:
        raise ValueError("empty trajectory")
    if not traj.bounded:
        return StepResponseMetrics(math.inf, None, math.inf, False, False, float(y[-1]))
    final = float(y[-1])
    scale = abs(final) if abs(final) > 1e-12 else abs(reference)
    tol = band * scale
    if final != 0:
        peak = np.max(y) if final > 0 else np.min(y)
        overshoot = max(0.0, float((peak - final) / final))
    else:
        overshoot = 0.0
    outside = np.flatnonzero(np.abs(y - final) > tol)
    if outside.size == 0:
        ts = float(t[0])
    elif outside[-1] + 1 < t.size:
        ts = float(t[outside[-1] + 1])
    else:
        ts = float(t[-1])
    horizon = traj.horizon or float(t[-1])
    settled = ts <= 0.9 * horizon
    return StepResponseMetrics(overshoot, ts if settled else None,
                               float(reference - final), True, settled, final)


def min_distance(samples, point):
    s = np.asarray(samples, dtype=complex)
    if s.size == 0:
        raise ValueError("no samples")
    return float(np.min(np.abs(s - point)))
