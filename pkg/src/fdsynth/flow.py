"""Gradient flow on compensator parameters.

The sampled response Q(omega_i, Lambda) is pushed out of the forbidden
region by the force F = -grad V evaluated at every sample.  The stacked
forces are pulled back to parameter space through the transpose of the
stacked Jacobian, ``dLambda/dt = J^T F``, which is integrated with explicit
Euler steps, projected onto the parameter bounds.  A step is accepted only
when the summed potential ``V_Omega`` does not increase, so every recorded
trace is a Lyapunov-descent sequence.

For a square MIMO plant each channel is steered by its equivalent forward
transfer function with the other channels' current compensators folded in;
cross-channel partials are ignored.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NumericalFailure
from .lti import (CompensatorChain, FrequencyGrid, RationalTF, TFMatrix,
                  chain_partials, eval_chain, eval_tf)
from .region import RegionSpec


class StopReason(str, Enum):
    CONVERGED = "Converged"
    STALLED = "Stalled"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class ParameterBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def for_chain(cls, n_sections, zero_lower=-np.inf, pole_lower=-np.inf,
                  zero_upper=np.inf, pole_upper=np.inf):
        lo = np.tile([zero_lower, pole_lower], n_sections)
        hi = np.tile([zero_upper, pole_upper], n_sections)
        return cls(lo, hi)

    def __len__(self):
        return self.lower.size

    def clamp(self, x):
        return np.minimum(np.maximum(x, self.lower), self.upper)


@dataclass(frozen=True)
class FlowSettings:
    eta0: float = 1e-2
    tol_force: float = 1e-6
    tol_stall: float = 1e-10
    max_iterations: int = 200_000
    grow: float = 1.2
    shrink: float = 0.5


@dataclass(frozen=True)
class DesignProblem:
    """Plant, initial compensators, forbidden regions and integrator settings.

    ``plant`` is a RationalTF (one channel) or a square TFMatrix (one channel
    per diagonal entry).  ``chains``, ``regions`` and ``bounds`` hold one
    entry per channel; ``bounds`` entries may be None for unbounded.
    """

    plant: object
    chains: tuple
    regions: tuple
    grid: FrequencyGrid = field(default_factory=FrequencyGrid.logspace)
    bounds: tuple = None
    settings: FlowSettings = FlowSettings()

    def __post_init__(self):
        chains = self.chains
        if isinstance(chains, CompensatorChain):
            chains = (chains,)
        regions = self.regions
        if isinstance(regions, RegionSpec):
            regions = (regions,)
        chains, regions = tuple(chains), tuple(regions)
        m = self.n_channels
        if len(chains) != m or len(regions) != m:
            raise ValueError(f"expected {m} chains and regions, got "
                             f"{len(chains)} and {len(regions)}")
        bounds = self.bounds
        if bounds is None:
            bounds = (None,) * m
        elif isinstance(bounds, ParameterBounds):
            bounds = (bounds,)
        bounds = tuple(ParameterBounds.unbounded(c.n_params) if b is None else b
                       for b, c in zip(bounds, chains))
        if len(bounds) != m:
            raise ValueError("need one ParameterBounds per channel")
        for b, c in zip(bounds, chains):
            if len(b) != c.n_params:
                raise ValueError("bounds length does not match chain parameter count")
        if not isinstance(self.grid, FrequencyGrid):
            object.__setattr__(self, "grid", FrequencyGrid(self.grid))
        object.__setattr__(self, "chains", chains)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "bounds", bounds)

    @property
    def is_mimo(self):
        return isinstance(self.plant, TFMatrix)

    @property
    def n_channels(self):
        if isinstance(self.plant, TFMatrix):
            return self.plant.size
        if isinstance(self.plant, RationalTF):
            return 1
        raise TypeError("plant must be a RationalTF or TFMatrix")

    @property
    def sizes(self):
        return [c.n_params for c in self.chains]

    def initial_lambda(self):
        return np.concatenate([c.params() for c in self.chains]) if self.chains else np.zeros(0)

    def split(self, lam):
        out, k = [], 0
        for n in self.sizes:
            out.append(np.asarray(lam[k:k + n], dtype=float))
            k += n
        return out

    def chains_at(self, lam):
        return [CompensatorChain.from_params(p) for p in self.split(lam)]

    def with_lambda(self, lam):
        return replace(self, chains=tuple(self.chains_at(lam)))


@dataclass(frozen=True)
class FlowState:
    lam: np.ndarray
    iteration: int
    lyapunov: float
    max_force: float
    step: tuple
    channel_lyapunov: tuple = ()

    @property
    def lambda_(self):
        return self.lam


@dataclass(frozen=True)
class FlowTrace:
    snapshots: tuple
    stop_reason: StopReason
    iterations: int = 0

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def lyapunov(self):
        return np.array([s.lyapunov for s in self.snapshots])

    def lambdas(self):
        return np.array([s.lam for s in self.snapshots])


class _Evaluator:
    """Caches plant responses on the grid; evaluates Q, V, F and J at a Lambda."""

    def __init__(self, problem):
        self.problem = problem
        w = problem.grid.omegas
        self.omegas = w
        plant = problem.plant
        if isinstance(plant, TFMatrix):
            m = plant.size
            self.g = [[None if plant[i, j].is_zero() else eval_tf(plant[i, j], w)
                       for j in range(m)] for i in range(m)]
        else:
            self.g = [[eval_tf(plant, w)]]
        self.m = len(self.g)

    def _bases(self, chains, gc):
        bases = []
        for i in range(self.m):
            base = self.g[i][i] if self.g[i][i] is not None else np.zeros_like(self.omegas, dtype=complex)
            for j in range(self.m):
                if j == i or self.g[i][j] is None or self.g[j][i] is None:
                    continue
                base = base - gc[j] * self.g[i][j] * self.g[j][i]
            bases.append(base)
        return bases

    def evaluate(self, lam, with_jacobian=True):
        chains = self.problem.chains_at(lam)
        gc = [eval_chain(c, self.omegas) for c in chains]
        bases = self._bases(chains, gc)
        out = []
        for i, (chain, base, region) in enumerate(zip(chains, bases, self.problem.regions)):
            q = base * gc[i]
            v, f = region.field(q)
            jac = base[:, None] * chain_partials(chain, self.omegas) if with_jacobian else None
            out.append(_ChannelEval(q, v, f, jac))
        return out


@dataclass
class _ChannelEval:
    q: np.ndarray
    v: np.ndarray
    f: np.ndarray
    jac: Optional[np.ndarray]

    @property
    def lyapunov(self):
        return float(np.sum(self.v))

    @property
    def max_force(self):
        return float(np.max(np.abs(self.f))) if self.f.size else 0.0

    def direction(self):
        # J^T F with rows interleaved (Re, Im) per frequency == Re(J^H F)
        return np.real(np.conj(self.jac).T @ self.f)

    def actions(self):
        return np.real(np.conj(self.jac) * self.f[:, None])


def _stack_real(z):
    out = np.empty(z.shape[:1] + (2,) + z.shape[1:], dtype=float)
    out[:, 0] = z.real
    out[:, 1] = z.imag
    return out.reshape((2 * z.shape[0],) + z.shape[1:])


def assemble_force(problem, lam=None):
    """Stacked forces ``[F_r(w1), F_i(w1), F_r(w2), ...]`` per channel and V_Omega."""
    lam = problem.initial_lambda() if lam is None else np.asarray(lam, dtype=float)
    evals = _Evaluator(problem).evaluate(lam, with_jacobian=False)
    return [_stack_real(e.f) for e in evals], float(sum(e.lyapunov for e in evals))


def assemble_jacobian(problem, lam=None):
    """Per-channel (2N x L) Jacobians of the stacked (Re Q, Im Q) samples."""
    lam = problem.initial_lambda() if lam is None else np.asarray(lam, dtype=float)
    evals = _Evaluator(problem).evaluate(lam)
    return [_stack_real(e.jac) for e in evals]


def stacked_response(problem, lam):
    """Stacked (Re Q, Im Q) per channel; the object the Jacobian differentiates."""
    evals = _Evaluator(problem).evaluate(np.asarray(lam, dtype=float), with_jacobian=False)
    return [_stack_real(e.q) for e in evals]


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("non-finite value in flow evaluation")


def _state(lam, iteration, evals, etas):
    return FlowState(
        lam=np.array(lam, dtype=float),
        iteration=iteration,
        lyapunov=float(sum(e.lyapunov for e in evals)),
        max_force=max(e.max_force for e in evals),
        step=tuple(float(x) for x in etas),
        channel_lyapunov=tuple(e.lyapunov for e in evals),
    )


def initial_state(problem):
    lam = problem.initial_lambda()
    evals = _Evaluator(problem).evaluate(lam, with_jacobian=False)
    return _state(lam, 0, evals, [problem.settings.eta0] * problem.n_channels)


def step(problem, state, eta=None, evaluator=None):
    """One projected explicit-Euler step ``clamp(Lambda + eta * J^T F)``.

    ``eta`` may be a scalar (shared) or one value per channel; it defaults to
    the step sizes stored in ``state``.  Returns the candidate state without
    any acceptance test.
    """
    ev = evaluator or _Evaluator(problem)
    m = problem.n_channels
    if eta is None:
        etas = np.asarray(state.step, dtype=float)
    else:
        etas = np.broadcast_to(np.asarray(eta, dtype=float), (m,))
    evals = ev.evaluate(state.lam)
    parts = problem.split(state.lam)
    new = []
    for p, e, b, h in zip(parts, evals, problem.bounds, etas):
        d = e.direction()
        _check_finite(d)
        new.append(b.clamp(p + h * d))
    lam = np.concatenate(new) if new else state.lam.copy()
    cand = ev.evaluate(lam, with_jacobian=False)
    for e in cand:
        _check_finite(e.q, e.v, e.f)
    return _state(lam, state.iteration + 1, cand, etas)


@dataclass(frozen=True)
class StallReport:
    omegas: np.ndarray
    actions: tuple          # per channel, (N, L) rows Delta_Lambda(omega_i)
    totals: tuple           # per channel, the summed action J^T F
    action_norms: tuple
    total_norms: tuple

    def summary(self):
        out = []
        for i, (a, tot) in enumerate(zip(self.action_norms, self.total_norms)):
            k = int(np.argmax(a))
            out.append({
                "channel": i,
                "net_action_norm": float(tot),
                "largest_action_norm": float(a[k]),
                "largest_action_omega": float(self.omegas[k]),
                "active_frequencies": int(np.count_nonzero(a > 0)),
            })
        return out


def stall_diagnosis(problem, state=None):
    """Split each channel's parameter velocity into its per-frequency summands."""
    lam = problem.initial_lambda() if state is None else state.lam
    evals = _Evaluator(problem).evaluate(np.asarray(lam, dtype=float))
    actions = tuple(e.actions() for e in evals)
    totals = tuple(e.direction() for e in evals)
    return StallReport(
        omegas=problem.grid.omegas,
        actions=actions,
        totals=totals,
        action_norms=tuple(np.linalg.norm(a, axis=1) for a in actions),
        total_norms=tuple(float(np.linalg.norm(t)) for t in totals),
    )


def run(problem, callback=None):
    """Integrate the parameter flow until convergence, stall or the iteration cap.

    Each channel keeps its own step size: it grows by ``settings.grow`` when
    the channel's potential does not increase and shrinks by
    ``settings.shrink`` otherwise.  When channels are coupled and only some
    of them accept, the mixed update is re-checked against the summed
    potential and dropped entirely if that would increase it.
    """
    s = problem.settings
    ev = _Evaluator(problem)
    m = problem.n_channels
    bounds = problem.bounds
    coupled = problem.is_mimo and not problem.plant.is_diagonal()

    lam = problem.initial_lambda()
    parts = problem.split(lam)
    etas = np.full(m, float(s.eta0))
    try:
        evals = ev.evaluate(lam)
        for e in evals:
            _check_finite(e.q, e.v, e.f, e.jac)
    except NumericalFailure:
        evals = ev.evaluate(lam, with_jacobian=False)
        return FlowTrace((_state(lam, 0, evals, etas),), StopReason.NUMERICAL_FAILURE)

    snapshots = [_state(lam, 0, evals, etas)]
    stalled = np.zeros(m, dtype=bool)
    iteration = 0
    eta_floor = s.eta0 * 1e-30

    def finish(reason):
        return FlowTrace(tuple(snapshots), reason, iteration)

    while True:
        active = np.array([e.max_force > s.tol_force for e in evals])
        if not active.any():
            return finish(StopReason.CONVERGED)
        if iteration >= s.max_iterations:
            return finish(StopReason.MAX_ITERATIONS)
        iteration += 1

        cand_parts = list(parts)
        for i in np.flatnonzero(active):
            d = evals[i].direction()
            if not np.all(np.isfinite(d)):
                return finish(StopReason.NUMERICAL_FAILURE)
            cand_parts[i] = bounds[i].clamp(parts[i] + etas[i] * d)
            moved = np.linalg.norm(cand_parts[i] - parts[i])
            stalled[i] = moved <= s.tol_stall * etas[i] or etas[i] < eta_floor
        if np.all(stalled[active]):
            return finish(StopReason.STALLED)

        cand_lam = np.concatenate(cand_parts)
        try:
            cand = ev.evaluate(cand_lam)
            for e in cand:
                _check_finite(e.q, e.v, e.f, e.jac)
        except NumericalFailure:
            return finish(StopReason.NUMERICAL_FAILURE)

        accept = np.array([active[i] and cand[i].lyapunov <= evals[i].lyapunov
                           for i in range(m)])
        if coupled and accept.any() and not accept[active].all():
            mixed_parts = [cand_parts[i] if accept[i] else parts[i] for i in range(m)]
            mixed_lam = np.concatenate(mixed_parts)
            mixed = ev.evaluate(mixed_lam)
            if sum(e.lyapunov for e in mixed) > sum(e.lyapunov for e in evals):
                accept[:] = False
            else:
                cand_parts, cand_lam, cand = mixed_parts, mixed_lam, mixed
        elif coupled and accept.any():
            if sum(e.lyapunov for e in cand) > sum(e.lyapunov for e in evals):
                accept[:] = False

        for i in np.flatnonzero(active):
            etas[i] *= s.grow if accept[i] else s.shrink
        if accept.any():
            if coupled:
                parts, evals = cand_parts, cand
            else:
                parts = [cand_parts[i] if accept[i] else parts[i] for i in range(m)]
                evals = [cand[i] if accept[i] else evals[i] for i in range(m)]
            lam = np.concatenate(parts)
            snap = _state(lam, iteration, evals, etas)
            snapshots.append(snap)
            if callback is not None:
                callback(snap)


def run_mimo(problem, callback=None):
    """Decentralized design for a square TFMatrix plant (see :func:`run`)."""
    if not problem.is_mimo:
        raise TypeError("run_mimo expects a TFMatrix plant")
    return run(problem, callback)


def channel_responses(problem, lam=None):
    """Per-channel sampled Q at ``lam`` (defaults to the initial parameters)."""
    lam = problem.initial_lambda() if lam is None else np.asarray(lam, dtype=float)
    return [e.q for e in _Evaluator(problem).evaluate(lam, with_jacobian=False)]


def is_compliant(problem, lam):
    return all(float(np.max(e.v)) == 0.0
               for e in _Evaluator(problem).evaluate(np.asarray(lam, dtype=float),
                                                     with_jacobian=False))
