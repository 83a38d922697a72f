"""Rational transfer functions with transport delay and cascade compensators.

Everything here is evaluated on the imaginary axis, s = j*omega.  Functions
accept a scalar omega (returning a Python complex) or an array of omegas
(returning an ndarray), so the flow can evaluate a whole frequency grid in
one call.

Polynomial coefficients are stored in *ascending* powers of s, i.e.
``coeffs[k]`` multiplies ``s**k``.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import PoleOnGrid

DEN_FLOOR = 1e-12


def _horner(coeffs, s):
    acc = np.zeros_like(s, dtype=complex) + coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * s + c
    return acc


@dataclass(frozen=True)
class Polynomial:
    coeffs: tuple

    def __init__(self, coeffs):
        c = [float(x) for x in np.atleast_1d(np.asarray(coeffs, dtype=float))]
        if not c:
            raise ValueError("polynomial needs at least one coefficient")
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def is_zero(self):
        return self.coeffs == (0.0,)

    def __call__(self, s):
        return _horner(self.coeffs, np.asarray(s, dtype=complex))

    def __mul__(self, other):
        return Polynomial(np.convolve(self.coeffs, other.coeffs))


@dataclass(frozen=True)
class RationalTF:
    """``num(s) / den(s) * exp(-delay * s)``."""

    num: Polynomial
    den: Polynomial
    delay: float = 0.0

    def __post_init__(self):
        if not isinstance(self.num, Polynomial):
            object.__setattr__(self, "num", Polynomial(self.num))
        if not isinstance(self.den, Polynomial):
            object.__setattr__(self, "den", Polynomial(self.den))
        if self.den.is_zero():
            raise ValueError("denominator is identically zero")
        if not self.delay >= 0:
            raise ValueError(f"delay must be >= 0, got {self.delay}")
        object.__setattr__(self, "delay", float(self.delay))

    @classmethod
    def constant(cls, k=1.0):
        return cls(Polynomial([k]), Polynomial([1.0]))

    @property
    def is_proper(self):
        return self.num.degree <= self.den.degree

    def is_zero(self):
        return self.num.is_zero()

    def __call__(self, omega):
        return eval_tf(self, omega)


@dataclass(frozen=True)
class FirstOrderSection:
    """The lead/lag section (s + zero) / (s + pole)."""

    zero: float
    pole: float


@dataclass(frozen=True)
class CompensatorChain:
    sections: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))

    @classmethod
    def from_params(cls, params):
        """Inverse of :meth:`params`: ``[z1, p1, z2, p2, ...]``."""
        params = np.asarray(params, dtype=float)
        if params.ndim != 1 or params.size % 2:
            raise ValueError("parameter vector must have even length")
        return cls(tuple(FirstOrderSection(float(z), float(p))
                         for z, p in params.reshape(-1, 2)))

    def params(self):
        return np.array([v for sec in self.sections for v in (sec.zero, sec.pole)],
                        dtype=float)

    def __len__(self):
        return len(self.sections)

    @property
    def n_params(self):
        return 2 * len(self.sections)

    def __add__(self, other):
        return CompensatorChain(self.sections + other.sections)

    def to_tf(self):
        """Collapse the chain into a single delay-free RationalTF."""
        num = Polynomial([1.0])
        den = Polynomial([1.0])
        for sec in self.sections:
            num = num * Polynomial([sec.zero, 1.0])
            den = den * Polynomial([sec.pole, 1.0])
        return RationalTF(num, den)


@dataclass(frozen=True)
class TFMatrix:
    """Square M x M grid of transfer functions; ``entries[i][j]`` maps input j to output i."""

    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.entries)
        m = len(rows)
        if m < 1 or any(len(r) != m for r in rows):
            raise ValueError("TFMatrix must be square with M >= 1")
        for row in rows:
            for e in row:
                if not isinstance(e, RationalTF):
                    raise TypeError("TFMatrix entries must be RationalTF")
        object.__setattr__(self, "entries", rows)

    @property
    def size(self):
        return len(self.entries)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def is_diagonal(self):
        return all(self.entries[i][j].is_zero()
                   for i in range(self.size) for j in range(self.size) if i != j)


@dataclass(frozen=True)
class FrequencyGrid:
    omegas: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("frequency grid is empty")
        if np.any(w <= 0):
            raise ValueError("grid frequencies must be > 0")
        if np.any(np.diff(w) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    @classmethod
    def logspace(cls, omega_min=1e-2, omega_max=1e2, n=256):
        return cls(np.logspace(np.log10(omega_min), np.log10(omega_max), n))

    def __len__(self):
        return self.omegas.size

    def refined(self):
        """Same span with twice as many log-spaced points."""
        w = self.omegas
        return FrequencyGrid.logspace(w[0], w[-1], 2 * w.size)


def _check_floor(mag, omega, floor):
    bad = np.asarray(mag) < floor
    if np.any(bad):
        w = np.asarray(omega, dtype=float)
        idx = np.flatnonzero(np.atleast_1d(bad))[0]
        raise PoleOnGrid(float(np.atleast_1d(w)[idx] if w.ndim else w),
                         float(np.atleast_1d(mag)[idx]))


def _out(x, omega):
    return complex(x) if np.ndim(omega) == 0 else x


def eval_tf(tf, omega, floor=DEN_FLOOR):
    """Evaluate ``tf(j*omega)`` including the delay factor."""
    s = 1j * np.asarray(omega, dtype=float)
    den = tf.den(s)
    _check_floor(np.abs(den), omega, floor)
    val = tf.num(s) / den
    if tf.delay:
        val = val * np.exp(-s * tf.delay)
    return _out(val, omega)


def _section_factors(chain, omega, floor):
    s = 1j * np.asarray(omega, dtype=float)
    params = chain.params().reshape(-1, 2)
    zeros = params[:, 0]
    poles = params[:, 1]
    sz = s[..., None] + zeros          # (..., K)
    sp = s[..., None] + poles
    _check_floor(np.min(np.abs(sp), axis=-1) if params.size else np.full(s.shape, np.inf),
                 omega, floor)
    return sz, sp


def eval_chain(chain, omega, floor=DEN_FLOOR):
    """Product of the section responses at ``j*omega``; the empty chain is 1."""
    if not chain.sections:
        return _out(np.ones(np.shape(omega), dtype=complex), omega)
    sz, sp = _section_factors(chain, omega, floor)
    return _out(np.prod(sz / sp, axis=-1), omega)


def chain_partials(chain, omega, floor=DEN_FLOOR):
    """Analytic partials of the chain response w.r.t. ``[z1, p1, z2, p2, ...]``.

    Returns shape ``(L,)`` for scalar omega and ``(N, L)`` for an array.
    """
    shape = np.shape(omega) + (chain.n_params,)
    if not chain.sections:
        return np.zeros(shape, dtype=complex)
    sz, sp = _section_factors(chain, omega, floor)
    gc = np.prod(sz / sp, axis=-1)[..., None]
    out = np.empty(shape, dtype=complex)
    # d/dz (s+z)/(s+p) * rest = G/(s+z); singular only when s+z == 0, where
    # the product form is used instead.
    with np.errstate(divide="ignore", invalid="ignore"):
        dz = gc / sz
    if np.any(~np.isfinite(dz)):
        dz = _dz_product_form(sz, sp)
    out[..., 0::2] = dz
    out[..., 1::2] = -gc / sp
    return out


def _dz_product_form(sz, sp):
    k = sz.shape[-1]
    out = np.empty(sz.shape, dtype=complex)
    ratio = sz / sp
    for i in range(k):
        others = np.prod(np.delete(ratio, i, axis=-1), axis=-1)
        out[..., i] = others / sp[..., i]
    return out


def open_loop_samples(plant, chain, grid):
    """Q(omega_i) = plant(j omega_i) * chain(j omega_i) over the grid."""
    w = grid.omegas if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    return eval_tf(plant, w) * eval_chain(chain, w)


def eftf_base(plants, chains, i, omega):
    """Uncompensated part of channel i's equivalent forward transfer function.

    ``g_ii - sum_{j != i} Gc_j * g_ij * g_ji``; zero off-diagonal entries are
    skipped so a diagonal plant reduces exactly to ``g_ii``.
    """
    base = eval_tf(plants[i, i], omega)
    for j in range(plants.size):
        if j == i:
            continue
        gij, gji = plants[i, j], plants[j, i]
        if gij.is_zero() or gji.is_zero():
            continue
        base = base - eval_chain(chains[j], omega) * eval_tf(gij, omega) * eval_tf(gji, omega)
    return base


def eftf(plants, chains, i, omega):
    """Compensated EFTF of channel i at omega (scalar or array)."""
    if len(chains) != plants.size:
        raise ValueError("need one chain per channel")
    return eftf_base(plants, chains, i, omega) * eval_chain(chains[i], omega)


def tf(num: Sequence[float], den: Sequence[float], delay: float = 0.0) -> RationalTF:
    """Shorthand constructor taking ascending coefficient lists."""
    return RationalTF(Polynomial(num), Polynomial(den), delay)
