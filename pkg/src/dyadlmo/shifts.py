"""Dyadic shifts, iterated commutators, logarithmic test functions and shifted grids."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .dyadic import (
    DepthError,
    DyadicInterval,
    DyadicRectangle,
    GridSignal,
    HaarExpansion,
    along,
    haar_forward,
    haar_inverse,
    levels,
    pointwise_product,
)
from .paraproducts import PartitionSpec, delta_op, pi_partition


@dataclass(frozen=True)
class CommutatorResult:
    output: HaarExpansion
    truncation_flag: bool


@lru_cache(maxsize=None)
def shift_matrix(J: int) -> np.ndarray:
    """``h_I -> h_{I+} - h_{I-}``; the mean and level J-1 map to zero."""
    size = 2 ** J
    S = np.zeros((size, size))
    for n in range(1, 2 ** (J - 1)):
        I = DyadicInterval.from_index(n)
        S[I.plus.index, n] = 1.0
        S[I.minus.index, n] = -1.0
    S.setflags(write=False)
    return S


def shift_apply(exp: HaarExpansion, axis: int) -> CommutatorResult:
    if not 0 <= axis < exp.n_params:
        raise DepthError(f"bad axis {axis}")
    J = exp.depth[axis]
    finest = np.take(exp.coeffs, np.flatnonzero(levels(J) == J - 1), axis=axis)
    flag = bool(np.any(finest != 0.0))
    out = along(exp.coeffs, shift_matrix(J), axis)
    return CommutatorResult(HaarExpansion(out, exp.truncated or flag), exp.truncated or flag)


def multiply(phi: HaarExpansion, b: HaarExpansion) -> HaarExpansion:
    """Multiplication by ``phi`` (exact on the cell grid)."""
    return haar_forward(pointwise_product(haar_inverse(phi), haar_inverse(b)))


def commutator_apply(op: Callable[[HaarExpansion], HaarExpansion], b: HaarExpansion,
                     axes: Sequence[int]) -> CommutatorResult:
    """``[S^(a1), [S^(a2), ... [S^(ak), op]]] b`` evaluated literally."""
    axes = list(axes)
    if len(set(axes)) != len(axes):
        raise ValueError("commutator axes must be distinct")
    for a in axes:
        if not 0 <= a < b.n_params:
            raise DepthError(f"bad axis {a}")

    def nested(level: int, x: HaarExpansion) -> HaarExpansion:
        if level == len(axes):
            return op(x)
        a = axes[level]
        first = shift_apply(nested(level + 1, x), a).output
        second = nested(level + 1, shift_apply(x, a).output)
        return first - second

    out = nested(0, b)
    return CommutatorResult(out, out.truncated)


def iterated_commutator(phi: HaarExpansion, b: HaarExpansion, axes: Sequence[int]) -> CommutatorResult:
    """Nested shift commutators with multiplication by ``phi``."""
    if phi.coeffs.shape != b.coeffs.shape:
        raise DepthError("symbol and argument live on different grids")
    return commutator_apply(lambda x: multiply(phi, x), b, axes)


# --- appendix identity -------------------------------------------------------


def grandchild_split(exp: HaarExpansion, axes: Sequence[int]) -> np.ndarray:
    """Coefficient tensor on a grid two levels finer along ``axes``.

    Each ``h_Q`` on a listed axis becomes ``h_{Q-+} - h_{Q--} - h_{Q++} + h_{Q+-}``.
    The mean slot is dropped on listed axes.
    """
    c = exp.coeffs
    for a in axes:
        J = exp.depth[a]
        G = np.zeros((2 ** (J + 2), 2 ** J))
        for n in range(1, 2 ** J):
            Q = DyadicInterval.from_index(n)
            G[Q.minus.plus.index, n] = 1.0
            G[Q.minus.minus.index, n] = -1.0
            G[Q.plus.plus.index, n] = -1.0
            G[Q.plus.minus.index, n] = 1.0
        c = along(c, G, a)
    return c


def appendix_identity_check(phi: HaarExpansion, b: HaarExpansion, spec: PartitionSpec,
                            exponent: int | None = None) -> float:
    """Sup-norm gap between the shifted-commutator of the partition operator and
    ``(1/(2 sqrt 2))**exponent * Delta(phi~, b~)``.

    The commutator runs over the axes of J1 and J3 (outermost = highest axis);
    ``exponent`` defaults to ``|J1| + |J3|``.  Inputs must have no Haar content at
    levels >= J-1 on the commuted axes so no shift is truncated.
    """
    axes = sorted(spec.J1 | spec.J3)
    for a in axes:
        J = phi.depth[a]
        for x in (phi, b):
            tail = np.take(x.coeffs, np.flatnonzero(levels(J) >= J - 1), axis=a)
            if np.any(tail != 0.0):
                raise ValueError("truncation would corrupt the identity: Haar content at "
                                 f"level >= {J - 1} on axis {a}")
    exponent = len(axes) if exponent is None else exponent
    lhs = commutator_apply(lambda x: pi_partition(phi, x, spec), b, axes[::-1])
    fine_phi = HaarExpansion(grandchild_split(phi, axes))
    fine_b = HaarExpansion(grandchild_split(b, axes))
    rhs = (1.0 / (2.0 * math.sqrt(2.0))) ** exponent * haar_inverse(delta_op(fine_phi, fine_b)).values
    lhs_grid = _refine(haar_inverse(lhs.output).values, axes, 2)
    return float(np.abs(lhs_grid - rhs).max())


def expansion_step_error(phi: HaarExpansion, b: HaarExpansion, axes: Sequence[int],
                         exponent: int) -> float:
    """Sup-norm gap in the characteristic-function rewrite of the shifted factors.

    Compares, term by term with weight ``phi_R b_R``,
    ``prod_{axes} (h_{Q-} - h_{Q+}) / |Q|^(1/2)`` against
    ``(1/(2 sqrt 2))**exponent * prod_{axes} (chi_{Q-+}/|Q-+| - chi_{Q--}/|Q--|
    - chi_{Q++}/|Q++| + chi_{Q+-}/|Q+-|)``, with ``chi_S/|S|`` on the other axes.
    The gap vanishes exactly when ``exponent`` equals the number of shifted axes.
    """
    axes = sorted(set(axes))
    c = phi.coeffs * b.coeffs
    lhs = rhs = c
    for a, J in enumerate(phi.depth):
        if a in axes:
            A, B = _shifted_factor_maps(J)
        else:
            A = B = _average_density_map(J)
        lhs = along(lhs, A, a)
        rhs = along(rhs, B, a)
    rhs = (1.0 / (2.0 * math.sqrt(2.0))) ** exponent * rhs
    return float(np.abs(lhs - rhs).max())


@lru_cache(maxsize=None)
def _average_density_map(J: int) -> np.ndarray:
    """Cells x slots: ``chi_I / |I|`` (the mean slot gives 1)."""
    M = np.zeros((2 ** J, 2 ** J))
    M[:, 0] = 1.0
    for n in range(1, 2 ** J):
        I = DyadicInterval.from_index(n)
        M[I.cells(J), n] = 1.0 / I.length
    return M


@lru_cache(maxsize=None)
def _shifted_factor_maps(J: int):
    """Cells (two levels finer) x slots for the Haar form and the characteristic form."""
    fine = J + 2
    A = np.zeros((2 ** fine, 2 ** J))
    B = np.zeros((2 ** fine, 2 ** J))

    def haar(I):
        v = np.zeros(2 ** fine)
        v[I.plus.cells(fine)] = 1.0
        v[I.minus.cells(fine)] = -1.0
        return v / math.sqrt(I.length)

    def density(I, sign):
        v = np.zeros(2 ** fine)
        v[I.cells(fine)] = sign / I.length
        return v

    for n in range(1, 2 ** J):
        Q = DyadicInterval.from_index(n)
        A[:, n] = (haar(Q.minus) - haar(Q.plus)) / math.sqrt(Q.length)
        B[:, n] = (density(Q.minus.plus, 1) + density(Q.minus.minus, -1)
                   + density(Q.plus.plus, -1) + density(Q.plus.minus, 1))
    return A, B


def _refine(values: np.ndarray, axes, extra: int) -> np.ndarray:
    for a in axes:
        values = np.repeat(values, 2 ** extra, axis=a)
    return values


# --- logarithmic test functions ----------------------------------------------


def log_test_1d(I: DyadicInterval, J: int) -> GridSignal:
    """``log(4 / max(|I|, dist(t, c_I)))`` at cell centres (circle distance)."""
    if I.level > J:
        raise DepthError(f"interval level {I.level} finer than depth {J}")
    t = (np.arange(2 ** J) + 0.5) / 2 ** J
    d = np.abs(t - I.center)
    d = np.minimum(d, 1.0 - d)
    return GridSignal(np.log(4.0 / np.maximum(I.length, d)))


def log_test_rect(R: DyadicRectangle, J) -> GridSignal:
    """``sum_j log_{R_j}(t_j)`` on the grid of the given depth(s)."""
    depth = (J,) * R.n_params if np.isscalar(J) else tuple(J)
    total = np.zeros(tuple(2 ** j for j in depth))
    for axis, (I, Jl) in enumerate(zip(R.intervals, depth)):
        view = [1] * R.n_params
        view[axis] = 2 ** Jl
        total = total + log_test_1d(I, Jl).values.reshape(view)
    return GridSignal(total)


# --- translated / dilated grids ------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """One-axis grid parameters: translation bits ``alpha`` and dilation ``r``.

    The translation is ``tau = sum_i alpha_i 2^-(i+1)``; ``r`` must be a
    dyadic rational in [1, 2).
    """

    alpha: tuple[int, ...]
    r: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(int(a) for a in self.alpha))
        if any(a not in (0, 1) for a in self.alpha):
            raise ValueError("alpha must be a bit string")
        if not 1.0 <= self.r < 2.0:
            raise ValueError("dilation must lie in [1, 2)")
        if self.r != float(np.ldexp(np.round(np.ldexp(self.r, 30)), -30)):
            raise ValueError("dilation must be a dyadic rational")

    @property
    def tau(self) -> float:
        return sum(a * 2.0 ** -(i + 1) for i, a in enumerate(self.alpha))

    def to_dict(self) -> dict:
        return {"alpha": list(self.alpha), "r": self.r}


def sample_grid(J: int, seed=None, rng=None, r_bits: int = 4) -> GridSpec:
    """Uniform translation bits and a dilation on the ``2^-r_bits`` lattice of [1, 2)."""
    rng = np.random.default_rng(seed) if rng is None else rng
    alpha = tuple(int(x) for x in rng.integers(0, 2, J))
    r = 1.0 + int(rng.integers(0, 2 ** r_bits)) / 2 ** r_bits
    return GridSpec(alpha, r)


def _cumulative(values: np.ndarray) -> np.ndarray:
    """Cumulative integral at cell edges of a 1-periodic step function."""
    return np.concatenate([[0.0], np.cumsum(values)]) / len(values)


def _integral(F: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Integral from 0 to ``x`` (any real) of the periodic step function with cumsum F."""
    n = len(F) - 1
    whole = np.floor(x)
    frac = (x - whole) * n
    k = np.minimum(np.floor(frac).astype(int), n - 1)
    part = F[k] + (frac - k) * (F[k + 1] - F[k])
    return whole * F[-1] + part


def shifted_view(sig: GridSignal, spec: GridSpec, centered: bool = False) -> GridSignal:
    """Cell means of ``g(y) = f(r y + tau)`` on the standard grid in ``y``.

    The chart covers ``y`` in [0, 1) (or [-1/2, 1/2) when ``centered``), i.e. the
    observation window is dilated by ``r`` and wraps around the circle.
    """
    if sig.n_params != 1:
        raise DepthError("shifted grids are one-parameter")
    J = sig.depth[0]
    F = _cumulative(sig.values)
    edges = np.arange(2 ** J + 1) / 2 ** J - (0.5 if centered else 0.0)
    x = spec.r * edges + spec.tau
    return GridSignal(np.diff(_integral(F, x)) * 2 ** J / spec.r)


def shift_on_grid(sig: GridSignal, spec: GridSpec) -> HaarExpansion:
    """Haar coefficients of ``sig`` relative to the translated/dilated grid."""
    return haar_forward(shifted_view(sig, spec))


def _shift_1d(values: np.ndarray) -> np.ndarray:
    J = int(len(values)).bit_length() - 1
    B = haar_forward(GridSignal(values)).coeffs
    return haar_inverse(HaarExpansion(shift_matrix(J) @ B)).values


def grid_shift_action(sig: GridSignal, spec: GridSpec, extra: int = 2) -> GridSignal:
    """Dyadic shift of ``sig`` taken in the grid ``spec`` and mapped back.

    The chart ``y -> r y + tau`` with ``y`` in [-1/2, 1/2) is analysed on a grid
    ``extra`` levels finer than the signal; the standard grid of the centred
    circle is reflection-symmetric, so reflecting the input and negating
    ``tau`` reflects and negates the output.
    """
    J = sig.depth[0]
    fine = GridSignal(np.repeat(sig.values, 2 ** extra))
    g = shifted_view(fine, spec, centered=True)
    # centred circle = standard circle rotated by 1/2
    half = len(g.values) // 2
    sg = np.roll(_shift_1d(np.roll(g.values, -half)), half)
    # back-map: x-cell [a, b) <- y-interval ((a - tau)/r, (b - tau)/r) in the chart
    G = _cumulative(sg)
    x_edges = np.arange(2 ** J + 1) / 2 ** J
    y = ((x_edges[:-1] - spec.tau + 0.5) % 1.0 - 0.5) / spec.r
    y_lo, y_hi = y, y + 1.0 / (2 ** J * spec.r)
    vals = (_integral(G, y_hi + 0.5) - _integral(G, y_lo + 0.5)) / (y_hi - y_lo)
    return GridSignal(vals)


def monte_carlo_samples(sig: GridSignal, samples: int, seed) -> tuple[np.ndarray, list[GridSpec]]:
    """Per-sample shift actions (rows) and the sampled grid specs."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if sig.n_params != 1:
        raise DepthError("the shift average is one-parameter")
    J = sig.depth[0]
    rng = np.random.default_rng(seed)
    specs = [sample_grid(J, rng=rng) for _ in range(samples)]
    rows = np.array([grid_shift_action(sig, s).values for s in specs])
    return rows, specs


def monte_carlo_shift_average(sig: GridSignal, samples: int, seed) -> GridSignal:
    """Empirical average of dyadic shifts over random translated/dilated grids.

    Experimental: only symmetry properties are claimed, not Hilbert-transform accuracy.
    """
    rows, _ = monte_carlo_samples(sig, samples, seed)
    return GridSignal(rows.mean(axis=0))


def exact_shift_average(sig: GridSignal, r_bits: int = 4) -> GridSignal:
    """Average of ``grid_shift_action`` over every translation and dilation on the lattice.

    This is the expectation that ``monte_carlo_shift_average`` estimates.
    """
    J = sig.depth[0]
    total = np.zeros(2 ** J)
    count = 0
    for t in range(2 ** J):
        alpha = tuple((t >> (J - 1 - i)) & 1 for i in range(J))
        for m in range(2 ** r_bits):
            total += grid_shift_action(sig, GridSpec(alpha, 1.0 + m / 2 ** r_bits)).values
            count += 1
    return GridSignal(total / count)


def reflect(sig: GridSignal) -> GridSignal:
    """``f(-t)`` on the circle (cells reversed)."""
    return GridSignal(sig.values[::-1])
