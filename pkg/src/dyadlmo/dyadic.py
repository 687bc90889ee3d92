"""Dyadic geometry, Haar analysis/synthesis and martingale projections.

Coefficient layout
------------------
Every axis of depth ``J`` carries ``2**J`` basis vectors.  Position ``0`` is
the constant function (the *mean* slot); position ``n >= 1`` is the Haar
function of the dyadic interval with ``level = floor(log2 n)`` and
``offset = n - 2**level``.  A multi-parameter expansion is a dense tensor with
one such axis per parameter, so ``coeffs[n1, n2]`` is the coefficient of
``u_{n1}(t1) u_{n2}(t2)``.  Haar functions follow the convention
``h_I = |I|**-0.5 * (chi_{I+} - chi_{I-})`` (positive on the right half).

Grid signals hold cell values on the ``2**J1 x ... x 2**JN`` grid of
``[0, 1)**N`` in row-major order.  All inner products use Lebesgue measure,
so each cell weighs ``2**-(J1 + ... + JN)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

MEAN = 0


class DepthError(ValueError):
    """Raised when shapes, depths or generations do not fit together."""


@dataclass(frozen=True, order=True)
class DyadicInterval:
    level: int
    offset: int

    def __post_init__(self):
        if self.level < 0 or not 0 <= self.offset < 2 ** self.level:
            raise ValueError(f"invalid dyadic interval ({self.level}, {self.offset})")

    @property
    def length(self) -> float:
        return 2.0 ** -self.level

    @property
    def left(self) -> float:
        return self.offset * self.length

    @property
    def right(self) -> float:
        return (self.offset + 1) * self.length

    @property
    def center(self) -> float:
        return (self.offset + 0.5) * self.length

    @property
    def minus(self) -> DyadicInterval:
        """Left half."""
        return DyadicInterval(self.level + 1, 2 * self.offset)

    @property
    def plus(self) -> DyadicInterval:
        """Right half."""
        return DyadicInterval(self.level + 1, 2 * self.offset + 1)

    @property
    def index(self) -> int:
        return 2 ** self.level + self.offset

    @classmethod
    def from_index(cls, n: int) -> DyadicInterval:
        if n < 1:
            raise ValueError("index 0 is the mean slot, not an interval")
        level = int(n).bit_length() - 1
        return cls(level, int(n) - 2 ** level)

    def ancestor(self, level: int) -> DyadicInterval:
        if level > self.level:
            raise ValueError("ancestor must be coarser")
        return DyadicInterval(level, self.offset >> (self.level - level))

    def contains(self, other: DyadicInterval) -> bool:
        return other.level >= self.level and other.ancestor(self.level) == self

    def cells(self, depth: int) -> slice:
        """Slice of finest cells covered at the given depth."""
        if self.level > depth:
            raise DepthError(f"interval level {self.level} is finer than depth {depth}")
        width = 2 ** (depth - self.level)
        return slice(self.offset * width, (self.offset + 1) * width)


UNIT = DyadicInterval(0, 0)


@dataclass(frozen=True)
class DyadicRectangle:
    intervals: tuple[DyadicInterval, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))

    @classmethod
    def unit(cls, n_params: int) -> DyadicRectangle:
        return cls((UNIT,) * n_params)

    @classmethod
    def of(cls, *pairs: tuple[int, int]) -> DyadicRectangle:
        return cls(tuple(DyadicInterval(j, k) for j, k in pairs))

    @property
    def n_params(self) -> int:
        return len(self.intervals)

    @property
    def area(self) -> float:
        return float(np.prod([I.length for I in self.intervals]))

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(I.level for I in self.intervals)

    @property
    def index(self) -> tuple[int, ...]:
        return tuple(I.index for I in self.intervals)

    def contains(self, other: DyadicRectangle) -> bool:
        return all(a.contains(b) for a, b in zip(self.intervals, other.intervals))

    def cells(self, depth: Sequence[int]) -> tuple[slice, ...]:
        return tuple(I.cells(J) for I, J in zip(self.intervals, depth))


def _as_depth(depth, n_params=None) -> tuple[int, ...]:
    if np.isscalar(depth):
        if n_params is None:
            raise DepthError("scalar depth needs n_params")
        depth = (int(depth),) * n_params
    depth = tuple(int(j) for j in depth)
    if n_params is not None and len(depth) != n_params:
        raise DepthError(f"expected {n_params} depths, got {len(depth)}")
    if any(j < 1 for j in depth):
        raise DepthError("depth must be >= 1 on every axis")
    return depth


def _depth_of_shape(shape) -> tuple[int, ...]:
    depth = []
    for n in shape:
        j = int(n).bit_length() - 1
        if n < 2 or 2 ** j != n:
            raise DepthError(f"axis length {n} is not a power of two >= 2")
        depth.append(j)
    return tuple(depth)


@dataclass(frozen=True)
class GridSignal:
    """Piecewise-constant function on the dyadic cell grid of [0,1)^N."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        _depth_of_shape(v.shape)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, depth) -> GridSignal:
        return cls(np.zeros(tuple(2 ** j for j in depth)))

    @property
    def depth(self) -> tuple[int, ...]:
        return _depth_of_shape(self.values.shape)

    @property
    def n_params(self) -> int:
        return self.values.ndim

    def integral(self) -> float:
        return float(self.values.mean())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.mean(self.values ** 2)))

    def __add__(self, other):
        return GridSignal(self.values + _values(other))

    def __sub__(self, other):
        return GridSignal(self.values - _values(other))

    def __mul__(self, c):
        return GridSignal(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return GridSignal(-self.values)


def _values(x):
    return x.values if isinstance(x, GridSignal) else x


@dataclass(frozen=True)
class HaarExpansion:
    """Tensor Haar coefficients; ``truncated`` records lost finest-level content."""

    coeffs: np.ndarray
    truncated: bool = field(default=False, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        _depth_of_shape(c.shape)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, depth) -> HaarExpansion:
        return cls(np.zeros(tuple(2 ** j for j in depth)))

    @classmethod
    def single(cls, depth, index, value: float = 1.0) -> HaarExpansion:
        """Expansion with one nonzero coefficient.

        ``index`` holds one entry per axis: ``None``/``MEAN`` for the constant,
        a :class:`DyadicInterval`, or a raw integer position.
        """
        c = np.zeros(tuple(2 ** j for j in depth))
        c[axis_positions(index, depth)] = value
        return cls(c)

    @property
    def depth(self) -> tuple[int, ...]:
        return _depth_of_shape(self.coeffs.shape)

    @property
    def n_params(self) -> int:
        return self.coeffs.ndim

    def coefficient(self, index) -> float:
        return float(self.coeffs[axis_positions(index, self.depth)])

    def pure(self) -> np.ndarray:
        """Coefficients of pure rectangles (every axis an interval)."""
        return self.coeffs[(slice(1, None),) * self.n_params]

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs ** 2)))

    def __add__(self, other: HaarExpansion) -> HaarExpansion:
        return HaarExpansion(self.coeffs + other.coeffs, self.truncated or other.truncated)

    def __sub__(self, other: HaarExpansion) -> HaarExpansion:
        return HaarExpansion(self.coeffs - other.coeffs, self.truncated or other.truncated)

    def __mul__(self, c) -> HaarExpansion:
        return HaarExpansion(self.coeffs * c, self.truncated)

    __rmul__ = __mul__

    def __neg__(self):
        return HaarExpansion(-self.coeffs, self.truncated)


def axis_positions(index, depth) -> tuple[int, ...]:
    out = []
    for item, J in zip(index, depth):
        if item is None:
            n = MEAN
        elif isinstance(item, DyadicInterval):
            if item.level >= J:
                raise DepthError(f"Haar level {item.level} not representable at depth {J}")
            n = item.index
        else:
            n = int(item)
        out.append(n)
    if len(out) != len(depth):
        raise DepthError("index length does not match the number of parameters")
    return tuple(out)


@dataclass(frozen=True)
class OpenSet:
    """Union of finest cells, stored as a boolean mask over the grid."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        _depth_of_shape(m.shape)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def full(cls, depth) -> OpenSet:
        return cls(np.ones(tuple(2 ** j for j in depth), dtype=bool))

    @classmethod
    def from_rectangle(cls, R: DyadicRectangle, depth) -> OpenSet:
        m = np.zeros(tuple(2 ** j for j in depth), dtype=bool)
        m[R.cells(depth)] = True
        return cls(m)

    @property
    def depth(self) -> tuple[int, ...]:
        return _depth_of_shape(self.mask.shape)

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) / self.mask.size

    def contains(self, R: DyadicRectangle) -> bool:
        return bool(self.mask[R.cells(self.depth)].all())

    def __eq__(self, other):
        if not isinstance(other, OpenSet):
            return NotImplemented
        return self.mask.shape == other.mask.shape and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((self.mask.shape, self.mask.tobytes()))

    def __or__(self, other: OpenSet) -> OpenSet:
        return OpenSet(self.mask | other.mask)


# --- per-axis tables -------------------------------------------------------


@lru_cache(maxsize=None)
def levels(J: int) -> np.ndarray:
    """Level of every axis position; the mean slot gets -1."""
    n = np.arange(2 ** J)
    lv = np.zeros(2 ** J, dtype=int)
    lv[1:] = np.floor(np.log2(n[1:])).astype(int)
    lv[0] = -1
    lv.setflags(write=False)
    return lv


@lru_cache(maxsize=None)
def membership(J: int) -> np.ndarray:
    """``M[n, c] = 1`` iff cell ``c`` lies in the support interval of position ``n``.

    Row 0 (mean slot) is the whole axis.
    """
    size = 2 ** J
    M = np.zeros((size, size))
    M[0] = 1.0
    for n in range(1, size):
        M[n, DyadicInterval.from_index(n).cells(J)] = 1.0
    M.setflags(write=False)
    return M


@lru_cache(maxsize=None)
def basis(J: int) -> np.ndarray:
    """``B[n, c]``: value of basis function ``n`` on cell ``c``."""
    size = 2 ** J
    B = np.zeros((size, size))
    B[0] = 1.0
    for n in range(1, size):
        I = DyadicInterval.from_index(n)
        half = I.minus.cells(J), I.plus.cells(J)
        B[n, half[0]] = -(2.0 ** (I.level / 2))
        B[n, half[1]] = 2.0 ** (I.level / 2)
    B.setflags(write=False)
    return B


@lru_cache(maxsize=None)
def average_matrix(J: int) -> np.ndarray:
    """``A[n, u]``: mean of basis function ``u`` over the support of position ``n``.

    Row ``n`` is also the coefficient vector of ``chi_I / |I|`` (``I`` the
    interval at ``n``), because pairing with ``chi_I/|I|`` is averaging over I.
    """
    M = membership(J)
    A = (M @ basis(J).T) / M.sum(axis=1)[:, None]
    A[np.abs(A) < 1e-14] = 0.0
    A.setflags(write=False)
    return A


@lru_cache(maxsize=None)
def containment(J: int) -> np.ndarray:
    """``C[n, m] = 1`` iff the interval at ``m`` is contained in the one at ``n`` (n, m >= 1)."""
    size = 2 ** J
    C = np.zeros((size, size))
    M = membership(J)
    for n in range(1, size):
        C[n, 1:] = np.all(M[1:] <= M[n], axis=1)
    C.setflags(write=False)
    return C


def along(arr: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    """Apply ``mat`` to the given axis of ``arr``."""
    return np.moveaxis(np.tensordot(mat, arr, axes=([1], [axis])), 0, axis)


def along_all(arr: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    for axis, mat in enumerate(mats):
        if mat is not None:
            arr = along(arr, mat, axis)
    return arr


def _axis_mask(shape, axis, keep_1d) -> np.ndarray:
    view = [1] * len(shape)
    view[axis] = shape[axis]
    return np.asarray(keep_1d).reshape(view)


def _generation(j, n_params) -> tuple[int, ...]:
    if np.isscalar(j):
        j = (int(j),) * n_params
    j = tuple(int(x) for x in j)
    if len(j) != n_params:
        raise DepthError("generation vector length does not match the number of parameters")
    return j


def _check_generation(j, depth):
    for jl, J in zip(j, depth):
        if not 0 <= jl <= J:
            raise DepthError(f"generation {jl} outside [0, {J}]")


# --- analysis / synthesis --------------------------------------------------


def haar_forward(sig: GridSignal) -> HaarExpansion:
    depth = sig.depth
    mats = [basis(J) / 2 ** J for J in depth]
    return HaarExpansion(along_all(sig.values, mats))


def haar_inverse(exp: HaarExpansion) -> GridSignal:
    mats = [basis(J).T for J in exp.depth]
    return GridSignal(along_all(exp.coeffs, mats))


def sample(fn, depth) -> GridSignal:
    """Sample ``fn(*centers)`` at cell centres (broadcast over a mesh)."""
    centers = [(np.arange(2 ** J) + 0.5) / 2 ** J for J in depth]
    mesh = np.meshgrid(*centers, indexing="ij")
    return GridSignal(np.broadcast_to(fn(*mesh), mesh[0].shape))


# --- means -----------------------------------------------------------------


def rect_mean(sig: GridSignal, R: DyadicRectangle) -> float:
    if R.n_params != sig.n_params:
        raise DepthError("rectangle dimension does not match the signal")
    return float(sig.values[R.cells(sig.depth)].mean())


def partial_mean(sig: GridSignal, Q: Mapping[int, DyadicInterval]) -> GridSignal:
    """Average over ``Q[axis]`` in each listed axis; a function of the remaining axes."""
    axes = sorted(Q)
    if not axes or len(axes) >= sig.n_params:
        raise DepthError("partial mean needs a nonempty proper subset of axes")
    depth = sig.depth
    idx = [slice(None)] * sig.n_params
    for a in axes:
        if not 0 <= a < sig.n_params:
            raise DepthError(f"bad axis {a}")
        idx[a] = Q[a].cells(depth[a])
    return GridSignal(sig.values[tuple(idx)].mean(axis=tuple(axes)))


def pointwise_product(a: GridSignal, b: GridSignal) -> GridSignal:
    if a.values.shape != b.values.shape:
        raise DepthError(f"shape mismatch {a.values.shape} vs {b.values.shape}")
    return GridSignal(a.values * b.values)


# --- martingale projections ------------------------------------------------


def _filter(exp: HaarExpansion, keeps) -> HaarExpansion:
    c = exp.coeffs
    mask = np.ones(c.shape, dtype=bool)
    for axis, keep in enumerate(keeps):
        if keep is not None:
            mask = mask & _axis_mask(c.shape, axis, keep)
    return HaarExpansion(np.where(mask, c, 0.0))


def delta_block(exp: HaarExpansion, j) -> HaarExpansion:
    """Martingale difference: pure rectangles of generation exactly ``j``."""
    j = _generation(j, exp.n_params)
    _check_generation(j, exp.depth)
    return _filter(exp, [levels(J) == jl for J, jl in zip(exp.depth, j)])


def expectation(exp: HaarExpansion, j) -> HaarExpansion:
    """Conditional expectation onto generation ``j`` (levels < j_l on every axis, mean included)."""
    j = _generation(j, exp.n_params)
    _check_generation(j, exp.depth)
    return _filter(exp, [levels(J) < jl for J, jl in zip(exp.depth, j)])


def q_tail(exp: HaarExpansion, j) -> HaarExpansion:
    """Sum of the martingale differences of generations ``>= j`` (pure rectangles only)."""
    j = _generation(j, exp.n_params)
    _check_generation(j, exp.depth)
    return _filter(exp, [levels(J) >= jl for J, jl in zip(exp.depth, j)])


def _check_axis(exp, axis, k):
    if not 0 <= axis < exp.n_params:
        raise DepthError(f"bad axis {axis}")
    if not 0 <= k <= exp.depth[axis]:
        raise DepthError(f"level {k} outside [0, {exp.depth[axis]}]")


def axis_expectation(exp: HaarExpansion, axis: int, k: int) -> HaarExpansion:
    _check_axis(exp, axis, k)
    keeps = [None] * exp.n_params
    keeps[axis] = levels(exp.depth[axis]) < k
    return _filter(exp, keeps)


def axis_q_tail(exp: HaarExpansion, axis: int, k: int) -> HaarExpansion:
    _check_axis(exp, axis, k)
    keeps = [None] * exp.n_params
    keeps[axis] = levels(exp.depth[axis]) >= k
    return _filter(exp, keeps)


def axis_band(exp: HaarExpansion, axis: int, lo: int, hi: int) -> HaarExpansion:
    """Keep coefficients whose level on ``axis`` lies in ``[lo, hi]`` (mean excluded)."""
    if not 0 <= axis < exp.n_params:
        raise DepthError(f"bad axis {axis}")
    lv = levels(exp.depth[axis])
    keeps = [None] * exp.n_params
    keeps[axis] = (lv >= lo) & (lv <= hi)
    return _filter(exp, keeps)


def pure_part(exp: HaarExpansion) -> HaarExpansion:
    return q_tail(exp, (0,) * exp.n_params)


def pure_mask(depth) -> np.ndarray:
    mask = np.zeros(tuple(2 ** J for J in depth), dtype=bool)
    mask[(slice(1, None),) * len(depth)] = True
    return mask


def contained_mask(omega: OpenSet) -> np.ndarray:
    """Boolean tensor over axis positions: support of position tuple lies inside omega.

    Mean slots stand for the whole axis.
    """
    outside = (~omega.mask).astype(float)
    missing = along_all(outside, [membership(J) for J in omega.depth])
    return missing < 0.5


def project_open_set(exp: HaarExpansion, omega: OpenSet) -> HaarExpansion:
    """Orthogonal projection onto span{h_R : R pure, R inside omega}."""
    if omega.depth != exp.depth:
        raise DepthError("open set and expansion live on different grids")
    keep = contained_mask(omega) & pure_mask(exp.depth)
    return HaarExpansion(np.where(keep, exp.coeffs, 0.0))


def square_function(exp: HaarExpansion) -> GridSignal:
    sq = np.where(pure_mask(exp.depth), exp.coeffs ** 2, 0.0)
    mats = []
    for J in exp.depth:
        M = membership(J)
        mats.append((M / M.sum(axis=1, keepdims=True) * 2 ** J).T)
    return GridSignal(np.sqrt(np.maximum(along_all(sq, mats), 0.0)))


def iter_intervals(J: int, max_level: int | None = None) -> Iterable[DyadicInterval]:
    top = J - 1 if max_level is None else max_level
    for level in range(top + 1):
        for k in range(2 ** level):
            yield DyadicInterval(level, k)


# --- local projections -------------------------------------------------------


def local_projection(exp: HaarExpansion, Q: Mapping[int, DyadicInterval]) -> HaarExpansion:
    """``P_Q``: keep terms whose interval on every axis of ``Q`` lies inside ``Q[axis]``.

    Axes not listed in ``Q`` are unrestricted (means included).
    """
    c = exp.coeffs
    for a, I in Q.items():
        if not 0 <= a < exp.n_params:
            raise DepthError(f"bad axis {a}")
        J = exp.depth[a]
        if I.level >= J:
            return HaarExpansion.zeros(exp.depth)
        keep = containment(J)[I.index]
        c = along(c, np.diag(keep), a)
    return HaarExpansion(c)


def chi_decomposition(sig: GridSignal, Q: Mapping[int, DyadicInterval]):
    """Terms of ``chi_Q b = P_Q b + sum_S eps_S chi_Q m_S b``.

    ``S`` runs over the nonempty sub-products of ``Q`` (subsets of its axes)
    and ``eps_S = (-1)**(|S| + 1)`` (inclusion-exclusion).  Returns
    ``[(axes, sign, GridSignal)]`` with the ``P_Q`` term first (``axes = ()``).
    """
    import itertools

    depth = sig.depth
    axes = sorted(Q)
    chi = np.zeros(sig.values.shape)
    idx = [slice(None)] * sig.n_params
    for a in axes:
        idx[a] = Q[a].cells(depth[a])
    chi[tuple(idx)] = 1.0
    terms = [((), 1, haar_inverse(local_projection(haar_forward(sig), Q)))]
    for r in range(1, len(axes) + 1):
        for S in itertools.combinations(axes, r):
            sub = [slice(None)] * sig.n_params
            for a in S:
                sub[a] = Q[a].cells(depth[a])
            m = sig.values[tuple(sub)].mean(axis=S, keepdims=True)
            terms.append((S, (-1) ** (r + 1), GridSignal(chi * m)))
    return terms
