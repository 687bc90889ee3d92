"""Bilinear Haar forms: paraproducts, the multiplication decomposition, Cotlar blocks.

Every operator here is a sum over pure rectangles ``R`` of

    <phi, u_R> <f, v_R> w_R

where, independently on each axis, the three factors are one of

    P:  (h_I,     chi_I/|I|, h_I)         phi detail, f averaged
    D:  (h_I,     h_I,       chi_I/|I|)   both detail at the same interval
    R:  (chi_I/|I|, h_I,     h_I)         phi averaged, f detail
    M:  (1,       1,         1)           constant channel (no interval sum)

``(eps, delta, beta)`` bits map to these kinds as P = (0,1,0), D = (0,0,1),
R = (1,0,0).  Pairing against ``chi_I/|I|`` is averaging over ``I``, so the
whole family reduces to per-axis matrices applied to coefficient tensors.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dyadic import (
    DepthError,
    HaarExpansion,
    along,
    average_matrix,
    axis_band,
    axis_expectation,
    containment,
    levels,
)
from .operators import OperatorHandle

KINDS = {"P": (0, 1, 0), "D": (0, 0, 1), "R": (1, 0, 0)}


@dataclass(frozen=True)
class SignSpec:
    eps: tuple[int, ...]
    delta: tuple[int, ...]
    beta: tuple[int, ...]

    def __post_init__(self):
        for name in ("eps", "delta", "beta"):
            v = tuple(int(x) for x in getattr(self, name))
            if any(x not in (0, 1) for x in v):
                raise ValueError(f"{name} must be a 0/1 vector")
            object.__setattr__(self, name, v)
        if not len(self.eps) == len(self.delta) == len(self.beta):
            raise ValueError("eps, delta, beta must have equal length")

    @classmethod
    def paraproduct(cls, beta) -> SignSpec:
        beta = tuple(int(b) for b in beta)
        return cls((0,) * len(beta), tuple(1 - b for b in beta), beta)

    @property
    def admissible(self) -> bool:
        return not any(self.eps) and all(d == 1 - b for d, b in zip(self.delta, self.beta))

    def kinds(self) -> tuple[str, ...]:
        """Per-axis kind labels where the bits form a P/D/R triple, else the raw bits."""
        inv = {v: k for k, v in KINDS.items()}
        return tuple(inv.get(t, t) for t in zip(self.eps, self.delta, self.beta))


@dataclass(frozen=True)
class PartitionSpec:
    """Axes split as (J1, J2, J3): P-kind, D-kind and R-kind axes of the partition operator."""

    J1: frozenset
    J2: frozenset
    J3: frozenset

    def __post_init__(self):
        for name in ("J1", "J2", "J3"):
            object.__setattr__(self, name, frozenset(int(a) for a in getattr(self, name)))
        if not (self.J1 and self.J2 and self.J3):
            raise ValueError("partition needs J1, J2 and J3 all nonempty")
        if self.J1 & self.J2 or self.J1 & self.J3 or self.J2 & self.J3:
            raise ValueError("partition blocks must be disjoint")

    @property
    def n_params(self) -> int:
        return len(self.J1 | self.J2 | self.J3)

    def kinds(self) -> tuple[str, ...]:
        axes = self.J1 | self.J2 | self.J3
        if axes != set(range(len(axes))):
            raise ValueError("partition must cover axes 0..N-1")
        return tuple("P" if a in self.J1 else "D" if a in self.J2 else "R"
                     for a in range(len(axes)))


@lru_cache(maxsize=None)
def _axis_maps(J: int, kind):
    """(phi pairing, f pairing, output synthesis) matrices for one axis."""
    size = 2 ** J
    if kind == "M":
        e0 = np.zeros((1, size))
        e0[0, 0] = 1.0
        return e0, e0, e0.T
    eps, delta, beta = KINDS[kind] if isinstance(kind, str) else kind
    select = np.eye(size)[1:]
    avg = average_matrix(J)[1:]
    pair = {0: select, 1: avg}
    return pair[eps], pair[delta], pair[beta].T


def _check_pair(phi: HaarExpansion, f: HaarExpansion):
    if phi.coeffs.shape != f.coeffs.shape:
        raise DepthError(f"shape mismatch {phi.coeffs.shape} vs {f.coeffs.shape}")


def apply_kinds(kinds, phi: HaarExpansion, f: HaarExpansion) -> HaarExpansion:
    """Evaluate the bilinear form with the given per-axis kinds."""
    _check_pair(phi, f)
    if len(kinds) != phi.n_params:
        raise DepthError("one kind per parameter is required")
    return HaarExpansion(_apply_kinds_array(kinds, phi.coeffs, f.coeffs))


def _apply_kinds_array(kinds, phi_c, f_c):
    """Core contraction; ``f_c`` may carry extra trailing batch axes."""
    N = phi_c.ndim
    depth = [int(n).bit_length() - 1 for n in phi_c.shape]
    maps = [_axis_maps(J, k) for J, k in zip(depth, kinds)]
    a, b = phi_c, f_c
    for axis, (pa, pb, _) in enumerate(maps):
        a = along(a, pa, axis)
        b = along(b, pb, axis)
    prod = a.reshape(a.shape + (1,) * (b.ndim - N)) * b
    for axis, (_, _, out) in enumerate(maps):
        prod = along(prod, out, axis)
    return prod


def bilinear_apply(spec: SignSpec, phi: HaarExpansion, f: HaarExpansion) -> HaarExpansion:
    """``sum_R <phi, h^eps_R> <f, h^delta_R> h^beta_R`` over pure rectangles."""
    if len(spec.eps) != phi.n_params:
        raise DepthError("sign vectors must have one entry per parameter")
    return apply_kinds(tuple(zip(spec.eps, spec.delta, spec.beta)), phi, f)


def pi_main(phi: HaarExpansion, f: HaarExpansion) -> HaarExpansion:
    """Main paraproduct: coefficient ``phi_R * m_R f`` at every pure R."""
    return apply_kinds(("P",) * phi.n_params, phi, f)


def pi_beta(phi: HaarExpansion, f: HaarExpansion, beta) -> HaarExpansion:
    beta = tuple(int(b) for b in beta)
    if len(beta) != phi.n_params:
        raise DepthError("beta must have one entry per parameter")
    if not any(beta):
        raise ValueError("beta = 0 is the main paraproduct; use pi_main")
    return apply_kinds(tuple("D" if b else "P" for b in beta), phi, f)


def delta_op(phi: HaarExpansion, f: HaarExpansion) -> HaarExpansion:
    """``sum_R phi_R f_R chi_R/|R|``: the adjoint form of the main paraproduct."""
    return apply_kinds(("D",) * phi.n_params, phi, f)


def pi_partition(phi: HaarExpansion, b: HaarExpansion, spec: PartitionSpec) -> HaarExpansion:
    """``sum h_R(t_J1) chi_S/|S|(t_J2) h_T(t_J3) m_T phi_{SxR} m_R b_{SxT}``."""
    if spec.n_params != phi.n_params:
        raise ValueError("partition does not match the number of parameters")
    return apply_kinds(spec.kinds(), phi, b)


@dataclass(frozen=True)
class BilinearOperator:
    """``f -> B(symbol, f)`` for a fixed symbol and per-axis kinds."""

    symbol: HaarExpansion
    kinds: tuple
    name: str = ""

    def __call__(self, f: HaarExpansion) -> HaarExpansion:
        return apply_kinds(self.kinds, self.symbol, f)

    def matrix(self) -> np.ndarray:
        """Dense matrix on the full coefficient space (C-order flattening)."""
        c = self.symbol.coeffs
        dim = c.size
        eye = np.eye(dim).reshape(c.shape + (dim,))
        return _apply_kinds_array(self.kinds, c, eye).reshape(dim, dim)

    def handle(self) -> OperatorHandle:
        return OperatorHandle.from_matrix(self.matrix())


NINE_TERMS = {
    "pi": ("P", "P"),
    "delta": ("D", "D"),
    "pi_01": ("P", "D"),
    "pi_10": ("D", "P"),
    "r_delta": ("R", "D"),
    "r_pi": ("R", "P"),
    "delta_r": ("D", "R"),
    "pi_r": ("P", "R"),
    "r_r": ("R", "R"),
}


def nine_terms(phi: HaarExpansion) -> dict[str, BilinearOperator]:
    """The nine rectangle-indexed pieces of multiplication by ``phi`` (two parameters).

    ``pi_01``/``pi_10`` are the mixed paraproducts with ``beta = (0,1)``/``(1,0)``.
    """
    if phi.n_params != 2:
        raise ValueError("the nine-term decomposition is two-parameter")
    return {name: BilinearOperator(phi, kinds, name) for name, kinds in NINE_TERMS.items()}


def mean_channels(phi: HaarExpansion) -> dict[str, BilinearOperator]:
    """Kind tuples with a constant channel on some axis.

    Together with the rectangle-indexed terms they sum to multiplication by
    ``phi``; for two parameters these are the seven corrections to the nine terms.
    """
    out = {}
    for kinds in itertools.product("PDRM", repeat=phi.n_params):
        if "M" in kinds:
            out["".join(kinds)] = BilinearOperator(phi, kinds, "".join(kinds))
    return out


def multiplication_terms(phi: HaarExpansion) -> dict[str, BilinearOperator]:
    """All ``4**N`` kind channels; their sum is multiplication by ``phi``."""
    return {"".join(k): BilinearOperator(phi, k, "".join(k))
            for k in itertools.product("PDRM", repeat=phi.n_params)}


# --- sigma operators --------------------------------------------------------


def sigma_op(b: HaarExpansion, k: int, axis: int) -> HaarExpansion:
    """Compress the squared mass of levels >= k on ``axis`` onto level k.

    Coefficients with level < k (and the mean slot) are kept; at level k the
    new value is the root of the summed squares over all descendants in that
    axis (same other-axis index); finer levels are dropped.
    """
    if not 0 <= axis < b.n_params:
        raise DepthError(f"bad axis {axis}")
    J = b.depth[axis]
    if not 0 <= k < J:
        raise DepthError(f"level {k} outside [0, {J})")
    lv = levels(J)
    keep = np.diag((lv < k).astype(float))
    at_k = containment(J) * (lv == k)[:, None]
    c = b.coeffs
    kept = along(c, keep, axis)
    compressed = np.sqrt(along(c ** 2, at_k, axis))
    return HaarExpansion(kept + compressed)


# --- paraproduct operators as matrices on the pure subspace -----------------


def pure_index(depth) -> np.ndarray:
    """Flat (C-order) indices of pure positions in the full coefficient space."""
    shape = tuple(2 ** J for J in depth)
    pos = np.indices(tuple(2 ** J - 1 for J in depth)).reshape(len(depth), -1) + 1
    return np.ravel_multi_index(tuple(pos), shape)


def paraproduct_matrix(psi: HaarExpansion) -> np.ndarray:
    """Matrix of ``f -> Pi_psi f`` on the pure subspace: ``diag(psi_R) * kron(averages)``."""
    mats = [average_matrix(J)[1:, 1:] for J in psi.depth]
    K = mats[0]
    for m in mats[1:]:
        K = np.kron(K, m)
    return psi.pure().ravel()[:, None] * K


def pure_projector_matrix(exp_filter, depth) -> np.ndarray:
    """Matrix of a coefficient filter restricted to the pure subspace."""
    idx = pure_index(depth)
    dim = int(np.prod([2 ** J for J in depth]))
    shape = tuple(2 ** J for J in depth)
    diag = np.zeros(dim)
    for i in idx:
        e = np.zeros(dim)
        e[i] = 1.0
        diag[i] = exp_filter(HaarExpansion(e.reshape(shape))).coeffs.ravel()[i]
    return np.diag(diag[idx])


def pi_after_expectation_matrix(b: HaarExpansion, k: int, axis: int) -> np.ndarray:
    """Matrix of ``f -> Pi(b, E_k^(axis) f)`` on the pure subspace."""
    E = pure_projector_matrix(lambda e: axis_expectation(e, axis, k), b.depth)
    return paraproduct_matrix(b) @ E


def cotlar_band(M: int, J: int) -> tuple[int, int] | None:
    """Axis levels ``[2^M - 1, 2^(M+1) - 2]`` clipped to ``[0, J)``; None if empty."""
    lo, hi = 2 ** M - 1, min(2 ** (M + 1) - 2, J - 1)
    return (lo, hi) if lo <= hi else None


def cotlar_block_count(J: int) -> int:
    M = 0
    while cotlar_band(M, J) is not None:
        M += 1
    return M


def cotlar_block(phi: HaarExpansion, b: HaarExpansion, M: int, axis: int = 0,
                 inner=None) -> OperatorHandle:
    """``T_M = Pi(Pi(phi, b), P_M .)`` on the pure subspace.

    ``inner`` replaces the inner product ``Pi(phi, b)`` (e.g. a mixed paraproduct).
    """
    psi = pi_main(phi, b) if inner is None else inner(phi, b)
    depth = phi.depth
    band = cotlar_band(M, depth[axis])
    A = paraproduct_matrix(psi)
    if band is None:
        P = np.zeros((A.shape[1], A.shape[1]))
    else:
        P = pure_projector_matrix(lambda e: axis_band(e, axis, *band), depth)
    return OperatorHandle.from_matrix(A @ P)
