"""Oscillation norms: little bmo, product BMO, rectangular BMO and the LMO family.

Conventions
-----------
* ``product_bmo_norm`` reports the *squared* quantity
  ``sup_Omega |Omega|^-1 sum_{R in Omega} |f_R|^2``; ``rect_bmo_norm`` likewise.
* ``lmo_norm`` and ``lmo_axis_norm`` are the smallest admissible constants in
  ``||Q_j phi||_BMO <= C / (j_1 + ... + j_N + N)``, with ``||.||_BMO`` the
  square root of the product-BMO quantity.  They are homogeneous of degree one.
* ``lmo_beta_norm`` / ``lmo_equiv_quantity`` report the rectangle/open-set
  supremum with the squared logarithmic weight, so they scale like
  ``lmo_norm**2``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from .dyadic import (
    DepthError,
    DyadicInterval,
    DyadicRectangle,
    GridSignal,
    HaarExpansion,
    OpenSet,
    along_all,
    axis_q_tail,
    containment,
    contained_mask,
    levels,
    pure_mask,
    q_tail,
)
from .maxflow import FlowGraph

EXHAUSTIVE = "exhaustive"
MAXFLOW = "maxflow"
GENERATION_SCAN = "generation_scan"

MAX_EXHAUSTIVE_CELLS = 20


@dataclass(frozen=True)
class Witness:
    kind: str  # rectangle | open_set | generation | rectangle_open_set
    payload: Any

    def to_dict(self) -> dict:
        p = self.payload
        if self.kind == "rectangle":
            data = [[I.level, I.offset] for I in p.intervals]
        elif self.kind == "open_set":
            data = _open_set_dict(p)
        elif self.kind == "generation":
            data = [int(x) for x in p]
        elif self.kind == "rectangle_open_set":
            R, omega = p
            data = {"rectangle": [[I.level, I.offset] for I in R.intervals],
                    "open_set": _open_set_dict(omega)}
        else:
            raise ValueError(f"unknown witness kind {self.kind!r}")
        return {"kind": self.kind, "payload": data}

    @classmethod
    def from_dict(cls, d: dict) -> Witness:
        kind, data = d["kind"], d["payload"]
        if kind == "rectangle":
            return cls(kind, DyadicRectangle.of(*map(tuple, data)))
        if kind == "open_set":
            return cls(kind, _open_set_from(data))
        if kind == "generation":
            return cls(kind, tuple(data))
        if kind == "rectangle_open_set":
            return cls(kind, (DyadicRectangle.of(*map(tuple, data["rectangle"])),
                              _open_set_from(data["open_set"])))
        raise ValueError(f"unknown witness kind {kind!r}")


def _open_set_dict(omega: OpenSet) -> dict:
    return {"depth": list(omega.depth), "cells": np.flatnonzero(omega.mask).tolist()}


def _open_set_from(data: dict) -> OpenSet:
    shape = tuple(2 ** j for j in data["depth"])
    mask = np.zeros(int(np.prod(shape)), dtype=bool)
    mask[np.asarray(data["cells"], dtype=int)] = True
    return OpenSet(mask.reshape(shape))


@dataclass(frozen=True)
class NormReport:
    value: float
    witness: Witness
    method: str

    def to_json(self) -> str:
        return json.dumps({"value": float(self.value), "method": self.method,
                           "witness": self.witness.to_dict()})

    @classmethod
    def from_json(cls, text: str) -> NormReport:
        d = json.loads(text)
        return cls(float(d["value"]), Witness.from_dict(d["witness"]), d["method"])


# --- little bmo ------------------------------------------------------------


def bmo_norm(sig: GridSignal) -> NormReport:
    """Dyadic little-bmo norm: sup over dyadic rectangles of the L1 mean oscillation."""
    depth = sig.depth
    best, arg = -1.0, None
    for lv in itertools.product(*[range(J + 1) for J in depth]):
        osc = _oscillations(sig.values, depth, lv)
        k = int(np.argmax(osc))
        if osc.flat[k] > best:
            best, arg = float(osc.flat[k]), (lv, np.unravel_index(k, osc.shape))
    lv, offs = arg
    R = DyadicRectangle(tuple(DyadicInterval(j, int(o)) for j, o in zip(lv, offs)))
    return NormReport(best, Witness("rectangle", R), EXHAUSTIVE)


def _oscillations(values, depth, lv) -> np.ndarray:
    shape = []
    for J, j in zip(depth, lv):
        shape += [2 ** j, 2 ** (J - j)]
    blocks = values.reshape(shape)
    inner = tuple(range(1, 2 * len(depth), 2))
    means = blocks.mean(axis=inner, keepdims=True)
    return np.abs(blocks - means).mean(axis=inner)


def oscillation(sig: GridSignal, R: DyadicRectangle) -> float:
    block = sig.values[R.cells(sig.depth)]
    return float(np.abs(block - block.mean()).mean())


# --- product BMO -----------------------------------------------------------


def bmo_ratio(exp: HaarExpansion, omega: OpenSet) -> float:
    """``|Omega|^-1 * sum of f_R^2 over pure R inside Omega``."""
    if omega.measure == 0:
        return 0.0
    keep = contained_mask(omega) & pure_mask(exp.depth)
    return float(np.sum(np.where(keep, exp.coeffs ** 2, 0.0)) / omega.measure)


def product_bmo_exact(exp: HaarExpansion) -> NormReport:
    """Brute-force maximisation over every nonempty union of finest cells."""
    depth = exp.depth
    n_cells = int(np.prod([2 ** J for J in depth]))
    if n_cells > MAX_EXHAUSTIVE_CELLS:
        raise ValueError(f"{n_cells} cells is too many for exhaustive search "
                         f"(limit {MAX_EXHAUSTIVE_CELLS})")
    pure = pure_mask(depth)
    weights = np.where(pure, exp.coeffs ** 2, 0.0)
    cell_ids = np.arange(n_cells).reshape(tuple(2 ** J for J in depth))
    rect_masks, rect_w = [], []
    for pos in zip(*np.nonzero(weights)):
        cells = cell_ids[_position_cells(pos, depth)]
        rect_masks.append(int(np.bitwise_or.reduce(np.left_shift(1, cells.ravel()))))
        rect_w.append(weights[pos])
    if not rect_w:
        return NormReport(0.0, Witness("open_set", OpenSet.full(depth)), EXHAUSTIVE)
    rect_masks = np.array(rect_masks, dtype=np.int64)
    rect_w = np.array(rect_w)
    best, best_set = -1.0, None
    chunk = 1 << 16
    for lo in range(1, 1 << n_cells, chunk):
        sets = np.arange(lo, min(lo + chunk, 1 << n_cells), dtype=np.int64)
        inside = (rect_masks[None, :] & ~sets[:, None]) == 0
        num = inside.astype(float) @ rect_w
        den = _popcount(sets) / n_cells
        ratio = num / den
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, best_set = float(ratio[k]), int(sets[k])
    mask = ((best_set >> np.arange(n_cells)) & 1).astype(bool).reshape(cell_ids.shape)
    omega = OpenSet(mask)
    return NormReport(bmo_ratio(exp, omega), Witness("open_set", omega), EXHAUSTIVE)


def _popcount(x: np.ndarray) -> np.ndarray:
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


def _position_cells(pos, depth) -> tuple[slice, ...]:
    return tuple(slice(None) if n == 0 else DyadicInterval.from_index(n).cells(J)
                 for n, J in zip(pos, depth))


class ClosureSolver:
    """Ratio maximisation ``sum_{R in Omega} w_R / |Omega|`` by Dinkelbach + min-cut.

    Nodes are all dyadic rectangles down to the cell level.  A rectangle in
    the closure forces both of its halves along its first splittable axis, so
    a closed set is exactly "all rectangles inside some union of cells".
    Pure rectangles earn ``w_R`` from the source; cells pay ``lam * |cell|``
    to the sink.
    """

    def __init__(self, depth: tuple[int, ...]):
        self.depth = depth
        ext = tuple(2 ** (J + 1) - 1 for J in depth)
        n_nodes = int(np.prod(ext))
        source, sink = n_nodes, n_nodes + 1
        self.source, self.sink = source, sink
        pure_shape = tuple(2 ** J - 1 for J in depth)
        edges = []
        # source edges, in C order of pure positions
        pure_pos = np.indices(pure_shape).reshape(len(depth), -1).T + 1
        self.pure_nodes = np.ravel_multi_index(tuple((pure_pos - 1).T), ext)
        edges += [(source, int(v)) for v in self.pure_nodes]
        n_src = len(edges)
        all_pos = np.indices(ext).reshape(len(depth), -1).T + 1
        cells = []
        for pos in all_pos:
            node = int(np.ravel_multi_index(tuple(pos - 1), ext))
            split = next((a for a, J in enumerate(depth) if pos[a] < 2 ** J), None)
            if split is None:
                cells.append((node, tuple(pos[a] - 2 ** J for a, J in enumerate(depth))))
                continue
            for child in (2 * pos[split], 2 * pos[split] + 1):
                q = pos.copy()
                q[split] = child
                edges.append((node, int(np.ravel_multi_index(tuple(q - 1), ext))))
        n_child = len(edges) - n_src
        self.cell_nodes = np.array([c[0] for c in cells])
        self.cell_index = tuple(np.array([c[1][a] for c in cells]) for a in range(len(depth)))
        edges += [(node, sink) for node in self.cell_nodes]
        self.n_src, self.n_child = n_src, n_child
        self.graph = FlowGraph(n_nodes + 2, edges)
        self.grid_shape = tuple(2 ** J for J in depth)
        self.cell_area = 1.0 / float(np.prod(self.grid_shape))

    def max_closure(self, w: np.ndarray, lam: float) -> np.ndarray:
        """Inclusion-minimal cell set maximising ``sum w - lam |Omega|``."""
        total = float(w.sum())
        caps = np.concatenate([w.ravel(), np.full(self.n_child, np.inf),
                               np.full(len(self.cell_nodes), lam * self.cell_area)])
        eps = 1e-15 * max(total, lam, 1e-300)
        _, side = self.graph.min_cut_source_side(caps, self.source, self.sink, eps)
        mask = np.zeros(self.grid_shape, dtype=bool)
        mask[self.cell_index] = side[self.cell_nodes]
        return mask

    def ratio(self, w: np.ndarray, mask: np.ndarray) -> float:
        """Exact objective of a cell set (w indexed by pure positions)."""
        n = mask.sum()
        if n == 0:
            return 0.0
        full = np.zeros(self.grid_shape)
        full[(slice(1, None),) * len(self.depth)] = w
        inside = contained_mask(OpenSet(mask))
        return float(np.sum(np.where(inside, full, 0.0)) / (n * self.cell_area))

    def solve(self, w: np.ndarray, lam0: float = 0.0, mask0: np.ndarray | None = None,
              max_iter: int = 200):
        """Dinkelbach iteration; returns (ratio, mask)."""
        total = float(w.sum())
        if total <= 0.0:
            return 0.0, np.ones(self.grid_shape, dtype=bool)
        if mask0 is None:
            mask0 = np.ones(self.grid_shape, dtype=bool)
            lam0 = total
        lam, best = lam0, mask0
        for _ in range(max_iter):
            mask = self.max_closure(w, lam)
            if not mask.any():
                break
            r = self.ratio(w, mask)
            if r <= lam * (1 + 1e-13):
                break
            lam, best = r, mask
        else:
            raise RuntimeError("Dinkelbach iteration did not converge")
        return lam, best

    def exceeds(self, w: np.ndarray, lam: float):
        """Return a cell set with ratio > lam, or None if the supremum is <= lam."""
        if float(w.sum()) <= 0.0:
            return None
        mask = self.max_closure(w, lam)
        if mask.any() and self.ratio(w, mask) > lam * (1 + 1e-13):
            return mask
        return None


@lru_cache(maxsize=None)
def closure_solver(depth: tuple[int, ...]) -> ClosureSolver:
    return ClosureSolver(tuple(depth))


def _rect_densities(w_full: np.ndarray, depth) -> np.ndarray:
    """``sum_{Q in R} w_Q / |R|`` for every position tuple (pure positions meaningful)."""
    sums = along_all(w_full, [containment(J) for J in depth])
    area = np.ones(w_full.shape)
    for axis, J in enumerate(depth):
        view = [1] * len(depth)
        view[axis] = 2 ** J
        area = area * (2.0 ** -np.maximum(levels(J), 0)).reshape(view)
    dens = sums / area
    return np.where(pure_mask(depth), dens, -np.inf)


def _sup_ratio(w: np.ndarray, depth: tuple[int, ...]):
    """Product-BMO supremum for pure-position weights ``w``; returns (ratio, mask)."""
    if float(w.sum()) <= 0.0:
        return 0.0, np.ones(tuple(2 ** J for J in depth), dtype=bool)
    full = np.zeros(tuple(2 ** J for J in depth))
    full[(slice(1, None),) * len(depth)] = w
    dens = _rect_densities(full, depth)
    k = np.unravel_index(int(np.argmax(dens)), dens.shape)
    start = np.zeros(full.shape, dtype=bool)
    start[_position_cells(k, depth)] = True
    solver = closure_solver(depth)
    return solver.solve(w, float(dens[k]), start)


def product_bmo_norm(exp: HaarExpansion) -> NormReport:
    """Product BMO (squared) via Dinkelbach over max-weight closures."""
    ratio, mask = _sup_ratio(exp.pure() ** 2, exp.depth)
    omega = OpenSet(mask)
    return NormReport(bmo_ratio(exp, omega), Witness("open_set", omega), MAXFLOW)


def rect_bmo_norm(exp: HaarExpansion) -> NormReport:
    """Rectangular BMO (squared): sup over dyadic R of ``|R|^-1 sum_{Q in R} f_Q^2``."""
    depth = exp.depth
    w = np.where(pure_mask(depth), exp.coeffs ** 2, 0.0)
    dens = _rect_densities(w, depth)
    k = np.unravel_index(int(np.argmax(dens)), dens.shape)
    R = DyadicRectangle(tuple(DyadicInterval.from_index(int(n)) for n in k))
    return NormReport(float(dens[k]), Witness("rectangle", R), EXHAUSTIVE)


def rect_ratio(exp: HaarExpansion, R: DyadicRectangle) -> float:
    return bmo_ratio(exp, OpenSet.from_rectangle(R, exp.depth))


# --- logarithmic mean oscillation ------------------------------------------


def lmo_norm(exp: HaarExpansion) -> NormReport:
    """``max_j (j_1 + ... + j_N + N) * ||Q_j exp||_BMO`` over the generation box."""
    N = exp.n_params
    best, arg = -1.0, None
    for j in itertools.product(*[range(J + 1) for J in exp.depth]):
        v = (sum(j) + N) * math.sqrt(_sup_ratio(q_tail(exp, j).pure() ** 2, exp.depth)[0])
        if v > best:
            best, arg = v, j
    return NormReport(best, Witness("generation", arg), GENERATION_SCAN)


def lmo_generation_value(exp: HaarExpansion, j) -> float:
    """The scan objective at one generation (used to re-check witnesses)."""
    return (sum(j) + exp.n_params) * math.sqrt(product_bmo_norm(q_tail(exp, j)).value)


def lmo_axis_norm(exp: HaarExpansion, axis: int) -> NormReport:
    """``max_i (i + 1) * ||Q_i^(axis) exp||_BMO``."""
    if not 0 <= axis < exp.n_params:
        raise DepthError(f"bad axis {axis}")
    best, arg = -1.0, None
    for i in range(exp.depth[axis] + 1):
        tail = axis_q_tail(exp, axis, i)
        v = (i + 1) * math.sqrt(_sup_ratio(tail.pure() ** 2, exp.depth)[0])
        if v > best:
            best, arg = v, (i,)
    return NormReport(best, Witness("generation", arg), GENERATION_SCAN)


def lmo_axis_generation_value(exp: HaarExpansion, axis: int, i: int) -> float:
    return (i + 1) * math.sqrt(product_bmo_norm(axis_q_tail(exp, axis, i)).value)


def log_weight(R: DyadicRectangle, delta=None) -> float:
    """``sum_j log(4/|R_j|)``, with axes flagged in ``delta`` replaced by the whole circle."""
    delta = delta or (0,) * R.n_params
    return sum(math.log(4.0) if d else math.log(4.0 / I.length)
               for I, d in zip(R.intervals, delta))


@lru_cache(maxsize=None)
def _inside_positions(J: int, level: int, offset: int) -> np.ndarray:
    """Absolute pure positions of intervals inside (level, offset), in relative order."""
    out = [0]
    for d in range(J - level):
        base = 2 ** (level + d) + offset * 2 ** d
        out.extend(range(base, base + 2 ** d))
    return np.array(out[1:])


def local_sup_ratio(exp: HaarExpansion, R: DyadicRectangle):
    """``sup_{Omega in R} |Omega|^-1 sum_{Q in Omega} f_Q^2`` and the maximising Omega."""
    depth = exp.depth
    sub_depth = tuple(J - I.level for I, J in zip(R.intervals, depth))
    if min(sub_depth) < 1:
        return 0.0, OpenSet(np.zeros(exp.coeffs.shape, dtype=bool))
    idx = [_inside_positions(J, I.level, I.offset) for I, J in zip(R.intervals, depth)]
    w = exp.coeffs[np.ix_(*idx)] ** 2
    ratio, sub_mask = _sup_ratio(w, sub_depth)
    mask = np.zeros(exp.coeffs.shape, dtype=bool)
    mask[R.cells(depth)] = sub_mask
    return ratio / R.area, OpenSet(mask)


def lmo_beta_norm(exp: HaarExpansion, delta) -> NormReport:
    """Sup over dyadic R and open Omega in R of ``weight(R)^2 |Omega|^-1 sum_{Q in Omega} f_Q^2``."""
    delta = tuple(int(d) for d in delta)
    if len(delta) != exp.n_params or any(d not in (0, 1) for d in delta):
        raise ValueError("delta must be a 0/1 vector with one entry per parameter")
    best, arg = -1.0, None
    axes = [list(_iter_levels(J)) for J in exp.depth]
    for R_ints in itertools.product(*axes):
        R = DyadicRectangle(R_ints)
        ratio, omega = local_sup_ratio(exp, R)
        v = log_weight(R, delta) ** 2 * ratio
        if v > best:
            best, arg = v, (R, omega)
    R, omega = arg
    if best <= 0.0:
        omega = OpenSet.from_rectangle(R, exp.depth)
    return NormReport(best, Witness("rectangle_open_set", (R, omega)), MAXFLOW)


def _iter_levels(J):
    for level in range(J):
        for k in range(2 ** level):
            yield DyadicInterval(level, k)


def lmo_equiv_quantity(exp: HaarExpansion) -> NormReport:
    """Rectangle/open-set characterisation of LMO with weight ``(sum_j log(4/|I_j|))^2``."""
    return lmo_beta_norm(exp, (0,) * exp.n_params)


def lmo_beta_value(exp: HaarExpansion, R: DyadicRectangle, omega: OpenSet, delta=None) -> float:
    return log_weight(R, delta) ** 2 * bmo_ratio(exp, omega)


def s_weight(length: float) -> float:
    """``log(1/|I|) + 1`` for ``|I| <= 1`` and ``1`` otherwise."""
    if not length > 0:
        raise ValueError("length must be positive")
    return math.log(1.0 / length) + 1.0 if length <= 1.0 else 1.0
