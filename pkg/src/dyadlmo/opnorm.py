"""Operator norms, the bmo -> BMO lower-bound search and the numerical lemma suites."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dyadic import (
    DepthError,
    DyadicInterval,
    DyadicRectangle,
    GridSignal,
    HaarExpansion,
    OpenSet,
    along,
    axis_q_tail,
    containment,
    haar_inverse,
    levels,
    pure_mask,
)
from .norms import (
    bmo_norm,
    bmo_ratio,
    closure_solver,
    lmo_axis_norm,
    lmo_equiv_quantity,
    lmo_norm,
    product_bmo_norm,
)
from .operators import OperatorHandle
from .paraproducts import (
    cotlar_block,
    cotlar_block_count,
    paraproduct_matrix,
    pi_after_expectation_matrix,
    pi_beta,
    pi_main,
    sigma_op,
)
from .shifts import log_test_rect

__all__ = [
    "ConvergenceError", "OperatorHandle", "l2_opnorm", "random_expansion", "random_symbol",
    "EquivalenceRecord", "pi_ratio", "bmo_to_bmo_lower_bound", "equivalence_experiment",
    "SuiteReport", "core_lemma_suite", "cotlar_decay_suite", "growth_lemma_suite",
    "growth_constants", "stability_factor", "ensemble_symbol", "log_family_bmo_max",
    "commutator_bound_suite", "appendix_inputs", "appendix_suite",
]

DENSE_LIMIT = 4096


class ConvergenceError(RuntimeError):
    """Power iteration hit its iteration cap."""


def l2_opnorm(op: OperatorHandle, rtol: float = 1e-10, max_iter: int = 20000, seed: int = 0) -> float:
    """Largest singular value: dense SVD up to ``DENSE_LIMIT``, else power iteration on T*T."""
    if op.domain_dim == 0 or op.range_dim == 0:
        return 0.0
    if max(op.domain_dim, op.range_dim) <= DENSE_LIMIT:
        return float(np.linalg.norm(op.dense(), 2))
    x = np.random.default_rng(seed).standard_normal(op.domain_dim)
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iter):
        y = op.adjoint_apply(op.apply(x))
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
        if abs(lam - prev) <= rtol * lam:
            return math.sqrt(lam)
        prev = lam
    raise ConvergenceError(f"power iteration did not reach rtol={rtol} in {max_iter} steps")


def _seed(seed, *tags) -> list[int]:
    """Entropy list for ``default_rng`` from an int or int sequence plus tags."""
    base = [int(x) for x in np.atleast_1d(seed)]
    return base + [int(t) for t in tags]


def _spectral(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


# --- random ensembles --------------------------------------------------------


def _area_tensor(depth) -> np.ndarray:
    area = np.ones(tuple(2 ** J for J in depth))
    for axis, J in enumerate(depth):
        view = [1] * len(depth)
        view[axis] = 2 ** J
        area = area * (2.0 ** -np.maximum(levels(J), 0)).reshape(view)
    return area


def _level_sum(depth) -> np.ndarray:
    total = np.zeros(tuple(2 ** J for J in depth))
    for axis, J in enumerate(depth):
        view = [1] * len(depth)
        view[axis] = 2 ** J
        total = total + np.maximum(levels(J), 0).reshape(view)
    return total


def random_expansion(depth, rng, scaling: str = "bmo", mean: float = 0.0) -> HaarExpansion:
    """Gaussian pure coefficients; ``bmo`` scaling weights ``h_R`` by ``|R|^(1/2)``."""
    depth = tuple(depth)
    c = rng.standard_normal(tuple(2 ** J for J in depth))
    if scaling == "bmo":
        c = c * np.sqrt(_area_tensor(depth))
    elif scaling != "white":
        raise ValueError(f"unknown scaling {scaling!r}")
    c = np.where(pure_mask(depth), c, 0.0)
    c[(0,) * len(depth)] = mean
    return HaarExpansion(c)


SYMBOL_KINDS = ("bmo", "log", "sparse")


def random_symbol(depth, rng, kind: str) -> HaarExpansion:
    """Symbols for the equivalence ensemble.

    ``bmo``: area-scaled noise; ``log``: additionally damped by the generation
    weight ``sum(levels) + N``; ``sparse``: three area-scaled coefficients.
    """
    depth = tuple(depth)
    if kind == "bmo":
        return random_expansion(depth, rng)
    if kind == "log":
        phi = random_expansion(depth, rng)
        return HaarExpansion(phi.coeffs / (_level_sum(depth) + len(depth)))
    if kind == "sparse":
        c = np.zeros(tuple(2 ** J for J in depth))
        area = _area_tensor(depth)
        for _ in range(3):
            pos = tuple(int(rng.integers(1, 2 ** J)) for J in depth)
            c[pos] += rng.standard_normal() * math.sqrt(area[pos])
        return HaarExpansion(c)
    raise ValueError(f"unknown symbol kind {kind!r}")


# --- bmo -> BMO lower bound ------------------------------------------------------


@dataclass
class EquivalenceRecord:
    symbol_id: int
    depth: tuple[int, ...]
    lmo_norm: float
    lower_bound: float
    witness: HaarExpansion
    witness_kind: str
    ratio: float
    log_bound: float = 0.0
    equiv_quantity: float = 0.0
    kind: str = ""

    def reevaluate(self, phi: HaarExpansion) -> float:
        return pi_ratio(phi, self.witness)


def pi_ratio(phi: HaarExpansion, b: HaarExpansion) -> float:
    """``product_bmo(Pi_phi b)^(1/2) / bmo(b)`` (zero when ``b`` has no oscillation)."""
    osc = bmo_norm(haar_inverse(b)).value
    if osc <= 0.0:
        return 0.0
    return math.sqrt(product_bmo_norm(pi_main(phi, b)).value) / osc


@lru_cache(maxsize=None)
def _log_family(depth: tuple[int, ...]):
    """``(R, expansion, bmo)`` for every dyadic R whose log test oscillates."""
    from .dyadic import haar_forward

    out = []
    ranges = [[DyadicInterval.from_index(n) for n in range(1, 2 ** (J + 1))] for J in depth]
    for ints in itertools.product(*ranges):
        R = DyadicRectangle(ints)
        sig = log_test_rect(R, depth)
        osc = bmo_norm(sig).value
        if osc > 1e-12:
            out.append((R, haar_forward(sig), osc))
    return tuple(out)


class _Scorer:
    """Evaluates ``pi_ratio`` with an early exit when a candidate cannot beat ``best``."""

    def __init__(self, phi: HaarExpansion):
        self.phi = phi
        self.solver = closure_solver(phi.depth)
        self.best = 0.0
        self.best_b = None
        self.best_kind = "none"

    def offer(self, b: HaarExpansion, kind: str, osc: float | None = None) -> float:
        if osc is None:
            osc = bmo_norm(haar_inverse(b)).value
        if osc <= 1e-12:
            return 0.0
        w = pi_main(self.phi, b).pure() ** 2
        lam = (self.best * osc) ** 2
        if lam > 0.0:
            mask = self.solver.exceeds(w, lam)
            if mask is None:
                return 0.0
            ratio, _ = self.solver.solve(w, self.solver.ratio(w, mask), mask)
        else:
            ratio, _ = self.solver.solve(w)
        value = math.sqrt(max(ratio, 0.0)) / osc
        if value > self.best:
            self.best, self.best_b, self.best_kind = value, b, kind
        return value


def bmo_to_bmo_lower_bound(phi: HaarExpansion, budget: int = 16, seed=0,
                           symbol_id: int = 0) -> EquivalenceRecord:
    """Certified lower bound for ``||Pi_phi||_{bmo -> BMO}`` over a nested candidate family.

    Candidates: every oscillating ``log_R``; ``budget`` random area-scaled ``b``;
    ``budget`` coordinate-ascent steps started from the best ``log_R``.  Every
    stream is a prefix of the stream for a larger budget, so the bound is
    monotone in ``budget``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    depth = phi.depth
    scorer = _Scorer(phi)
    for R, b, osc in _log_family(depth):
        scorer.offer(b, "log", osc)
    log_bound, log_b = scorer.best, scorer.best_b

    rng = np.random.default_rng(_seed(seed, 1))
    for _ in range(budget):
        scorer.offer(random_expansion(depth, rng), "random")

    if log_b is not None:
        rng = np.random.default_rng(_seed(seed, 2))
        current = log_b
        cur_val = log_bound
        area = _area_tensor(depth)
        pure_pos = np.argwhere(pure_mask(depth))
        for _ in range(budget):
            pos = tuple(pure_pos[int(rng.integers(len(pure_pos)))])
            scale = float(rng.choice([0.5, 1.0, 2.0])) * math.sqrt(area[pos]) * \
                bmo_norm(haar_inverse(current)).value
            step_best, step_b = cur_val, None
            for sgn in (1.0, -1.0):
                c = current.coeffs.copy()
                c[pos] += sgn * scale
                trial = HaarExpansion(c)
                v = pi_ratio(phi, trial)
                scorer.offer(trial, "ascent")
                if v > step_best:
                    step_best, step_b = v, trial
            if step_b is not None:
                current, cur_val = step_b, step_best

    if scorer.best_b is None:
        witness = HaarExpansion.zeros(depth)
        lower = 0.0
    else:
        witness = scorer.best_b
        lower = pi_ratio(phi, witness)
    lmo = lmo_norm(phi).value
    ratio = lmo / lower ** 2 if lower > 0 else math.inf if lmo > 0 else 0.0
    return EquivalenceRecord(symbol_id, depth, lmo, lower, witness, scorer.best_kind
                             if scorer.best_b is not None else "none", ratio, log_bound)


def equivalence_experiment(n_params: int, depths, ensemble: int, seed=0, budget: int = 8,
                           kinds=SYMBOL_KINDS, normalize: bool = True,
                           with_equiv: bool = True) -> list[EquivalenceRecord]:
    """One record per (depth, symbol).  Symbols are scaled to ``lmo_norm = 1`` when
    ``normalize`` is set, which makes ``lmo / lower_bound**2`` scale-free."""
    records = []
    for J in depths:
        depth = (int(J),) * n_params
        for i in range(ensemble):
            rng = np.random.default_rng([int(seed), int(J), i])
            kind = kinds[i % len(kinds)]
            phi = random_symbol(depth, rng, kind)
            lmo = lmo_norm(phi).value
            if normalize and lmo > 0:
                phi = HaarExpansion(phi.coeffs / lmo)
            rec = bmo_to_bmo_lower_bound(phi, budget, seed=[int(seed), int(J), i], symbol_id=i)
            rec.kind = kind
            if with_equiv:
                rec.equiv_quantity = lmo_equiv_quantity(phi).value
            records.append(rec)
    return records


def ensemble_symbol(n_params: int, J: int, i: int, seed=0, kinds=SYMBOL_KINDS,
                    normalize: bool = True) -> HaarExpansion:
    """Regenerate the symbol behind record ``i`` at depth ``J``."""
    rng = np.random.default_rng([int(seed), int(J), i])
    phi = random_symbol((int(J),) * n_params, rng, kinds[i % len(kinds)])
    lmo = lmo_norm(phi).value
    return HaarExpansion(phi.coeffs / lmo) if normalize and lmo > 0 else phi


def log_family_bmo_max(depth) -> float:
    return max(osc for _, _, osc in _log_family(tuple(depth)))


# --- suites ------------------------------------------------------------------


@dataclass
class SuiteReport:
    name: str
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures


def _rel_dev(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def _sigma_rows(depth, trials, rng, tol):
    rows, failures = [], []
    for t in range(trials):
        b = random_expansion(depth, rng, "white")
        for axis in range(len(depth)):
            for k in range(depth[axis]):
                lhs = _spectral(pi_after_expectation_matrix(b, k, axis))
                rhs = _spectral(paraproduct_matrix(sigma_op(b, k, axis)))
                dev = _rel_dev(lhs, rhs)
                row = {"check": "sigma", "trial": t, "axis": axis, "k": k,
                       "lhs": lhs, "rhs": rhs, "dev": dev}
                rows.append(row)
                if dev > tol:
                    failures.append(row)
    return rows, failures


def core_lemma_suite(seed=0, depths=(2, 3), n_params: int = 2, trials: int = 5,
                     sigma_trials: int = 20, sigma_depth: int = 3, tol: float = 1e-8) -> SuiteReport:
    """Exact sigma equality plus bounded-ratio scans of the core estimates.

    Scan constants (max over the ensemble) are reported per depth in ``summary``.
    """
    report = SuiteReport("core")
    rng = np.random.default_rng([int(seed), 0])
    rows, failures = _sigma_rows((sigma_depth,) * n_params, sigma_trials, rng, tol)
    report.rows += rows
    report.failures += failures
    report.summary["sigma_max_dev"] = max(r["dev"] for r in rows)

    for J in depths:
        depth = (J,) * n_params
        rng = np.random.default_rng([int(seed), int(J), 1])
        consts = {"core2": 0.0, "core2bis": 0.0, "core2one": 0.0}
        for t in range(trials):
            phi = random_expansion(depth, rng)
            b = random_expansion(depth, rng)
            bmo_b = bmo_norm(haar_inverse(b)).value
            bmo_phi = math.sqrt(product_bmo_norm(phi).value)
            lmo = lmo_norm(phi).value
            psi = pi_main(phi, b)
            for axis in range(n_params):
                beta = tuple(1 if a == axis else 0 for a in range(n_params))
                psi_one = pi_beta(phi, b, beta) if n_params > 1 else None
                for k in range(J):
                    v = _spectral(pi_after_expectation_matrix(psi, k, axis))
                    c2 = v / ((k + 1) * bmo_phi * bmo_b)
                    report.rows.append({"check": "core2", "depth": J, "trial": t, "axis": axis,
                                        "k": k, "value": c2})
                    consts["core2"] = max(consts["core2"], c2)
                    if psi_one is not None:
                        v1 = _spectral(pi_after_expectation_matrix(psi_one, k, axis))
                        c1 = v1 / ((k + 1) * bmo_phi * bmo_b)
                        report.rows.append({"check": "core2one", "depth": J, "trial": t,
                                            "axis": axis, "k": k, "value": c1})
                        consts["core2one"] = max(consts["core2one"], c1)
                    for j in range(J + 1):
                        psi_j = pi_main(axis_q_tail(phi, axis, j), b)
                        vj = _spectral(pi_after_expectation_matrix(psi_j, k, axis))
                        cb = vj / ((k + 1) / (j + 1) * lmo * bmo_b)
                        report.rows.append({"check": "core2bis", "depth": J, "trial": t,
                                            "axis": axis, "k": k, "j": j, "value": cb})
                        consts["core2bis"] = max(consts["core2bis"], cb)
        for name, c in consts.items():
            if not math.isfinite(c):
                report.failures.append({"check": name, "depth": J, "value": c})
            report.summary[f"{name}_J{J}"] = c
    return report


def cotlar_decay_suite(seed=0, depths=(2, 3, 4), n_params: int = 2, trials: int = 6,
                       axis: int = 0) -> SuiteReport:
    """Block orthogonality ``T_M T_M'^* = 0`` and the fitted decay constant per depth.

    ``C`` is the smallest constant with
    ``||T_M^* T_M'|| <= C 2^-|M-M'| lmo_axis(phi)^2 bmo(b)^2`` over the ensemble.
    """
    report = SuiteReport("cotlar")
    for J in depths:
        depth = (J,) * n_params
        rng = np.random.default_rng([int(seed), int(J), 2])
        n_blocks = cotlar_block_count(J)
        fitted, ortho = 0.0, 0.0
        for t in range(trials):
            phi = random_expansion(depth, rng)
            b = random_expansion(depth, rng)
            factor = lmo_axis_norm(phi, axis).value ** 2 * bmo_norm(haar_inverse(b)).value ** 2
            blocks = [cotlar_block(phi, b, M, axis).dense() for M in range(n_blocks)]
            for M, Mp in itertools.product(range(n_blocks), repeat=2):
                TT = blocks[M].T @ blocks[Mp]
                val = _spectral(TT)
                c = val * 2.0 ** abs(M - Mp) / factor if factor > 0 else 0.0
                fitted = max(fitted, c)
                row = {"check": "decay", "depth": J, "trial": t, "M": M, "Mp": Mp,
                       "norm": val, "constant": c}
                if M != Mp:
                    cross = float(np.abs(blocks[M] @ blocks[Mp].T).max())
                    ortho = max(ortho, cross)
                    row["cross"] = cross
                    if cross != 0.0:
                        report.failures.append(dict(row))
                report.rows.append(row)
        report.summary[f"C_J{J}"] = fitted
        report.summary[f"cross_J{J}"] = ortho
    return report


# growth lemma ------------------------------------------------------------------


def _block_view(values: np.ndarray, lv) -> np.ndarray:
    """Reshape a grid so blocks at level tuple ``lv`` are (outer, inner) axis pairs."""
    shape = []
    for n, j in zip(values.shape, lv):
        shape += [2 ** j, n // 2 ** j]
    return values.reshape(shape)


def _block_means(values: np.ndarray, lv) -> np.ndarray:
    inner = tuple(range(1, 2 * values.ndim, 2))
    return _block_view(values, lv).mean(axis=inner)


def growth_constants(sig: GridSignal) -> dict:
    """Empirical constants of the three growth inequalities for one signal.

    With ``m'`` the mean over ``T x R`` (first factor released):

    * ``a``: ``|m_{I x R} b - m'| / ((k+1) ||b||_bmo)``
    * ``b``: ``|I x R|^-1 ||chi_{I x R} (b - m')||^2 / ((k+1)^2 ||b||_bmo^2)``
    * ``c``: ``||chi_R P_T b||^2 / (|R||T| ||b||_bmo^2)``

    maximised over every axis playing the role of the first factor, every
    level ``k`` of ``I`` and all dyadic ``R``; for ``c`` over every split of
    the axes into the ``R`` and ``T`` groups.
    """
    values = sig.values
    depth = sig.depth
    N = len(depth)
    osc = bmo_norm(sig).value
    if osc <= 0.0:
        return {"a": 0.0, "b": 0.0, "c": 0.0, "bmo": 0.0}
    ca = cb = 0.0
    for axis in range(N):
        for lv in itertools.product(*[range(J + 1) for J in depth]):
            k = lv[axis]
            released = list(lv)
            released[axis] = 0
            m = _block_means(values, lv)
            mp = _block_means(values, released)
            ca = max(ca, float(np.abs(m - mp).max()) / ((k + 1) * osc))
            # broadcast released means over the full grid
            full_mp = mp
            for a, J in enumerate(depth):
                full_mp = np.repeat(full_mp, 2 ** (J - released[a]), axis=a)
            sq = _block_means((values - full_mp) ** 2, lv)
            cb = max(cb, float(sq.max()) / ((k + 1) ** 2 * osc ** 2))
    cc = _growth_c(sig) / osc ** 2 if N > 1 else 0.0
    return {"a": ca, "b": cb, "c": cc, "bmo": osc}


def _growth_c(sig: GridSignal) -> float:
    from .dyadic import haar_forward

    depth = sig.depth
    N = len(depth)
    coeffs = haar_forward(sig).coeffs
    best = 0.0
    for r in range(1, N):
        for T_axes in itertools.combinations(range(N), N - r):
            R_axes = [a for a in range(N) if a not in T_axes]
            t_ranges = [range(1, 2 ** depth[a]) for a in T_axes]
            for t_pos in itertools.product(*t_ranges):
                c = coeffs
                area_T = 1.0
                for a, p in zip(T_axes, t_pos):
                    J = depth[a]
                    keep = containment(J)[p] * (levels(J) >= 0)
                    c = along(c, np.diag(keep.astype(float)), a)
                    area_T *= 2.0 ** -int(levels(J)[p])
                f = haar_inverse(HaarExpansion(c)).values ** 2
                # integrate over T axes fully, block over R axes at all levels
                g = f.mean(axis=tuple(T_axes)) if T_axes else f
                for lv in itertools.product(*[range(depth[a] + 1) for a in R_axes]):
                    # mean over R blocks = |R|^-1 integral over R x (all T axes)
                    m = _block_means(g, lv)
                    best = max(best, float(m.max()) / area_T)
    return best


def growth_lemma_suite(seed=0, depths=(2, 3, 4), n_params: int = 2, trials: int = 8,
                       include_log: bool = True) -> SuiteReport:
    """Empirical growth constants per depth over random ``b`` and the ``log_R`` family."""
    report = SuiteReport("growth")
    for J in depths:
        depth = (J,) * n_params
        rng = np.random.default_rng([int(seed), int(J), 3])
        best = {"a": 0.0, "b": 0.0, "c": 0.0}
        members = [("random", t, haar_inverse(random_expansion(depth, rng))) for t in range(trials)]
        if include_log:
            members += [("log", R.index, log_test_rect(R, depth))
                        for R, _, _ in _log_family(depth)]
        for family, ident, sig in members:
            consts = growth_constants(sig)
            report.rows.append({"depth": J, "family": family, "member": str(ident), **consts})
            for key in best:
                best[key] = max(best[key], consts[key])
        for key, v in best.items():
            report.summary[f"{key}_J{J}"] = v
            if not math.isfinite(v):
                report.failures.append({"depth": J, "inequality": key, "value": v})
    return report


def stability_factor(summary: dict, key: str, depths) -> float:
    """``max / min`` of ``summary[f"{key}_J{J}"]`` over the depths."""
    vals = [summary[f"{key}_J{J}"] for J in depths]
    lo = min(vals)
    return max(vals) / lo if lo > 0 else math.inf


# --- shift commutators ---------------------------------------------------------


def commutator_bound_suite(seed=0, depths=(2, 3, 4), trials: int = 8) -> SuiteReport:
    """``product_bmo([S1, [S2, phi]] b)^(1/2)`` for ``lmo(phi) = 1`` and ``bmo(b) = 1`` (N = 2)."""
    from .shifts import iterated_commutator

    report = SuiteReport("commutator")
    for J in depths:
        depth = (J, J)
        rng = np.random.default_rng([int(seed), int(J), 4])
        best = 0.0
        for t in range(trials):
            phi = random_expansion(depth, rng)
            phi = HaarExpansion(phi.coeffs / lmo_norm(phi).value)
            b = random_expansion(depth, rng)
            b = HaarExpansion(b.coeffs / bmo_norm(haar_inverse(b)).value)
            res = iterated_commutator(phi, b, [0, 1])
            v = math.sqrt(product_bmo_norm(res.output).value)
            best = max(best, v)
            report.rows.append({"depth": J, "trial": t, "value": v,
                                "truncated": int(res.truncation_flag)})
        report.summary[f"max_J{J}"] = best
    return report


def appendix_inputs(rng, depth, shifted) -> tuple[HaarExpansion, HaarExpansion]:
    """Random ``phi, b`` with no Haar content at levels >= J-1 on the shifted axes."""
    out = []
    for _ in range(2):
        c = rng.standard_normal(tuple(2 ** J for J in depth))
        for a in shifted:
            J = depth[a]
            idx = [slice(None)] * len(depth)
            idx[a] = levels(J) >= J - 1
            c[tuple(idx)] = 0.0
        out.append(HaarExpansion(c))
    return out[0], out[1]


def appendix_suite(seed=0, trials: int = 5, J: int = 3) -> SuiteReport:
    """Appendix identity errors (N = 3) for both exponent readings, plus the rewrite step."""
    from .paraproducts import PartitionSpec
    from .shifts import appendix_identity_check, expansion_step_error

    report = SuiteReport("appendix")
    spec = PartitionSpec({0}, {1}, {2})
    shifted = sorted(spec.J1 | spec.J3)
    rng = np.random.default_rng([int(seed), 5])
    worst = {"identity": 0.0, "step": 0.0}
    for t in range(trials):
        phi, b = appendix_inputs(rng, (J,) * 3, shifted)
        e13 = len(spec.J1) + len(spec.J3)
        e12 = len(spec.J1) + len(spec.J2)
        for label, e in (("N1+N3", e13), ("N1+N2", e12)):
            err = appendix_identity_check(phi, b, spec, exponent=e)
            report.rows.append({"trial": t, "check": "identity", "exponent": label, "error": err})
            worst["identity"] = max(worst["identity"], err)
        step = expansion_step_error(phi, b, shifted, e13)
        report.rows.append({"trial": t, "check": "step", "exponent": "N1+N3", "error": step})
        worst["step"] = max(worst["step"], step)
    report.summary.update({f"max_{k}_error": v for k, v in worst.items()})
    if worst["identity"] > 1e-10:
        report.failures.append({"check": "identity", "error": worst["identity"]})
    return report
