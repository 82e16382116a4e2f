"""Stable and unstable holonomies, reduction to a past-only cocycle, transition maps.

For a locally constant cocycle the iterates ``H^n_{x,y}`` stop changing once
the generator windows along the two orbits coincide, so the limits are
reached after finitely many steps.  The geometric bound ``C1 tau^{n/N}
d(x,y)^alpha`` is still tracked: it certifies the early stop and is what
the Cauchy-rate checks compare against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cocycle import MatrixCocycle, fiber_bunching_check
from .errors import NumericalError, ValidationError
from .symbolic import (
    Homoclinic,
    MarkovBase,
    TwoSidedWord,
    _as_tuple,
    all_words,
    shift_distance,
    splice_homoclinic,
    word_code,
)

ITERATION_CAP = 200
SPAN = 64
PROBE_LIMIT = 20000


@dataclass(frozen=True)
class BunchingConstants:
    """Constants of the holonomy convergence and Hölder bounds.

    ``tau`` is the bunching sup at the witness ``N``; one step of the
    iteration contracts by ``tau ** (1 / N)``.  ``C1`` is twice the largest
    observed ratio ``||H - H^n|| / (tau^{n/N} d^alpha)`` on the probe set and
    ``(C_holder, beta)`` is the fitted envelope ``||H - I|| <= C d^beta``.
    """

    tau: float
    C1: float
    beta: float
    N: int
    alpha: float
    C_holder: float = 0.0
    n_probes: int = 0

    def rate(self, n: int) -> float:
        return self.tau ** (n / self.N)

    def bound(self, n: int, dist: float) -> float:
        return self.C1 * self.rate(n) * dist**self.alpha


@dataclass(frozen=True)
class HolonomyResult:
    H: np.ndarray
    iterations: int
    error_bound: float
    exact: bool
    distance: float


# --------------------------------------------------------------------------
# iteration kernel


def _factor(A: MatrixCocycle, z: TwoSidedWord, j: int, kind: str) -> np.ndarray:
    if kind == "s":
        return A.evaluate_at(z, j)
    return np.linalg.inv(A.evaluate_at(z, -j - 1))


def _window_code(A: MatrixCocycle, z: TwoSidedWord, j: int, kind: str) -> int:
    t = j if kind == "s" else -j - 1
    return word_code(z.window(t - A.depth + 1, t + A.lead), A.n_symbols)


def _last_active_step(A: MatrixCocycle, x: TwoSidedWord, y: TwoSidedWord, kind: str) -> int:
    """Number of steps after which the two orbits read identical windows."""
    lo, hi = max(x.lo, y.lo), min(x.hi, y.hi)
    idx = np.arange(lo, hi + 1)
    diff = idx[x.window(lo, hi) != y.window(lo, hi)]
    if diff.size == 0:
        return 0
    if kind == "s":
        # window of step j is [j - depth + 1, j + lead]; it sees index i < 0
        # while j <= i + depth - 1
        k = int(diff.max())
        return max(0, k + A.depth)
    # window of step j is [-j - depth, -j - 1 + lead]; it sees index i > 0
    # while j <= lead - 1 - i
    k = int(diff.min())
    return max(0, A.lead - k)


def _iterate(A, x, y, kind, steps):
    """Yield ``H^n`` for ``n = 0..steps`` with a normalized ``P_n(y)``."""
    d = A.d
    H = np.eye(d)
    P = np.eye(d)
    yield H
    for j in range(steps):
        cx, cy = _window_code(A, x, j, kind), _window_code(A, y, j, kind)
        Fy = _factor(A, y, j, kind)
        if cx != cy:
            Fx = _factor(A, x, j, kind)
            K = np.linalg.solve(Fy, Fx)
            H = np.linalg.solve(P, K @ P) @ H
        P = Fy @ P
        P /= np.linalg.norm(P)
        yield H


def holonomy_iterates(A: MatrixCocycle, x: TwoSidedWord, y: TwoSidedWord, kind: str, nmax: int) -> np.ndarray:
    """Array of iterates ``H^0 .. H^nmax`` (``kind`` is ``"s"`` or ``"u"``)."""
    _check_range(A, x, y, kind, nmax)
    return np.stack(list(_iterate(A, x, y, kind, nmax)))


def _check_range(A, x, y, kind, steps):
    last = _last_active_step(A, x, y, kind)
    need = min(steps, last)
    if need == 0:
        return
    if kind == "s":
        lo, hi = -A.depth + 1, need - 1 + A.lead
    else:
        lo, hi = -need + 1 - A.depth, A.lead - 1
    for z in (x, y):
        if lo < z.lo or hi > z.hi:
            raise ValidationError(
                f"holonomy needs coordinates [{lo}, {hi}] but word covers [{z.lo}, {z.hi}]"
            )


def _same_local_set(x: TwoSidedWord, y: TwoSidedWord, kind: str) -> bool:
    if kind == "s":
        lo, hi = max(0, x.lo, y.lo), min(x.hi, y.hi)
    else:
        lo, hi = max(x.lo, y.lo), min(0, x.hi, y.hi)
    if lo > hi:
        return True
    return bool(np.array_equal(x.window(lo, hi), y.window(lo, hi)))


# --------------------------------------------------------------------------
# constants


_CONSTANTS_CACHE: dict = {}


def _cache_key(A: MatrixCocycle, base: MarkovBase | None):
    bkey = None if base is None else (base.n_symbols, base.memory, base.trans.tobytes())
    return (A.gens.tobytes(), A.gens.shape, A.n_symbols, A.depth, A.lead, A.alpha, bkey)


def _pad(base: MarkovBase | None, seq: tuple[int, ...], left: int, right: int, n_symbols: int):
    """Extend a legal block greedily by the smallest allowed symbols."""
    seq = tuple(seq)
    for _ in range(right):
        for s in range(n_symbols):
            if base is None or base.is_legal(seq[-(base.memory + 1):] + (s,) if base.memory else (s,)):
                seq = seq + (s,)
                break
        else:
            raise ValidationError("block has no legal continuation")
    for _ in range(left):
        for s in range(n_symbols):
            if base is None or base.is_legal((s,) + seq[: base.memory + 1]):
                seq = (s,) + seq
                break
        else:
            raise ValidationError("block has no legal predecessor")
    return seq


def probe_pairs(A: MatrixCocycle, base: MarkovBase | None, kind: str, seed: int = 0):
    """Pairs on one local stable (``"s"``) or unstable (``"u"``) set.

    The holonomy depends only on a finite window of the pair, so every
    configuration of that window is enumerated when there are at most
    ``PROBE_LIMIT`` of them; otherwise a seeded random subset is used.
    """
    ell, D, L = A.n_symbols, A.depth, A.lead
    if kind == "s":
        # x on [-(D-1), D-2+L]; y differs only on [-(D-1), -1]
        n_free_y, x_lo, x_hi = D - 1, -(D - 1), D - 2 + L
    else:
        n_free_y, x_lo, x_hi = L - 1, -(L - 2) - D, L - 1
    if n_free_y <= 0:
        return []
    x_len = x_hi - x_lo + 1
    total = ell ** (x_len + n_free_y)
    if total <= PROBE_LIMIT:
        xs = all_words(ell, x_len)
        ys = all_words(ell, n_free_y)
        combos = ((xw, yw) for xw in xs for yw in ys)
    else:
        gen = np.random.default_rng(seed)
        combos = ((gen.integers(0, ell, x_len), gen.integers(0, ell, n_free_y)) for _ in range(PROBE_LIMIT))
    pairs = []
    for xw, yw in combos:
        xw = tuple(int(s) for s in xw)
        if kind == "s":
            yw_full = tuple(int(s) for s in yw) + xw[D - 1 :]
        else:
            yw_full = xw[: x_len - n_free_y] + tuple(int(s) for s in yw)
        if xw == yw_full:
            continue
        if base is not None and not (base.is_legal(xw) and base.is_legal(yw_full)):
            continue
        origin = -x_lo
        try:
            xp = _pad(base, xw, 2, 2, ell)
            yp = _pad(base, yw_full, 2, 2, ell)
        except ValidationError:
            continue
        x = TwoSidedWord.from_sequence(xp, origin + 2)
        y = TwoSidedWord.from_sequence(yp, origin + 2)
        if kind == "s" and not _same_local_set(x, y, "s"):
            continue
        if kind == "u" and not _same_local_set(x, y, "u"):
            continue
        pairs.append((x, y))
    return pairs


def bunching_constants(A: MatrixCocycle, base: MarkovBase | None = None, Nmax: int = 8) -> BunchingConstants:
    """Bunching witness plus ``C1`` and the Hölder envelope fitted on probe pairs."""
    key = _cache_key(A, base)
    if key in _CONSTANTS_CACHE:
        return _CONSTANTS_CACHE[key]
    res = fiber_bunching_check(A, base, Nmax)
    if not res.satisfied:
        raise ValidationError(
            f"not fiber bunched (smallest sup {min(res.values):.4g} over N <= {Nmax})"
        )
    tau, N, alpha = res.tau, res.N, A.alpha
    ratios, levels = [0.0], {}
    n_probes = 0
    for kind in ("s", "u"):
        for x, y in probe_pairs(A, base, kind):
            n_probes += 1
            dist = shift_distance(x, y)
            steps = _last_active_step(A, x, y, kind)
            Hs = holonomy_iterates(A, x, y, kind, steps)
            lim = Hs[-1]
            for n, Hn in enumerate(Hs):
                err = np.linalg.norm(lim - Hn, 2)
                if err > 0:
                    ratios.append(err / (tau ** (n / N) * dist**alpha))
            dev = float(np.linalg.norm(lim - np.eye(A.d), 2))
            levels[dist] = max(levels.get(dist, 0.0), dev)
    C1 = 2.0 * max(ratios)
    beta, C_h = _fit_holder(levels, alpha)
    out = BunchingConstants(tau, C1, beta, N, alpha, C_h, n_probes)
    _CONSTANTS_CACHE[key] = out
    return out


def _fit_holder(levels: dict, alpha: float) -> tuple[float, float]:
    """Envelope ``max ||H - I|| <= C d^beta`` fitted across distance levels.

    With fewer than two non-trivial levels the slope is not identifiable and
    ``beta = alpha`` is used; ``C`` is then chosen so the bound holds on
    every probe.
    """
    pts = sorted((d, v) for d, v in levels.items() if v > 0 and d > 0)
    beta = alpha
    if len(pts) >= 2:
        ld = np.log([p[0] for p in pts])
        lv = np.log([p[1] for p in pts])
        slope = float(np.polyfit(ld, lv, 1)[0])
        beta = float(np.clip(slope, 1e-3, alpha))
    C = max((v / d**beta for d, v in pts), default=0.0)
    return beta, C


# --------------------------------------------------------------------------
# public holonomies


def _holonomy(A, x, y, kind, tol, constants, base, check_local=True) -> HolonomyResult:
    if check_local and not _same_local_set(x, y, kind):
        which = "stable" if kind == "s" else "unstable"
        raise ValidationError(f"points are not on the same local {which} set")
    dist = shift_distance(x, y)
    last = _last_active_step(A, x, y, kind)
    if last == 0:
        # the two orbits read identical windows: the limit is exactly I and
        # no convergence argument is needed
        return HolonomyResult(np.eye(A.d), 0, 0.0, True, dist)
    consts = constants or bunching_constants(A, base)
    _check_range(A, x, y, kind, last)
    H = np.eye(A.d)
    n = 0
    for n, H in enumerate(_iterate(A, x, y, kind, min(last, ITERATION_CAP))):
        if n >= last or consts.bound(n, dist) < tol:
            break
    exact = n >= last
    if not exact and consts.bound(n, dist) >= tol:
        raise NumericalError(f"holonomy did not reach tol={tol:g} within {ITERATION_CAP} steps")
    bound = 0.0 if exact else consts.bound(n, dist)
    return HolonomyResult(H, n, bound, exact, dist)


def stable_holonomy(A: MatrixCocycle, x: TwoSidedWord, y: TwoSidedWord, tol: float = 1e-10,
                    constants: BunchingConstants | None = None, base: MarkovBase | None = None) -> HolonomyResult:
    """``H^s_{x,y} = lim A^n(y)^{-1} A^n(x)`` for ``y`` in the local stable set of ``x``."""
    return _holonomy(A, x, y, "s", tol, constants, base)


def unstable_holonomy(A: MatrixCocycle, x: TwoSidedWord, y: TwoSidedWord, tol: float = 1e-10,
                      constants: BunchingConstants | None = None, base: MarkovBase | None = None) -> HolonomyResult:
    """``H^u_{x,y} = lim A^n(T^{-n} y) A^n(T^{-n} x)^{-1}`` for ``y`` in the local unstable set of ``x``."""
    return _holonomy(A, x, y, "u", tol, constants, base)


# --------------------------------------------------------------------------
# reduction


def reference_futures(base: MarkovBase | None, n_symbols: int, length: int = SPAN) -> dict[int, tuple[int, ...]]:
    """Lexicographically smallest future legal after every past ending in ``i``."""
    refs = {}
    m = 0 if base is None else base.memory
    for i in range(n_symbols):
        if base is not None and not base.is_legal((i,)):
            continue
        contexts = [(i,)]
        if base is not None and m > 1:
            words, probs = base.word_probabilities(m)
            contexts = [tuple(int(s) for s in w) for w, p in zip(words, probs) if p > 0 and w[-1] == i]
        fut: tuple[int, ...] = ()
        for _ in range(length):
            for s in range(n_symbols):
                cand = fut + (s,)
                if base is None or all(base.is_legal(c + cand) for c in contexts):
                    fut = cand
                    break
            else:
                raise ValidationError(f"no legal reference continuation in cylinder [{i}]")
        refs[i] = fut
    return refs


@dataclass(frozen=True)
class Reduction:
    """Past-only cocycle ``A^s`` with its conjugacy ``h(x) = H^u_{x, theta(x)}``.

    ``A^s(x) = h(x) A(T^{-1} x) h(T^{-1} x)^{-1}``, so ``A^s`` is conjugate
    to ``A`` composed with ``T^{-1}``; both have the same Lyapunov spectrum.
    """

    cocycle: MatrixCocycle
    original: MatrixCocycle
    references: dict
    constants: BunchingConstants
    base: MarkovBase | None = field(default=None, repr=False)

    def theta(self, x: TwoSidedWord) -> TwoSidedWord:
        return TwoSidedWord(x.past, self.references[x[0]])

    def conjugacy(self, x: TwoSidedWord) -> np.ndarray:
        res = _holonomy(self.original, x, self.theta(x), "u", 1e-12, self.constants, self.base)
        return res.H


def reduce_to_past(A: MatrixCocycle, base: MarkovBase | None = None,
                   constants: BunchingConstants | None = None) -> Reduction:
    """Conjugate ``A`` to a cocycle that reads only ``x_{<=0}``.

    The result has depth ``depth + max(lead, 1)`` and generator
    ``H^u_{T theta(T^{-1}x), theta(x)} A(theta(T^{-1}x))``.
    """
    consts = constants or bunching_constants(A, base)
    ell, D, L = A.n_symbols, A.depth, A.lead
    Dp = D + max(L, 1)
    refs = reference_futures(base, ell)
    words = all_words(ell, Dp)
    gens = np.broadcast_to(np.eye(A.d), (len(words), A.d, A.d)).copy()
    for code, u in enumerate(words):
        u = tuple(int(s) for s in u)
        if base is not None and not base.is_legal(u):
            continue
        if u[-2] not in refs or u[-1] not in refs:
            continue
        past = _pad(base, u, 0, 0, ell)
        a = TwoSidedWord(past[:-1], refs[u[-2]])  # theta(T^{-1} x)
        Ta = a.shift(1)
        thx = TwoSidedWord(past, refs[u[-1]])  # theta(x)
        Hu = _holonomy(A, Ta, thx, "u", 1e-12, consts, base, check_local=False).H
        gens[code] = Hu @ A.evaluate_at(a, 0)
    red = MatrixCocycle(gens, ell, Dp, 0, A.alpha)
    return Reduction(red, A, refs, consts, base)


# --------------------------------------------------------------------------
# transition maps


@dataclass(frozen=True)
class TransitionMap:
    psi: np.ndarray
    homoclinic: Homoclinic
    error_bound: float
    Hs: HolonomyResult | None = None
    Hu: HolonomyResult | None = None


def transition_map(A: MatrixCocycle, a_block, bridge, base: MarkovBase | None = None,
                   tol: float = 1e-10, constants: BunchingConstants | None = None) -> TransitionMap:
    """``psi = H^s_{z', a} A^l(z) H^u_{a, z}`` along the spliced homoclinic loop."""
    h = splice_homoclinic(a_block, bridge, base, span=SPAN + A.window)
    if h.l == 0:
        return TransitionMap(np.eye(A.d), h, 0.0)
    consts = constants
    z, a = h.z, h.a
    Hu = _holonomy(A, a, z, "u", tol, consts, base)
    Al = np.eye(A.d)
    for j in range(h.l):
        Al = A.evaluate_at(z, j) @ Al
    zp = z.shift(h.l)
    Hs = _holonomy(A, zp, a, "s", tol, consts, base)
    psi = Hs.H @ Al @ Hu.H
    nA = np.linalg.norm(Al, 2)
    es, eu = Hs.error_bound, Hu.error_bound
    err = nA * (es * np.linalg.norm(Hu.H, 2) + eu * np.linalg.norm(Hs.H, 2) + es * eu)
    return TransitionMap(psi, h, float(err), Hs, Hu)


# --------------------------------------------------------------------------
# sampled certificates


@dataclass(frozen=True)
class EquivarianceReport:
    """Residuals of ``H_{Tx,Ty} A(x) = A(y) H_{x,y}`` and Cauchy ratios on random pairs.

    ``max_cauchy_ratio`` is the largest ``||H - H^n|| / (C1 tau^{n/N} d^alpha)``
    seen along the iterations; the geometric bound holds when it is at most one.
    """

    kind: str
    n_pairs: int
    max_residual: float
    threshold: float
    max_cauchy_ratio: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.threshold and self.max_cauchy_ratio <= 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_pairs": self.n_pairs, "max_residual": self.max_residual,
                "threshold": self.threshold, "max_cauchy_ratio": self.max_cauchy_ratio,
                "passed": self.passed, "seed": self.seed}


def random_pairs(A: MatrixCocycle, base: MarkovBase, kind: str, n_pairs: int, seed: int,
                 span: int = SPAN) -> list[tuple[TwoSidedWord, TwoSidedWord]]:
    """Stationary ``x`` and ``y`` sharing the future (``"s"``) or the past (``"u"``) of ``x``.

    The other half of ``y`` comes from an independent stationary path; pairs
    whose junction is illegal or whose two points coincide are redrawn.
    """
    from . import rng as _rng

    gen = _rng.stream(seed, _rng.PROBE, 0 if kind == "s" else 1)
    pairs: list = []
    while len(pairs) < n_pairs:
        paths = base.sample_paths(2 * (n_pairs - len(pairs)) + 2, 2 * span, gen)
        for k in range(0, len(paths) - 1, 2):
            xs = tuple(int(s) for s in paths[k])
            other = tuple(int(s) for s in paths[k + 1])
            # coordinate i sits at index span - 1 + i, so x_0 is at span - 1
            ys = other[: span - 1] + xs[span - 1 :] if kind == "s" else xs[:span] + other[span:]
            if ys == xs or not base.is_legal(ys):
                continue
            pairs.append((TwoSidedWord.from_sequence(xs, span - 1),
                          TwoSidedWord.from_sequence(ys, span - 1)))
            if len(pairs) == n_pairs:
                break
    return pairs


def equivariance_check(A: MatrixCocycle, base: MarkovBase, n_pairs: int = 1000, seed: int | None = None,
                       tol: float = 1e-8, kind: str = "s",
                       constants: BunchingConstants | None = None) -> EquivarianceReport:
    """Check holonomy equivariance and the convergence bound on random pairs."""
    from . import rng as _rng

    if kind not in ("s", "u"):
        raise ValidationError("kind must be 's' or 'u'")
    seed = _rng.resolve_seed(seed)
    consts = constants or bunching_constants(A, base)
    norm_A = float(np.max(np.linalg.norm(A.gens, 2, axis=(1, 2))))
    worst, worst_ratio = 0.0, 0.0
    for x, y in random_pairs(A, base, kind, n_pairs, seed):
        if kind == "s":
            H = _holonomy(A, x, y, kind, tol, consts, base).H
            Hn = _holonomy(A, x.shift(1), y.shift(1), kind, tol, consts, base).H
            res = A.evaluate_at(y, 0) @ H - Hn @ A.evaluate_at(x, 0)
        else:
            # T^{-1} x and T^{-1} y still share their pasts
            xm, ym = x.shift(-1), y.shift(-1)
            H = _holonomy(A, x, y, kind, tol, consts, base).H
            Hm = _holonomy(A, xm, ym, kind, tol, consts, base).H
            res = A.evaluate_at(ym, 0) @ Hm - H @ A.evaluate_at(xm, 0)
        worst = max(worst, float(np.linalg.norm(res, 2)))
        dist = shift_distance(x, y)
        steps = _last_active_step(A, x, y, kind)
        if steps:
            its = holonomy_iterates(A, x, y, kind, steps)
            for n, Hk in enumerate(its):
                err = float(np.linalg.norm(its[-1] - Hk, 2))
                if err > 0:
                    worst_ratio = max(worst_ratio, float(err / consts.bound(n, dist)))
    return EquivarianceReport(kind, n_pairs, worst, 2 * norm_A * tol, worst_ratio, seed)
