"""Locally constant matrix cocycles over a subshift.

A :class:`MatrixCocycle` reads the window ``x_{-depth+1} .. x_{lead}`` of a
point.  ``lead = 0`` gives a cocycle that depends on the past only; a
positive lead lets the generator look into the future, which is what the
holonomy reduction removes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg

from . import rng as _rng
from .errors import BudgetError, NumericalError, ValidationError
from .symbolic import (
    MarkovBase,
    TwoSidedWord,
    _as_tuple,
    all_words,
    decode_words,
    sliding_codes,
    word_code,
)

ENUM_BUDGET = 10**7
RAW_PRODUCT_MAX = 50
COLLAPSE = 1e-300
CHAIN_BLOCK = 32
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class MatrixCocycle:
    """Generators ``gens[code]`` for every window word, shape ``(l**W, d, d)``."""

    gens: np.ndarray
    n_symbols: int
    depth: int = 1
    lead: int = 0
    alpha: float = 1.0

    def __post_init__(self):
        g = np.array(self.gens, dtype=float)
        if g.ndim == 2:
            g = g[None]
        if g.ndim == 1:
            g = g[:, None, None]
        if self.depth < 1:
            raise ValidationError("depth must be at least 1")
        if self.lead < 0:
            raise ValidationError("lead must be non-negative")
        W = self.depth + self.lead
        n_words = self.n_symbols**W
        if g.shape[0] == 1 and n_words > 1:
            g = np.repeat(g, n_words, axis=0)
        if g.shape[0] != n_words or g.shape[1] != g.shape[2]:
            raise ValidationError(
                f"expected {n_words} square generators, got array of shape {g.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise ValidationError("generators must be finite")
        dets = np.abs(np.linalg.det(g))
        if np.any(dets <= 0) or np.any(~np.isfinite(np.linalg.cond(g))):
            bad = int(np.flatnonzero((dets <= 0) | ~np.isfinite(np.linalg.cond(g)))[0])
            raise ValidationError(f"generator {bad} is singular")
        if not (self.alpha > 0):
            raise ValidationError("alpha must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "gens", g)

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, M, n_symbols: int = 2, alpha: float = 1.0) -> "MatrixCocycle":
        return cls(np.asarray(M, dtype=float)[None], n_symbols, 1, 0, alpha)

    @classmethod
    def from_symbols(cls, mats: Sequence, alpha: float = 1.0) -> "MatrixCocycle":
        """Depth-1 cocycle with one matrix per symbol."""
        mats = np.asarray(mats, dtype=float)
        return cls(mats, len(mats), 1, 0, alpha)

    # basic properties -------------------------------------------------
    @property
    def d(self) -> int:
        return self.gens.shape[1]

    @property
    def window(self) -> int:
        return self.depth + self.lead

    @property
    def inverses(self) -> np.ndarray:
        return np.linalg.inv(self.gens)

    def evaluate(self, past) -> np.ndarray:
        """Generator for a past word (``lead = 0`` cocycles only)."""
        if self.lead:
            raise ValidationError("cocycle reads the future; use evaluate_at")
        past = _as_tuple(past)
        if len(past) < self.depth:
            raise ValidationError(f"past of length {len(past)} shorter than depth {self.depth}")
        return self.gens[word_code(past[len(past) - self.depth :], self.n_symbols)].copy()

    def evaluate_at(self, x: TwoSidedWord, j: int = 0) -> np.ndarray:
        """``A(T^j x)``."""
        win = x.window(j - self.depth + 1, j + self.lead)
        return self.gens[word_code(win, self.n_symbols)]

    def step_codes(self, seq: np.ndarray) -> np.ndarray:
        """Generator codes along ``seq``; step ``t`` reads ``seq[t : t+W]``."""
        return sliding_codes(seq, self.n_symbols, self.window)

    def with_gens(self, gens: np.ndarray, alpha: float | None = None) -> "MatrixCocycle":
        return MatrixCocycle(gens, self.n_symbols, self.depth, self.lead,
                             self.alpha if alpha is None else alpha)

    def scaled(self, c: float) -> "MatrixCocycle":
        return self.with_gens(self.gens * c)

    def padded(self, depth: int, lead: int) -> "MatrixCocycle":
        """Same cocycle presented on a wider window."""
        if depth < self.depth or lead < self.lead:
            raise ValidationError("padding cannot shrink the window")
        W = depth + lead
        words = all_words(self.n_symbols, W)
        off = depth - self.depth
        sub = words[:, off : off + self.window]
        codes = (sub * (self.n_symbols ** np.arange(self.window - 1, -1, -1))).sum(axis=1)
        return MatrixCocycle(self.gens[codes], self.n_symbols, depth, lead, self.alpha)

    def log_abs_det(self) -> np.ndarray:
        return np.linalg.slogdet(self.gens)[1]


# --------------------------------------------------------------------------
# compound matrices


def compound(M: np.ndarray, k: int) -> np.ndarray:
    """k-th compound (matrix of k x k minors, subsets in lexicographic order)."""
    M = np.asarray(M, dtype=float)
    d = M.shape[-1]
    if not 1 <= k <= d:
        raise ValidationError(f"exterior power k={k} outside 1..{d}")
    if k == 1:
        return M.copy()
    subsets = np.array(list(combinations(range(d), k)))
    rows = subsets[:, None, :, None]
    cols = subsets[None, :, None, :]
    sub = M[..., rows, cols]
    return np.linalg.det(sub)


def exterior_power(A: MatrixCocycle, k: int) -> MatrixCocycle:
    return A.with_gens(compound(A.gens, k))


# --------------------------------------------------------------------------
# products


@dataclass(frozen=True)
class ProductResult:
    """QR-stabilized product along one orbit.

    ``log_factors[t]`` holds ``log |R_t[i, i]|`` of step ``t``; cumulative
    sums give the log growth of the successive volumes.
    """

    log_factors: np.ndarray
    frame: np.ndarray
    matrix: np.ndarray | None

    @property
    def cumulative(self) -> np.ndarray:
        return self.log_factors.sum(axis=0)


def _qr_batch(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched QR with ``R`` diagonal returned as absolute values."""
    Q, R = np.linalg.qr(M)
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    if np.any(diag < COLLAPSE):
        raise NumericalError("numerical collapse: vanishing R diagonal in QR step")
    return Q, diag


def product(A: MatrixCocycle, orbit, n: int, keep_factors: bool = True) -> ProductResult:
    """Benettin product of ``n`` steps; ``orbit`` supplies ``n + W - 1`` symbols."""
    if isinstance(orbit, TwoSidedWord):
        seq = orbit.symbols()
    elif hasattr(orbit, "recorded"):
        seq = orbit.recorded
    else:
        seq = orbit
    seq = np.asarray(seq, dtype=np.int64).ravel()
    if len(seq) < n + A.window - 1:
        raise ValidationError(f"orbit supplies {len(seq)} symbols, need {n + A.window - 1}")
    codes = A.step_codes(seq[: n + A.window - 1])
    d = A.d
    Q = np.eye(d)
    logs = np.empty((n, d))
    raw = np.eye(d) if n <= RAW_PRODUCT_MAX else None
    for t in range(n):
        G = A.gens[codes[t]]
        Q, diag = _qr_batch(G @ Q)
        logs[t] = np.log(diag)
        if raw is not None:
            raw = G @ raw
    return ProductResult(logs, Q, raw)


# --------------------------------------------------------------------------
# Lyapunov spectra


@dataclass(frozen=True)
class LyapunovEstimate:
    exponents: np.ndarray
    n: int
    stderr: np.ndarray
    seed: int
    chains: int = 20
    chain_estimates: np.ndarray = field(default=None, repr=False)
    log_det_average: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "exponents": [float(v) for v in self.exponents],
            "stderr": [float(v) for v in self.stderr],
            "n": int(self.n),
            "chains": int(self.chains),
            "seed": int(self.seed),
            "log_det_average": float(self.log_det_average),
        }


def _benettin_block(gens: np.ndarray, codes: np.ndarray, n_batches: int, warmup: int = 0) -> np.ndarray:
    """Segment sums of log R diagonals; codes ``(B, warmup + n)`` -> ``(B, n_batches, d)``.

    The first ``warmup`` steps only align the frame and are not accumulated.
    """
    B, total = codes.shape
    n = total - warmup
    d = gens.shape[1]
    edges = warmup + np.linspace(0, n, n_batches + 1).astype(int)
    out = np.zeros((B, n_batches, d))
    if d == 1:
        la = np.log(np.abs(gens[:, 0, 0]))
        vals = la[codes]
        for b in range(n_batches):
            out[:, b, 0] = vals[:, edges[b] : edges[b + 1]].sum(axis=1)
        return out
    if d == 2:
        return _benettin_2x2(gens, codes, edges)
    Q = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    acc = np.zeros((B, d))
    seg = 0
    for t in range(total):
        Q, diag = _qr_batch(gens[codes[:, t]] @ Q)
        if t < warmup:
            continue
        acc += np.log(diag)
        if t + 1 == edges[seg + 1]:
            out[:, seg] = acc
            acc = np.zeros((B, d))
            seg += 1
    return out


def _benettin_2x2(gens: np.ndarray, codes: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # Gram-Schmidt on 2x2 blocks written out by hand; only |R_ii| is used, so
    # the sign convention of the frame is irrelevant
    B, total = codes.shape
    warmup = edges[0]
    a, b, c, e = (np.ascontiguousarray(gens[:, i, j]) for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
    q1x, q1y = np.ones(B), np.zeros(B)
    l1 = np.zeros(B)
    l2 = np.zeros(B)
    out = np.zeros((B, len(edges) - 1, 2))
    seg = 0
    for t in range(total):
        k = codes[:, t]
        ak, bk, ck, ek = a[k], b[k], c[k], e[k]
        ux = ak * q1x + bk * q1y
        uy = ck * q1x + ek * q1y
        r11 = np.hypot(ux, uy)
        # |det| of the step equals r11 * r22 since the frame is orthonormal
        r22 = np.abs(ak * ek - bk * ck) / r11
        if r11.min() < COLLAPSE or r22.min() < COLLAPSE:
            raise NumericalError("numerical collapse: vanishing R diagonal in QR step")
        q1x, q1y = ux / r11, uy / r11
        if t < warmup:
            continue
        l1 += np.log(r11)
        l2 += np.log(r22)
        if t + 1 == edges[seg + 1]:
            out[:, seg, 0], out[:, seg, 1] = l1, l2
            l1, l2 = np.zeros(B), np.zeros(B)
            seg += 1
    return out


def orbit_codes(A: MatrixCocycle, base: MarkovBase, n: int, seed: int, chains: Sequence[int],
                purpose: int = _rng.ORBIT) -> np.ndarray:
    """Step codes for the given chain indices, one independent stream per chain."""
    _check_base(A, base)
    rows = []
    for c in chains:
        gen = _rng.stream(seed, purpose, c)
        path = base.sample_paths(1, max(n + A.window - 1, base.memory), gen)[0]
        rows.append(A.step_codes(path[: n + A.window - 1]))
    return np.stack(rows)


def _check_base(A: MatrixCocycle, base: MarkovBase) -> None:
    if A.n_symbols != base.n_symbols:
        raise ValidationError(
            f"cocycle has {A.n_symbols} symbols but the base has {base.n_symbols}"
        )


def lyapunov_spectrum(
    A: MatrixCocycle,
    base: MarkovBase,
    n: int,
    seed: int | None = None,
    n_chains: int = 20,
    threads: int = 1,
    warmup: int | None = None,
) -> LyapunovEstimate:
    """Benettin estimate of the Lyapunov spectrum over ``n_chains`` stationary orbits.

    Each chain contributes one batch mean (split into segments when there are
    fewer than 20 chains), and ``stderr`` is the standard error of the batch
    means.  Chains are processed in fixed blocks so the result does not
    depend on ``threads``.
    """
    if n < 1000:
        raise ValidationError("orbit length n must be at least 1000")
    if n_chains < 1:
        raise ValidationError("need at least one chain")
    seed = _rng.resolve_seed(seed)
    warmup = min(1000, n // 10) if warmup is None else int(warmup)
    per_chain = max(1, math.ceil(20 / n_chains))
    blocks = [list(range(s, min(s + CHAIN_BLOCK, n_chains))) for s in range(0, n_chains, CHAIN_BLOCK)]

    def run(b: int) -> np.ndarray:
        codes = orbit_codes(A, base, warmup + n, seed, blocks[b])
        return _benettin_block(A.gens, codes, per_chain, warmup)

    parts = np.concatenate(_rng.run_blocks(run, len(blocks), threads), axis=0)
    seg_len = np.diff(np.linspace(0, n, per_chain + 1).astype(int))
    batch_means = (parts / seg_len[None, :, None]).reshape(-1, A.d)
    chain_est = parts.sum(axis=1) / n
    est = chain_est.mean(axis=0)
    k = batch_means.shape[0]
    se = batch_means.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.full(A.d, np.nan)
    # deterministic inputs give identical batches; keep a round-off floor
    se = np.maximum(se, ROUNDOFF * (1.0 + np.abs(est)))
    order = np.argsort(-est, kind="stable")
    logdet = float(chain_est.sum(axis=1).mean())
    return LyapunovEstimate(est[order], n, se[order], seed, n_chains, chain_est[:, order], logdet)


def expected_log_det(A: MatrixCocycle, base: MarkovBase) -> float:
    """Exact ``E[log |det A|]`` as a finite sum over window words."""
    _check_base(A, base)
    _, probs = base.word_probabilities(A.window)
    return float(probs @ A.log_abs_det())


# --------------------------------------------------------------------------
# bunching and distances


@dataclass(frozen=True)
class BunchingResult:
    satisfied: bool
    N: int | None
    margin: float
    values: tuple[float, ...]
    alpha: float

    @property
    def tau(self) -> float:
        """Sup value at the witness ``N`` (the contraction margin ``1 - margin``)."""
        return 1.0 - self.margin

    def __iter__(self):
        return iter((self.satisfied, self.N, self.margin))


def legal_windows(base: MarkovBase | None, n_symbols: int, length: int) -> np.ndarray:
    """All legal words of ``length`` (every word when ``base`` is None)."""
    if n_symbols**length > ENUM_BUDGET:
        raise BudgetError(f"enumeration budget: {n_symbols}^{length} words exceeds {ENUM_BUDGET}")
    if base is None:
        return all_words(n_symbols, length)
    words, probs = base.word_probabilities(length)
    return words[probs > 0]


def window_products(A: MatrixCocycle, words: np.ndarray, N: int) -> np.ndarray:
    """``A^N`` for each word of length ``N + W - 1`` (normalized columns kept raw)."""
    codes = A.step_codes(words)
    P = np.broadcast_to(np.eye(A.d), (len(words), A.d, A.d)).copy()
    for t in range(N):
        P = A.gens[codes[:, t]] @ P
    return P


def fiber_bunching_check(
    A: MatrixCocycle, base: MarkovBase | None = None, Nmax: int = 8, alpha: float | None = None
) -> BunchingResult:
    """Exact sup of ``||A^N|| ||A^N^{-1}|| 2^{-N alpha}`` over legal words, ``N = 1..Nmax``."""
    if Nmax < 1:
        raise ValidationError("Nmax must be at least 1")
    alpha = A.alpha if alpha is None else float(alpha)
    values = []
    for N in range(1, Nmax + 1):
        words = legal_windows(base, A.n_symbols, N + A.window - 1)
        P = window_products(A, words, N)
        s = np.linalg.svd(P, compute_uv=False)
        sup = float(np.max(s[:, 0] / s[:, -1])) * 2.0 ** (-N * alpha)
        values.append(sup)
        if sup < 1.0:
            return BunchingResult(True, N, 1.0 - sup, tuple(values), alpha)
    return BunchingResult(False, None, 1.0 - min(values), tuple(values), alpha)


@dataclass(frozen=True)
class CocycleDistance:
    value: float

    def __float__(self) -> float:
        return self.value


def uniform_distance(A: MatrixCocycle, B: MatrixCocycle, base: MarkovBase | None = None) -> CocycleDistance:
    """``max_w ||A(w) - B(w)|| + ||A(w)^{-1} - B(w)^{-1}||`` over legal windows."""
    if A.d != B.d:
        raise ValidationError(f"dimension mismatch: {A.d} vs {B.d}")
    if A.n_symbols != B.n_symbols:
        raise ValidationError("symbol count mismatch")
    depth, lead = max(A.depth, B.depth), max(A.lead, B.lead)
    Ap, Bp = A.padded(depth, lead), B.padded(depth, lead)
    words = legal_windows(base, A.n_symbols, depth + lead)
    codes = sliding_codes(words, A.n_symbols, depth + lead)[:, 0]
    diff = np.linalg.norm(Ap.gens[codes] - Bp.gens[codes], ord=2, axis=(1, 2))
    dinv = np.linalg.norm(Ap.inverses[codes] - Bp.inverses[codes], ord=2, axis=(1, 2))
    return CocycleDistance(float(np.max(diff + dinv)))


def perturbed(A: MatrixCocycle, direction: np.ndarray, s: float) -> MatrixCocycle:
    """Generator-wise ``A(w) expm(s * direction(w))``."""
    direction = np.asarray(direction, dtype=float)
    if direction.ndim == 2:
        direction = np.broadcast_to(direction, A.gens.shape)
    if direction.shape != A.gens.shape:
        raise ValidationError("perturbation direction must match generator shape")
    E = np.stack([scipy.linalg.expm(s * D) for D in direction])
    return A.with_gens(A.gens @ E)


def gens_from_words(table: dict, n_symbols: int, window: int, d: int) -> np.ndarray:
    """Generator array from a ``{word string: matrix}`` mapping."""
    out = np.full((n_symbols**window, d, d), np.nan)
    for key, mat in table.items():
        w = _as_tuple(key)
        if len(w) != window:
            raise ValidationError(f"word {key!r} has length {len(w)}, expected {window}")
        out[word_code(w, n_symbols)] = np.asarray(mat, dtype=float).reshape(d, d)
    if np.isnan(out).any():
        missing = decode_words(np.flatnonzero(np.isnan(out).any(axis=(1, 2))), n_symbols, window)
        raise ValidationError(f"missing generator for word {''.join(map(str, missing[0]))}")
    return out
