"""Subshifts of finite type, finite-memory Markov measures and orbit sampling.

Conventions
-----------
A bi-infinite point ``x`` is represented by a finite window.  The *past*
holds coordinates ``..., x_{-1}, x_0`` (its last entry is ``x_0``) and the
*future* holds ``x_1, x_2, ...``.  The shift acts by ``(Tx)_i = x_{i+1}``.
Words of length ``k`` are encoded as base-``l`` integers with the oldest
symbol most significant, so the code of ``(w_0, ..., w_{k-1})`` is
``sum_j w_j l^{k-1-j}``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import rng as _rng
from .errors import BudgetError, ValidationError

STATE_BUDGET = 10**6
SCALAR_PATHS = 8


# --------------------------------------------------------------------------
# word encoding helpers


def word_code(symbols: Sequence[int], n_symbols: int) -> int:
    code = 0
    for s in symbols:
        code = code * n_symbols + int(s)
    return code


def decode_words(codes: np.ndarray, n_symbols: int, length: int) -> np.ndarray:
    """Inverse of :func:`word_code` for an array of codes."""
    codes = np.asarray(codes, dtype=np.int64)
    out = np.empty(codes.shape + (length,), dtype=np.int64)
    rest = codes.copy()
    for j in range(length - 1, -1, -1):
        out[..., j] = rest % n_symbols
        rest //= n_symbols
    return out


def all_words(n_symbols: int, length: int) -> np.ndarray:
    """Every word of ``length`` in lexicographic (= code) order."""
    if n_symbols**length > STATE_BUDGET * 10:
        raise BudgetError(f"enumeration budget: {n_symbols}^{length} words")
    return decode_words(np.arange(n_symbols**length), n_symbols, length)


def sliding_codes(seq: np.ndarray, n_symbols: int, width: int) -> np.ndarray:
    """Codes of all length-``width`` windows along the last axis of ``seq``."""
    seq = np.asarray(seq, dtype=np.int64)
    n_out = seq.shape[-1] - width + 1
    if n_out < 0:
        raise ValidationError("sequence shorter than window")
    codes = np.zeros(seq.shape[:-1] + (n_out,), dtype=np.int64)
    for j in range(width):
        codes = codes * n_symbols + seq[..., j : j + n_out]
    return codes


# --------------------------------------------------------------------------
# words and points


@dataclass(frozen=True)
class Word:
    """A finite block of symbols, read as a past (ending at 0) or a future."""

    symbols: tuple[int, ...]
    orientation: str = "future"

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if self.orientation not in ("past", "future"):
            raise ValidationError(f"unknown orientation {self.orientation!r}")
        if any(s < 0 for s in self.symbols):
            raise ValidationError("symbols must be non-negative")

    @classmethod
    def parse(cls, text: str, orientation: str = "future") -> "Word":
        """``"0110"`` or ``"0 1 1 0"`` (whitespace separated for l > 10)."""
        text = text.strip()
        parts = text.split() if (" " in text or "," in text) else list(text)
        parts = [p.strip(",") for p in parts if p.strip(",")]
        return cls(tuple(int(p) for p in parts), orientation)

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __str__(self) -> str:
        if all(s < 10 for s in self.symbols):
            return "".join(str(s) for s in self.symbols)
        return " ".join(str(s) for s in self.symbols)


def _as_tuple(w) -> tuple[int, ...]:
    if isinstance(w, Word):
        return w.symbols
    if isinstance(w, str):
        return Word.parse(w).symbols
    return tuple(int(s) for s in np.asarray(w, dtype=np.int64).ravel())


@dataclass(frozen=True)
class TwoSidedWord:
    """Finite window ``x_{-len(past)+1} .. x_{len(future)}`` of a point of X.

    ``exhaustive`` marks words that stand for the whole point (for example a
    periodic point), which lets :func:`shift_distance` return exactly 0.
    """

    past: tuple[int, ...]
    future: tuple[int, ...] = ()
    exhaustive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "past", _as_tuple(self.past))
        object.__setattr__(self, "future", _as_tuple(self.future))
        if not self.past:
            raise ValidationError("a two-sided word needs coordinate 0")

    @property
    def lo(self) -> int:
        return 1 - len(self.past)

    @property
    def hi(self) -> int:
        return len(self.future)

    def __getitem__(self, i: int) -> int:
        if i <= 0:
            if i < self.lo:
                raise IndexError(i)
            return self.past[len(self.past) - 1 + i]
        if i > self.hi:
            raise IndexError(i)
        return self.future[i - 1]

    def symbols(self) -> np.ndarray:
        """Concatenated window as an array; entry ``j`` is ``x_{lo+j}``."""
        return np.array(self.past + self.future, dtype=np.int64)

    def window(self, lo: int, hi: int) -> np.ndarray:
        """``x_lo .. x_hi`` inclusive."""
        if lo < self.lo or hi > self.hi:
            raise ValidationError(
                f"window [{lo}, {hi}] outside represented range [{self.lo}, {self.hi}]"
            )
        seq = self.symbols()
        return seq[lo - self.lo : hi - self.lo + 1]

    def shift(self, k: int = 1) -> "TwoSidedWord":
        """``T^k x`` on the same finite window (re-split at the new origin)."""
        seq = self.past + self.future
        cut = len(self.past) + k
        if cut < 1 or cut > len(seq):
            raise ValidationError("shift moves the origin outside the window")
        return TwoSidedWord(seq[:cut], seq[cut:], self.exhaustive)

    @classmethod
    def from_sequence(cls, seq: Sequence[int], origin: int, exhaustive: bool = False):
        """Build from a flat sequence whose entry ``origin`` is ``x_0``."""
        seq = _as_tuple(seq)
        return cls(seq[: origin + 1], seq[origin + 1 :], exhaustive)

    def __str__(self) -> str:
        return f"{Word(self.past)}.{Word(self.future)}"


def shift_distance(x: TwoSidedWord, y: TwoSidedWord) -> float:
    """``2^{-k}`` with ``k`` the smallest ``|i|`` where ``x_i != y_i``.

    Only the common index range is compared.  Words that agree on all of it
    are at distance 0 when both are flagged exhaustive, otherwise the
    distance is bounded by the first index outside the range.
    """
    lo, hi = max(x.lo, y.lo), min(x.hi, y.hi)
    if lo > hi:
        raise ValidationError("incomparable words")
    xs, ys = x.window(lo, hi), y.window(lo, hi)
    idx = np.arange(lo, hi + 1)
    diff = np.abs(idx[xs != ys])
    if diff.size:
        return 2.0 ** (-int(diff.min()))
    if x.exhaustive and y.exhaustive:
        return 0.0
    return 2.0 ** (-(min(-lo, hi) + 1))


# --------------------------------------------------------------------------
# Markov measures


@dataclass(frozen=True)
class LiftedChain:
    """The base chain viewed on legal words of a fixed length ``K``.

    ``succ[s, i]`` is the index of the state reached by appending symbol
    ``i`` to state ``s`` (``-1`` if illegal) and ``prob[s, i]`` is the
    probability of that step.
    """

    length: int
    words: np.ndarray
    codes: np.ndarray
    index: np.ndarray
    succ: np.ndarray
    prob: np.ndarray
    stationary: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.codes)

    def matrix(self) -> np.ndarray:
        n = self.n_states
        P = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.succ.shape[1])
        cols = self.succ.ravel()
        ok = cols >= 0
        np.add.at(P, (rows[ok], cols[ok]), self.prob.ravel()[ok])
        return P


@dataclass(frozen=True)
class MarkovBase:
    """Memory-``m`` Markov measure on ``l`` symbols.

    ``trans[c, i]`` is the probability of symbol ``i`` after the past whose
    last ``m`` symbols have code ``c``.  Rows must sum to one within 1e-12.
    """

    n_symbols: int
    memory: int
    trans: np.ndarray
    stationary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ell, m = int(self.n_symbols), int(self.memory)
        if ell < 1:
            raise ValidationError("need at least one symbol")
        if m < 0:
            raise ValidationError("memory must be non-negative")
        if ell**m > STATE_BUDGET:
            raise BudgetError(f"state budget: {ell}^{m} memory words")
        P = np.array(self.trans, dtype=float)
        if P.ndim == 1 and m == 0:
            P = P[None, :]
        if P.shape != (ell**m, ell):
            raise ValidationError(
                f"transition table has shape {P.shape}, expected {(ell**m, ell)}"
            )
        if np.any(~np.isfinite(P)) or np.any(P < 0):
            bad = int(np.argwhere(~(P >= 0))[0, 0])
            raise ValidationError(f"transition row {bad} has negative or non-finite entries")
        sums = P.sum(axis=1)
        for r, s in enumerate(sums):
            if abs(s - 1.0) > 1e-12:
                raise ValidationError(f"transition row {r} sums to {s:.12g} (expected 1)")
        P.setflags(write=False)
        object.__setattr__(self, "n_symbols", ell)
        object.__setattr__(self, "memory", m)
        object.__setattr__(self, "trans", P)
        pi = self._solve_stationary()
        pi.setflags(write=False)
        object.__setattr__(self, "stationary", pi)
        self._check_mixing()

    # constructors -------------------------------------------------------
    @classmethod
    def bernoulli(cls, probs: Sequence[float]) -> "MarkovBase":
        p = np.asarray(probs, dtype=float)
        return cls(len(p), 0, p[None, :])

    @classmethod
    def chain(cls, P: Sequence[Sequence[float]]) -> "MarkovBase":
        P = np.asarray(P, dtype=float)
        return cls(P.shape[1], 1, P)

    @classmethod
    def full_shift(cls, n_symbols: int) -> "MarkovBase":
        return cls.bernoulli(np.full(n_symbols, 1.0 / n_symbols))

    # internals ----------------------------------------------------------
    def _memory_chain(self) -> np.ndarray:
        ell, m = self.n_symbols, self.memory
        n = ell**m
        Q = np.zeros((n, n))
        for c in range(n):
            for i in range(ell):
                Q[c, (c * ell + i) % n] += self.trans[c, i]
        return Q

    def _solve_stationary(self) -> np.ndarray:
        if self.memory == 0:
            return np.ones(1)
        Q = self._memory_chain()
        n = Q.shape[0]
        M = np.vstack([Q.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        if np.abs(pi @ Q - pi).sum() > 1e-10:
            raise ValidationError("stationary vector not unique (reducible chain)")
        return pi

    def _check_mixing(self) -> None:
        # primitivity of the support on the states that carry mass
        if self.memory == 0:
            return
        Q = self._memory_chain()
        live = self.stationary > 0
        S = (Q[np.ix_(live, live)] > 0).astype(np.int64)
        n = S.shape[0]
        M = np.eye(n, dtype=np.int64)
        power, B = (n - 1) ** 2 + 1, S.copy()
        while power:
            if power & 1:
                M = np.minimum(M @ B, 1)
            B = np.minimum(B @ B, 1)
            power >>= 1
        if not np.all(M > 0):
            raise ValidationError("transition support is not primitive (non-mixing shift)")

    # queries ------------------------------------------------------------
    def transition_row(self, code: int) -> np.ndarray:
        return self.trans[code]

    def memory_code(self, past: Sequence[int]) -> int:
        past = _as_tuple(past)
        if len(past) < self.memory:
            raise ValidationError("insufficient memory")
        return word_code(past[len(past) - self.memory :], self.n_symbols) if self.memory else 0

    def is_legal(self, seq: Sequence[int]) -> bool:
        """Whether the finite block has positive cylinder measure."""
        seq = np.asarray(_as_tuple(seq), dtype=np.int64)
        if seq.size == 0:
            return True
        if np.any(seq >= self.n_symbols):
            return False
        m, ell = self.memory, self.n_symbols
        if len(seq) <= m:
            return bool(np.any(self.word_probabilities(len(seq))[1][
                np.asarray([word_code(seq, ell)])] > 0))
        start = word_code(seq[:m], ell) if m else 0
        if self.stationary[start] <= 0:
            return False
        codes = sliding_codes(seq[:-1], ell, m)[: len(seq) - m] if m else np.zeros(len(seq), np.int64)
        return bool(np.all(self.trans[codes, seq[m:]] > 0))

    def is_cyclically_legal(self, block: Sequence[int]) -> bool:
        block = _as_tuple(block)
        if not block:
            return False
        reps = (self.memory + 1) // len(block) + 2
        return self.is_legal(block * reps)

    def word_probabilities(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Measure of every word of ``length`` in code order (dense)."""
        ell, m = self.n_symbols, self.memory
        if ell**length > STATE_BUDGET * 10:
            raise BudgetError(f"enumeration budget: {ell}^{length} words")
        if length <= m:
            full = self.stationary.reshape((ell,) * m) if m else self.stationary
            probs = full.reshape(ell**length, -1).sum(axis=1) if m else np.ones(1)
            # marginal on the first `length` symbols equals the one on the last
            # by stationarity, and the first is the cheap reshape above
            return all_words(ell, length), probs
        probs = np.repeat(self.stationary, 1)
        for k in range(m, length):
            # extend words of length k by one symbol
            cur = probs.reshape(-1, 1)
            row_codes = np.arange(ell**k) % (ell**m) if m else np.zeros(ell**k, np.int64)
            probs = (cur * self.trans[row_codes]).ravel()
        return all_words(ell, length), probs

    def lifted(self, length: int) -> LiftedChain:
        """The chain on legal words of ``length >= memory``."""
        ell, m = self.n_symbols, self.memory
        if length < m:
            raise ValidationError("lifted length shorter than memory")
        if ell**length > STATE_BUDGET:
            raise BudgetError(f"state budget: {ell}^{length} words")
        words, probs = self.word_probabilities(length)
        keep = probs > 0
        codes = np.flatnonzero(keep)
        index = np.full(ell**length, -1, dtype=np.int64)
        index[codes] = np.arange(len(codes))
        mcodes = codes % (ell**m) if m else np.zeros(len(codes), np.int64)
        prob = self.trans[mcodes].copy()
        succ_codes = (codes[:, None] * ell + np.arange(ell)[None, :]) % (ell**length) if length else np.zeros((len(codes), ell), np.int64)
        succ = index[succ_codes]
        prob[succ < 0] = 0.0
        succ[prob <= 0] = -1
        return LiftedChain(length, words[codes], codes, index, succ, prob, probs[codes])

    @cached_property
    def _cum(self) -> np.ndarray:
        c = np.cumsum(self.trans, axis=1)
        c[:, -1] = 1.0
        return c

    def sample_paths(self, n_paths: int, length: int, gen: np.random.Generator) -> np.ndarray:
        """Stationary paths, shape ``(n_paths, length)``.

        The first ``memory`` symbols are an exact draw from the stationary
        law on memory words, so the paths are stationary from the start.
        """
        ell, m = self.n_symbols, self.memory
        dtype = np.int8 if ell <= 127 else np.int64
        out = np.empty((n_paths, length), dtype=dtype)
        if m == 0:
            u = gen.random((n_paths, length))
            out[:] = np.searchsorted(self._cum[0], u, side="right")
            return np.minimum(out, ell - 1)
        if length < m:
            raise ValidationError("path shorter than memory")
        init = gen.choice(ell**m, size=n_paths, p=self.stationary)
        out[:, :m] = decode_words(init, ell, m)
        u = gen.random((length - m, n_paths))
        cum = self._cum[:, :-1]
        state = init.astype(np.int64)
        mod = ell**m
        if n_paths <= SCALAR_PATHS:
            # per-step numpy calls dominate for a handful of paths; same draws
            rows = cum.tolist()
            for i in range(n_paths):
                s, ui = int(state[i]), u[:, i].tolist()
                col = [0] * len(ui)
                for t, v in enumerate(ui):
                    x = bisect.bisect_right(rows[s], v)
                    col[t] = x
                    s = (s * ell + x) % mod
                out[i, m:] = col
            return out
        for t in range(length - m):
            nxt = (u[t][:, None] >= cum[state]).sum(axis=1)
            out[:, m + t] = nxt
            state = (state * ell + nxt) % mod
        return out


def transition_probs(base: MarkovBase, past) -> np.ndarray:
    """``(p_1(x^-), ..., p_l(x^-))`` read from the last ``memory`` symbols."""
    return base.transition_row(base.memory_code(past)).copy()


# --------------------------------------------------------------------------
# orbits


@dataclass(frozen=True)
class OrbitSample:
    """A sampled stationary orbit; ``symbols`` includes the burn-in prefix."""

    symbols: np.ndarray
    seed: int
    base: MarkovBase
    burn_in: int = 0

    @property
    def recorded(self) -> np.ndarray:
        return self.symbols[self.burn_in :]

    def __len__(self) -> int:
        return len(self.symbols) - self.burn_in


def sample_orbit(base: MarkovBase, n: int, seed: int | None = None, burn_in: int = 1000) -> OrbitSample:
    """Sample ``n`` symbols after ``burn_in`` steps of the chain."""
    if n < 1:
        raise ValidationError("orbit length must be positive")
    seed = _rng.resolve_seed(seed)
    gen = _rng.stream(seed, _rng.ORBIT, 0)
    total = max(n + burn_in, base.memory)
    syms = base.sample_paths(1, total, gen)[0]
    return OrbitSample(syms[total - n - burn_in :], seed, base, burn_in)


def periodic_word(block, repetitions: int = 64, base: MarkovBase | None = None) -> TwoSidedWord:
    """Periodic point with ``x_i = block[(i-1) mod q]`` on ``q*repetitions`` coordinates per side."""
    block = _as_tuple(block)
    if not block:
        raise ValidationError("empty periodic block")
    if base is not None and not base.is_cyclically_legal(block):
        raise ValidationError("not a periodic point")
    seq = block * repetitions
    return TwoSidedWord(seq, seq, exhaustive=True)


@dataclass(frozen=True)
class Homoclinic:
    """Point ``z`` homoclinic to the periodic point ``a``.

    ``z`` equals ``a`` on indices ``<= 0``; ``T^l z`` lies in the local stable
    set of ``a``.
    """

    z: TwoSidedWord
    a: TwoSidedWord
    l: int
    block: tuple[int, ...]
    bridge: tuple[int, ...]


def splice_homoclinic(block, bridge, base: MarkovBase | None = None, span: int = 64) -> Homoclinic:
    """Insert ``bridge`` after ``x_0`` of the periodic point and resume the period.

    The result is ``z_i = a_i`` for ``i <= 0``, ``z_1..z_b = bridge`` and
    ``z_{b+1+i} = a_i`` for ``i >= 0``, so ``l = b + 1``.  An empty bridge
    returns ``a`` itself with ``l = 0``.
    """
    block, bridge = _as_tuple(block), _as_tuple(bridge)
    q, b = len(block), len(bridge)
    reps = span // q + 2
    a = periodic_word(block, reps, base)
    if b == 0:
        return Homoclinic(a, a, 0, block, bridge)
    past = a.past
    # the future resumes at phase a_0, i.e. block[q-1] followed by the block
    future = bridge + (block[-1],) + block * reps
    z = TwoSidedWord(past, future)
    if base is not None and not base.is_legal(z.symbols()):
        raise ValidationError("illegal junction in homoclinic splice")
    return Homoclinic(z, a, b + 1, block, bridge)


def birkhoff_average(
    orbit: OrbitSample | TwoSidedWord | np.ndarray,
    f: np.ndarray | Callable[[np.ndarray], np.ndarray],
    depth: int = 1,
    n_symbols: int | None = None,
    period: int | None = None,
) -> float:
    """Average of a depth-``depth`` observable along an orbit.

    ``f`` is either a table indexed by word codes or a callable mapping an
    array of windows ``(k, depth)`` to values.  For an :class:`OrbitSample`
    the burn-in supplies the context for the first windows.  For a periodic
    :class:`TwoSidedWord` pass ``period`` to get the exact cyclic average.
    """
    if isinstance(orbit, OrbitSample):
        ell = orbit.base.n_symbols
        start = max(orbit.burn_in - depth + 1, 0)
        seq = orbit.symbols[start:].astype(np.int64)
    elif isinstance(orbit, TwoSidedWord):
        seq = orbit.symbols()
        if period is not None:
            blk = orbit.window(1, period)
            reps = (depth - 1) // period + 2
            seq = np.tile(blk, reps)[-(period + depth - 1):]
        ell = n_symbols or int(seq.max()) + 1
    else:
        seq = np.asarray(orbit, dtype=np.int64)
        ell = n_symbols or int(seq.max()) + 1
    if callable(f):
        win = np.lib.stride_tricks.sliding_window_view(seq, depth)
        vals = np.asarray(f(win), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)[sliding_codes(seq, ell, depth)]
    return float(vals.mean())


def write_orbit(path: str | Path, orbit: OrbitSample) -> None:
    Path(path).write_text("".join(f"{s}\n" for s in orbit.recorded))


def read_orbit(path: str | Path) -> np.ndarray:
    return np.array([int(t) for t in Path(path).read_text().split()], dtype=np.int64)


def iter_blocks(n_symbols: int, length: int) -> Iterable[tuple[int, ...]]:
    for w in all_words(n_symbols, length):
        yield tuple(int(s) for s in w)
