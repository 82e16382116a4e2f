"""Monte Carlo experiments: large deviations, central limit theorem and
Hölder continuity of the top Lyapunov exponent.

Every ensemble is split into blocks of ``ENSEMBLE_BLOCK`` independent
stationary paths.  Block ``b`` draws from the stream ``(seed, purpose, b)``,
so results do not depend on the number of worker threads, and two cocycles
run with the same seed see the same symbol paths (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.stats

from . import rng as _rng
from .cocycle import (ROUNDOFF, MatrixCocycle, expected_log_det, fiber_bunching_check,
                      lyapunov_spectrum, perturbed, uniform_distance)
from .errors import BudgetError, NumericalError, ValidationError
from .markov_operator import DiscretizedOperator, ProjectiveGrid, build_fiber_operator, stationary_measure
from .symbolic import MarkovBase, sliding_codes

ENSEMBLE_BLOCK = 1024
TIME_CHUNK = 512
SERIES_TOL = 1e-10
SERIES_CAP = 10_000
MAX_TILT_STATES = 4096
UNOBSERVABLE = "deviations unobservable; increase ε or decrease n"


def _record_list(n_values) -> np.ndarray:
    rec = np.unique(np.asarray(list(n_values), dtype=np.int64))
    if len(rec) == 0 or rec[0] < 1:
        raise ValidationError("orbit lengths must be positive")
    return rec


# --------------------------------------------------------------------------
# ensembles of products


def _renorm_period(gens: np.ndarray) -> int:
    s = np.linalg.svd(gens, compute_uv=False)
    grow = max(abs(math.log(s.max())), abs(math.log(s.min())), 1e-3)
    return int(max(1, min(64, 200 // grow)))


def _birkhoff_block(values: np.ndarray, n_symbols: int, window: int, path: np.ndarray,
                    record: np.ndarray) -> np.ndarray:
    """``sum_{t<n} values[code_t]`` for every row of ``path`` and every ``n`` in ``record``."""
    B = path.shape[0]
    out = np.empty((B, len(record)))
    total = np.zeros(B)
    nmax = int(record[-1])
    for start in range(0, nmax, TIME_CHUNK):
        stop = min(nmax, start + TIME_CHUNK)
        codes = sliding_codes(path[:, start : stop + window - 1], n_symbols, window)
        cs = total[:, None] + np.cumsum(values[codes], axis=1)
        for k in np.nonzero((record > start) & (record <= stop))[0]:
            out[:, k] = cs[:, record[k] - start - 1]
        total = cs[:, -1]
    return out


def _product_block(A: MatrixCocycle, path: np.ndarray, record: np.ndarray,
                   vector: np.ndarray | None) -> np.ndarray:
    """``log ||A^n(x)||`` (or ``log ||A^n(x) v||``) along each row of ``path``."""
    d, W, ell = A.d, A.window, A.n_symbols
    if d == 1:
        vals = np.log(np.abs(A.gens[:, 0, 0]))
        return _birkhoff_block(vals, ell, W, path, record)
    B = path.shape[0]
    out = np.empty((B, len(record)))
    period = _renorm_period(A.gens)
    logscale = np.zeros(B)
    nmax = int(record[-1])
    rec_at = {int(n): k for k, n in enumerate(record)}
    if d == 2:
        a, b, c, e = (np.ascontiguousarray(A.gens[:, i, j]) for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
        if vector is None:
            m00, m01, m10, m11 = np.ones(B), np.zeros(B), np.zeros(B), np.ones(B)
        else:
            vx, vy = np.full(B, vector[0]), np.full(B, vector[1])
    else:
        G = A.gens
        M = np.broadcast_to(np.eye(d), (B, d, d)).copy() if vector is None else np.tile(vector, (B, 1))
    for start in range(0, nmax, TIME_CHUNK):
        stop = min(nmax, start + TIME_CHUNK)
        codes = sliding_codes(path[:, start : stop + W - 1], ell, W)
        for s in range(stop - start):
            t = start + s + 1
            k = codes[:, s]
            if d == 2:
                ak, bk, ck, ek = a[k], b[k], c[k], e[k]
                if vector is None:
                    m00, m01, m10, m11 = (ak * m00 + bk * m10, ak * m01 + bk * m11,
                                          ck * m00 + ek * m10, ck * m01 + ek * m11)
                else:
                    vx, vy = ak * vx + bk * vy, ck * vx + ek * vy
            elif vector is None:
                M = G[k] @ M
            else:
                M = np.einsum("bij,bj->bi", G[k], M)
            if t % period == 0 or t in rec_at:
                if d == 2 and vector is None:
                    sc = np.maximum(np.maximum(np.abs(m00), np.abs(m01)), np.maximum(np.abs(m10), np.abs(m11)))
                    m00, m01, m10, m11 = m00 / sc, m01 / sc, m10 / sc, m11 / sc
                elif d == 2:
                    sc = np.maximum(np.abs(vx), np.abs(vy))
                    vx, vy = vx / sc, vy / sc
                else:
                    sc = np.abs(M).reshape(B, -1).max(axis=1)
                    M = M / (sc[:, None, None] if vector is None else sc[:, None])
                if np.any(sc == 0) or not np.all(np.isfinite(sc)):
                    raise NumericalError("numerical collapse in matrix product ensemble")
                logscale += np.log(sc)
            if t in rec_at:
                if d == 2 and vector is None:
                    fro2 = m00**2 + m01**2 + m10**2 + m11**2
                    det = m00 * m11 - m01 * m10
                    disc = np.sqrt(np.maximum(fro2**2 - 4 * det**2, 0.0))
                    nrm = np.sqrt((fro2 + disc) / 2)
                elif d == 2:
                    nrm = np.hypot(vx, vy)
                elif vector is None:
                    nrm = np.linalg.norm(M, 2, axis=(1, 2))
                else:
                    nrm = np.linalg.norm(M, axis=1)
                out[:, rec_at[t]] = logscale + np.log(nrm)
    return out


def _paths(base: MarkovBase, size: int, length: int, seed: int, purpose: int, block: int) -> np.ndarray:
    gen = _rng.stream(seed, purpose, block)
    return base.sample_paths(size, max(length, base.memory, 1), gen)


def log_norm_ensemble(A: MatrixCocycle, base: MarkovBase, n_values, N: int, seed: int,
                      vector=None, threads: int = 1, purpose: int = _rng.ENSEMBLE) -> np.ndarray:
    """``log ||A^n(x)||`` for ``N`` independent stationary paths, shape ``(N, len(n_values))``.

    Columns follow the sorted, de-duplicated ``n_values``; the values for
    different ``n`` come from prefixes of the same paths.  With ``vector``
    the norm of ``A^n(x) v`` (``v`` normalized) is returned instead.
    """
    if A.n_symbols != base.n_symbols:
        raise ValidationError("cocycle and base have different symbol counts")
    record = _record_list(n_values)
    if N < 1:
        raise ValidationError("ensemble size must be positive")
    if vector is not None:
        vector = np.asarray(vector, dtype=float).ravel()
        if vector.shape != (A.d,) or not np.linalg.norm(vector) > 0:
            raise ValidationError(f"direction must be a nonzero vector of length {A.d}")
        vector = vector / np.linalg.norm(vector)
    sizes = _rng.block_sizes(N, ENSEMBLE_BLOCK)
    length = int(record[-1]) + A.window - 1

    def run(b: int) -> np.ndarray:
        path = _paths(base, sizes[b], length, seed, purpose, b)
        return _product_block(A, path, record, vector)

    return np.concatenate(_rng.run_blocks(run, len(sizes), threads), axis=0)


# --------------------------------------------------------------------------
# scalar observables and exponential tilting


@dataclass(frozen=True)
class ScalarObservable:
    """Real function of the window ``x_t .. x_{t+window-1}``, indexed by window code."""

    values: np.ndarray
    n_symbols: int
    window: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if len(vals) != self.n_symbols**self.window:
            raise ValidationError(f"observable needs {self.n_symbols ** self.window} values, got {len(vals)}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("observable values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_cocycle(cls, A: MatrixCocycle) -> "ScalarObservable":
        """``log |a|`` of a one-dimensional cocycle."""
        if A.d != 1:
            raise ValidationError("only one-dimensional cocycles are scalar observables")
        return cls(np.log(np.abs(A.gens[:, 0, 0])), A.n_symbols, A.window)

    def mean(self, base: MarkovBase) -> float:
        """Exact stationary integral (finite sum)."""
        _, probs = base.word_probabilities(self.window)
        return float(probs @ self.values)


@dataclass(frozen=True)
class TiltedChain:
    """Doob transform of the window chain tilted by ``exp(theta psi)``."""

    theta: float
    log_lambda: float
    log_h: np.ndarray
    cum: np.ndarray
    succ: np.ndarray
    psi: np.ndarray
    start: np.ndarray
    mean: float


def _window_chain(obs: ScalarObservable, base: MarkovBase):
    if obs.n_symbols != base.n_symbols:
        raise ValidationError("observable and base have different symbol counts")
    s = max(obs.window, base.memory, 1)
    if base.n_symbols**s > MAX_TILT_STATES:
        raise BudgetError(f"tilted chain would need {base.n_symbols ** s} states")
    chain = base.lifted(s)
    # a state is x_t..x_{t+s-1}; psi reads its first `window` symbols
    head = chain.words[:, : obs.window]
    codes = (head * (obs.n_symbols ** np.arange(obs.window - 1, -1, -1))).sum(axis=1)
    return chain, obs.values[codes]


def _perron(K: np.ndarray):
    vals, right = np.linalg.eig(K)
    k = int(np.argmax(vals.real))
    lam = float(vals[k].real)
    h = np.abs(right[:, k].real)
    lvals, left = np.linalg.eig(K.T)
    ell = np.abs(left[:, int(np.argmax(lvals.real))].real)
    return lam, h / h.max(), ell / ell.sum()


def _tilted_mean(P: np.ndarray, psi: np.ndarray, theta: float) -> float:
    """``c'(theta)``: the mean of ``psi`` under the tilted stationary law."""
    shift = psi.max() if theta > 0 else psi.min()
    lam, h, ell = _perron(np.exp(theta * (psi - shift))[:, None] * P)
    w = ell * h
    return float(w @ psi / w.sum())


def tilted_chain(obs: ScalarObservable, base: MarkovBase, theta: float) -> TiltedChain:
    chain, psi = _window_chain(obs, base)
    P = chain.matrix()
    shift = psi.max() if theta > 0 else psi.min()
    lam, h, ell = _perron(np.exp(theta * (psi - shift))[:, None] * P)
    if np.any(h <= 0):
        raise NumericalError("tilted chain has a vanishing Perron vector entry")
    succ = np.where(chain.succ >= 0, chain.succ, 0)
    q = chain.prob * np.exp(theta * (psi - shift))[:, None] * h[succ] / (lam * h[:, None])
    q = np.where(chain.succ >= 0, q, 0.0)
    cum = np.cumsum(q, axis=1)
    if np.max(np.abs(cum[:, -1] - 1)) > 1e-8:
        raise NumericalError("tilted transition rows do not sum to one")
    cum[:, -1] = 1.0
    w = ell * h
    return TiltedChain(theta, math.log(lam) + theta * shift, np.log(h), cum, succ, psi,
                       chain.stationary, float(w @ psi / w.sum()))


def solve_tilt(obs: ScalarObservable, base: MarkovBase, target: float, theta_max: float = 200.0) -> float | None:
    """``theta`` with ``c'(theta) = target``; ``None`` when the target is outside the range of ``psi``."""
    chain, psi = _window_chain(obs, base)
    if not psi.min() < target < psi.max():
        return None
    P = chain.matrix()
    f = lambda th: _tilted_mean(P, psi, th) - target
    f0 = f(0.0)
    if abs(f0) < 1e-15:
        return 0.0
    direction = 1.0 if f0 < 0 else -1.0
    hi = 1.0
    while f(direction * hi) * f0 > 0:
        hi *= 2
        if hi > theta_max:
            raise BudgetError(f"no tilt within |theta| <= {theta_max} reaches mean {target}")
    lo_b, hi_b = sorted((0.0, direction * hi))
    return float(scipy.optimize.brentq(f, lo_b, hi_b, xtol=1e-14, rtol=1e-14))


def _tilted_sums(tc: TiltedChain, record: np.ndarray, size: int, gen: np.random.Generator):
    """Birkhoff sums and log likelihood ratios ``log dP/dQ`` under the tilted chain."""
    u = gen.choice(len(tc.start), size=size, p=tc.start / tc.start.sum())
    log_h0 = tc.log_h[u]
    S = np.zeros(size)
    sums = np.empty((size, len(record)))
    logw = np.empty((size, len(record)))
    nmax = int(record[-1])
    rec_at = {int(n): k for k, n in enumerate(record)}
    cum = tc.cum[:, :-1]
    for start in range(0, nmax, TIME_CHUNK):
        stop = min(nmax, start + TIME_CHUNK)
        U = gen.random((stop - start, size))
        for s in range(stop - start):
            S += tc.psi[u]
            j = (U[s][:, None] >= cum[u]).sum(axis=1)
            u = tc.succ[u, j]
            t = start + s + 1
            if t in rec_at:
                k = rec_at[t]
                sums[:, k] = S
                logw[:, k] = t * tc.log_lambda - tc.theta * S + log_h0 - tc.log_h[u]
    return sums, logw


# --------------------------------------------------------------------------
# large deviations


@dataclass(frozen=True)
class Truth:
    value: float
    stderr: float
    n: int
    source: str


def lyapunov_truth(A: MatrixCocycle, base: MarkovBase, n: int, seed: int, n_chains: int = 20,
                   threads: int = 1) -> Truth:
    """Reference ``L1``: exact for ``d = 1``, otherwise a long Benettin run."""
    if A.d == 1:
        return Truth(expected_log_det(A, base), 0.0, 0, "exact")
    est = lyapunov_spectrum(A, base, max(int(n), 1000), seed, n_chains=n_chains, threads=threads)
    return Truth(float(est.exponents[0]), float(est.stderr[0]), est.n, "estimate")


@dataclass
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    band: tuple[float, float]
    n_points: int


def linear_fit(x, y, level: float = 0.95) -> PowerLawFit | None:
    """Least squares line with R² and a t-based confidence band for the slope."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.ptp(x) == 0:
        return None
    res = scipy.stats.linregress(x, y)
    r2 = float(res.rvalue**2) if np.ptp(y) > 0 else 1.0
    if len(x) > 2:
        half = float(scipy.stats.t.ppf(0.5 + level / 2, len(x) - 2) * res.stderr)
    else:
        half = math.inf
    return PowerLawFit(float(res.slope), float(res.intercept), r2,
                       (float(res.slope) - half, float(res.slope) + half), len(x))


@dataclass
class LdtReport:
    """Deviation frequencies ``P_n`` of ``|n^-1 log ||A^n|| - L1| > eps`` and fitted rates.

    ``rate[i]`` is the slope ``k`` of ``-log P_n`` against ``eps_i^2 n``;
    ``slope_n[i] = k eps_i^2`` is the exponential rate per step.
    """

    epsilon: np.ndarray
    n: np.ndarray
    frequencies: np.ndarray
    stderr: np.ndarray
    usable: np.ndarray
    rate: np.ndarray
    slope_n: np.ndarray
    constant: np.ndarray
    r_squared: np.ndarray
    N: int
    seed: int
    truth: float
    truth_stderr: float
    method: str
    note: str = ""
    observable: "LdtReport | None" = None

    def to_dict(self) -> dict:
        out = {
            "epsilon": _floats(self.epsilon),
            "n": [int(v) for v in self.n],
            "frequencies": [_floats(r) for r in self.frequencies],
            "stderr": [_floats(r) for r in self.stderr],
            "usable": [[bool(v) for v in r] for r in self.usable],
            "rate": _floats(self.rate),
            "slope_n": _floats(self.slope_n),
            "constant": _floats(self.constant),
            "r_squared": _floats(self.r_squared),
            "N": int(self.N),
            "seed": int(self.seed),
            "truth": float(self.truth),
            "truth_stderr": float(self.truth_stderr),
            "method": self.method,
            "note": self.note,
        }
        if self.observable is not None:
            out["observable"] = self.observable.to_dict()
        return out


def _floats(a) -> list:
    return [None if not math.isfinite(float(v)) else float(v) for v in np.ravel(a)]


def _fit_rates(eps: np.ndarray, record: np.ndarray, freq: np.ndarray, usable: np.ndarray):
    k = len(eps)
    rate, slope_n, const, r2 = (np.full(k, np.nan) for _ in range(4))
    for i, e in enumerate(eps):
        m = usable[i]
        fit = linear_fit(e * e * record[m], -np.log(freq[i, m]))
        if fit is None:
            continue
        rate[i], slope_n[i] = fit.slope, fit.slope * e * e
        const[i], r2[i] = math.exp(-fit.intercept), fit.r_squared
    return rate, slope_n, const, r2


def _raw_report(sums: np.ndarray, eps, record, truth: Truth, N: int, seed: int, method: str) -> LdtReport:
    dev = np.abs(sums / record[None, :] - truth.value)
    freq = np.stack([(dev > e).mean(axis=0) for e in eps])
    se = np.sqrt(freq * (1 - freq) / N)
    usable = freq >= 10.0 / N
    rate, slope_n, const, r2 = _fit_rates(eps, record, freq, usable)
    note = "" if usable.any() else UNOBSERVABLE
    return LdtReport(eps, record, freq, se, usable, rate, slope_n, const, r2, N, seed,
                     truth.value, truth.stderr, method, note)


def _tilted_report(obs: ScalarObservable, base: MarkovBase, eps, record, truth: Truth, N: int,
                   seed: int, threads: int) -> LdtReport:
    half = max(1, N // 2)
    sizes = _rng.block_sizes(half, ENSEMBLE_BLOCK)
    freq = np.zeros((len(eps), len(record)))
    var = np.zeros_like(freq)
    hits_ok = np.ones_like(freq, dtype=bool)
    for i, e in enumerate(eps):
        for tail, sign in enumerate((1.0, -1.0)):
            theta = solve_tilt(obs, base, truth.value + sign * e)
            if theta is None:
                continue  # the tail event is empty
            tc = tilted_chain(obs, base, theta)

            def run(b: int, tc=tc, i=i, tail=tail):
                gen = _rng.stream(seed, _rng.TILT, i, tail, b)
                return _tilted_sums(tc, record, sizes[b], gen)

            parts = _rng.run_blocks(run, len(sizes), threads)
            S = np.concatenate([p[0] for p in parts])
            logw = np.concatenate([p[1] for p in parts])
            z = S / record[None, :] - truth.value
            hit = z > e if sign > 0 else z < -e
            w = np.where(hit, np.exp(logw), 0.0)
            freq[i] += w.mean(axis=0)
            var[i] += w.var(axis=0, ddof=1) / half
            hits_ok[i] &= hit.sum(axis=0) >= 10
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        usable = hits_ok & (freq > 0) & (se <= 0.5 * freq)
    rate, slope_n, const, r2 = _fit_rates(eps, record, freq, usable)
    note = "" if usable.any() else UNOBSERVABLE
    return LdtReport(eps, record, freq, se, usable, rate, slope_n, const, r2, N, seed,
                     truth.value, truth.stderr, "tilted", note)


def _observable_paths_sums(obs: ScalarObservable, base: MarkovBase, record, N: int, seed: int,
                           threads: int) -> np.ndarray:
    sizes = _rng.block_sizes(N, ENSEMBLE_BLOCK)
    length = int(record[-1]) + obs.window - 1

    def run(b: int) -> np.ndarray:
        path = _paths(base, sizes[b], length, seed, _rng.ENSEMBLE, b)
        return _birkhoff_block(obs.values, obs.n_symbols, obs.window, path, record)

    return np.concatenate(_rng.run_blocks(run, len(sizes), threads), axis=0)


def scalar_ldt(obs: ScalarObservable, base: MarkovBase, eps_list, n_list, N: int, seed: int,
               method: str = "tilted", threads: int = 1) -> LdtReport:
    """Deviation frequencies of Birkhoff averages of a scalar observable.

    The reference mean is the exact stationary integral.
    """
    eps = np.asarray(eps_list, dtype=float)
    record = _record_list(n_list)
    truth = Truth(obs.mean(base), 0.0, 0, "exact")
    if method == "tilted":
        return _tilted_report(obs, base, eps, record, truth, N, seed, threads)
    if method == "raw":
        sums = _observable_paths_sums(obs, base, record, N, seed, threads)
        return _raw_report(sums, eps, record, truth, N, seed, "raw")
    raise ValidationError(f"unknown method {method!r}; use 'raw' or 'tilted'")


def ldt_experiment(A: MatrixCocycle, base: MarkovBase, eps_list, n_list, N: int = 100_000,
                   seed: int | None = None, method: str = "auto",
                   observable: ScalarObservable | None = None, truth: Truth | float | None = None,
                   threads: int = 1, truth_chains: int = 20) -> LdtReport:
    """Large deviation frequencies of ``n^-1 log ||A^n||`` around ``L1``.

    ``method='raw'`` counts deviations among ``N`` independent orbits.
    ``method='tilted'`` (one-dimensional cocycles) samples ``N/2`` paths from
    each of the two exponentially tilted chains centred at ``L1 +- eps`` and
    reweights them by the exact likelihood ratio, which keeps deviations
    observable for large ``n``.  ``'auto'`` picks ``'tilted'`` when ``d = 1``.
    """
    seed = _rng.resolve_seed(seed)
    eps = np.asarray(eps_list, dtype=float).ravel()
    if len(eps) == 0 or np.any(eps <= 0):
        raise ValidationError("epsilon values must be positive")
    record = _record_list(n_list)
    if N < 2:
        raise ValidationError("need at least two samples")
    if truth is None:
        truth = lyapunov_truth(A, base, 10 * int(record[-1]), seed, truth_chains, threads)
    elif not isinstance(truth, Truth):
        truth = Truth(float(truth), 0.0, 0, "given")
    floor = 5 * truth.stderr
    if np.any(eps < floor):
        raise ValidationError(f"epsilon below the truth floor 5*stderr = {floor:.3g}")
    if method == "auto":
        method = "tilted" if A.d == 1 else "raw"
    if method == "tilted":
        if A.d != 1:
            raise ValidationError("tilted sampling is available for one-dimensional cocycles only")
        rep = _tilted_report(ScalarObservable.from_cocycle(A), base, eps, record, truth, N, seed, threads)
    elif method == "raw":
        sums = log_norm_ensemble(A, base, record, N, seed, threads=threads)
        rep = _raw_report(sums, eps, record, truth, N, seed, "raw")
    else:
        raise ValidationError(f"unknown method {method!r}; use 'auto', 'raw' or 'tilted'")
    if observable is not None:
        rep.observable = scalar_ldt(observable, base, eps, record, N, seed,
                                    "tilted" if method == "tilted" else "raw", threads)
    return rep


@dataclass
class UniformityReport:
    radius: float
    center: LdtReport
    reports: list
    distances: np.ndarray
    skipped: list
    min_rate: np.ndarray
    max_constant: np.ndarray
    rate_ratio: np.ndarray
    halved: "UniformityReport | None" = None

    def to_dict(self) -> dict:
        out = {
            "radius": float(self.radius),
            "center_rate": _floats(self.center.rate),
            "rates": [_floats(r.rate) if r is not None else None for r in self.reports],
            "constants": [_floats(r.constant) if r is not None else None for r in self.reports],
            "distances": _floats(self.distances),
            "skipped": [bool(s) for s in self.skipped],
            "min_rate": _floats(self.min_rate),
            "max_constant": _floats(self.max_constant),
            "rate_ratio": _floats(self.rate_ratio),
            "center": self.center.to_dict(),
        }
        if self.halved is not None:
            out["halved"] = self.halved.to_dict()
        return out


def perturbation_at_radius(A: MatrixCocycle, base: MarkovBase, direction: np.ndarray, radius: float,
                           tol: float = 1e-10) -> tuple[MatrixCocycle, float]:
    """``A exp(s direction)`` with ``s >= 0`` chosen so that the distance to ``A`` equals ``radius``."""
    if radius == 0:
        return A, 0.0
    dist = lambda s: uniform_distance(A, perturbed(A, direction, s), base).value
    hi = radius
    while dist(hi) < radius:
        hi *= 2
        if hi > 1e6:
            raise NumericalError("perturbation direction does not move the cocycle")
    s = scipy.optimize.brentq(lambda s: dist(s) - radius, 0.0, hi, xtol=tol * radius)
    B = perturbed(A, direction, s)
    return B, dist(s)


def ldt_uniformity(A: MatrixCocycle, base: MarkovBase, radius: float, n_perturb: int = 5,
                   eps_list=(0.1,), n_list=(100, 200), N: int = 100_000, seed: int | None = None,
                   method: str = "auto", threads: int = 1, halving: bool = False) -> UniformityReport:
    """LDT rates over generator-wise perturbations ``A exp(s D_j)`` at distance ``radius``.

    Directions ``D_j`` are Gaussian and drawn from the perturbation stream;
    every experiment reuses ``seed`` so all cocycles see the same paths.
    When ``A`` is fiber bunched, perturbations that are not are skipped.
    """
    seed = _rng.resolve_seed(seed)
    if radius < 0:
        raise ValidationError("radius must be nonnegative")
    center = ldt_experiment(A, base, eps_list, n_list, N, seed, method, threads=threads)
    check = A.d > 1 and fiber_bunching_check(A, base).satisfied
    reports, dists, skipped = [], [], []
    for j in range(n_perturb):
        gen = _rng.stream(seed, _rng.PERTURB, j)
        D = gen.standard_normal(A.gens.shape)
        D /= np.max(np.linalg.norm(D, ord=2, axis=(1, 2)))
        B, dist = perturbation_at_radius(A, base, D, radius)
        dists.append(dist)
        if check and not fiber_bunching_check(B, base).satisfied:
            reports.append(None)
            skipped.append(True)
            continue
        reports.append(ldt_experiment(B, base, eps_list, n_list, N, seed, method, threads=threads))
        skipped.append(False)
    kept = [r for r in reports if r is not None]
    if kept:
        rates = np.stack([r.rate for r in kept])
        min_rate = np.min(rates, axis=0)
        max_c = np.max(np.stack([r.constant for r in kept]), axis=0)
    else:
        min_rate = max_c = np.full(len(center.rate), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = min_rate / center.rate
    halved = None
    if halving and radius > 0:
        halved = ldt_uniformity(A, base, radius / 2, n_perturb, eps_list, n_list, N, seed, method,
                                threads, halving=False)
    return UniformityReport(radius, center, reports, np.asarray(dists), skipped, min_rate, max_c,
                            ratio, halved)


# --------------------------------------------------------------------------
# central limit theorem


@dataclass
class GordinLifsic:
    sigma2: float
    terms: int
    center: float
    phi: np.ndarray = field(repr=False)


def gordin_lifsic_variance(op: DiscretizedOperator, stationary: np.ndarray | None = None,
                           tol: float = SERIES_TOL, cap: int = SERIES_CAP) -> GordinLifsic:
    """``sigma^2 = m(phi^2) - m((Q phi)^2)`` with ``phi = sum_j Q^j psi``.

    ``psi`` is the fiber observable minus its integral against the discrete
    stationary measure ``m``, so the series converges on the discretized
    operator.
    """
    if op.xi is None:
        raise ValidationError("the operator carries no fiber observable")
    m = stationary_measure(op, tol=1e-14).measure if stationary is None else np.asarray(stationary)
    center = float(m @ op.xi)
    psi = op.xi - center
    phi = psi.copy()
    term = psi
    for j in range(1, cap + 1):
        term = op.apply(term)
        if np.max(np.abs(term)) < tol:
            break
        phi += term
    else:
        raise NumericalError("mixing too slow or non-typical input")
    Qphi = op.apply(phi)
    sigma2 = float(m @ phi**2 - m @ Qphi**2)
    return GordinLifsic(sigma2, j, center, phi)


@dataclass
class CltReport:
    n: int
    N: int
    samples: np.ndarray
    sigma_hat: float
    sigma_gl: float
    ks: float | None
    ks_pvalue: float | None
    ks_critical: float
    degenerate: bool
    center: float
    series_terms: int
    seed: int
    sigma_hat_2n: float | None = None

    @property
    def stability(self) -> float | None:
        if self.sigma_hat_2n is None or self.sigma_hat == 0:
            return None
        return abs(self.sigma_hat_2n**2 / self.sigma_hat**2 - 1)

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "n": self.n,
            "N": self.N,
            "sigma_hat": float(self.sigma_hat),
            "sigma_gl": float(self.sigma_gl),
            "ks": self.ks,
            "ks_pvalue": self.ks_pvalue,
            "ks_critical": float(self.ks_critical),
            "degenerate": bool(self.degenerate),
            "center": float(self.center),
            "series_terms": int(self.series_terms),
            "sigma_hat_2n": self.sigma_hat_2n,
            "stability": self.stability,
            "seed": int(self.seed),
        }
        if include_samples:
            out["samples"] = _floats(self.samples)
        return out


def clt_experiment(A: MatrixCocycle, base: MarkovBase, v=None, n: int = 10_000, N: int = 10_000,
                   seed: int | None = None, operator: DiscretizedOperator | None = None,
                   grid: ProjectiveGrid | None = None, m_prime: int | None = None, threads: int = 1,
                   stability: bool = True) -> CltReport:
    """Standardized samples ``(log ||A^n v|| - mean) / sqrt(n)`` against ``N(0, sigma_GL^2)``.

    Samples are centred by their ensemble mean, which removes the bounded
    bias of ``log ||A^n v||`` together with the error of any ``L1``
    estimate.  With ``stability`` the same paths are continued to ``2n``.
    """
    seed = _rng.resolve_seed(seed)
    if n < 1 or N < 2:
        raise ValidationError("need n >= 1 and N >= 2")
    v = np.eye(A.d)[0] if v is None else np.asarray(v, dtype=float)
    op = operator if operator is not None else build_fiber_operator(A, base, m_prime, grid)
    gl = gordin_lifsic_variance(op)
    record = [n, 2 * n] if stability else [n]
    X = log_norm_ensemble(A, base, record, N, seed, vector=v, threads=threads)
    Z = (X[:, 0] - X[:, 0].mean()) / math.sqrt(n)
    sigma_hat = float(Z.std(ddof=1))
    sigma_2n = None
    if stability:
        Z2 = (X[:, 1] - X[:, 1].mean()) / math.sqrt(2 * n)
        sigma_2n = float(Z2.std(ddof=1))
    sigma_gl = math.sqrt(max(gl.sigma2, 0.0))
    degenerate = sigma_gl <= 1e-9
    ks = pv = None
    if not degenerate:
        res = scipy.stats.kstest(Z, "norm", args=(0.0, sigma_gl))
        ks, pv = float(res.statistic), float(res.pvalue)
    return CltReport(n, N, Z, sigma_hat, sigma_gl, ks, pv, 1.36 / math.sqrt(N), degenerate,
                     gl.center, gl.terms, seed, sigma_2n)


# --------------------------------------------------------------------------
# Hölder continuity of L1


@dataclass
class HolderFit:
    scales: np.ndarray
    differences: np.ndarray
    stderr: np.ndarray
    distances: np.ndarray
    used: np.ndarray
    bunched: np.ndarray
    theta: float | None
    band: tuple[float, float] | None
    r_squared: float | None
    note: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "scales": _floats(self.scales),
            "differences": _floats(self.differences),
            "stderr": _floats(self.stderr),
            "distances": _floats(self.distances),
            "used": [bool(u) for u in self.used],
            "bunched": [bool(b) for b in self.bunched],
            "theta": self.theta,
            "band": None if self.band is None else _floats(self.band),
            "r_squared": self.r_squared,
            "note": self.note,
            "seed": int(self.seed),
        }


def power_law_fit(distances, differences, stderr=None, keep=None):
    """Fit ``|diff| ~ C dist^theta`` on log-log axes, dropping points below ``3 stderr``.

    ``keep`` optionally masks further points out.  Returns ``(fit or None, used mask)``.
    """
    dist = np.asarray(distances, float)
    diff = np.abs(np.asarray(differences, float))
    used = (diff > 0) & (dist > 0)
    if keep is not None:
        used &= np.asarray(keep, bool)
    if stderr is not None:
        used &= diff >= 3 * np.asarray(stderr, float)
    fit = linear_fit(np.log(dist[used]), np.log(diff[used])) if used.sum() >= 2 else None
    return fit, used


def holder_fit(A: MatrixCocycle, base: MarkovBase, direction, scales, n: int = 100_000,
               seed: int | None = None, n_chains: int = 20, threads: int = 1) -> HolderFit:
    """Exponent ``theta`` in ``|L1(A) - L1(B_s)| ~ d(A, B_s)^theta`` for ``B_s = A exp(s direction)``.

    All estimates share ``seed`` (common random numbers), and the standard
    error of each difference comes from its per-chain values.  Scales whose
    difference is below three standard errors, and scales whose cocycle is
    not fiber bunched while ``A`` is, are excluded from the fit.
    """
    seed = _rng.resolve_seed(seed)
    direction = np.asarray(direction, dtype=float)
    if direction.ndim == 0:
        direction = direction * np.eye(A.d)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    if len(scales) == 0 or np.any(scales <= 0):
        raise ValidationError("scales must be positive")
    k = len(scales)
    if not np.any(direction):
        zeros = np.zeros(k)
        return HolderFit(scales, zeros, zeros, zeros, np.zeros(k, bool), np.ones(k, bool), None, None,
                         None, "identically zero", seed)
    Bs = [perturbed(A, direction, s) for s in scales]
    dist = np.array([uniform_distance(A, B, base).value for B in Bs])
    if np.any(np.diff(dist) >= 0):
        raise ValidationError("distances must decrease strictly with the scale")
    check = A.d > 1 and fiber_bunching_check(A, base).satisfied
    bunched = np.array([not check or fiber_bunching_check(B, base).satisfied for B in Bs])
    ref = lyapunov_spectrum(A, base, n, seed, n_chains=n_chains, threads=threads)
    diffs, ses = np.empty(k), np.empty(k)
    for i, B in enumerate(Bs):
        est = lyapunov_spectrum(B, base, n, seed, n_chains=n_chains, threads=threads)
        per_chain = est.chain_estimates[:, 0] - ref.chain_estimates[:, 0]
        diffs[i] = per_chain.mean()
        se = per_chain.std(ddof=1) / math.sqrt(n_chains) if n_chains > 1 else math.nan
        ses[i] = max(se, ROUNDOFF * (1 + abs(diffs[i])))
    fit, used = power_law_fit(dist, diffs, ses, keep=bunched)
    notes = []
    if not np.all(np.abs(diffs) >= 3 * ses):
        notes.append("scales with differences below 3 stderr excluded")
    if not bunched.all():
        notes.append("scales failing fiber bunching excluded")
    if fit is None:
        notes.append("too few usable scales for a fit")
        return HolderFit(scales, diffs, ses, dist, used, bunched, None, None, None, "; ".join(notes), seed)
    return HolderFit(scales, diffs, ses, dist, used, bunched, fit.slope, fit.band, fit.r_squared,
                     "; ".join(notes), seed)
