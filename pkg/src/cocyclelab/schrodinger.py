"""Schrödinger cocycles over a Markov shift.

``S_{E,lam}(w) = [[E - lam v(w), -1], [1, 0]]`` with ``v`` a function of the
last ``depth`` symbols.  For ``|E| < 2`` write ``E = 2 cos(kappa)``; the
frame ``M = [[1, -cos kappa], [0, sin kappa]]`` conjugates the free matrix to
the rotation ``R_kappa`` and the perturbed one to
``R_kappa - (lam v / sin kappa) N_kappa`` with ``N_kappa = [[sin, cos], [0, 0]]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .cocycle import ROUNDOFF, MatrixCocycle, orbit_codes
from .errors import NumericalError, ValidationError
from .statistics import power_law_fit
from .symbolic import MarkovBase, sliding_codes

FRAME_TOL = 1e-12
PARABOLIC_TOL = 1e-9
EXCLUDED_TOL = 1e-9
DEGENERATE_SIN = 1e-8
MAX_PERIOD = 12

# 2 cos(angle) for rotations of small order, with that order
EXCLUDED_TRACES = (
    (2.0, 1), (-2.0, 2), (1.0, 6), (-1.0, 3), (0.0, 4),
    (math.sqrt(2.0), 8), (-math.sqrt(2.0), 8), (math.sqrt(3.0), 12), (-math.sqrt(3.0), 12),
)


@dataclass(frozen=True)
class SchrodingerSpec:
    """Potential ``v`` (indexed by depth-word code), coupling ``lam`` and energy ``E``."""

    potential: np.ndarray
    n_symbols: int
    depth: int = 1
    coupling: float = 0.0
    energy: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.potential, dtype=float).ravel()
        if len(v) != self.n_symbols**self.depth:
            raise ValidationError(f"potential needs {self.n_symbols ** self.depth} values, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("potential must be bounded")
        object.__setattr__(self, "potential", v)

    @property
    def kappa(self) -> float:
        if not abs(self.energy) < 2:
            raise ValidationError("elliptic frame undefined for |E| >= 2")
        return math.acos(self.energy / 2)

    def at(self, energy: float | None = None, coupling: float | None = None) -> "SchrodingerSpec":
        return SchrodingerSpec(self.potential, self.n_symbols, self.depth,
                               self.coupling if coupling is None else coupling,
                               self.energy if energy is None else energy)

    def mean_potential(self, base: MarkovBase) -> float:
        """Exact ``int v dmu``."""
        _, probs = base.word_probabilities(self.depth)
        return float(probs @ self.potential)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def n_matrix(theta: float) -> np.ndarray:
    return np.array([[math.sin(theta), math.cos(theta)], [0.0, 0.0]])


@dataclass(frozen=True)
class PasturFigotinFrame:
    kappa: float
    R: np.ndarray
    N: np.ndarray
    M: np.ndarray
    M_inv: np.ndarray

    @classmethod
    def build(cls, kappa: float) -> "PasturFigotinFrame":
        s, c = math.sin(kappa), math.cos(kappa)
        if not s > 0:
            raise ValidationError("elliptic frame undefined for sin(kappa) <= 0")
        M = np.array([[1.0, -c], [0.0, s]])
        M_inv = np.array([[1.0, c / s], [0.0, 1.0 / s]])
        return cls(kappa, rotation_matrix(kappa), n_matrix(kappa), M, M_inv)


def schrodinger_matrix(E: float, value: float) -> np.ndarray:
    return np.array([[E - value, -1.0], [1.0, 0.0]])


def build_schrodinger(spec: SchrodingerSpec, alpha: float = 1.0) -> MatrixCocycle:
    """Depth-``m`` SL(2) cocycle ``w -> [[E - lam v(w), -1], [1, 0]]``."""
    g = np.zeros((len(spec.potential), 2, 2))
    g[:, 0, 0] = spec.energy - spec.coupling * spec.potential
    g[:, 0, 1] = -1.0
    g[:, 1, 0] = 1.0
    return MatrixCocycle(g, spec.n_symbols, depth=spec.depth, lead=0, alpha=alpha)


def conjugated_cocycle(spec: SchrodingerSpec, alpha: float = 1.0) -> MatrixCocycle:
    """``R_kappa - (lam v / sin kappa) N_kappa``, checked against ``M S M^-1``."""
    if not abs(spec.energy) < 2:
        raise ValidationError("elliptic frame undefined for |E| >= 2")
    fr = PasturFigotinFrame.build(spec.kappa)
    coef = spec.coupling * spec.potential / math.sin(fr.kappa)
    g = fr.R[None] - coef[:, None, None] * fr.N[None]
    direct = fr.M @ build_schrodinger(spec).gens @ fr.M_inv
    scale = max(1.0, float(np.max(np.abs(direct))))
    if np.max(np.abs(direct - g)) > FRAME_TOL * scale / math.sin(fr.kappa):
        raise NumericalError("conjugated cocycle disagrees with M S M^-1")
    return MatrixCocycle(g, spec.n_symbols, depth=spec.depth, lead=0, alpha=alpha)


# --------------------------------------------------------------------------
# traces


def _cyclic_codes(block, n_symbols: int, depth: int) -> np.ndarray:
    """Window codes of the periodic point with period ``block``, one per step."""
    block = np.asarray(block, dtype=np.int64)
    q = len(block)
    reps = (depth + q - 1) // q + 1
    seq = np.tile(block, reps + 1)
    # step t reads x_{t-depth+1} .. x_t; start at t = 0 with the block placed at 0..q-1
    start = reps * q - (depth - 1)
    return sliding_codes(seq[start : start + q + depth - 1], n_symbols, depth)


def cyclic_product(gens: np.ndarray, codes) -> np.ndarray:
    M = np.eye(gens.shape[1])
    for k in codes:
        M = gens[k] @ M
    return M


def chebyshev_trace_error(E: float, nmax: int = 100) -> float:
    """``max_n |tr S^n - 2 cos(n kappa)|`` for the free matrix, ``n <= nmax``."""
    kappa = SchrodingerSpec(np.zeros(1), 1, 1, 0.0, E).kappa
    S = schrodinger_matrix(E, 0.0)
    M = np.eye(2)
    err = 0.0
    for n in range(1, nmax + 1):
        M = S @ M
        err = max(err, abs(np.trace(M) - 2 * math.cos(n * kappa)))
    return err


@dataclass
class TraceCheck:
    n: int
    kappa: float
    lambdas: np.ndarray
    traces: np.ndarray
    residuals: np.ndarray
    first_order: float
    first_order_estimate: float
    first_order_error: float
    slope: float | None
    r_squared: float | None
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kappa": self.kappa,
            "lambda": [float(x) for x in self.lambdas],
            "trace": [float(x) for x in self.traces],
            "residual": [float(x) for x in self.residuals],
            "first_order": self.first_order,
            "first_order_estimate": self.first_order_estimate,
            "first_order_error": self.first_order_error,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "degenerate": self.degenerate,
        }


def trace_formula_check(spec: SchrodingerSpec, word, lambda_list) -> TraceCheck:
    """Residuals of ``tr S~^n = 2 cos(n kappa) + lam sin(n kappa) sum V_j + O(lam^2)``.

    ``word`` is a period block; its ``n = len(word)`` steps read the windows
    of the periodic point.  ``V_j = -v_j / sin kappa``.  The slope is fitted
    on ``log residual`` against ``log lam`` over the positive ``lam``.
    """
    lams = np.asarray(lambda_list, dtype=float)
    if np.any(lams < 0):
        raise ValidationError("coupling values must be nonnegative")
    word = tuple(int(s) for s in word)
    if not word:
        raise ValidationError("empty orbit word")
    n = len(word)
    kappa = spec.kappa
    codes = _cyclic_codes(word, spec.n_symbols, spec.depth)
    V = -spec.potential[codes] / math.sin(kappa)
    lin = math.sin(n * kappa) * float(V.sum())
    traces, res = np.empty(len(lams)), np.empty(len(lams))
    for i, lam in enumerate(lams):
        g = conjugated_cocycle(spec.at(coupling=lam)).gens
        traces[i] = np.trace(cyclic_product(g, codes))
        res[i] = abs(traces[i] - 2 * math.cos(n * kappa) - lam * lin)
    pos = lams > 0
    fit, _ = power_law_fit(lams[pos], res[pos])
    k = int(np.argmin(np.where(pos, lams, np.inf))) if pos.any() else None
    est = float((traces[k] - 2 * math.cos(n * kappa)) / lams[k]) if k is not None else math.nan
    err = abs(est - lin) / abs(lin) if lin != 0 else abs(est)
    return TraceCheck(n, kappa, lams, traces, res, lin, est, err,
                      None if fit is None else fit.slope, None if fit is None else fit.r_squared,
                      abs(math.sin(n * kappa)) < DEGENERATE_SIN)


# --------------------------------------------------------------------------
# positivity scan


def _family_top_exponent(gens: np.ndarray, codes: np.ndarray, warmup: int) -> np.ndarray:
    """Top exponent sums for a family of 2x2 cocycles along shared codes.

    ``gens`` has shape ``(C, K, 2, 2)``, ``codes`` ``(B, warmup + n)``;
    returns ``(C, B)`` sums of ``log r11`` over the last ``n`` steps.
    """
    C = gens.shape[0]
    B, total = codes.shape
    a, b, c, e = (np.ascontiguousarray(gens[:, :, i, j]) for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
    qx, qy = np.ones((C, B)), np.zeros((C, B))
    acc = np.zeros((C, B))
    for t in range(total):
        k = codes[:, t]
        ux = a[:, k] * qx + b[:, k] * qy
        uy = c[:, k] * qx + e[:, k] * qy
        r = np.hypot(ux, uy)
        qx, qy = ux / r, uy / r
        if t >= warmup:
            acc += np.log(r)
    return acc


@dataclass
class PositivityScan:
    energies: np.ndarray
    lambdas: np.ndarray
    L1: np.ndarray
    stderr: np.ndarray
    positive: np.ndarray
    indeterminate: np.ndarray
    mean_potential: float
    holder_theta: np.ndarray
    holder_constant: np.ndarray
    continuity_ok: np.ndarray
    n: int
    n_chains: int
    seed: int

    def rows(self):
        for j, lam in enumerate(self.lambdas):
            for i, E in enumerate(self.energies):
                yield (float(E), float(lam), float(self.L1[j, i]), float(self.stderr[j, i]),
                       bool(self.positive[j, i]))

    def to_dict(self) -> dict:
        return {
            "energies": [float(x) for x in self.energies],
            "lambdas": [float(x) for x in self.lambdas],
            "L1": [[float(x) for x in r] for r in self.L1],
            "stderr": [[float(x) for x in r] for r in self.stderr],
            "positive": [[bool(x) for x in r] for r in self.positive],
            "indeterminate": [[bool(x) for x in r] for r in self.indeterminate],
            "all_positive": bool(self.positive.all()),
            "mean_potential": self.mean_potential,
            "holder_theta": [None if not math.isfinite(x) else float(x) for x in self.holder_theta],
            "holder_constant": [None if not math.isfinite(x) else float(x) for x in self.holder_constant],
            "continuity_ok": [bool(x) for x in self.continuity_ok],
            "n": self.n,
            "n_chains": self.n_chains,
            "seed": self.seed,
        }


def energy_grid(delta: float = 0.5, step: float = 0.05) -> np.ndarray:
    """Energies in ``[-(2 - delta), 2 - delta]`` with spacing ``step``."""
    top = 2.0 - delta
    k = int(math.floor(top / step + 1e-9))
    return np.arange(-k, k + 1) * step


def _holder_envelope(E: np.ndarray, L: np.ndarray, se: np.ndarray, max_lag: int = 8):
    """Fit ``max |L(E + h) - L(E)| ~ C h^theta`` on lags ``2..max_lag``; test lag 1 against it."""
    if len(E) < 4:
        return math.nan, math.nan, True
    h0 = float(E[1] - E[0])
    lags = range(2, min(max_lag, len(E) - 1) + 1)
    hs, jumps = [], []
    for k in lags:
        hs.append(k * h0)
        jumps.append(np.max(np.abs(L[k:] - L[:-k])))
    fit, used = power_law_fit(hs, jumps)
    if fit is None:
        return math.nan, math.nan, True
    theta = float(np.clip(fit.slope, 1e-3, None))
    hs, jumps = np.asarray(hs), np.asarray(jumps)
    C = float(np.max(jumps[used] / hs[used] ** theta))
    noise = 3 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    ok = bool(np.all(np.abs(np.diff(L)) <= C * h0**theta + noise))
    return theta, C, ok


def positivity_scan(spec: SchrodingerSpec, base: MarkovBase, energies=None, lambdas=None,
                    n: int = 100_000, seed: int | None = None, n_chains: int = 20,
                    warmup: int | None = None, threads: int = 1) -> PositivityScan:
    """``L1(E, lam)`` on a grid, from the conjugated cocycles along shared paths.

    All cells use the same symbol paths.  A cell is positive when
    ``L1 > 3 stderr``; otherwise it is indeterminate.  Each coupling row also
    gets a Hölder envelope in ``E`` fitted from lags of two or more grid steps,
    and ``continuity_ok`` records whether adjacent jumps stay under it.
    """
    if base.n_symbols != spec.n_symbols:
        raise ValidationError("potential and base have different symbol counts")
    mean_v = spec.mean_potential(base)
    if mean_v == 0:
        raise ValidationError("int v dmu = 0: positivity for small coupling is not claimed; scan refused")
    seed = _rng.resolve_seed(seed)
    energies = energy_grid() if energies is None else np.asarray(energies, dtype=float)
    lambdas = np.logspace(-3, -1, 5) if lambdas is None else np.asarray(lambdas, dtype=float)
    if np.any(np.abs(energies) >= 2):
        raise ValidationError("scan energies must satisfy |E| < 2")
    warmup = min(1000, n // 10) if warmup is None else int(warmup)
    cells = [(j, i) for j in range(len(lambdas)) for i in range(len(energies))]
    gens = np.stack([conjugated_cocycle(spec.at(energies[i], lambdas[j])).gens for j, i in cells])
    proto = MatrixCocycle(gens[0], spec.n_symbols, depth=spec.depth)
    blocks = [list(range(s, min(s + 32, n_chains))) for s in range(0, n_chains, 32)]

    def run(b: int) -> np.ndarray:
        codes = orbit_codes(proto, base, warmup + n, seed, blocks[b])
        return _family_top_exponent(gens, codes, warmup) / n

    per_chain = np.concatenate(_rng.run_blocks(run, len(blocks), threads), axis=1)
    est = per_chain.mean(axis=1)
    se = per_chain.std(axis=1, ddof=1) / math.sqrt(n_chains) if n_chains > 1 else np.full(len(cells), np.nan)
    se = np.maximum(se, ROUNDOFF * (1 + np.abs(est)))
    shape = (len(lambdas), len(energies))
    L1, SE = est.reshape(shape), se.reshape(shape)
    positive = L1 > 3 * SE
    theta, Cs, ok = (np.empty(len(lambdas)) for _ in range(3))
    for j in range(len(lambdas)):
        theta[j], Cs[j], ok[j] = _holder_envelope(energies, L1[j], SE[j])
    return PositivityScan(energies, lambdas, L1, SE, positive, ~positive, mean_v, theta, Cs,
                          ok.astype(bool), n, n_chains, seed)


# --------------------------------------------------------------------------
# periodic classification


@dataclass(frozen=True)
class PeriodicClass:
    block: tuple[int, ...]
    trace: float
    kind: str
    angle: float | None
    excluded: bool
    order: int | None

    def to_dict(self) -> dict:
        return {
            "block": "".join(map(str, self.block)),
            "trace": self.trace,
            "class": self.kind,
            "angle": self.angle,
            "excluded": self.excluded,
            "order": self.order,
        }


def classify_trace(tr: float, tol: float = PARABOLIC_TOL, excluded_tol: float = EXCLUDED_TOL):
    """``(kind, angle, excluded, order)`` for an SL(2) matrix with trace ``tr``."""
    if abs(abs(tr) - 2) < tol:
        return "parabolic", None, True, 1 if tr > 0 else 2
    if abs(tr) > 2:
        return "hyperbolic", None, False, None
    angle = math.acos(tr / 2)
    for value, order in EXCLUDED_TRACES:
        if abs(tr - value) < excluded_tol:
            return "elliptic", angle, True, order
    return "elliptic", angle, False, None


def _primitive_blocks(base: MarkovBase, q: int):
    for blk in itertools.product(range(base.n_symbols), repeat=q):
        if any(blk == blk[r:] + blk[:r] for r in range(1, q) if q % r == 0):
            continue
        if not base.is_cyclically_legal(blk):
            continue
        # one representative per rotation class
        if blk != min(blk[r:] + blk[:r] for r in range(q)):
            continue
        yield blk


@dataclass
class PeriodicTable:
    rows: list
    hyperbolic: list
    usable_elliptic: list

    @property
    def criterion(self) -> bool:
        """At least one hyperbolic and one usable elliptic periodic point."""
        return bool(self.hyperbolic) and bool(self.usable_elliptic)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "hyperbolic": ["".join(map(str, b)) for b in self.hyperbolic],
            "usable_elliptic": ["".join(map(str, b)) for b in self.usable_elliptic],
            "criterion": self.criterion,
        }


def periodic_classification(spec: SchrodingerSpec, base: MarkovBase, max_period: int = 6,
                            tol: float = PARABOLIC_TOL) -> PeriodicTable:
    """Trace class of ``S^q`` at every periodic point of period ``q <= max_period``.

    Blocks are Lyndon-style representatives (one per rotation class).
    """
    if not 1 <= max_period <= MAX_PERIOD:
        raise ValidationError(f"max_period must lie in 1..{MAX_PERIOD}")
    if base.n_symbols != spec.n_symbols:
        raise ValidationError("potential and base have different symbol counts")
    gens = build_schrodinger(spec).gens
    rows = []
    for q in range(1, max_period + 1):
        for blk in _primitive_blocks(base, q):
            tr = float(np.trace(cyclic_product(gens, _cyclic_codes(blk, spec.n_symbols, spec.depth))))
            kind, angle, excl, order = classify_trace(tr, tol)
            rows.append(PeriodicClass(blk, tr, kind, angle, excl, order))
    hyp = [r.block for r in rows if r.kind == "hyperbolic"]
    ell = [r.block for r in rows if r.kind == "elliptic" and not r.excluded]
    return PeriodicTable(rows, hyp, ell)
