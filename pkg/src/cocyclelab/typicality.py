"""Pinching and twisting checks on periodic points and homoclinic loops."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import MatrixCocycle, compound
from .errors import ValidationError
from .holonomy import transition_map
from .symbolic import MarkovBase, _as_tuple, periodic_word

TOL_PINCH = 1e-6
TOL_TWIST = 1e-8
COND_MAX = 1e8
MINOR_BUDGET = 2_000_000


def periodic_matrix(A: MatrixCocycle, block, base: MarkovBase | None = None) -> np.ndarray:
    """``A^q(a)`` for the periodic point with period block ``block``."""
    block = _as_tuple(block)
    q = len(block)
    a = periodic_word(block, (A.window + q) // q + 2, base)
    M = np.eye(A.d)
    for j in range(q):
        M = A.evaluate_at(a, j) @ M
    return M


def _sorted_eig(M: np.ndarray):
    vals, vecs = np.linalg.eig(M)
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order], vecs[:, order]


def _relative_gaps(moduli: np.ndarray) -> float:
    """Smallest ``(m_i - m_{i+1}) / m_i`` over the sorted moduli."""
    m = np.sort(np.asarray(moduli))[::-1]
    if len(m) < 2:
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        gaps = (m[:-1] - m[1:]) / m[:-1]
    return float(np.min(np.nan_to_num(gaps, nan=0.0)))


@dataclass(frozen=True)
class PinchingResult:
    passed: bool
    gap: float
    moduli: np.ndarray

    def __iter__(self):
        return iter((self.passed, self.gap))


def pinching_from_matrix(M: np.ndarray, k: int = 1, tol: float = TOL_PINCH) -> PinchingResult:
    vals = np.linalg.eigvals(M)
    d = len(vals)
    if not 1 <= k <= d - 1 and not (d == 1 and k == 1):
        raise ValidationError(f"exterior power k={k} outside 1..{d - 1}")
    mods = np.abs(vals)
    prods = np.array([np.prod(mods[list(c)]) for c in itertools.combinations(range(d), k)])
    gap = _relative_gaps(prods)
    return PinchingResult(bool(gap > tol), gap, np.sort(prods)[::-1])


def pinching_check(A: MatrixCocycle, a_block, k: int = 1, base: MarkovBase | None = None,
                   tol: float = TOL_PINCH) -> PinchingResult:
    """Distinct moduli of the ``k``-fold eigenvalue products of ``A^q(a)``.

    ``gap`` is the smallest relative gap between consecutive moduli; equal
    moduli (for example a rotation) give ``gap = 0`` and a failed check.
    """
    return pinching_from_matrix(periodic_matrix(A, a_block, base), k, tol)


# --------------------------------------------------------------------------
# minors


def all_minors(g: np.ndarray) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
    """Every square minor of ``g`` as ``(rows, cols, value)``."""
    n = g.shape[0]
    count = sum(math.comb(n, r) ** 2 for r in range(1, n + 1))
    if count > MINOR_BUDGET:
        raise ValidationError(f"{count} minors exceed the enumeration budget")
    out = []
    for r in range(1, n + 1):
        for rows in itertools.combinations(range(n), r):
            for cols in itertools.combinations(range(n), r):
                out.append((rows, cols, float(np.linalg.det(g[np.ix_(rows, cols)]))))
    return out


def _relative_minors(g: np.ndarray):
    """Minors divided by the product of the Euclidean norms of their full rows."""
    row_norm = np.linalg.norm(g, axis=1)
    rel = []
    for rows, cols, val in all_minors(g):
        scale = float(np.prod(row_norm[list(rows)]))
        rel.append(abs(val) / scale if scale > 0 else 0.0)
    return rel


@dataclass(frozen=True)
class TwistingResult:
    passed: bool
    min_minor: float
    min_relative_minor: float
    g: np.ndarray

    def __iter__(self):
        return iter((self.passed, self.min_minor))


def twisting_from_matrix(g: np.ndarray, tol: float = TOL_TWIST) -> TwistingResult:
    minors = all_minors(g)
    rel = _relative_minors(g)
    return TwistingResult(bool(min(rel) > tol), float(min(abs(m[2]) for m in minors)), float(min(rel)), g)


def eigenbasis(M: np.ndarray) -> np.ndarray:
    """Unit eigenvectors ordered by decreasing modulus; real spectra only."""
    vals, vecs = _sorted_eig(M)
    if np.any(np.abs(vals.imag) > 1e-12 * np.abs(vals)):
        raise ValidationError("eigenvalues are not real; pinching fails")
    E = np.real(vecs)
    E /= np.linalg.norm(E, axis=0)
    # deterministic sign: largest entry of each column positive
    sign = np.sign(E[np.argmax(np.abs(E), axis=0), np.arange(E.shape[1])])
    E *= sign
    if np.linalg.cond(E) > COND_MAX:
        raise ValidationError("ill-conditioned eigenbasis")
    return E


def twisting_check(A: MatrixCocycle, a_block, bridge, k: int = 1, base: MarkovBase | None = None,
                   tol: float = TOL_TWIST, psi: np.ndarray | None = None) -> TwistingResult:
    """All minors of ``g = E^{-1} psi E`` (compounds for ``k > 1``) are nonzero."""
    M = periodic_matrix(A, a_block, base)
    E = eigenbasis(M)
    if psi is None:
        psi = transition_map(A, a_block, bridge, base).psi
    g = np.linalg.solve(E, psi @ E)
    if k > 1:
        g = compound(g, k)
    return twisting_from_matrix(g, tol)


# --------------------------------------------------------------------------
# certificates


@dataclass
class TypicalityCertificate:
    block: tuple[int, ...]
    period: int
    bridge: tuple[int, ...]
    l: int
    eigenvalues: np.ndarray
    eigenbasis: np.ndarray | None
    g: np.ndarray | None
    min_gap: float
    min_minor: float
    min_relative_minor: float
    passed: dict = field(default_factory=dict)
    candidates_tried: int = 0

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        ev = self.eigenvalues
        return {
            "block": "".join(map(str, self.block)),
            "period": self.period,
            "bridge": "".join(map(str, self.bridge)),
            "l": self.l,
            "eigenvalues": [[float(v.real), float(v.imag)] for v in ev],
            "moduli": [float(abs(v)) for v in ev],
            "min_gap": _jsonable(self.min_gap),
            "min_minor": _jsonable(self.min_minor),
            "min_relative_minor": _jsonable(self.min_relative_minor),
            "passed": {str(k): bool(v) for k, v in self.passed.items()},
            "candidates_tried": self.candidates_tried,
        }


def _jsonable(x: float):
    return None if not math.isfinite(x) else float(x)


def _cyclic_blocks(A: MatrixCocycle, base: MarkovBase | None, q: int):
    """Primitive, cyclically legal blocks of length ``q`` in lexicographic order."""
    for blk in itertools.product(range(A.n_symbols), repeat=q):
        if any(blk == blk[r:] + blk[:r] for r in range(1, q) if q % r == 0):
            continue
        if base is not None and not base.is_cyclically_legal(blk):
            continue
        yield blk


def verify(A: MatrixCocycle, block, bridge, base: MarkovBase | None = None,
           tol_pinch: float = TOL_PINCH, tol_twist: float = TOL_TWIST) -> TypicalityCertificate:
    """Run every pinching and twisting check for one (block, bridge) pair."""
    block, bridge = _as_tuple(block), _as_tuple(bridge)
    d = A.d
    M = periodic_matrix(A, block, base)
    vals, _ = _sorted_eig(M)
    passed: dict = {}
    gaps, minors, rel = [], [], []
    for k in range(1, d):
        p = pinching_from_matrix(M, k, tol_pinch)
        gaps.append(p.gap)
        passed[f"pinching_{k}"] = p.passed
    E = g = None
    if d > 1 and all(passed.values()):
        E = eigenbasis(M)
        tm = transition_map(A, block, bridge, base)
        g = np.linalg.solve(E, tm.psi @ E)
        for k in range(1, d):
            t = twisting_from_matrix(compound(g, k) if k > 1 else g, tol_twist)
            minors.append(t.min_minor)
            rel.append(t.min_relative_minor)
            passed[f"twisting_{k}"] = t.passed
    elif d > 1:
        for k in range(1, d):
            passed[f"twisting_{k}"] = False
    from .symbolic import splice_homoclinic

    l = splice_homoclinic(block, bridge, base).l
    return TypicalityCertificate(
        block, len(block), bridge, l, vals, E, g,
        min(gaps, default=math.inf), min(minors, default=math.inf),
        min(rel, default=math.inf), passed,
    )


def find_typical_witness(A: MatrixCocycle, base: MarkovBase | None = None, search_budget: int = 2000,
                         max_period: int = 6, max_bridge: int = 6) -> TypicalityCertificate | None:
    """First (block, bridge) in lexicographic order passing every check.

    Blocks are enumerated by increasing period and bridges by increasing
    length.  Returns ``None`` when ``search_budget`` candidates are used up.
    """
    if A.d == 1:
        blk = next(_cyclic_blocks(A, base, 1), None) or next(_cyclic_blocks(A, base, 2))
        M = periodic_matrix(A, blk, base)
        return TypicalityCertificate(blk, len(blk), (), 0, np.linalg.eigvals(M), None, None,
                                     math.inf, math.inf, math.inf, {}, 0)
    tried = 0
    for q in range(1, max_period + 1):
        for blk in _cyclic_blocks(A, base, q):
            tried += 1
            if tried > search_budget:
                return None
            M = periodic_matrix(A, blk, base)
            if not all(pinching_from_matrix(M, k).passed for k in range(1, A.d)):
                continue
            for b in range(1, max_bridge + 1):
                for bridge in itertools.product(range(A.n_symbols), repeat=b):
                    tried += 1
                    if tried > search_budget:
                        return None
                    try:
                        cert = verify(A, blk, bridge, base)
                    except ValidationError:
                        continue
                    if cert.ok:
                        cert.candidates_tried = tried
                        return cert
    return None
