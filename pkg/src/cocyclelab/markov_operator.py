"""Discretized Markov operators on pasts and on pasts x projective space.

States of the fiber operator are pairs (past class, projective cell).  A past
class is a legal word of length ``m'``; a cell is a point of a finite grid
on projective space.  From state ``(w, c)`` the operator moves, for every
symbol ``i``, to ``(w i, cell(A(w) rep(c)))`` with weight ``p_i(w)``, and the
tilted version multiplies the weight by ``exp(t xi(w, c))`` where
``xi(w, c) = log ||A(w) rep(c)||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .cocycle import MatrixCocycle
from .errors import BudgetError, NumericalError, ValidationError
from .symbolic import STATE_BUDGET, LiftedChain, MarkovBase

KAPPA_BUDGET = 10**7
CONFORMAL_TOL = 1e-12


# --------------------------------------------------------------------------
# projective grids


@dataclass(frozen=True)
class ProjectiveGrid:
    """Finite set of representatives of projective space.

    For ``d = 2`` cell ``k`` is centred at angle ``k pi / G``.  For ``d >= 3``
    the representatives are a seeded scrambled Sobol cloud pushed to the unit
    sphere and folded to one hemisphere; cells are nearest-neighbour regions
    in the metric ``min(|u - v|, |u + v|)``.
    """

    d: int
    size: int
    points: np.ndarray
    diameter: float
    _tree: object = field(default=None, repr=False, compare=False)

    @classmethod
    def build(cls, d: int, size: int | None = None) -> "ProjectiveGrid":
        if d < 1:
            raise ValidationError("dimension must be positive")
        if d == 1:
            return cls(1, 1, np.ones((1, 1)), 0.0)
        if d == 2:
            G = 720 if size is None else int(size)
            th = np.arange(G) * math.pi / G
            pts = np.stack([np.cos(th), np.sin(th)], axis=1)
            return cls(2, G, pts, math.sin(math.pi / G))
        G = 20000 if size is None else int(size)
        m = int(math.ceil(math.log2(G)))
        # fixed scrambling seed: deterministic, and no point sits at the cube centre
        sob = qmc.Sobol(d, scramble=True, seed=0).random_base2(m + 1)[:G]
        from scipy.special import ndtri

        g = ndtri(np.clip(sob, 1e-12, 1 - 1e-12))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
        pts *= np.where(pts[:, -1:] < 0, -1.0, 1.0)
        tree = cKDTree(np.vstack([pts, -pts]))
        probe = qmc.Sobol(d, scramble=True, seed=12345).random(4096)
        pv = ndtri(np.clip(probe, 1e-12, 1 - 1e-12))
        pv /= np.linalg.norm(pv, axis=1, keepdims=True)
        dist, _ = tree.query(pv)
        diam = float(2 * np.max(dist))
        return cls(d, G, pts, diam, tree)

    def nearest(self, V: np.ndarray) -> np.ndarray:
        """Cell index of each row of ``V`` (rows need not be normalized)."""
        V = np.atleast_2d(V)
        if self.d == 1:
            return np.zeros(len(V), dtype=np.int64)
        if self.d == 2:
            th = np.arctan2(V[:, 1], V[:, 0]) % math.pi
            return np.rint(th / (math.pi / self.size)).astype(np.int64) % self.size
        _, idx = self._tree.query(V / np.linalg.norm(V, axis=1, keepdims=True))
        return idx % self.size

    def angles(self) -> np.ndarray:
        if self.d != 2:
            raise ValidationError("angles are defined for d = 2 only")
        return np.arange(self.size) * math.pi / self.size


def projective_distance(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``|sin angle(u, v)|`` along the last axis."""
    uh = u / np.linalg.norm(u, axis=-1, keepdims=True)
    vh = v / np.linalg.norm(v, axis=-1, keepdims=True)
    # norm of the component orthogonal to v; no cancellation at small angles
    c = np.sum(uh * vh, axis=-1, keepdims=True)
    return np.minimum(np.linalg.norm(uh - c * vh, axis=-1), 1.0)


# --------------------------------------------------------------------------
# operators


@dataclass
class DiscretizedOperator:
    """Sparse kernel on ``n_classes * n_cells`` states (class-major order)."""

    matrix: sp.csr_matrix
    chain: LiftedChain
    n_cells: int
    grid: ProjectiveGrid | None = None
    tilt: float = 0.0
    xi: np.ndarray | None = None
    center: float = 0.0
    base_matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_classes(self) -> int:
        return self.chain.n_states

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """``(Q phi)(s) = sum_t K(s, t) phi(t)``."""
        return self.matrix @ phi

    def adjoint(self, mu: np.ndarray) -> np.ndarray:
        return self.matrix.T @ mu

    def tilted(self, t: float, center: float | None = None) -> "DiscretizedOperator":
        if self.xi is None:
            raise ValidationError("base-only operator has no fiber observable to tilt")
        center = self.center if center is None else center
        base = self.base_matrix if self.base_matrix is not None else self.matrix
        w = np.exp(t * (self.xi - center))
        M = sp.diags(w) @ base
        return DiscretizedOperator(M.tocsr(), self.chain, self.n_cells, self.grid, t, self.xi,
                                   center, base)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def past_distance(self) -> np.ndarray:
        """``2^{-k}`` between classes, ``k`` the first disagreement counted back from ``x_0``."""
        W = self.chain.words[:, ::-1]
        neq = W[:, None, :] != W[None, :, :]
        first = np.where(neq.any(axis=2), neq.argmax(axis=2), -1)
        D = np.where(first >= 0, 2.0 ** (-first.astype(float)), 0.0)
        return D


def default_m_prime(A: MatrixCocycle | None, base: MarkovBase) -> int:
    depth = A.depth if A is not None else 0
    return max(base.memory, depth) + 2


def build_base_operator(base: MarkovBase, m_prime: int | None = None) -> DiscretizedOperator:
    """Exact Markov operator of the base on past classes of length ``m'``."""
    m_prime = base.memory if m_prime is None else int(m_prime)
    if m_prime < base.memory:
        raise ValidationError(f"m' = {m_prime} is shorter than the memory {base.memory}")
    if base.n_symbols**m_prime > STATE_BUDGET:
        raise BudgetError(f"state budget: {base.n_symbols}^{m_prime} classes")
    chain = base.lifted(m_prime)
    M = sp.csr_matrix(chain.matrix())
    return DiscretizedOperator(M, chain, 1, None, 0.0, None, 0.0, M)


def _class_generators(A: MatrixCocycle, chain: LiftedChain) -> np.ndarray:
    """``A(w)`` for every class ``w`` (reads the last ``depth`` symbols)."""
    if A.lead:
        raise ValidationError("fiber operator needs a past-only cocycle; reduce it first")
    if A.depth > chain.length:
        raise ValidationError(f"cocycle depth {A.depth} exceeds class length {chain.length}")
    tail = chain.words[:, chain.length - A.depth :]
    codes = (tail * (A.n_symbols ** np.arange(A.depth - 1, -1, -1))).sum(axis=1)
    return A.gens[codes]


def build_fiber_operator(A: MatrixCocycle, base: MarkovBase, m_prime: int | None = None,
                         grid: ProjectiveGrid | None = None, t: float = 0.0,
                         center: float = 0.0) -> DiscretizedOperator:
    """Discretized kernel on (past class, projective cell) states."""
    if A.n_symbols != base.n_symbols:
        raise ValidationError("cocycle and base have different symbol counts")
    m_prime = default_m_prime(A, base) if m_prime is None else int(m_prime)
    if m_prime < max(base.memory, A.depth):
        raise ValidationError("m' must cover both the memory and the cocycle depth")
    grid = grid or ProjectiveGrid.build(A.d)
    if grid.d != A.d:
        raise ValidationError("grid dimension does not match the cocycle")
    chain = base.lifted(m_prime)
    n_cl, G, ell = chain.n_states, grid.size, base.n_symbols
    if n_cl * G > STATE_BUDGET:
        raise BudgetError(f"state budget: {n_cl} classes x {G} cells")
    gens = _class_generators(A, chain)
    img = np.einsum("wij,cj->wci", gens, grid.points)
    xi = np.log(np.linalg.norm(img, axis=2)).ravel()
    target_cell = grid.nearest(img.reshape(-1, A.d)).reshape(n_cl, G)
    rows, cols, vals = [], [], []
    state = np.arange(n_cl * G).reshape(n_cl, G)
    for i in range(ell):
        nxt = chain.succ[:, i]
        ok = nxt >= 0
        r = state[ok].ravel()
        c = (nxt[ok][:, None] * G + target_cell[ok]).ravel()
        v = np.repeat(chain.prob[ok, i], G)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    M0 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n_cl * G, n_cl * G))
    M0.sum_duplicates()
    op = DiscretizedOperator(M0, chain, G, grid, 0.0, xi, center, M0)
    return op.tilted(t, center) if t != 0 else op


# --------------------------------------------------------------------------
# stationary measures


@dataclass(frozen=True)
class StationaryResult:
    measure: np.ndarray
    residual: float
    iterations: int
    fiber_marginal: np.ndarray | None = None
    concentration: float | None = None
    dominated: bool | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.measure, dtype=dtype)


def stationary_measure(op: DiscretizedOperator, tol: float = 1e-10, max_iter: int = 100_000,
                       start: np.ndarray | None = None) -> StationaryResult:
    """Power iteration ``mu <- K^T mu`` from the uniform vector.

    For fiber operators the result also carries the fiber marginal and a
    concentration diagnostic: the mass of the 5 % of cells around the mode.
    ``dominated`` is False when that mass stays below one half, which is
    what a cocycle without a dominated direction (a rotation) produces.
    """
    if op.tilt != 0:
        raise ValidationError("stationary measure needs the untilted operator")
    n = op.n_states
    mu = np.full(n, 1.0 / n) if start is None else np.asarray(start, float) / np.sum(start)
    MT = op.matrix.T.tocsr()
    res = math.inf
    for it in range(1, max_iter + 1):
        new = MT @ mu
        new /= new.sum()
        res = float(np.abs(new - mu).sum())
        mu = new
        if res < tol:
            break
    else:
        raise NumericalError(f"stationary measure did not converge: residual {res:.3g}")
    res = float(np.abs(MT @ mu - mu).sum())
    if op.n_cells > 1:
        marg = mu.reshape(op.n_classes, op.n_cells).sum(axis=0)
        width = max(1, int(round(0.025 * op.n_cells)))
        window = np.convolve(np.concatenate([marg[-width:], marg, marg[:width]]),
                             np.ones(2 * width + 1), mode="valid")
        conc = float(window.max())
        return StationaryResult(mu, res, it, marg, conc, bool(conc > 0.5))
    return StationaryResult(mu, res, it)


# --------------------------------------------------------------------------
# kappa_alpha


@dataclass(frozen=True)
class KappaReport:
    alpha: float
    n: int
    value: float
    witness: tuple
    grid_size: int
    cell_diameter: float

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "n": self.n, "kappa": self.value,
                "witness": [int(self.witness[0]), int(self.witness[1]), int(self.witness[2])],
                "grid_size": self.grid_size, "cell_diameter": self.cell_diameter}


def _branch_products(A: MatrixCocycle, chain: LiftedChain, n: int):
    """Per class: probabilities and products ``A(x_{n-1}) ... A(x_0)`` of all continuations.

    The last symbol of an ``n``-step word does not enter the product, so only
    ``n - 1`` symbols are enumerated and their probabilities are exact.
    """
    ell = A.n_symbols
    n_cl = chain.n_states
    n_br = ell ** (n - 1)
    if n_cl * n_br > KAPPA_BUDGET:
        raise BudgetError(f"enumeration budget: {n_cl} classes x {n_br} words")
    gens = _class_generators(A, chain)
    prob = np.ones((n_cl, 1))
    state = np.arange(n_cl)[:, None]
    M = gens[state]
    for _ in range(n - 1):
        nxt = chain.succ[state]  # (n_cl, b, ell)
        p = chain.prob[state]
        prob = (prob[..., None] * p).reshape(n_cl, -1)
        state = nxt.reshape(n_cl, -1)
        M = np.repeat(M, ell, axis=1)
        safe = np.where(state >= 0, state, 0)
        M = gens[safe] @ M
        state = safe
    return prob, M


def kappa_alpha(A: MatrixCocycle, base: MarkovBase, alpha: float, n: int,
                grid: ProjectiveGrid | None = None, m_prime: int | None = None,
                max_pairs_points: int = 400) -> KappaReport:
    """Average projective Hölder contraction of ``A^n`` (sup over classes and grid pairs).

    For ``d = 2`` the ratio ``delta(Mv, Mv') / delta(v, v')`` equals
    ``|det M| / (||Mv|| ||Mv'||)`` for unit ``v, v'``, so the sup is taken over
    all grid pairs including the diagonal limit.  For ``d >= 3`` pairs come
    from a subsample of the grid with ``delta >= 2 * diameter``.  For
    ``d = 1`` projective space is a point and the value is 1 by convention.
    """
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]")
    if n < 1:
        raise ValidationError("n must be positive")
    grid = grid or ProjectiveGrid.build(A.d)
    if A.d == 1:
        return KappaReport(alpha, n, 1.0, (0, 0, 0), 1, 0.0)
    m_prime = default_m_prime(A, base) if m_prime is None else m_prime
    chain = base.lifted(m_prime)
    prob, M = _branch_products(A, chain, n)
    # scale-free products: the ratio only depends on M up to a scalar
    dets = np.abs(np.linalg.det(M))
    M = M / np.sqrt(dets)[..., None, None] ** (2 / A.d)
    # conformal products act isometrically; their ratio is 1 without roundoff
    gram = np.swapaxes(M, -1, -2) @ M
    conformal = np.all(np.abs(gram - np.eye(A.d)) <= CONFORMAL_TOL, axis=(-2, -1))
    best, witness = -math.inf, (0, 0, 0)
    if A.d == 2:
        V = grid.points.T
        for w in range(chain.n_states):
            nv = np.linalg.norm(M[w] @ V, axis=1)  # (branches, G)
            Wm = nv ** (-alpha)
            coef = prob[w] * np.abs(np.linalg.det(M[w])) ** alpha
            Wm[conformal[w]] = 1.0
            coef[conformal[w]] = prob[w][conformal[w]]
            S = (Wm.T * coef) @ Wm
            k = int(np.argmax(S))
            if S.flat[k] > best:
                best = float(S.flat[k])
                witness = (int(chain.codes[w]), k // grid.size, k % grid.size)
    else:
        pts = grid.points[:: max(1, grid.size // max_pairs_points)]
        delta = projective_distance(pts[:, None, :], pts[None, :, :])
        ii, jj = np.nonzero(np.triu(delta >= 2 * grid.diameter, 1))
        if ii.size == 0:
            raise ValidationError("grid too coarse for separated pairs")
        for w in range(chain.n_states):
            U = np.einsum("bij,pj->bpi", M[w], pts)
            dU = projective_distance(U[:, ii], U[:, jj])
            ratio = (dU / delta[ii, jj]) ** alpha
            ratio[conformal[w]] = 1.0
            S = prob[w] @ ratio
            k = int(np.argmax(S))
            if S[k] > best:
                best = float(S[k])
                witness = (int(chain.codes[w]), int(ii[k]), int(jj[k]))
    return KappaReport(alpha, n, best, witness, grid.size, grid.diameter)


# --------------------------------------------------------------------------
# probes, mixing and Lasota-Yorke data


def state_distance(op: DiscretizedOperator, i: np.ndarray, j: np.ndarray, D_past: np.ndarray | None = None) -> np.ndarray:
    """Max of the past distance and the projective distance between states."""
    D_past = op.past_distance() if D_past is None else D_past
    ci, ki = np.divmod(i, op.n_cells)
    cj, kj = np.divmod(j, op.n_cells)
    d = D_past[ci, cj]
    if op.n_cells > 1:
        P = op.grid.points
        d = np.maximum(d, projective_distance(P[ki], P[kj]))
    return d


def holder_probes(op: DiscretizedOperator, count: int = 20, alpha: float = 1.0, seed: int = 0) -> np.ndarray:
    """Distance functions ``s -> dist(s, s_j)^alpha`` to ``count`` fixed states.

    Each has ``v_alpha <= 1`` by the triangle inequality; the first probe is
    the constant function.
    """
    gen = np.random.default_rng(seed)
    n = op.n_states
    D_past = op.past_distance()
    centers = gen.choice(n, size=min(count - 1, n), replace=False)
    probes = [np.ones(n)]
    allstates = np.arange(n)
    for c in centers:
        probes.append(state_distance(op, allstates, np.full(n, c), D_past) ** alpha)
    return np.stack(probes, axis=1)


@dataclass(frozen=True)
class MixingReport:
    sigma0: float
    deviations: np.ndarray
    r_squared: float
    fit_window: tuple[int, int]
    floor_hit: bool
    note: str = ""


def mixing_rate(op: DiscretizedOperator, probes: np.ndarray | None = None, nmax: int = 40,
                stationary: np.ndarray | None = None, floor: float = 1e-14,
                fit_floor: float = 1e-9) -> MixingReport:
    """Fit ``sup_probes ||Q^n phi - int phi dm||_inf ~ C sigma0^n``.

    The fit uses the later part of the range where deviations stay above
    ``fit_floor``; below it the error of the stationary vector and rounding
    noise bend the curve.
    """
    m = np.asarray(stationary if stationary is not None else stationary_measure(op, tol=1e-14).measure)
    P = holder_probes(op) if probes is None else np.asarray(probes, float)
    if P.ndim == 1:
        P = P[:, None]
    means = m @ P
    dev = np.empty(nmax + 1)
    cur = P.copy()
    for k in range(nmax + 1):
        dev[k] = float(np.max(np.abs(cur - means[None, :])))
        cur = op.apply(cur)
    scale = max(1.0, float(np.max(np.abs(P))))
    usable = np.flatnonzero(dev > fit_floor * scale)
    floor_hit = bool(np.any(dev[1:] < floor * scale))
    if usable.size == 0 or dev.max() <= floor * scale:
        return MixingReport(0.0, dev, 1.0, (0, 0), True, "identically zero deviation")
    last = int(usable[-1]) if np.all(np.diff(usable) == 1) else int(usable[np.argmax(np.diff(usable) > 1)])
    first = max(1, last // 3)
    if last - first < 2:
        first, last = 0, max(last, 2)
    ns = np.arange(first, last + 1)
    y = np.log(np.maximum(dev[ns], 1e-300))
    coef = np.polyfit(ns, y, 1)
    resid = y - np.polyval(coef, ns)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    note = "resolution floor reached; fit on usable prefix" if floor_hit else ""
    return MixingReport(float(math.exp(coef[0])), dev, r2, (int(first), int(last)), floor_hit, note)


def holder_seminorm(op: DiscretizedOperator, phi: np.ndarray, alpha: float, D: np.ndarray | None = None) -> np.ndarray:
    """Discrete ``v_alpha``: max difference quotient over all state pairs (per column)."""
    phi = np.asarray(phi, float)
    if phi.ndim == 1:
        phi = phi[:, None]
    if D is None:
        D = pairwise_state_distance(op)
    out = np.zeros(phi.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(D > 0, D ** (-alpha), 0.0)
    for j in range(phi.shape[1]):
        diff = np.abs(phi[:, j][:, None] - phi[:, j][None, :])
        out[j] = float(np.max(diff * W))
    return out


def pairwise_state_distance(op: DiscretizedOperator, max_states: int = 4000) -> np.ndarray:
    if op.n_states > max_states:
        raise BudgetError(f"{op.n_states} states exceed the pairwise budget {max_states}; use a coarser grid")
    idx = np.arange(op.n_states)
    I, J = np.meshgrid(idx, idx, indexing="ij")
    return state_distance(op, I.ravel(), J.ravel()).reshape(op.n_states, op.n_states)


@dataclass(frozen=True)
class LasotaYorkeReport:
    sigma: float
    C: float
    weak: bool
    table: list
    sigma_grid: np.ndarray
    C_grid: np.ndarray


def lasota_yorke_check(op: DiscretizedOperator, alpha: float, n_range=range(1, 9),
                       probes: np.ndarray | None = None,
                       sigma_grid: np.ndarray | None = None) -> LasotaYorkeReport:
    """Find ``(sigma, C)`` with ``v(Q^n phi) <= sigma^n v(phi) + C ||phi||_inf`` on the probes.

    For each ``sigma`` on the grid the smallest admissible ``C`` is computed
    exactly from the probe table.  The reported pair is the smallest
    ``sigma`` whose ``C`` is at most twice the ``C`` needed at the largest
    grid value, so the constant stays controlled.
    """
    P = holder_probes(op, 20, alpha) if probes is None else np.asarray(probes, float)
    if P.shape[1] < 20:
        raise ValidationError("need at least 20 probe functions")
    sigma_grid = np.linspace(0.01, 0.999, 100) if sigma_grid is None else np.asarray(sigma_grid)
    D = pairwise_state_distance(op)
    v0 = holder_seminorm(op, P, alpha, D)
    sup = np.max(np.abs(P), axis=0)
    ns = list(n_range)
    cur = P.copy()
    vn = {}
    for k in range(1, max(ns) + 1):
        cur = op.apply(cur)
        if k in ns:
            vn[k] = holder_seminorm(op, cur, alpha, D)
    C_grid = np.zeros(len(sigma_grid))
    for a, s in enumerate(sigma_grid):
        need = 0.0
        for k in ns:
            with np.errstate(invalid="ignore", divide="ignore"):
                q = np.where(sup > 0, (vn[k] - s**k * v0) / sup, 0.0)
            need = max(need, float(np.max(q)))
        C_grid[a] = max(need, 0.0)
    target = 2.0 * C_grid[-1] + 1e-12
    pick = int(np.flatnonzero(C_grid <= target)[0])
    sigma, C = float(sigma_grid[pick]), float(C_grid[pick])
    table = []
    for k in ns:
        for j in range(P.shape[1]):
            table.append({"n": k, "probe": j, "v_Qn": float(vn[k][j]),
                          "bound": float(sigma**k * v0[j] + C * sup[j])})
    return LasotaYorkeReport(sigma, C, sigma > 0.999, table, sigma_grid, C_grid)


def base_holder_constant(op: DiscretizedOperator, alpha: float) -> float:
    """``v_alpha(p) / (1 - 2^{-alpha})`` with ``v_alpha(p)`` from l1 differences of rows."""
    if op.n_cells != 1:
        raise ValidationError("base operator expected")
    probs = op.chain.prob
    D = op.past_distance()
    diff = np.abs(probs[:, None, :] - probs[None, :, :]).sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(D > 0, diff / D**alpha, 0.0)
    return float(q.max()) / (1 - 2.0 ** (-alpha))


# --------------------------------------------------------------------------
# tilted operators and the rate function


def perron_root(op: DiscretizedOperator, tol: float = 1e-14, max_iter: int = 100_000,
                start: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Top eigenvalue of a nonnegative operator by normalized power iteration."""
    x = np.ones(op.n_states) if start is None else np.asarray(start, float).copy()
    x /= x.sum()
    lam_prev = math.nan
    for _ in range(max_iter):
        y = op.apply(x)
        lam = float(y.sum())
        y /= lam
        if abs(lam - lam_prev) <= tol * lam and np.abs(y - x).sum() <= 1e3 * tol:
            return lam, y
        x, lam_prev = y, lam
    raise NumericalError(f"power iteration did not converge (last estimate {lam_prev:.12g})")


@dataclass(frozen=True)
class LdpResult:
    t: np.ndarray
    c: np.ndarray
    eps: np.ndarray
    c_star: np.ndarray
    center: float
    cell_diameter: float

    def second_differences(self) -> np.ndarray:
        return np.diff(self.c, 2)

    def derivative_at_zero(self) -> float:
        k = int(np.argmin(np.abs(self.t)))
        if k == 0 or k == len(self.t) - 1:
            raise ValidationError("t grid must contain interior points around 0")
        return float((self.c[k + 1] - self.c[k - 1]) / (self.t[k + 1] - self.t[k - 1]))


def furstenberg_integral(op: DiscretizedOperator, stationary: np.ndarray | None = None) -> float:
    """``int xi dm`` for the discrete stationary measure."""
    m = np.asarray(stationary if stationary is not None else stationary_measure(op).measure)
    return float(m @ op.xi)


def ldp_rate_function(A: MatrixCocycle, base: MarkovBase, grid: ProjectiveGrid | None = None,
                      t_grid=None, m_prime: int | None = None, center: float | None = None,
                      eps_grid=None) -> LdpResult:
    """``c(t) = log`` of the Perron root of the tilted operator and its Legendre transform.

    ``xi`` is centred by its integral against the discrete stationary
    measure unless ``center`` is given, so that ``c'(0) = 0`` for the
    discretized operator.  At ``t = 0`` the operator is stochastic (checked)
    and ``c(0) = 0``.
    """
    t_grid = np.linspace(-1, 1, 41) if t_grid is None else np.asarray(t_grid, float)
    if np.any(np.abs(t_grid) > 1 + 1e-12):
        raise ValidationError("t grid must satisfy |t| <= 1")
    op = build_fiber_operator(A, base, m_prime, grid)
    if center is None:
        center = furstenberg_integral(op)
    rs = op.row_sums()
    if np.max(np.abs(rs - 1)) > 1e-12:
        raise NumericalError("untilted operator is not stochastic")
    c = np.empty(len(t_grid))
    order = np.argsort(np.abs(t_grid), kind="stable")
    vec = None
    for k in order:
        t = t_grid[k]
        if t == 0:
            c[k] = 0.0
            continue
        lam, vec = perron_root(op.tilted(t, center), start=vec)
        c[k] = math.log(lam)
    if eps_grid is None:
        slopes = np.diff(c) / np.diff(t_grid)
        emax = float(np.max(np.abs(slopes))) if len(slopes) else 1.0
        eps_grid = np.linspace(-emax, emax, 41)
    eps_grid = np.asarray(eps_grid, float)
    c_star = np.max(t_grid[None, :] * eps_grid[:, None] - c[None, :], axis=1)
    return LdpResult(t_grid, c, eps_grid, c_star, float(center),
                     op.grid.diameter if op.grid is not None else 0.0)
