"""Catalog of the example cocycles used by tests, configs and the CLI.

Each entry returns ``(cocycle, base)``.  The numbers are fixed literals so
that the examples do not depend on any random generator.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .cocycle import MatrixCocycle
from .symbolic import MarkovBase


def rotation(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def fair_coin() -> MarkovBase:
    return MarkovBase.bernoulli([0.5, 0.5])


def sticky_chain() -> MarkovBase:
    return MarkovBase.chain([[0.9, 0.1], [0.2, 0.8]])


def diagonal():
    """``diag(3, 1/3)`` and ``diag(2, 1/2)`` over a fair coin."""
    A = MatrixCocycle.from_symbols([np.diag([3.0, 1 / 3]), np.diag([2.0, 0.5])])
    return A, fair_coin()


def scalar():
    """One-dimensional cocycle ``a(0) = 2``, ``a(1) = 1/2`` over a fair coin."""
    return MatrixCocycle.from_symbols([[[2.0]], [[0.5]]]), fair_coin()


def constant_hyperbolic():
    """The constant matrix ``[[3, -1], [1, 0]]`` (trace 3)."""
    return MatrixCocycle.constant([[3.0, -1.0], [1.0, 0.0]], 2), fair_coin()


def rotations():
    """Two rotations; the projective action is an isometry."""
    A = MatrixCocycle.from_symbols([rotation(1.0), rotation(math.sqrt(2.0))])
    return A, fair_coin()


def depth_two_bunched():
    """Near-conformal depth-2 cocycle, fiber bunched at ``N = 1`` for ``alpha = 1``."""
    gens = np.array([
        [[0.9978, 0.0682], [-0.0626, 0.7942]],
        [[0.9357, -0.1532], [0.0093, 1.2131]],
        [[0.8749, -0.1527], [0.1206, 1.0839]],
        [[1.0235, -0.2174], [-0.0068, 1.1614]],
    ])
    return MatrixCocycle(gens, 2, depth=2, lead=0, alpha=1.0), fair_coin()


def future_dependent():
    """Cocycle reading ``x_0, x_1, x_2`` (depth 1, lead 2) over the sticky chain."""
    gens = np.array([
        [[0.8863, -0.0375], [-0.156, 0.8908]],
        [[0.8176, -0.0239], [-0.1287, 1.0321]],
        [[1.0175, -0.0178], [-0.2391, 0.9514]],
        [[0.9905, 0.0169], [-0.2283, 0.9264]],
        [[0.8686, -0.097], [0.1273, 0.8891]],
        [[0.9784, 0.203], [-0.1339, 0.9603]],
        [[1.021, 0.0132], [-0.2528, 1.0139]],
        [[1.155, -0.1877], [0.1042, 1.0046]],
    ])
    return MatrixCocycle(gens, 2, depth=1, lead=2, alpha=1.0), sticky_chain()


TYPICAL_STRETCH = 1.4


def typical_sl2():
    """Two rotated hyperbolic SL(2) matrices over a fair coin.

    ``A(0) = D R(5 pi/6)`` and ``A(1) = R(pi/12) D R(pi/12)`` with
    ``D = diag(1.4, 1/1.4)``.  Fiber bunched at ``N = 1`` for ``alpha = 1``
    (``1.4^2 / 2 < 1``); the average quarter-Hölder contraction of the
    eighth power is below one.
    """
    D = np.diag([TYPICAL_STRETCH, 1 / TYPICAL_STRETCH])
    p = math.pi / 12
    A0 = D @ rotation(10 * p)
    A1 = rotation(p) @ D @ rotation(p)
    return MatrixCocycle.from_symbols([A0, A1], alpha=1.0), fair_coin()


def schrodinger_base() -> MarkovBase:
    return fair_coin()


SCHRODINGER_POTENTIAL = (1.0, 2.0)

CATALOG: dict[str, Callable] = {
    "diagonal": diagonal,
    "scalar": scalar,
    "constant_hyperbolic": constant_hyperbolic,
    "rotations": rotations,
    "depth_two_bunched": depth_two_bunched,
    "future_dependent": future_dependent,
    "typical_sl2": typical_sl2,
}

BASES: dict[str, Callable[[], MarkovBase]] = {
    "fair_coin": fair_coin,
    "sticky_chain": sticky_chain,
}


def load(name: str):
    from .errors import ValidationError

    try:
        return CATALOG[name]()
    except KeyError:
        raise ValidationError(f"unknown shipped example {name!r}; choose from {sorted(CATALOG)}") from None
