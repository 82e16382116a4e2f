import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocyclelab import rng
from cocyclelab.config import expand_range, resolve
from cocyclelab.errors import ValidationError


@given(st.integers(0, 2**63 - 1), st.integers(0, 10), st.integers(0, 10))
def test_streams_are_reproducible_and_keyed(seed, a, b):
    x = rng.stream(seed, a, b).random(4)
    np.testing.assert_array_equal(x, rng.stream(seed, a, b).random(4))
    assert not np.array_equal(x, rng.stream(seed, a, b + 1).random(4))


def test_resolve_seed():
    assert rng.resolve_seed(7) == 7
    assert 0 <= rng.resolve_seed(None) < 2**63
    with pytest.raises(ValueError):
        rng.resolve_seed(-1)


@given(st.integers(1, 40), st.integers(1, 8))
def test_run_blocks_order_independent_of_threads(n, threads):
    assert rng.run_blocks(lambda b: b * b, n, threads) == [b * b for b in range(n)]


@given(st.integers(0, 10_000), st.integers(1, 2048))
def test_block_sizes_partition(total, block):
    sizes = rng.block_sizes(total, block)
    assert sum(sizes) == total and all(0 < s <= block for s in sizes)


def test_expand_range():
    assert expand_range({"min": 1e-3, "max": 1e-1, "count": 3}) == pytest.approx([1e-3, 1e-2, 1e-1])
    assert expand_range({"min": 0, "max": 1, "count": 3}, log=False) == [0.0, 0.5, 1.0]
    assert expand_range(0.2) == [0.2]
    with pytest.raises(ValidationError):
        expand_range({"min": 0, "max": 1, "count": 3})


def test_resolve_flags_override_file():
    raw = {"seed": 3, "threads": 2, "cocycle": {"shipped": "scalar"}}
    cfg = resolve(raw, "lyapunov", seed=11, threads=1)
    assert cfg.seed == 11 and cfg.threads == 1 and not cfg.seed_generated
    assert cfg.params["n"] == 100_000
    with pytest.raises(ValidationError):
        resolve({"seed": -4, "cocycle": {"shipped": "scalar"}}, "lyapunov")
    with pytest.raises(ValidationError, match="symbols"):
        resolve({"cocycle": {"shipped": "scalar"}, "base": {"bernoulli": [0.2, 0.3, 0.5]}}, "lyapunov")
    with pytest.raises(ValidationError, match="not 'clt'"):
        resolve({"experiment": "ldt", "cocycle": {"shipped": "scalar"}}, "clt")
