import numpy as np
import pytest

from gmclab.rng import Streams, as_generator, draw, seed_record, stream


def _sampler(n, rng, scale=1.0):
    return scale * rng.standard_normal(n)


def _pair_sampler(n, rng):
    return rng.random(n), rng.integers(0, 10, n)


def test_stream_reproducible():
    a = stream(7, "x", 3).random(5)
    b = stream(7, "x", 3).random(5)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("other", [(8, "x", 3), (7, "y", 3), (7, "x", 4)])
def test_streams_distinct(other):
    assert not np.array_equal(stream(7, "x", 3).random(5), stream(*other).random(5))


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        stream(-1)


def test_as_generator_variants():
    g = np.random.default_rng(1)
    assert as_generator(g) is g
    assert np.array_equal(as_generator(3).random(3), stream(3).random(3))
    assert np.array_equal(as_generator(None).random(3), stream(0).random(3))


def test_blocks_cover_n():
    plan = Streams(1, "e", block_size=10)
    blocks = plan.blocks(35)
    assert [s for _, s in blocks] == [10, 10, 10, 5]
    assert [i for i, _ in blocks] == [0, 1, 2, 3]


def test_draw_independent_of_workers():
    a = draw(_sampler, 50, Streams(3, "w", block_size=8, workers=1), scale=2.0)
    b = draw(_sampler, 50, Streams(3, "w", block_size=8, workers=3), scale=2.0)
    assert np.array_equal(a, b)
    assert a.shape == (50,)


def test_draw_tuples():
    x, k = draw(_pair_sampler, 20, Streams(0, "t", block_size=7))
    assert x.shape == k.shape == (20,)


def test_draw_plain_generator():
    assert np.array_equal(draw(_sampler, 4, 9), stream(9).standard_normal(4))


def test_seed_record():
    assert seed_record(Streams(5, "a", 100)) == {"master_seed": 5, "experiment": "a",
                                                 "block_size": 100}
    assert seed_record(4) == {"master_seed": 4}
    assert seed_record(stream(1))["generator"] == "Philox"
