import numpy as np

from cookiewalk import streams


def test_streams_are_deterministic():
    a = streams.stream(7, "walk", 3).random(5)
    b = streams.stream(7, "walk", 3).random(5)
    assert np.array_equal(a, b)


def test_streams_differ_by_tag_and_seed():
    base = streams.stream(7, "walk", 0).random(4)
    assert not np.array_equal(base, streams.stream(7, "walk", 1).random(4))
    assert not np.array_equal(base, streams.stream(8, "walk", 0).random(4))
    assert not np.array_equal(base, streams.stream(7, "regen", 0).random(4))


def test_block_sizes_cover_total():
    assert streams.block_sizes(10, 4) == [4, 4, 2]
    assert streams.block_sizes(8, 4) == [4, 4]
    assert streams.block_sizes(0, 4) == []


def test_map_blocks_order_independent_of_workers():
    def fn(i, lanes, rng):
        return rng.random(lanes)

    seq = streams.map_blocks(fn, 50_000, 3, tags=("t",), workers=1, block=4096)
    par = streams.map_blocks(fn, 50_000, 3, tags=("t",), workers=8, block=4096)
    assert all(np.array_equal(a, b) for a, b in zip(seq, par))


def test_extra_purpose_never_perturbs_existing_stream():
    # drawing for a new purpose tag must not change another purpose's stream
    before = streams.stream(11, "walk", 0).random(3)
    streams.stream(11, "mirror", 0).random(1000)
    after = streams.stream(11, "walk", 0).random(3)
    assert np.array_equal(before, after)
