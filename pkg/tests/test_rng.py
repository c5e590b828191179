import numpy as np

from itomap.rng import Stream, as_generator, path_generator


def test_same_seed_path_and_stream_reproduce():
    a = path_generator(7, 11, Stream.CHAIN).standard_normal(5)
    b = path_generator(7, 11, Stream.CHAIN).standard_normal(5)
    assert np.array_equal(a, b)


def test_streams_and_paths_are_distinct():
    draws = {
        (p, s): path_generator(7, p, s).standard_normal(3).tobytes() for p in range(3) for s in Stream
    }
    assert len(set(draws.values())) == len(draws)


def test_as_generator_is_stateless_for_integer_seeds():
    a = as_generator(5, Stream.IMPULSE, 3).random(4)
    b = as_generator(5, Stream.IMPULSE, 3).random(4)
    assert np.array_equal(a, b)


def test_as_generator_passes_generators_through():
    g = np.random.default_rng(0)
    assert as_generator(g, Stream.BROWNIAN) is g
