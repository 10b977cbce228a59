"""Named, splittable random streams.

A stream is identified by ``(master_seed, experiment, replica)``. The replica
index, never the worker that happens to run it, selects the stream, so results
do not depend on scheduling.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StreamId:
    master_seed: int
    experiment: str = ""
    replica: int = 0

    def as_dict(self) -> dict:
        return {"master_seed": self.master_seed, "experiment": self.experiment,
                "replica": self.replica}


def _experiment_key(experiment: str) -> int:
    return zlib.crc32(experiment.encode("utf-8"))


def stream(master_seed: int, experiment: str = "", replica: int = 0) -> np.random.Generator:
    """Counter-based Philox generator for one named substream."""
    if master_seed < 0 or replica < 0:
        raise ValueError("seed and replica must be nonnegative")
    seq = np.random.SeedSequence(int(master_seed),
                                 spawn_key=(_experiment_key(experiment), int(replica)))
    return np.random.Generator(np.random.Philox(seq))


def stream_for(sid: StreamId) -> np.random.Generator:
    return stream(sid.master_seed, sid.experiment, sid.replica)


def as_generator(rng: "np.random.Generator | int | None") -> np.random.Generator:
    """Accept a Generator, an integer seed, or None (seed 0)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))


@dataclass(frozen=True)
class Streams:
    """Plan for splitting ``n`` samples into fixed-size blocks of named substreams.

    Block ``i`` always uses replica ``i``, so the concatenated output depends
    only on ``(master_seed, experiment, block_size)`` and never on ``workers``.
    """

    master_seed: int
    experiment: str = ""
    block_size: int = 4096
    workers: int = 1

    def blocks(self, n: int) -> list[tuple[int, int]]:
        out, i, start = [], 0, 0
        while start < n:
            size = min(self.block_size, n - start)
            out.append((i, size))
            i, start = i + 1, start + size
        return out


def _run_block(sampler, seed: int, experiment: str, replica: int, size: int, kwargs: dict):
    return sampler(n=size, rng=stream(seed, experiment, replica), **kwargs)


def _concat(parts: list):
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[j] for p in parts]) for j in range(len(parts[0])))
    return np.concatenate(parts)


def draw(sampler, n: int, rng, **kwargs):
    """Call ``sampler(n=..., rng=..., **kwargs)`` once, or once per block of a plan.

    ``rng`` may be a Generator, an integer seed, None, or a :class:`Streams`
    plan. With a plan and ``workers > 1`` the blocks run in worker processes;
    the sampler must then be a module-level function.
    """
    if not isinstance(rng, Streams):
        return sampler(n=n, rng=as_generator(rng), **kwargs)
    blocks = rng.blocks(n)
    if rng.workers <= 1 or len(blocks) == 1:
        parts = [_run_block(sampler, rng.master_seed, rng.experiment, i, size, kwargs)
                 for i, size in blocks]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=rng.workers) as pool:
            futs = [pool.submit(_run_block, sampler, rng.master_seed, rng.experiment, i, size,
                                kwargs) for i, size in blocks]
            parts = [f.result() for f in futs]
    return _concat(parts)


def seed_record(rng) -> dict:
    if isinstance(rng, Streams):
        return {"master_seed": rng.master_seed, "experiment": rng.experiment,
                "block_size": rng.block_size}
    if isinstance(rng, (int, np.integer)) or rng is None:
        return {"master_seed": 0 if rng is None else int(rng)}
    return {"generator": type(rng.bit_generator).__name__}
