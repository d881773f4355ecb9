"""Worker fan-out for experience collection.

One global seed feeds every stream: worker `w` of iteration `i` in stage `s`
draws from SeedSequence(seed, spawn_key=(s, i, w)). Training loops that run
inside one another (a warm start before the main loop) use distinct stages.
Buffers come back in worker order, so a run depends only on the seed and the
worker count.
"""

import numpy as np
from joblib import Parallel, delayed


def worker_seed(seed, iteration, worker, stage=0):
    return np.random.SeedSequence(int(seed), spawn_key=(int(stage), int(iteration), int(worker)))


def worker_rng(seed, iteration, worker, stage=0):
    return np.random.default_rng(worker_seed(seed, iteration, worker, stage))


def split_budget(total, num_workers):
    """Per-worker sample counts that add up to `total`; earlier workers take the remainder."""
    base, extra = divmod(int(total), int(num_workers))
    return [base + (1 if w < extra else 0) for w in range(num_workers)]


def run_workers(function, payloads, num_workers):
    """function(*payload) for every payload, results in payload order."""
    payloads = list(payloads)
    if num_workers <= 1 or len(payloads) <= 1:
        return [function(*payload) for payload in payloads]
    return Parallel(n_jobs=num_workers)(delayed(function)(*payload) for payload in payloads)
