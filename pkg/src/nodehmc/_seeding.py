import hashlib

import numpy as np


def derive_seed(master, *keys):
    """Stable 63-bit seed from a master seed and arbitrary hashable keys.

    Python's ``hash`` is salted per process, so this goes through sha256 to stay
    reproducible across runs and worker processes.
    """
    h = hashlib.sha256(str(int(master)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def rng_for(master, *keys):
    return np.random.default_rng(derive_seed(master, *keys))
