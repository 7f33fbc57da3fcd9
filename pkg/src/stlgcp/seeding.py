"""Deterministic sub-seed derivation for replicated simulations."""

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Seed for replicate ``path`` of ``master``: splitmix64 applied along the path.

    ``derive_seed(s, q)`` is the seed of replicate ``q``; ``derive_seed(s, q, k)``
    the ``k``-th retry of that replicate, and so on.
    """
    state = splitmix64(int(master) & _MASK)
    for step in path:
        state = splitmix64(state ^ splitmix64(int(step) & _MASK))
    return state
