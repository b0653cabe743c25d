"""Seed splitting for independent, reproducible replication streams."""

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for stream ``index`` under ``master_seed``.

    ``splitmix64(splitmix64(master) ^ index)``: stream ``i`` depends only on
    the pair, so appending replications never changes earlier ones.
    """
    if index < 0:
        raise ValueError("index must be >= 0")
    return splitmix64(splitmix64(int(master_seed) & _MASK64) ^ (int(index) & _MASK64))
