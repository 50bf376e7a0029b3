"""Counter-based seed fan-out so that episode ``i`` is reproducible alone."""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def episode_seed(master: int, index: int) -> int:
    return splitmix64((splitmix64(master & MASK64) + index * GOLDEN) & MASK64)


def episode_seeds(master: int, n: int, offset: int = 0) -> list[int]:
    return [episode_seed(master, offset + i) for i in range(n)]
