import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """
    Counter-based random stream keyed by (seed, stream_id).

    Backed by numpy's Philox generator, whose 128-bit key is exactly the pair, so equal pairs
    replay the same sequence and distinct stream ids give independent sequences.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def split(self, *path: int | str) -> "RngStream":
        """Child stream identified by `path` (ints or short labels such as "final")."""
        words = [self.seed, self.stream_id] + [_as_word(p) for p in path]
        child_id = np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0]
        return RngStream(self.seed, int(child_id))

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _as_word(part: int | str) -> int:
    if isinstance(part, str):
        return int.from_bytes(part.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    return int(part) & _MASK64
