"""
Scripted random source for tests.

ScriptedRng replays a fixed list of draws so a test can force the decisions
an augmentation makes (which op, which sign, which branch). `split` and
`spawn` hand back the same script unless explicit children are given.
"""

import numpy as np


class ScriptedRng:
    def __init__(self, draws=(), spawned=(), children=None, seed=0):
        self.seed = seed
        self._draws = list(draws)
        self._spawned = list(spawned)
        self._children = children

    @property
    def remaining(self) -> int:
        return len(self._draws)

    def _next(self, what):
        if not self._draws:
            raise AssertionError(f"scripted draws exhausted at {what}()")
        return self._draws.pop(0)

    def uniform(self) -> float:
        return float(self._next("uniform"))

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def integer(self, n: int) -> int:
        value = int(self._next("integer"))
        assert 0 <= value < n, f"scripted integer {value} outside [0, {n})"
        return value

    def sign(self) -> int:
        value = int(self._next("sign"))
        assert value in (-1, 1), f"scripted sign {value} is not +-1"
        return value

    def split(self, index: int):
        if self._children is not None:
            return self._children(index)
        return self

    def spawn(self):
        if self._spawned:
            return self._spawned.pop(0)
        return self
