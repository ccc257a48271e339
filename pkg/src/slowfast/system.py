"""Fast-slow system views: fast subsystem, full system at given eps, reduced flow."""

from __future__ import annotations

from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .dual import Dual
from .expr import compile_expressions
from .systemfile import SystemFile, load_system, parse_system_file

__all__ = ["FastSlowSystem"]


class FastSlowSystem:
    """A :class:`SystemFile` with bound parameters.

    Fast equations give ``f(x, y)``, slow equations ``g(x, y)``; on the fast time
    scale the full field is ``(f, eps*g)``.  Instances are immutable: use
    :meth:`with_params` to rebind.
    """

    def __init__(self, file: SystemFile, params: Mapping[str, float] | None = None):
        bound = dict(file.params)
        for k, v in (params or {}).items():
            if k not in bound:
                raise KeyError(f"unknown parameter {k!r}; declared: {sorted(bound)}")
            bound[k] = float(v)
        self.file = file
        self.params = MappingProxyType(bound)
        self.m = file.m
        self.n = file.n
        args = [file.fast, file.slow]
        self._f = compile_expressions(file.fast_eqs, args, bound)
        self._g = compile_expressions(file.slow_eqs, args, bound)

    @classmethod
    def load(cls, source: str, params: Mapping[str, float] | None = None) -> "FastSlowSystem":
        return cls(load_system(source), params)

    @classmethod
    def from_text(cls, text: str, params: Mapping[str, float] | None = None) -> "FastSlowSystem":
        return cls(parse_system_file(text), params)

    def with_params(self, **params: float) -> "FastSlowSystem":
        merged = dict(self.params)
        merged.update(params)
        return FastSlowSystem(self.file, merged)

    def __repr__(self) -> str:
        p = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"FastSlowSystem({self.file.name!r}, m={self.m}, n={self.n}{', ' + p if p else ''})"

    @property
    def names(self) -> tuple[str, ...]:
        return self.file.fast + self.file.slow

    @property
    def eps(self) -> float:
        return self.file.eps

    # -- raw right-hand sides ------------------------------------------------

    def f(self, x, y) -> np.ndarray:
        return np.array(self._f(x, y), dtype=float)

    def g(self, x, y) -> np.ndarray:
        return np.array(self._g(x, y), dtype=float)

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        return z[: self.m], z[self.m:]

    # -- views -----------------------------------------------------------------

    def fast_field(self, y) -> Callable[[np.ndarray], np.ndarray]:
        """Layer equations ``x' = f(x, y)`` with ``y`` frozen."""
        y = tuple(float(v) for v in np.atleast_1d(y))
        fn = self._f
        return lambda x: np.array(fn(x, y), dtype=float)

    def full_field(self, eps: float) -> Callable[[np.ndarray], np.ndarray]:
        """``z' = (f(x, y), eps*g(x, y))`` on the fast time scale."""
        eps = float(eps)
        if eps < 0:
            raise ValueError("eps must be non-negative")
        m, f, g = self.m, self._f, self._g

        def field(z):
            x, y = z[:m], z[m:]
            out = np.empty(len(z))
            out[:m] = f(x, y)
            out[m:] = g(x, y)
            out[m:] *= eps
            return out

        return field

    def slow_time_field(self, eps: float) -> Callable[[np.ndarray], np.ndarray]:
        """``(f/eps, g)``: the same system on the slow time scale."""
        eps = float(eps)
        if eps <= 0:
            raise ValueError("eps must be positive")
        m, f, g = self.m, self._f, self._g

        def field(z):
            x, y = z[:m], z[m:]
            out = np.empty(len(z))
            out[:m] = f(x, y)
            out[:m] /= eps
            out[m:] = g(x, y)
            return out

        return field

    # -- derivatives -----------------------------------------------------------

    def _seeded(self, x, direction) -> list:
        return [Dual(float(xi), float(di)) for xi, di in zip(x, direction)]

    def jacobian_fast(self, x, y) -> np.ndarray:
        """``D_x f`` (m x m), columns from one dual pass each."""
        x = np.asarray(x, dtype=float)
        y = tuple(float(v) for v in np.atleast_1d(y))
        J = np.empty((self.m, self.m))
        for j in range(self.m):
            e = np.zeros(self.m)
            e[j] = 1.0
            out = self._f(self._seeded(x, e), y)
            J[:, j] = [o.der if isinstance(o, Dual) else 0.0 for o in out]
        return J

    def slow_y_derivative(self, x, y) -> np.ndarray:
        """``D_y f`` (m x n)."""
        x = tuple(float(v) for v in np.atleast_1d(x))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        J = np.empty((self.m, self.n))
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = 1.0
            out = self._f(x, self._seeded(y, e))
            J[:, j] = [o.der if isinstance(o, Dual) else 0.0 for o in out]
        return J

    def jacobian_g(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """``(D_x g, D_y g)``."""
        x = np.asarray(x, dtype=float)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        Gx = np.empty((self.n, self.m))
        Gy = np.empty((self.n, self.n))
        for j in range(self.m):
            e = np.zeros(self.m)
            e[j] = 1.0
            Gx[:, j] = [o.der if isinstance(o, Dual) else 0.0 for o in self._g(self._seeded(x, e), tuple(y))]
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = 1.0
            Gy[:, j] = [o.der if isinstance(o, Dual) else 0.0 for o in self._g(tuple(x), self._seeded(y, e))]
        return Gx, Gy

    def second_fast_derivative(self, x, y, v) -> np.ndarray:
        """Quadratic form ``D_xx f (v, v)`` via one nested-dual pass."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        y = tuple(float(c) for c in np.atleast_1d(y))
        args = [Dual(Dual(xi, vi), Dual(vi, 0.0)) for xi, vi in zip(x, v)]
        out = self._f(args, y)
        res = []
        for o in out:
            d = o.der if isinstance(o, Dual) else 0.0
            res.append(d.der if isinstance(d, Dual) else 0.0)
        return np.array(res, dtype=float)

    # -- reduced flow ----------------------------------------------------------

    def slow_field(self, branch_solver: Callable[[np.ndarray], np.ndarray], y) -> np.ndarray:
        """``g(h(y), y)`` where ``h = branch_solver`` resolves the critical manifold."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.g(branch_solver(y), y)
