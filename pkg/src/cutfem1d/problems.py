"""Model problems for the heat equation on (0, 1) with homogeneous Dirichlet data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class SmoothFunction:
    """A function of x with derivative callables, used for projections and norms."""

    value: Callable[[Array], Array]
    derivative: Callable[[Array], Array]
    second: Optional[Callable[[Array], Array]] = None

    def __call__(self, x):
        return self.value(x)

    def check_derivatives(self, points, step: float = 1e-6) -> float:
        """Largest finite-difference mismatch of the supplied derivatives."""
        x = np.asarray(points, dtype=float)
        fd1 = (self.value(x + step) - self.value(x - step)) / (2 * step)
        err = np.max(np.abs(fd1 - self.derivative(x)))
        if self.second is not None:
            fd2 = (self.derivative(x + step) - self.derivative(x - step)) / (2 * step)
            err = max(err, np.max(np.abs(fd2 - self.second(x))))
        return float(err)


def sin2() -> SmoothFunction:
    """sin^2(pi x), the initial profile used throughout."""
    return SmoothFunction(
        lambda x: np.sin(np.pi * x) ** 2,
        lambda x: np.pi * np.sin(2 * np.pi * x),
        lambda x: 2 * np.pi**2 * np.cos(2 * np.pi * x),
    )


@dataclass(frozen=True)
class HeatProblem:
    name: str
    u0: Callable[[Array], Array]
    f: Optional[Callable[[Array, float], Array]] = None
    exact: Optional[Callable[[Array, float], Array]] = None

    @property
    def has_source(self) -> bool:
        return self.f is not None

    def exact_at(self, t: float) -> Optional[Callable[[Array], Array]]:
        if self.exact is None:
            return None
        return lambda x: self.exact(x, t)


def manufactured_problem() -> HeatProblem:
    """u = sin^2(pi x) exp(-t/2).

    u_t = -u/2 and u_xx = 2 pi^2 cos(2 pi x) exp(-t/2), so
    f = -sin^2(pi x) exp(-t/2)/2 - 2 pi^2 cos(2 pi x) exp(-t/2).
    """

    def exact(x, t):
        return np.sin(np.pi * x) ** 2 * np.exp(-t / 2)

    def f(x, t):
        e = np.exp(-t / 2)
        return -0.5 * np.sin(np.pi * x) ** 2 * e - 2 * np.pi**2 * np.cos(2 * np.pi * x) * e

    return HeatProblem("manufactured", lambda x: np.sin(np.pi * x) ** 2, f, exact)


def decay_problem() -> HeatProblem:
    """f = 0 with u0 = sin^2(pi x); the exact solution is a truncated sine series."""

    def exact(x, t):
        # sine series of sin^2(pi x); only odd modes are present
        j = np.arange(1, 400, 2)[:, None]
        c = -8.0 / (np.pi * j * (j**2 - 4))
        xs = np.asarray(x, dtype=float)
        terms = c * np.exp(-((j * np.pi) ** 2) * t) * np.sin(j * np.pi * xs.ravel()[None, :])
        return terms.sum(axis=0).reshape(xs.shape)

    return HeatProblem("decay", lambda x: np.sin(np.pi * x) ** 2, None, exact)


def zero_problem() -> HeatProblem:
    return HeatProblem("zero", lambda x: np.zeros_like(np.asarray(x, dtype=float)), None, lambda x, t: np.zeros_like(np.asarray(x, dtype=float)))


PROBLEMS = {
    "manufactured": manufactured_problem,
    "decay": decay_problem,
    "zero": zero_problem,
}
