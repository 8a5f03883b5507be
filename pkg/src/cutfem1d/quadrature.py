"""Quadrature rules on the reference interval (0, 1) and composite integration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

KINDS = ("gauss1", "gauss2", "gauss3", "lobatto3")


@dataclass(frozen=True)
class QuadRule:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def degree(self) -> int:
        """Highest polynomial degree integrated exactly."""
        base = self.kind.split("x")[0]
        if base == "lobatto3":
            return 3
        return 2 * int(base[-1]) - 1


def make_rule(kind: str) -> QuadRule:
    if kind == "lobatto3":
        nodes = np.array([0.0, 0.5, 1.0])
        weights = np.array([1.0, 4.0, 1.0]) / 6.0
    elif kind in ("gauss1", "gauss2", "gauss3"):
        x, w = np.polynomial.legendre.leggauss(int(kind[-1]))
        nodes = 0.5 * (x + 1.0)
        weights = 0.5 * w
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}; expected one of {KINDS}")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(kind, nodes, weights)


def composite(rule: QuadRule, parts: int) -> QuadRule:
    """``rule`` repeated on ``parts`` equal subintervals of (0, 1)."""
    if int(parts) != parts or parts < 1:
        raise ValueError(f"parts must be a positive integer, got {parts!r}")
    parts = int(parts)
    if parts == 1:
        return rule
    shift = np.arange(parts)[:, None]
    nodes = ((shift + rule.nodes) / parts).ravel()
    weights = np.tile(rule.weights / parts, parts)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(f"{rule.kind}x{parts}", nodes, weights)


GAUSS1 = make_rule("gauss1")
GAUSS2 = make_rule("gauss2")
GAUSS3 = make_rule("gauss3")
LOBATTO3 = make_rule("lobatto3")


def map_rule(segments, rule: QuadRule) -> tuple[np.ndarray, np.ndarray]:
    """Physical points and weights for every segment, shape (n_seg, n_q).

    ``segments`` is an (n_seg, 2) array of interval endpoints.
    """
    seg = np.asarray(segments, dtype=float).reshape(-1, 2)
    left = seg[:, :1]
    length = seg[:, 1:] - left
    return left + length * rule.nodes, length * rule.weights


def integrate(f: Callable[[np.ndarray], np.ndarray], segments, rule: QuadRule) -> float:
    """Composite integral of a vectorized ``f`` over a list of intervals."""
    seg = np.asarray(segments, dtype=float).reshape(-1, 2)
    if seg.shape[0] == 0:
        return 0.0
    x, w = map_rule(seg, rule)
    return float(np.sum(w * np.asarray(f(x), dtype=float)))
