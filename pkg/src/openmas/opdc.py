"""Open proportional dynamic consensus: update law, fixed points, contraction.

Remaining agents follow proportional tracking of their reference plus
Laplacian diffusion over the current graph; arriving agents start at their
own reference value; departing agents are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dyn_graph import GraphSnapshot
from .errors import InvalidInputError
from .open_state import OpenVector

__all__ = [
    "OpdcParams",
    "StepInput",
    "step",
    "build_p_matrix",
    "compute_tpi",
    "contraction_factor",
    "degree_bound_ok",
    "pdc_run",
]


@dataclass(frozen=True)
class OpdcParams:
    """Diffusion gain ``epsilon`` and proportional gain ``alpha``."""

    epsilon: float
    alpha: float

    def __post_init__(self) -> None:
        eps, alpha = float(self.epsilon), float(self.alpha)
        if not (math.isfinite(eps) and eps > 0):
            raise InvalidInputError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < alpha < 0.5:
            raise InvalidInputError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "alpha", alpha)

    @property
    def gamma(self) -> float:
        """Contraction factor guaranteed under the degree bound."""
        return 1.0 - self.alpha

    @property
    def max_degree(self) -> float:
        return 1.0 / (2.0 * self.epsilon)


@dataclass(frozen=True, eq=False)
class StepInput:
    """Graphs and references on both sides of one transition ``k -> k+1``."""

    g_now: GraphSnapshot
    u_now: OpenVector
    g_next: GraphSnapshot
    u_next: OpenVector

    def __post_init__(self) -> None:
        if not self.u_now.same_support(self.g_now.nodes):
            raise InvalidInputError("u_now support differs from the nodes of g_now")
        if not self.u_next.same_support(self.g_next.nodes):
            raise InvalidInputError("u_next support differs from the nodes of g_next")

    @cached_property
    def remaining(self) -> np.ndarray:
        return np.intersect1d(self.g_now.nodes, self.g_next.nodes, assume_unique=True)

    @cached_property
    def departing(self) -> np.ndarray:
        return np.setdiff1d(self.g_now.nodes, self.g_next.nodes, assume_unique=True)

    @cached_property
    def arriving(self) -> np.ndarray:
        return np.setdiff1d(self.g_next.nodes, self.g_now.nodes, assume_unique=True)


def _laplacian_apply(g: GraphSnapshot, x: np.ndarray) -> np.ndarray:
    # (L x)_v = sum over neighbours w of (x_v - x_w)
    i, j = g.edge_positions
    diff = x[i] - x[j]
    return np.bincount(i, weights=diff, minlength=g.n) - np.bincount(j, weights=diff, minlength=g.n)


def step(x: OpenVector, inp: StepInput, p: OpdcParams) -> OpenVector:
    """Advance the state by one transition.

    Args:
        x: state on ``inp.g_now.nodes``.
        inp: graphs and references at ``k`` and ``k+1``.
        p: gains.

    Returns:
        The state on ``inp.g_next.nodes``.  Remaining agents use only
        time-``k`` data; arriving agents copy ``u_next``.
    """
    g = inp.g_now
    if not x.same_support(g.nodes):
        raise InvalidInputError("state support differs from the nodes of g_now")
    xv = x.values
    updated = xv - p.alpha * (xv - inp.u_now.values) - p.epsilon * _laplacian_apply(g, xv)

    nxt = inp.g_next.nodes
    if nxt is g.nodes or np.array_equal(nxt, g.nodes):
        return OpenVector(inp.g_next.nodes, updated)
    out = np.array(inp.u_next.values, dtype=np.float64)
    pos = np.searchsorted(g.nodes, nxt)
    pos_clipped = np.minimum(pos, g.n - 1)
    stays = g.nodes[pos_clipped] == nxt
    out[stays] = updated[pos_clipped[stays]]
    return OpenVector(inp.g_next.nodes, out)


def build_p_matrix(g: GraphSnapshot, p: OpdcParams) -> np.ndarray:
    """``(1 - alpha) I - epsilon L`` in ascending label order."""
    if g.n == 0:
        raise InvalidInputError("graph has no nodes")
    return (1.0 - p.alpha) * np.eye(g.n) - p.epsilon * g.laplacian_array


def _tpi_factor(g: GraphSnapshot, p: OpdcParams):
    key = ("tpi_cholesky", p.epsilon / p.alpha)
    fac = g.memo.get(key)
    if fac is None:
        m = np.eye(g.n) + (p.epsilon / p.alpha) * g.laplacian_array
        fac = cho_factor(m, lower=True, check_finite=False)
        g.memo[key] = fac
    return fac


def compute_tpi(g: GraphSnapshot, u: OpenVector, p: OpdcParams) -> OpenVector:
    """Fixed point of the frozen-at-``k`` dynamics.

    Solves ``(I + (epsilon/alpha) L) x = u`` by Cholesky factorization; the
    factor is cached on the graph so repeated solves on an unchanged
    topology cost one triangular solve pair.
    """
    if g.n == 0:
        raise InvalidInputError("graph has no nodes")
    if not u.same_support(g.nodes):
        raise InvalidInputError("reference support differs from graph nodes")
    sol = cho_solve(_tpi_factor(g, p), u.values, check_finite=False)
    return OpenVector(g.nodes, sol)


def contraction_factor(g: GraphSnapshot, p: OpdcParams) -> float:
    """Spectral norm of ``P = (1 - alpha) I - epsilon L``.

    ``P`` is symmetric, so its norm is the largest absolute eigenvalue,
    attained at either the smallest or the largest Laplacian eigenvalue.
    """
    if g.n == 0:
        raise InvalidInputError("graph has no nodes")
    lam = g.spectrum
    base = 1.0 - p.alpha
    return max(abs(base - p.epsilon * float(lam[0])), abs(base - p.epsilon * float(lam[-1])))


def degree_bound_ok(g: GraphSnapshot, p: OpdcParams) -> bool:
    """Whether every degree is at most ``1 / (2 epsilon)``."""
    return g.max_degree <= p.max_degree


def pdc_run(
    g: GraphSnapshot, u: OpenVector, x0: OpenVector, p: OpdcParams, horizon: int
) -> list[OpenVector]:
    """Fixed-membership iteration ``x <- P x + alpha u``; returns ``horizon + 1`` states."""
    if horizon < 1:
        raise InvalidInputError("horizon must be positive")
    if not (u.same_support(g.nodes) and x0.same_support(g.nodes)):
        raise InvalidInputError("u and x0 must both live on the graph's nodes")
    inp = StepInput(g, u, g, u)
    states = [x0]
    x = x0
    for _ in range(horizon):
        x = step(x, inp, p)
        states.append(x)
    return states
