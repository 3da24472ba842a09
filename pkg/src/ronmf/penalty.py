"""
Non-convex penalties and their proximal maps.

phi() evaluates the penalty phi_sigma, prox() the closed-form thresholding
rule returned for 1/2 (x - v)^2 + phi_sigma(x). Both work elementwise on
arrays; the *_scalar variants wrap them for single values. prox_row() and
prox_rows() lift the scalar rule to the row-wise l2,phi structure: a row keeps
its direction and its norm goes through the scalar map.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .errors import ContractViolation
from .models import PenaltyKind, PenaltySpec


@dataclass(frozen=True)
class ProxResult:
    """
    Result of a scalar proximal step.

    Attributes:
        value: The thresholded value x*
        objective: 1/2 (x* - v)^2 + phi_sigma(x*)
    """
    value: float
    objective: float


def _scale(spec: PenaltySpec) -> float:
    if spec.sigma is None:
        raise ContractViolation("penalty scale is unresolved; call resolve_sigma() first")
    return spec.sigma


def phi(spec: PenaltySpec, x: ArrayLike) -> np.ndarray:
    """Evaluate phi_sigma elementwise. The result is even in x and phi(0) = 0."""
    a = np.abs(np.asarray(x, dtype=np.float64))
    s = _scale(spec)

    if spec.kind is PenaltyKind.MCP:
        tau = spec.tau
        return np.where(a <= s * tau, s * a - a * a / (2.0 * tau), s * s * tau / 2.0)

    if spec.kind is PenaltyKind.SCAD:
        tau = spec.tau
        middle = (s * tau * a - 0.5 * (a * a + s * s)) / (tau - 1.0)
        return np.select([a <= s, a <= s * tau], [s * a, middle], s * s * (tau + 1.0) / 2.0)

    gamma = spec.gamma
    return s / (1.0 - np.exp(-gamma)) * (1.0 - np.exp(-gamma * a))


def prox(spec: PenaltySpec, v: ArrayLike) -> np.ndarray:
    """
    Apply the closed-form proximal map elementwise.

    Branch conditions use <= on the lower branch, so a value on a boundary is
    resolved by the lower formula.
    """
    v = np.asarray(v, dtype=np.float64)
    a = np.abs(v)
    sign = np.sign(v)
    s = _scale(spec)

    if spec.kind is PenaltyKind.MCP:
        tau = spec.tau
        shrunk = sign * np.minimum(tau * (a - s) / (tau - 1.0), a)
        return np.select([a <= s, a <= s * tau], [np.zeros_like(v), shrunk], v)

    if spec.kind is PenaltyKind.SCAD:
        tau = spec.tau
        soft = sign * (a - s)
        firm = sign * np.minimum(((tau - 1.0) * a - s * tau) / (tau - 2.0), a)
        return np.select([a <= s, a <= 2.0 * s, a <= s * tau], [np.zeros_like(v), soft, firm], v)

    gamma = spec.gamma
    shifted = sign * (a - s / gamma)
    return np.select([a <= s, a <= s * (1.0 + 1.0 / gamma)], [np.zeros_like(v), shifted], v)


def phi_value(spec: PenaltySpec, x: float) -> float:
    """Return phi_sigma(x) for a single value."""
    return float(phi(spec, x))


def prox_scalar(spec: PenaltySpec, v: float) -> ProxResult:
    """Return the proximal point of v together with its objective value."""
    value = float(prox(spec, v))
    return ProxResult(value=value, objective=0.5 * (value - v) ** 2 + phi_value(spec, value))


def prox_row(spec: PenaltySpec, v: ArrayLike) -> np.ndarray:
    """Shrink a vector along its own direction; the zero vector maps to itself."""
    v = np.asarray(v, dtype=np.float64)
    return prox_rows(spec, v.reshape(1, -1)).reshape(v.shape)


def prox_rows(spec: PenaltySpec, V: np.ndarray) -> np.ndarray:
    """Apply prox_row to every row of V."""
    norms = np.linalg.norm(V, axis=1)
    shrunk = prox(spec, norms)
    scale = np.divide(shrunk, norms, out=np.zeros_like(norms), where=norms > 0)
    return V * scale[:, None]


def structured_norm(spec: PenaltySpec, E: np.ndarray) -> float:
    """Return the l2,phi value: the sum of phi over the l2 norms of E's rows."""
    return float(np.sum(phi(spec, np.linalg.norm(E, axis=1))))
