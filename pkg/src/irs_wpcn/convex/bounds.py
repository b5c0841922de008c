"""First-order bounds used to convexify the throughput subproblems.

Each function also has its exact counterpart here so the bounds can be
checked pointwise.
"""

from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)


def interference_log(p: np.ndarray, b: np.ndarray, sigma2: float, i: int) -> float:
    """``log2(sum_{k != i} p_k b_k + sigma2)``."""
    mask = np.arange(len(p)) != i
    return float(np.log2(np.sum(p[mask] * b[mask]) + sigma2))


def interference_log_ub(p: np.ndarray, p_t: np.ndarray, b: np.ndarray, sigma2: float, i: int) -> float:
    """Tangent of :func:`interference_log` at ``p_t``; a global upper bound."""
    mask = np.arange(len(p)) != i
    base = np.sum(p_t[mask] * b[mask]) + sigma2
    return float(np.log2(base) + np.sum(b[mask] * (p[mask] - p_t[mask])) / (base * LN2))


def energy_quadratic(v: np.ndarray, C: np.ndarray) -> float:
    """``v^T C v^*`` for Hermitian PSD C."""
    return float(np.real(v @ C @ v.conj()))


def energy_lb(v: np.ndarray, v_t: np.ndarray, C: np.ndarray) -> float:
    """``2 Re{v_t^T C v^*} - v_t^T C v_t^*``; below :func:`energy_quadratic`, tight at ``v_t``."""
    return float(2 * np.real(v_t @ C @ v.conj()) - np.real(v_t @ C @ v_t.conj()))


def quad_over_lin(v: np.ndarray, z: float, B: np.ndarray) -> float:
    """``v^H B v / z`` for z > 0."""
    return float(np.real(v.conj() @ B @ v)) / z


def quad_over_lin_lb(v: np.ndarray, z: float, v_t: np.ndarray, z_t: float, B: np.ndarray) -> float:
    """``2 Re{v_t^H B v} / z_t - (v_t^H B v_t) z / z_t^2``; tight at ``(v_t, z_t)``."""
    return float(2 * np.real(v_t.conj() @ B @ v) / z_t - np.real(v_t.conj() @ B @ v_t) * z / z_t**2)
