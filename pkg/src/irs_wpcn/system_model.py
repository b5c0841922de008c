"""Physical-layer quantities and constraint checks for the three schemes.

Indices are 0-based throughout: WD/HAP ``k, i`` in ``0..K-1`` and phase
``j`` in ``0..J-1``. For the asynchronous scheme WD k harvests in phases
``0..k`` and transmits in phases ``k+1..K``; HAP i sends energy in phases
``0..i`` and decodes in ``i+1..K``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .channel_model import ChannelSet, ScenarioConfig, complex_to_pairs, pairs_to_complex

ALLOCATION_FORMAT = "irs-wpcn-allocation"
ALLOCATION_VERSION = 1


class ContractError(ValueError):
    """An index was used outside the scheme's masks, or shapes disagree."""


class Scheme(str, enum.Enum):
    ASY = "asy"
    TDMA = "tdma"
    SYN = "syn"


@dataclass(frozen=True)
class SchemeSpec:
    """Phase structure of a scheme as boolean masks of shape (K, J)."""

    kind: Scheme
    K: int

    @property
    def J(self) -> int:
        return 2 if self.kind is Scheme.SYN else self.K + 1

    @cached_property
    def _masks(self) -> dict[str, np.ndarray]:
        K, J = self.K, self.J
        kk = np.arange(K)[:, None]
        jj = np.arange(J)[None, :]
        if self.kind is Scheme.SYN:
            first = np.broadcast_to(jj == 0, (K, J)).copy()
            second = np.broadcast_to(jj == 1, (K, J)).copy()
            m = {"harvest": first, "hap_energy": first.copy(), "tx": second, "rx": second.copy()}
        else:
            m = {
                "harvest": jj <= kk,
                "hap_energy": jj <= kk,
                "tx": jj >= kk + 1,
                "rx": jj >= kk + 1,
            }
            if self.kind is Scheme.TDMA:
                m["tx"] = jj == kk + 1
                m["rx"] = jj == kk + 1
        for arr in m.values():
            arr.setflags(write=False)
        return m

    @property
    def harvest_mask(self) -> np.ndarray:
        return self._masks["harvest"]

    @property
    def hap_energy_mask(self) -> np.ndarray:
        return self._masks["hap_energy"]

    @property
    def tx_power_mask(self) -> np.ndarray:
        return self._masks["tx"]

    @property
    def rx_mask(self) -> np.ndarray:
        return self._masks["rx"]


def scheme_spec(kind: Scheme | str, K: int) -> SchemeSpec:
    return SchemeSpec(Scheme(kind), K)


@dataclass
class Allocation:
    """Decision variables of one scheme.

    Shapes: ``delta`` (J,), ``S`` (K, J, M, M), ``p`` (K, J), ``w`` (K, J, M),
    ``v`` (J, N+1). Entries outside the scheme masks are kept at zero.
    """

    scheme: SchemeSpec
    delta: np.ndarray
    S: np.ndarray
    p: np.ndarray
    w: np.ndarray
    v: np.ndarray

    def copy(self) -> "Allocation":
        return Allocation(
            self.scheme, self.delta.copy(), self.S.copy(), self.p.copy(), self.w.copy(), self.v.copy()
        )

    def to_dict(self) -> dict[str, Any]:
        K, J, M = self.w.shape
        return {
            "format": ALLOCATION_FORMAT,
            "version": ALLOCATION_VERSION,
            "scheme": self.scheme.kind.value,
            "dims": {"K": K, "J": J, "M": M, "N": self.v.shape[1] - 1},
            "delta": [float(x) for x in self.delta],
            "S": complex_to_pairs(self.S),
            "p": [float(x) for x in self.p.ravel()],
            "w": complex_to_pairs(self.w),
            "v": complex_to_pairs(self.v),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Allocation":
        if data.get("format") != ALLOCATION_FORMAT or data.get("version") != ALLOCATION_VERSION:
            raise ValueError("not a supported allocation record")
        d = data["dims"]
        K, J, M, N = d["K"], d["J"], d["M"], d["N"]
        return cls(
            scheme=scheme_spec(data["scheme"], K),
            delta=np.asarray(data["delta"], dtype=float),
            S=pairs_to_complex(data["S"], (K, J, M, M)),
            p=np.asarray(data["p"], dtype=float).reshape(K, J),
            w=pairs_to_complex(data["w"], (K, J, M)),
            v=pairs_to_complex(data["v"], (J, N + 1)),
        )


def empty_allocation(scheme: SchemeSpec, M: int, N: int) -> Allocation:
    """All-zero allocation with IRS off and canonical receivers."""
    K, J = scheme.K, scheme.J
    w = np.zeros((K, J, M), dtype=complex)
    w[..., 0] = scheme.rx_mask
    v = np.zeros((J, N + 1), dtype=complex)
    v[:, -1] = 1.0
    return Allocation(
        scheme,
        np.zeros(J),
        np.zeros((K, J, M, M), dtype=complex),
        np.zeros((K, J)),
        w,
        v,
    )


def _check_shapes(alloc: Allocation, channels: ChannelSet) -> None:
    K, J = alloc.scheme.K, alloc.scheme.J
    M, N = channels.M, channels.N
    expected = {
        "delta": (J,),
        "S": (K, J, M, M),
        "p": (K, J),
        "w": (K, J, M),
        "v": (J, N + 1),
    }
    for name, shape in expected.items():
        if getattr(alloc, name).shape != shape:
            raise ContractError(f"{name} has shape {getattr(alloc, name).shape}, expected {shape}")
    if channels.K != K:
        raise ContractError("allocation and channels disagree on K")


# ------------------------------------------------------------------ evaluations

def composite_gains(channels: ChannelSet, v: np.ndarray) -> np.ndarray:
    """``a[k, i, j] = Psi_{k,i} v_j``, shape (K, K, J, M)."""
    return np.einsum("kimn,jn->kijm", channels.psi, v)


def harvested_matrix(alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """Energy E[k, j] harvested by WD k in phase j (zero outside the mask)."""
    sc = alloc.scheme
    a = composite_gains(channels, alloc.v)
    # a^T S a^* per (k, i, j)
    power = np.einsum("kijm,ijmn,kijn->kij", a, alloc.S, a.conj()).real
    power = power * sc.hap_energy_mask[None, :, :]
    E = cfg.eta * alloc.delta[None, :] * power.sum(axis=1)
    return np.where(sc.harvest_mask, E, 0.0)


def harvested_energy(k: int, j: int, alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> float:
    if not alloc.scheme.harvest_mask[k, j]:
        raise ContractError(f"WD {k} does not harvest in phase {j}")
    total = 0.0
    for i in range(alloc.scheme.K):
        if alloc.scheme.hap_energy_mask[i, j]:
            a = channels.psi[k, i] @ alloc.v[j]
            total += float(np.real(a @ alloc.S[i, j] @ a.conj()))
    return cfg.eta * float(alloc.delta[j]) * total


def sinr_matrix(alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """SINR[i, j] at HAP i in phase j (zero outside the rx mask)."""
    sc = alloc.scheme
    a = composite_gains(channels, alloc.v)
    # |w_{ij}^H a_{k,i,j}|^2  -> (k, i, j)
    proj = np.abs(np.einsum("ijm,kijm->kij", alloc.w.conj(), a)) ** 2
    rx_power = alloc.p[:, None, :] * sc.tx_power_mask[:, None, :] * proj
    K = sc.K
    signal = rx_power[np.arange(K), np.arange(K), :]
    interference = rx_power.sum(axis=0) - signal
    noise = np.asarray(cfg.sigma2)[:, None] * np.sum(np.abs(alloc.w) ** 2, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(signal > 0, signal / (interference + noise), 0.0)
    return np.where(sc.rx_mask, gamma, 0.0)


def sinr(i: int, j: int, alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> float:
    sc = alloc.scheme
    if not sc.rx_mask[i, j]:
        raise ContractError(f"HAP {i} does not decode in phase {j}")
    w = alloc.w[i, j]
    v = alloc.v[j]
    p_ij = alloc.p[i, j] if sc.tx_power_mask[i, j] else 0.0
    if p_ij == 0:
        return 0.0
    signal = p_ij * abs(np.vdot(w, channels.psi[i, i] @ v)) ** 2
    interference = 0.0
    for k in range(sc.K):
        if k != i and sc.tx_power_mask[k, j]:
            interference += alloc.p[k, j] * abs(np.vdot(w, channels.psi[k, i] @ v)) ** 2
    return float(signal / (interference + cfg.sigma2[i] * np.vdot(w, w).real))


def rate_matrix(alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    gamma = sinr_matrix(alloc, channels, cfg)
    return np.where(alloc.scheme.rx_mask & (alloc.delta[None, :] > 0), alloc.delta[None, :] * np.log2(1 + gamma), 0.0)


def sum_throughput(
    alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig, scheme: SchemeSpec | None = None
) -> float:
    """Sum over decoding (i, j) of ``delta_j log2(1 + SINR_ij)`` in bits/Hz."""
    if scheme is not None and scheme != alloc.scheme:
        raise ContractError("allocation does not match scheme")
    _check_shapes(alloc, channels)
    return float(rate_matrix(alloc, channels, cfg).sum())


def total_energy(alloc: Allocation, scheme: SchemeSpec | None = None) -> float:
    """Energy radiated by all HAPs: sum of ``delta_j tr(S_ij)`` over energy phases."""
    sc = alloc.scheme if scheme is None else scheme
    traces = np.einsum("ijmm->ij", alloc.S).real
    return float(np.sum(np.where(sc.hap_energy_mask, traces, 0.0) * alloc.delta[None, :]))


# ------------------------------------------------------------------ feasibility

@dataclass
class FeasibilityReport:
    """Largest normalized violation per constraint group."""

    residuals: dict[str, float]
    tol: float
    worst: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def failures(self) -> dict[str, float]:
        return {k: r for k, r in self.residuals.items() if r > self.tol}

    def __bool__(self) -> bool:
        return self.passed


def check_feasibility(
    alloc: Allocation,
    channels: ChannelSet,
    cfg: ScenarioConfig,
    scheme: SchemeSpec | None = None,
    tol: float = 1e-6,
) -> FeasibilityReport:
    """Report normalized residuals of every constraint; never raises.

    Energy causality is normalized by the energy harvested by that WD, time by
    T, covariance traces and eigenvalues by the HAP's power budget.
    """
    sc = alloc.scheme if scheme is None else scheme
    res: dict[str, float] = {}
    try:
        _check_shapes(alloc, channels)
    except ContractError:
        return FeasibilityReport({"structure": np.inf}, tol)
    T = cfg.T
    P = np.asarray(cfg.P)
    tiny = np.finfo(float).tiny

    E = harvested_matrix(alloc, channels, cfg).sum(axis=1)
    p_masked = np.where(sc.tx_power_mask, alloc.p, 0.0)
    demand = (p_masked * alloc.delta[None, :]).sum(axis=1)
    scale = np.maximum(E, tiny)
    res["energy_causality"] = float(max(0.0, np.max((demand - E) / scale)))
    res["total_time"] = float(max(0.0, (alloc.delta.sum() - T) / T))
    res["delta_nonneg"] = float(max(0.0, -alloc.delta.min() / T))
    energy_scale = np.maximum(np.maximum(E, demand), tiny)
    neg_p = np.maximum(-p_masked * np.maximum(alloc.delta, 0.0)[None, :], 0.0).sum(axis=1)
    res["power_nonneg"] = float(max(0.0, np.max(neg_p / energy_scale)))
    res["power_nonneg_raw"] = float(max(0.0, -p_masked.min()))

    tr_res = 0.0
    psd_res = 0.0
    herm_res = 0.0
    for i in range(sc.K):
        Pi = P[i] if P[i] > 0 else 1.0
        for j in range(sc.J):
            S = alloc.S[i, j]
            if not sc.hap_energy_mask[i, j]:
                herm_res = max(herm_res, float(np.abs(S).max()) / Pi)
                continue
            herm_res = max(herm_res, float(np.abs(S - S.conj().T).max()) / Pi)
            Sh = (S + S.conj().T) / 2
            tr_res = max(tr_res, (float(np.trace(Sh).real) - P[i]) / Pi)
            psd_res = max(psd_res, -float(np.linalg.eigvalsh(Sh)[0]) / Pi)
    res["trace_power"] = max(0.0, tr_res)
    res["psd"] = max(0.0, psd_res)
    res["hermitian"] = herm_res

    norms = np.sum(np.abs(alloc.w) ** 2, axis=2)
    res["receiver_norm"] = float(np.max(np.where(sc.rx_mask, np.abs(norms - 1.0), 0.0)))
    mod = np.abs(alloc.v[:, :-1])
    res["irs_modulus"] = float(max(0.0, (mod - 1.0).max())) if mod.size else 0.0
    res["irs_pinned"] = float(np.abs(alloc.v[:, -1] - 1.0).max())
    outside = np.concatenate(
        [np.where(sc.tx_power_mask, 0.0, np.abs(alloc.p)).ravel() / max(P.max(), tiny)]
    )
    res["structural_zeros"] = float(outside.max()) if outside.size else 0.0
    return FeasibilityReport(res, tol)


# -------------------------------------------------------------- scheme nesting

def embed_in_asy(alloc: Allocation, M: int | None = None) -> Allocation:
    """Map a TDMA or Syn allocation onto the Asy variable layout.

    Syn phases become ``delta_0 = tau`` and ``delta_K = T - tau`` with all
    middle phases of zero length. Receivers that the source scheme leaves
    unused are set to the first canonical vector; their rates are zero.
    """
    src = alloc.scheme
    K = src.K
    asy = scheme_spec(Scheme.ASY, K)
    M = alloc.w.shape[2] if M is None else M
    N = alloc.v.shape[1] - 1
    out = empty_allocation(asy, M, N)
    if src.kind is Scheme.ASY:
        return alloc.copy()
    if src.kind is Scheme.TDMA:
        out.delta[:] = alloc.delta
        out.S[:] = alloc.S
        out.p[:] = alloc.p
        out.v[:] = alloc.v
        out.w[src.rx_mask] = alloc.w[src.rx_mask]
        return out
    out.delta[0] = alloc.delta[0]
    out.delta[K] = alloc.delta[1]
    out.S[:, 0] = alloc.S[:, 0]
    out.p[:, K] = alloc.p[:, 1]
    out.v[0] = alloc.v[0]
    out.v[1:] = alloc.v[1]
    out.w[:, K] = alloc.w[:, 1]
    return out
