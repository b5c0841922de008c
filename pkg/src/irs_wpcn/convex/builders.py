"""Construct the three SCA subproblems from the current allocation.

Every builder works in normalized units so the solver sees O(1) numbers:
durations in units of T, energy covariances in units of ``T * P_i``, UL
energies in units of the largest energy the WD could harvest, and SINR
constraints divided by the receiver noise power.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..channel_model import ChannelSet, ScenarioConfig
from ..system_model import Allocation, SchemeSpec, composite_gains, harvested_matrix
from .program import (
    ConicProgram,
    ProgramBuilder,
    complex_to_interleaved,
    hermitian_to_coords,
    read_complex,
    read_hermitian,
    real_linear,
    real_quadratic,
    trace_coeffs,
)

LN2 = np.log(2.0)
DELTA_FLOOR = 1e-10
_TINY = np.finfo(float).tiny


@dataclass
class SubProblem:
    """A built program plus the maps between allocations and its variables."""

    program: ConicProgram
    encode: Callable[[Allocation], np.ndarray]
    decode: Callable[[np.ndarray, Allocation], Allocation]
    info: dict = field(default_factory=dict)


def _check_scheme(alloc: Allocation, scheme: SchemeSpec | None) -> SchemeSpec:
    if scheme is not None and scheme != alloc.scheme:
        raise ValueError("allocation does not match scheme")
    return alloc.scheme


def receive_gains(alloc: Allocation, channels: ChannelSet) -> np.ndarray:
    """``b[k, i, j] = |w_ij^H Psi_ki v_j|^2``."""
    a = composite_gains(channels, alloc.v)
    return np.abs(np.einsum("ijm,kijm->kij", alloc.w.conj(), a)) ** 2


def harvest_capacity(alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """Upper bound on the energy each WD can harvest with the current IRS phases."""
    sc = alloc.scheme
    a = composite_gains(channels, alloc.v)
    gain = np.sum(np.abs(a) ** 2, axis=3)  # largest eigenvalue of A_{k,i,j}
    per_phase = np.einsum("kij,i,ij->kj", gain, np.asarray(cfg.P), sc.hap_energy_mask.astype(float))
    per_phase = np.where(sc.harvest_mask, per_phase, 0.0)
    return cfg.eta * cfg.T * per_phase.max(axis=1)


# ------------------------------------------------------------------ problem (4)

def build_time_power_sdp(
    alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig, scheme: SchemeSpec | None = None
) -> SubProblem:
    """SCA surrogate of the joint time / energy-covariance / UL-power problem.

    Variables after the change of variables ``S~ = delta S``, ``p~ = delta p``.
    The local point is the allocation's own ``(delta, S, p)``.
    """
    sc = _check_scheme(alloc, scheme)
    K, J, M = sc.K, sc.J, channels.M
    T, eta = cfg.T, cfg.eta
    P = np.asarray(cfg.P)
    sig2 = np.asarray(cfg.sigma2)
    a = composite_gains(channels, alloc.v)
    b = receive_gains(alloc, channels)
    E_ref = harvest_capacity(alloc, channels, cfg)

    pb = ProgramBuilder()
    xd = [pb.scalar(f"delta[{j}]") for j in range(J)]
    pb.linear_le({d: 1.0 for d in xd}, 1.0, "total_time")

    s_idx: dict[tuple[int, int], np.ndarray] = {}
    for i in range(K):
        for j in range(J):
            if sc.hap_energy_mask[i, j] and P[i] > 0:
                idx = pb.hermitian_psd(f"S[{i},{j}]", M)
                s_idx[i, j] = idx
                row = {int(q): 1.0 for q in idx[:M]}
                row[xd[j]] = -1.0
                pb.linear_le(row, 0.0, f"trace[{i},{j}]")

    y_idx: dict[tuple[int, int], int] = {}
    for k in range(K):
        if E_ref[k] <= 0:
            continue
        for j in range(J):
            if sc.tx_power_mask[k, j]:
                y_idx[k, j] = pb.scalar(f"p[{k},{j}]")
        row: dict[int, float] = {y_idx[k, j]: 1.0 for j in range(J) if (k, j) in y_idx}
        for j in range(J):
            if not sc.harvest_mask[k, j]:
                continue
            for i in range(K):
                if (i, j) not in s_idx:
                    continue
                A = np.outer(a[k, i, j].conj(), a[k, i, j])
                coef = -(eta * T * P[i] / E_ref[k]) * trace_coeffs(A)
                for q, c in zip(s_idx[i, j], coef):
                    row[int(q)] = row.get(int(q), 0.0) + c
        pb.linear_le(row, 0.0, f"energy[{k}]")

    for i in range(K):
        for j in range(J):
            if not sc.rx_mask[i, j]:
                continue
            active = [k for k in range(K) if sc.tx_power_mask[k, j]]
            nb = b[:, i, j] / sig2[i]
            interf_t = sum(alloc.p[k, j] * nb[k] for k in active if k != i)
            arg = {y_idx[k, j]: nb[k] * E_ref[k] / T for k in active if (k, j) in y_idx and nb[k] > 0}
            if arg:
                pb.perspective_log(T, arg, 0.0, {xd[j]: 1.0}, 0.0, 1.0)
            lin = {xd[j]: -T * np.log2(1 + interf_t)}
            denom = (1 + interf_t) * LN2
            for k in active:
                if k == i or (k, j) not in y_idx:
                    continue
                lin[y_idx[k, j]] = lin.get(y_idx[k, j], 0.0) - nb[k] * E_ref[k] / denom
                lin[xd[j]] += T * nb[k] * alloc.p[k, j] / denom
            pb.add_objective(lin)

    # filled below once the layout is fixed
    prog = pb.build()

    def encode(al: Allocation) -> np.ndarray:
        x = np.zeros(prog.n)
        for j, d in enumerate(xd):
            x[d] = al.delta[j] / T
        for (i, j), idx in s_idx.items():
            x[idx] = hermitian_to_coords(al.delta[j] * al.S[i, j] / (T * P[i]))
        for (k, j), q in y_idx.items():
            x[q] = al.delta[j] * al.p[k, j] / E_ref[k]
        return x

    def center() -> np.ndarray:
        x = np.zeros(prog.n)
        for d in xd:
            x[d] = 1.0 / (J + 1)
        for (i, j), idx in s_idx.items():
            x[idx] = hermitian_to_coords(np.eye(M) * x[xd[j]] / (2 * M))
        rhs = -(prog.G @ x - prog.h)  # slack with p = 0
        for k in range(K):
            qs = [q for (kk, _), q in y_idx.items() if kk == k]
            r = [n for n, name in enumerate(prog.lin_names) if name == f"energy[{k}]"]
            if qs and r:
                x[qs] = 0.5 * max(rhs[r[0]], 0.0) / len(qs)
        return x

    prog.x0 = 0.9 * encode(alloc) + 0.1 * center()

    def decode(x: np.ndarray, base: Allocation) -> Allocation:
        out = base.copy()
        out.delta = np.maximum(x[xd] * T, 0.0)
        for i in range(K):
            for j in range(J):
                if sc.hap_energy_mask[i, j] and (i, j) not in s_idx:
                    out.S[i, j] = 0.0
        for (i, j), idx in s_idx.items():
            if out.delta[j] > DELTA_FLOOR:
                S = read_hermitian(prog, f"S[{i},{j}]", x) * T * P[i] / out.delta[j]
                out.S[i, j] = (S + S.conj().T) / 2
        for k in range(K):
            for j in range(J):
                if not sc.tx_power_mask[k, j]:
                    continue
                if (k, j) not in y_idx:
                    out.p[k, j] = 0.0
                elif out.delta[j] > DELTA_FLOOR:
                    out.p[k, j] = max(x[y_idx[k, j]], 0.0) * E_ref[k] / out.delta[j]
        return out

    return SubProblem(prog, encode, decode, {"E_ref": E_ref})


# ------------------------------------------------------------------ shared bits

def _energy_terms(alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig):
    """Per (k, i, j): ``gamma`` with ``E^lb = 2 Re{gamma^H v} - const`` and the exact value."""
    a = composite_gains(channels, alloc.v)
    # gamma = Psi^H S^T a_t ; value = a_t^T S a_t^*
    gamma = np.einsum("kimn,ijlm,kijl->kijn", channels.psi.conj(), alloc.S, a)
    value = np.einsum("kijm,ijmn,kijn->kij", a, alloc.S, a.conj()).real
    return gamma, value


def _demand(alloc: Allocation) -> np.ndarray:
    sc = alloc.scheme
    return np.sum(np.where(sc.tx_power_mask, alloc.p, 0.0) * alloc.delta[None, :], axis=1)


def _free_part(vec: np.ndarray) -> np.ndarray:
    return vec[:-1]


# ------------------------------------------------------------------ problem (6)

def build_v1_qcp(
    alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig, scheme: SchemeSpec | None = None
) -> SubProblem:
    """EH-residual maximization over the phase-0 IRS vector.

    The local point is ``alloc.v[0]``. WDs whose constraint does not depend on
    ``v_0`` get no residual variable; their slack is a constant.
    """
    sc = _check_scheme(alloc, scheme)
    K, J = sc.K, sc.J
    N = channels.N
    eta = cfg.eta
    gamma, value = _energy_terms(alloc, channels, cfg)
    demand = _demand(alloc)
    E = harvested_matrix(alloc, channels, cfg)
    scale = np.maximum(np.maximum(E.sum(axis=1), demand), _TINY)
    d0 = alloc.delta[0]

    pb = ProgramBuilder()
    u = pb.complex_vector("v0", N, bound=1.0, pinned={N: 1.0 + 0j})
    deltas: dict[int, int] = {}
    rows = {}
    for k in range(K):
        lin = np.zeros(2 * N)
        const = 0.0
        for i in range(K):
            if sc.harvest_mask[k, 0] and sc.hap_energy_mask[i, 0]:
                gm = gamma[k, i, 0]
                lin += 2 * eta * d0 * real_linear(_free_part(gm))
                const += eta * d0 * (2 * np.real(np.conj(gm[-1])) - value[k, i, 0])
        const += E[k, 1:].sum()
        rows[k] = (lin / scale[k], (const - demand[k]) / scale[k])
        # a constraint without v_0 dependence is a constant slack; no variable needed
        if np.max(np.abs(lin), initial=0.0) <= 1e-15 * scale[k]:
            continue
        deltas[k] = pb.scalar(f"Delta[{k}]")
        row = {int(q): -c for q, c in zip(u, rows[k][0])}
        row[deltas[k]] = 1.0
        pb.linear_le(row, rows[k][1], f"energy[{k}]")
        pb.add_objective({deltas[k]: scale[k] / scale.max()})
    prog = pb.build()

    def encode(al: Allocation) -> np.ndarray:
        x = np.zeros(prog.n)
        x[u] = complex_to_interleaved(_free_part(al.v[0]))
        return x

    x0 = encode(alloc)
    mod = np.abs(_free_part(alloc.v[0]))
    if mod.size and mod.max() >= 1.0:
        x0[u] *= (1 - 1e-6) / mod.max()
    for k, q in deltas.items():
        lin, const = rows[k]
        x0[q] = 0.5 * (const + lin @ x0[u])
    prog.x0 = x0

    def residuals(x: np.ndarray) -> np.ndarray:
        """Largest feasible EH residual of every WD at ``x`` (joules)."""
        return np.array([scale[k] * (rows[k][1] + rows[k][0] @ x[u]) for k in range(K)])

    def decode(x: np.ndarray, base: Allocation) -> Allocation:
        out = base.copy()
        out.v[0] = read_complex(prog, "v0", x)
        return out

    return SubProblem(prog, encode, decode, {"residual_index": deltas, "scale": scale, "residuals": residuals})


# ------------------------------------------------------------------ problem (8)

def build_vhat_qcp(
    alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig, scheme: SchemeSpec | None = None
) -> SubProblem:
    """Slack-SINR surrogate over the IRS vectors of every non-initial phase.

    Phases of (numerically) zero length are left out and keep their vectors.
    Links with zero UL power carry no rate and get no slack variable.
    """
    sc = _check_scheme(alloc, scheme)
    K, J = sc.K, sc.J
    N = channels.N
    eta = cfg.eta
    sig2 = np.asarray(cfg.sigma2)
    psi = channels.psi
    gamma, value = _energy_terms(alloc, channels, cfg)
    demand = _demand(alloc)
    E = harvested_matrix(alloc, channels, cfg)
    scale = np.maximum(np.maximum(E.sum(axis=1), demand), _TINY)

    phases = [j for j in range(1, J) if alloc.delta[j] > DELTA_FLOOR]
    pb = ProgramBuilder()
    u_idx = {j: pb.complex_vector(f"v{j}", N, bound=1.0, pinned={N: 1.0 + 0j}) for j in phases}
    z_idx: dict[tuple[int, int], int] = {}
    z_t: dict[tuple[int, int], float] = {}

    for j in phases:
        vt = alloc.v[j]
        for i in range(K):
            if not (sc.rx_mask[i, j] and sc.tx_power_mask[i, j] and alloc.p[i, j] > 0):
                continue
            wn = np.linalg.norm(alloc.w[i, j])
            if wn == 0:
                continue
            w = alloc.w[i, j] / wn
            wpsi = w.conj() @ psi[:, i]  # (k, N+1): w^H Psi_{k,i}
            Bii = alloc.p[i, j] * np.outer(wpsi[i].conj(), wpsi[i]) / sig2[i]
            bt = float(np.real(vt.conj() @ Bii @ vt))
            if bt <= 0:
                continue
            Q = np.zeros((N + 1, N + 1), dtype=complex)
            for k in range(K):
                if k != i and sc.tx_power_mask[k, j] and alloc.p[k, j] > 0:
                    Q += alloc.p[k, j] * np.outer(wpsi[k].conj(), wpsi[k]) / sig2[i]
            # expansion point taken from the same forms so the bound is tight
            zt = bt / (float(np.real(vt.conj() @ Q @ vt)) + 1.0)
            if zt <= 0:
                continue
            beta = Bii @ vt
            # the slack is stored relative to its local value so that links with
            # tiny SINR stay well scaled: z = zt * x[z]
            z = pb.scalar(f"z[{i},{j}]")
            z_idx[i, j] = z
            z_t[i, j] = zt
            R = real_quadratic(Q[:N, :N])
            q = 2 * real_linear(Q[:N, N]) - 2 * real_linear(beta[:N]) / zt
            r = float(np.real(Q[N, N])) + 1.0 - 2 * float(np.real(np.conj(beta[N]))) / zt
            idx = np.append(u_idx[j], z)
            Qfull = np.zeros((2 * N + 1, 2 * N + 1))
            Qfull[: 2 * N, : 2 * N] = R
            pb.quadratic_le(idx, Qfull, np.append(q, bt / zt), r, f"sinr[{i},{j}]")
            d = float(alloc.delta[j])
            pb.perspective_log(1.0, {z: d * zt}, 0.0, {}, d, 1.0)

    energy_rows = {}
    for k in range(K):
        lin = {j: np.zeros(2 * N) for j in phases}
        const = 0.0
        depends = False
        for j in range(J):
            if not sc.harvest_mask[k, j]:
                continue
            for i in range(K):
                if not sc.hap_energy_mask[i, j]:
                    continue
                if j in u_idx:
                    gm = gamma[k, i, j]
                    lin[j] += 2 * eta * alloc.delta[j] * real_linear(_free_part(gm))
                    const += eta * alloc.delta[j] * (2 * np.real(np.conj(gm[-1])) - value[k, i, j])
                    depends = depends or bool(np.any(gm[:-1] != 0)) and alloc.delta[j] > 0
                else:
                    const += eta * alloc.delta[j] * value[k, i, j]
        if not depends:
            continue
        row: dict[int, float] = {}
        for j in phases:
            for q, c in zip(u_idx[j], lin[j] / scale[k]):
                row[int(q)] = -c
        rhs = (const - demand[k]) / scale[k]
        pb.linear_le(row, rhs, f"energy[{k}]")
        energy_rows[k] = (row, rhs)
    prog = pb.build()

    def encode(al: Allocation, z_vals: dict | None = None) -> np.ndarray:
        x = np.zeros(prog.n)
        for j, idx in u_idx.items():
            x[idx] = complex_to_interleaved(_free_part(al.v[j]))
        for key, q in z_idx.items():
            x[q] = 1.0 if z_vals is None else z_vals[key] / z_t[key]
        return x

    x0 = encode(alloc, {key: 0.5 * zt for key, zt in z_t.items()})
    for j, idx in u_idx.items():
        mod = np.abs(_free_part(alloc.v[j]))
        if mod.size and mod.max() >= 1.0:
            x0[idx] *= (1 - 1e-6) / mod.max()
    prog.x0 = x0

    def decode(x: np.ndarray, base: Allocation) -> Allocation:
        out = base.copy()
        for j in u_idx:
            out.v[j] = read_complex(prog, f"v{j}", x)
        return out

    return SubProblem(prog, encode, decode, {"z_index": z_idx, "z_local": z_t, "phases": phases})
