"""Alternating optimization of receivers, time/power/covariances and IRS phases.

One outer pass runs four blocks in order: MMSE receivers, the time/power SDP
surrogate, the phase-0 IRS vector and the remaining IRS vectors. After each
block the true sum throughput is recorded; a candidate that lowers it or
breaks feasibility is discarded, so the recorded trace never decreases.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .channel_model import ChannelSet, ScenarioConfig
from .convex.builders import build_time_power_sdp, build_v1_qcp, build_vhat_qcp
from .convex.solver import Status, solve
from .system_model import (
    Allocation,
    FeasibilityReport,
    Scheme,
    SchemeSpec,
    check_feasibility,
    embed_in_asy,
    harvested_matrix,
    scheme_spec,
    sum_throughput,
    total_energy,
)

log = logging.getLogger(__name__)

INIT_MARGIN = 1e-3
RESULT_FORMAT = "irs-wpcn-result"
RESULT_VERSION = 1


@dataclass
class OptimizerConfig:
    eps_outer: float = 1e-3
    max_outer: int = 100
    sca_inner: int = 1
    eps_solver: float = 1e-8
    max_solver_iter: int = 200
    init: str = "random"
    warm_start: Allocation | None = None
    seed: int = 0
    optimize_irs: bool = True
    accept_tol: float = 1e-9
    feas_tol: float = 1e-7

    def __post_init__(self):
        if not self.eps_outer > 0:
            raise ValueError("eps_outer must be positive")
        if self.max_outer < 1 or self.sca_inner < 1:
            raise ValueError("max_outer and sca_inner must be at least 1")
        if self.init not in ("random", "irs_off"):
            raise ValueError(f"unknown init strategy {self.init!r}")


@dataclass
class OptimizationResult:
    allocation: Allocation
    objective_trace: list[float]
    sum_throughput: float
    total_energy: float
    iterations: int
    converged: bool
    feasibility: FeasibilityReport
    wall_time: float = 0.0
    flags: dict[str, int] = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        out = {
            "format": RESULT_FORMAT,
            "version": RESULT_VERSION,
            "scheme": self.allocation.scheme.kind.value,
            "sum_throughput": self.sum_throughput,
            "total_energy": self.total_energy,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective_trace": [float(x) for x in self.objective_trace],
            "feasibility": {"passed": self.feasibility.passed, "residuals": self.feasibility.residuals},
            "flags": dict(self.flags),
            "allocation": self.allocation.to_dict(),
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


# ------------------------------------------------------------------ receivers

def mmse_receiver(
    i: int, j: int, alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig, return_flag: bool = False
):
    """Unit-norm MMSE combiner of HAP i in phase j.

    Returns ``e_1`` (and flag True when requested) if the desired channel is zero.
    """
    sc = alloc.scheme
    M = channels.M
    a = channels.psi[:, i] @ alloc.v[j]  # (K, M)
    desired = a[i]
    zero = not np.any(desired)
    if zero:
        w = np.zeros(M, dtype=complex)
        w[0] = 1.0
        return (w, True) if return_flag else w
    R = cfg.sigma2[i] * np.eye(M, dtype=complex)
    for k in range(sc.K):
        if k != i and sc.tx_power_mask[k, j]:
            R += alloc.p[k, j] * np.outer(a[k], a[k].conj())
    w = np.linalg.solve(R, desired)
    w = w / np.linalg.norm(w)
    return (w, False) if return_flag else w


def update_receivers(alloc: Allocation, channels: ChannelSet, cfg: ScenarioConfig) -> Allocation:
    out = alloc.copy()
    sc = alloc.scheme
    for i in range(sc.K):
        for j in range(sc.J):
            if sc.rx_mask[i, j]:
                out.w[i, j] = mmse_receiver(i, j, alloc, channels, cfg)
    return out


# ------------------------------------------------------------------ initialization

def initialize(
    scheme: SchemeSpec | Scheme | str,
    channels: ChannelSet,
    cfg: ScenarioConfig,
    opt_cfg: OptimizerConfig | None = None,
) -> Allocation:
    """Feasible starting point: equal phases, isotropic covariances, random IRS phases."""
    opt_cfg = opt_cfg or OptimizerConfig()
    sc = scheme if isinstance(scheme, SchemeSpec) else scheme_spec(scheme, channels.K)
    K, J, M, N = sc.K, sc.J, channels.M, channels.N
    P = np.asarray(cfg.P)
    delta = np.full(J, cfg.T / J)
    S = np.zeros((K, J, M, M), dtype=complex)
    for i in range(K):
        for j in range(J):
            if sc.hap_energy_mask[i, j]:
                S[i, j] = (P[i] / M) * np.eye(M)
    v = np.zeros((J, N + 1), dtype=complex)
    v[:, -1] = 1.0
    if opt_cfg.optimize_irs and opt_cfg.init == "random" and N > 0:
        rng = np.random.default_rng(opt_cfg.seed)
        v[:, :-1] = np.exp(2j * np.pi * rng.random((J, N)))
    w = np.zeros((K, J, M), dtype=complex)
    w[..., 0] = sc.rx_mask
    alloc = Allocation(sc, delta, S, np.zeros((K, J)), w, v)
    E = harvested_matrix(alloc, channels, cfg).sum(axis=1)
    tx_time = (sc.tx_power_mask * delta[None, :]).sum(axis=1)
    for k in range(K):
        if E[k] > 0 and tx_time[k] > 0:
            alloc.p[k] = np.where(sc.tx_power_mask[k], (1 - INIT_MARGIN) * E[k] / tx_time[k], 0.0)
    return update_receivers(alloc, channels, cfg)


# ------------------------------------------------------------------ main loop

class _Runner:
    def __init__(self, channels: ChannelSet, cfg: ScenarioConfig, opt_cfg: OptimizerConfig):
        self.channels = channels
        self.cfg = cfg
        self.opt = opt_cfg
        self.flags = {"rejected": 0, "infeasible": 0, "max_iter": 0}

    def objective(self, alloc: Allocation) -> float:
        return sum_throughput(alloc, self.channels, self.cfg)

    def feasible(self, alloc: Allocation) -> bool:
        return check_feasibility(alloc, self.channels, self.cfg, tol=self.opt.feas_tol).passed

    def accept(self, current: Allocation, cur_obj: float, cand: Allocation):
        obj = self.objective(cand)
        if not np.isfinite(obj) or obj < cur_obj - self.opt.accept_tol or not self.feasible(cand):
            self.flags["rejected"] += 1
            return current, cur_obj
        return cand, obj

    def sca_block(self, builder, alloc: Allocation, obj: float):
        for _ in range(self.opt.sca_inner):
            sub = builder(alloc, self.channels, self.cfg)
            if sub.program.n == 0:
                break
            sol = solve(sub.program, eps=self.opt.eps_solver, max_iter=self.opt.max_solver_iter)
            if sol.status is Status.INFEASIBLE:
                self.flags["infeasible"] += 1
                break
            if sol.status is Status.MAX_ITER:
                self.flags["max_iter"] += 1
                if not np.all(np.isfinite(sol.x)) or sub.program.max_violation(sol.x) > self.opt.eps_solver:
                    break
            cand = sub.decode(sol.x, alloc)
            new, new_obj = self.accept(alloc, obj, cand)
            if new is alloc:
                break
            alloc, obj = new, new_obj
        return alloc, obj


def _max_direction_change(a: Allocation, b: Allocation) -> float:
    sc = a.scheme
    worst = 0.0
    for i in range(sc.K):
        for j in range(sc.J):
            if sc.rx_mask[i, j]:
                worst = max(worst, 1.0 - abs(np.vdot(a.w[i, j], b.w[i, j])))
    return worst


def optimize(
    scheme: SchemeSpec | Scheme | str,
    channels: ChannelSet,
    cfg: ScenarioConfig,
    opt_cfg: OptimizerConfig | None = None,
) -> OptimizationResult:
    opt_cfg = opt_cfg or OptimizerConfig()
    sc = scheme if isinstance(scheme, SchemeSpec) else scheme_spec(scheme, channels.K)
    start = time.perf_counter()
    run = _Runner(channels, cfg, opt_cfg)
    if opt_cfg.warm_start is not None:
        alloc = opt_cfg.warm_start.copy()
        if alloc.scheme != sc:
            if sc.kind is Scheme.ASY:
                alloc = embed_in_asy(alloc)
            else:
                raise ValueError("warm start must match the scheme or embed into Asy")
        if not opt_cfg.optimize_irs:
            alloc.v[:, :-1] = 0.0
        if not run.feasible(alloc):
            raise ValueError("warm start is not feasible")
    else:
        alloc = initialize(sc, channels, cfg, opt_cfg)

    obj = run.objective(alloc)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, opt_cfg.max_outer + 1):
        prev = obj
        alloc, obj = run.accept(alloc, obj, update_receivers(alloc, channels, cfg))
        trace.append(obj)
        alloc, obj = run.sca_block(build_time_power_sdp, alloc, obj)
        trace.append(obj)
        if opt_cfg.optimize_irs and channels.N > 0:
            alloc, obj = run.sca_block(build_v1_qcp, alloc, obj)
            trace.append(obj)
            alloc, obj = run.sca_block(build_vhat_qcp, alloc, obj)
            trace.append(obj)
        gain = obj - prev
        if gain <= opt_cfg.eps_outer * max(abs(prev), np.finfo(float).tiny):
            converged = True
            break

    final = update_receivers(alloc, channels, cfg)
    if _max_direction_change(alloc, final) > 0:
        alloc, obj = run.accept(alloc, obj, final)
        trace.append(obj)
    if not converged:
        log.warning("optimizer stopped after %d outer iterations without converging", it)
    return OptimizationResult(
        allocation=alloc,
        objective_trace=trace,
        sum_throughput=run.objective(alloc),
        total_energy=total_energy(alloc),
        iterations=it,
        converged=converged,
        feasibility=check_feasibility(alloc, channels, cfg),
        wall_time=time.perf_counter() - start,
        flags=run.flags,
    )


def optimize_all_schemes(
    channels: ChannelSet, cfg: ScenarioConfig, opt_cfg: OptimizerConfig | None = None
) -> dict[Scheme, OptimizationResult]:
    """Run TDMA and Syn, then Asy from scratch and warm-started from both; keep the best Asy."""
    opt_cfg = opt_cfg or OptimizerConfig()
    base = _without_warm_start(opt_cfg)
    out = {
        Scheme.TDMA: optimize(Scheme.TDMA, channels, cfg, base),
        Scheme.SYN: optimize(Scheme.SYN, channels, cfg, base),
    }
    out[Scheme.ASY] = optimize_asy_best(channels, cfg, base, [out[Scheme.TDMA], out[Scheme.SYN]])
    return out


def optimize_asy_best(
    channels: ChannelSet, cfg: ScenarioConfig, opt_cfg: OptimizerConfig, seeds: list[OptimizationResult]
) -> OptimizationResult:
    """Best of a fresh Asy run and Asy runs warm-started from the given results."""
    base = _without_warm_start(opt_cfg)
    candidates = [optimize(Scheme.ASY, channels, cfg, base)]
    for res in seeds:
        warm = OptimizerConfig(**{**base.__dict__, "warm_start": embed_in_asy(res.allocation)})
        candidates.append(optimize(Scheme.ASY, channels, cfg, warm))
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.sum_throughput > best.sum_throughput:
            best = cand
    best.wall_time = sum(c.wall_time for c in candidates)
    return best


def _without_warm_start(opt_cfg: OptimizerConfig) -> OptimizerConfig:
    return OptimizerConfig(**{**opt_cfg.__dict__, "warm_start": None})
