import json

import numpy as np
import pytest

from _oracles import single_link_grid_throughput
from conftest import random_allocation
from irs_wpcn.ao_optimizer import (
    OptimizerConfig,
    initialize,
    mmse_receiver,
    optimize,
    optimize_all_schemes,
    optimize_asy_best,
)
from irs_wpcn.channel_model import ChannelSet, ScenarioConfig, generate
from irs_wpcn.system_model import Scheme, check_feasibility, sinr, sum_throughput, total_energy


def _sinr_with(w, i, j, alloc, ch, cfg):
    trial = alloc.copy()
    trial.w[i, j] = w
    return sinr(i, j, trial, ch, cfg)


def test_mmse_is_matched_filter_without_interference():
    cfg = ScenarioConfig(K=1, L=1, M=3, N_per_irs=2)
    ch = generate(cfg, 0)
    alloc = initialize("asy", ch, cfg)
    a = ch.psi[0, 0] @ alloc.v[1]
    w = mmse_receiver(0, 1, alloc, ch, cfg)
    assert np.linalg.norm(w) == pytest.approx(1.0)
    assert abs(np.vdot(w, a)) == pytest.approx(np.linalg.norm(a), rel=1e-12)


def test_mmse_matches_closed_form_sinr():
    cfg = ScenarioConfig(K=3, L=1, M=2, N_per_irs=3)
    ch = generate(cfg, 1)
    rng = np.random.default_rng(0)
    alloc = random_allocation("asy", ch, cfg, rng)
    for i, j in [(1, 2), (2, 3), (1, 3)]:
        a = ch.psi[:, i] @ alloc.v[j]
        R = cfg.sigma2[i] * np.eye(2, dtype=complex)
        for k in range(3):
            if k != i and alloc.scheme.tx_power_mask[k, j]:
                R += alloc.p[k, j] * np.outer(a[k], a[k].conj())
        best = alloc.p[i, j] * np.real(a[i].conj() @ np.linalg.solve(R, a[i]))
        w = mmse_receiver(i, j, alloc, ch, cfg)
        assert _sinr_with(w, i, j, alloc, ch, cfg) == pytest.approx(best, rel=1e-10)


def test_mmse_nulls_strong_interferer():
    cfg = ScenarioConfig(K=2, L=1, M=2, N_per_irs=2)
    ch = generate(cfg, 2)
    alloc = random_allocation("syn", ch, cfg, np.random.default_rng(1))
    alloc.p[0, 1] = 1e9  # WD 0 swamps HAP 1
    w = mmse_receiver(1, 1, alloc, ch, cfg)
    a_int = ch.psi[0, 1] @ alloc.v[1]
    assert abs(np.vdot(w, a_int)) / np.linalg.norm(a_int) < 1e-4


def test_mmse_zero_channel_flags_default():
    cfg = ScenarioConfig(K=1, L=1, M=2, N_per_irs=2)
    base = generate(cfg, 0)
    ch = ChannelSet(np.zeros_like(base.e), np.zeros_like(base.H), np.zeros_like(base.g))
    alloc = initialize("asy", ch, cfg)
    w, flag = mmse_receiver(0, 1, alloc, ch, cfg, return_flag=True)
    assert flag
    np.testing.assert_array_equal(w, [1.0, 0.0])


def test_mmse_beats_random_receivers():
    cfg = ScenarioConfig(K=2, L=2, M=2, N_per_irs=2)
    ch = generate(cfg, 3)
    rng = np.random.default_rng(7)
    for _ in range(5):
        alloc = random_allocation("syn", ch, cfg, rng)
        i = int(rng.integers(2))
        best = _sinr_with(mmse_receiver(i, 1, alloc, ch, cfg), i, 1, alloc, ch, cfg)
        W = rng.normal(size=(200, 2)) + 1j * rng.normal(size=(200, 2))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        for w in W:
            assert _sinr_with(w, i, 1, alloc, ch, cfg) <= best * (1 + 1e-12)


@pytest.mark.parametrize("kind", ["asy", "tdma", "syn"])
def test_initialize_is_feasible_with_equal_phases(kind):
    cfg = ScenarioConfig(K=3, L=2, M=2, N_per_irs=3)
    ch = generate(cfg, 0)
    alloc = initialize(kind, ch, cfg)
    J = alloc.scheme.J
    np.testing.assert_allclose(alloc.delta, cfg.T / J)
    assert check_feasibility(alloc, ch, cfg, tol=1e-12).passed
    np.testing.assert_allclose(np.abs(alloc.v[:, :-1]), 1.0)
    off = initialize(kind, ch, cfg, OptimizerConfig(init="irs_off"))
    assert np.all(off.v[:, :-1] == 0)
    again = initialize(kind, ch, cfg)
    assert np.array_equal(again.v, alloc.v)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(eps_outer=0)
    with pytest.raises(ValueError):
        OptimizerConfig(max_outer=0)
    with pytest.raises(ValueError):
        OptimizerConfig(init="zeros")


@pytest.mark.parametrize("kind", ["asy", "tdma", "syn"])
def test_trace_monotone_feasible_and_structural_zeros(kind):
    cfg = ScenarioConfig(K=2, L=2, M=2, N_per_irs=3, d_hap=-2.0)
    for seed in range(3):
        ch = generate(cfg, seed)
        res = optimize(kind, ch, cfg, OptimizerConfig(seed=seed))
        tr = np.array(res.objective_trace)
        assert np.all(np.diff(tr) >= -1e-9)
        assert res.converged
        assert res.feasibility.passed
        assert check_feasibility(res.allocation, ch, cfg, tol=1e-6).passed
        assert res.sum_throughput == pytest.approx(sum_throughput(res.allocation, ch, cfg))
        assert res.total_energy == pytest.approx(total_energy(res.allocation))
        a, sc = res.allocation, res.allocation.scheme
        assert np.all(a.p[~sc.tx_power_mask] == 0)
        assert np.all(a.S[~sc.hap_energy_mask] == 0)
        assert np.all(a.v[:, -1] == 1)


def test_optimizer_improves_on_initial_point():
    cfg = ScenarioConfig(K=2, L=2, M=2, N_per_irs=3)
    ch = generate(cfg, 0)
    start = sum_throughput(initialize("asy", ch, cfg), ch, cfg)
    res = optimize("asy", ch, cfg)
    assert res.objective_trace[0] == pytest.approx(start)
    assert res.sum_throughput > start


def test_without_irs_keeps_irs_off():
    cfg = ScenarioConfig(K=2, L=1, M=2, N_per_irs=3)
    ch = generate(cfg, 0)
    res = optimize("tdma", ch, cfg, OptimizerConfig(optimize_irs=False))
    assert np.all(res.allocation.v[:, :-1] == 0)
    assert res.feasibility.passed


def test_warm_start_never_loses():
    cfg = ScenarioConfig(K=2, L=2, M=2, N_per_irs=3, d_hap=2.0)
    for seed in range(2):
        ch = generate(cfg, seed)
        res = optimize_all_schemes(ch, cfg, OptimizerConfig(seed=seed))
        asy = res[Scheme.ASY].sum_throughput
        assert asy >= res[Scheme.TDMA].sum_throughput - 1e-9
        assert asy >= res[Scheme.SYN].sum_throughput - 1e-9
        # a warm start embeds the sub-scheme point, so the trace starts at its value
        warm = optimize("asy", ch, cfg, OptimizerConfig(warm_start=res[Scheme.TDMA].allocation))
        assert warm.objective_trace[0] == pytest.approx(res[Scheme.TDMA].sum_throughput, rel=1e-12)
        best = optimize_asy_best(ch, cfg, OptimizerConfig(), [res[Scheme.SYN]])
        assert best.sum_throughput >= res[Scheme.SYN].sum_throughput - 1e-9


def test_warm_start_validation():
    cfg = ScenarioConfig(K=2, L=1, M=2, N_per_irs=2)
    ch = generate(cfg, 0)
    asy = initialize("asy", ch, cfg)
    with pytest.raises(ValueError):
        optimize("tdma", ch, cfg, OptimizerConfig(warm_start=asy))
    bad = asy.copy()
    bad.p *= 10
    with pytest.raises(ValueError):
        optimize("asy", ch, cfg, OptimizerConfig(warm_start=bad))


def test_converged_point_is_nearly_fixed():
    cfg = ScenarioConfig(K=2, L=2, M=2, N_per_irs=3)
    ch = generate(cfg, 4)
    first = optimize("syn", ch, cfg, OptimizerConfig(eps_outer=1e-6))
    again = optimize("syn", ch, cfg, OptimizerConfig(eps_outer=1e-6, warm_start=first.allocation))
    assert again.sum_throughput >= first.sum_throughput - 1e-9
    assert again.sum_throughput <= first.sum_throughput * (1 + 1e-3)


def test_result_serialization_is_deterministic():
    cfg = ScenarioConfig(K=2, L=1, M=2, N_per_irs=2)
    ch = generate(cfg, 0)
    a = json.dumps(optimize("asy", ch, cfg).to_dict(), sort_keys=True)
    b = json.dumps(optimize("asy", ch, cfg).to_dict(), sort_keys=True)
    assert a == b
    d = json.loads(a)
    assert d["format"] == "irs-wpcn-result" and "wall_time" not in d
    assert "wall_time" in optimize("asy", ch, cfg).to_dict(include_timing=True)


@pytest.mark.parametrize("seed", range(3))
def test_single_link_matches_grid_oracle(seed):
    cfg = ScenarioConfig(K=1, L=1, M=1, N_per_irs=2)
    ch = generate(cfg, seed)
    ref = single_link_grid_throughput(ch.psi[0, 0], cfg.P[0], cfg.eta, cfg.sigma2[0], cfg.T)
    for kind in ("asy", "tdma", "syn"):
        got = optimize(kind, ch, cfg, OptimizerConfig(seed=seed)).sum_throughput
        assert got == pytest.approx(ref, rel=0.02)


def test_final_receivers_beat_random_vectors():
    cfg = ScenarioConfig(K=3, L=1, M=2, N_per_irs=2, d_hap=-2.0)
    ch = generate(cfg, 5)
    alloc = optimize("asy", ch, cfg).allocation
    rng = np.random.default_rng(0)
    W = rng.normal(size=(10_000, 2)) + 1j * rng.normal(size=(10_000, 2))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    sc = alloc.scheme
    for i, j in np.argwhere(sc.rx_mask & (alloc.p > 0)):
        a = ch.psi[:, i] @ alloc.v[j]
        p = alloc.p[:, j] * sc.tx_power_mask[:, j]
        proj = np.abs(W.conj() @ a.T) ** 2
        rand = p[i] * proj[:, i] / (cfg.sigma2[i] + proj @ p - p[i] * proj[:, i])
        assert rand.max() <= sinr(i, j, alloc, ch, cfg) * (1 + 1e-12)
