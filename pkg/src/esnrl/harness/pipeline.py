"""End-to-end experiment pipelines."""

from __future__ import annotations

import contextlib
import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats

from .. import __version__, kernels
from .. import oracles
from .._accel import get_backend
from ..environments import BeeWorld, MarketMaker, bee_uniform_policy, mm_initial_policy, rollout
from ..errors import DivergenceError, ESNRLError
from ..linalg import RngStream
from ..reservoir import init_standard, init_structured, run, zero_state
from ..value_learning import (
    GreedyPolicy,
    StepSizeSchedule,
    ValueModel,
    attached_rewards,
    autocorr_diagnostics,
    bellman_residual,
    fit_readout,
)
from .config import ExperimentConfig
from .report import TIMING_KEY, ExperimentReport, Table, config_hash, emit_report, histogram_table

__all__ = [
    "run_offline_one_step",
    "run_online",
    "run_experiment",
    "oracle_summary",
    "sweep",
    "sign_test",
    "STREAMS",
]

# sub-stream ids, one per consumer of randomness
STREAMS = {"reservoir": 0, "policy": 1, "env": 2, "candidates": 3}


@contextlib.contextmanager
def _phase(name, timings):
    start = time.perf_counter()
    try:
        yield
    except ESNRLError as exc:
        exc.args = (f"[{name}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        exc.phase = name
        raise
    finally:
        timings[name] = time.perf_counter() - start


# --------------------------------------------------------------------------
# building blocks


def build_reservoir(cfg: ExperimentConfig, d: int, rng: RngStream):
    r = cfg["reservoir"]
    if r["kind"] == "standard":
        return init_standard(r["n"], d, r["weight_range"], r["spectral_target"], rng)
    return init_structured(cfg.structured_spec, rng)


def build_env(cfg: ExperimentConfig, noise: RngStream):
    """Environment, its initial policy and a candidate sampler ``rng -> (m, 1)``."""
    count = cfg["candidates"]["count"]
    if cfg.env == "bee":
        env = BeeWorld(cfg.bee_config)
        policy = bee_uniform_policy(env.config)
    else:
        mm = cfg["market_maker"]
        env = MarketMaker(cfg.mm_config, noise, candidate_std=cfg["candidates"]["std"])
        policy = mm_initial_policy(mm["eta"], mm["sigma_i"])

    def sampler(rng):
        return env.sample_candidates(rng, count)

    return env, policy, sampler


def sign_test(improvements) -> float:
    """One-sided sign-test p-value for ``median(improvements) > 0``; ties dropped."""
    d = np.asarray(improvements, dtype=float)
    wins, losses = int((d > 0).sum()), int((d < 0).sum())
    if wins + losses == 0:
        return 1.0
    return float(stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


def _phase_metrics(exp, is_mm: bool) -> dict:
    out = {"steps": len(exp), "mean_reward": float(exp.rewards.mean()),
           "std_reward": float(exp.rewards.std())}
    if is_mm:
        out["mean_cost"] = -out["mean_reward"]
        out["max_abs_inventory"] = float(np.max(np.abs(exp.latent)))
    return out


# --------------------------------------------------------------------------
# oracle section


def oracle_summary(cfg: ExperimentConfig, env: str | None = None) -> dict:
    """Closed-form / integrated ground truth for the configured environment."""
    env = env or cfg.env
    o = cfg["oracle"]
    gamma = cfg["gamma"]
    if env == "bee":
        b = cfg["bee"]
        if not 0.0 < gamma < 1.0:
            return {"env": "bee", "available": False, "reason": "discount outside (0, 1)"}
        traj = oracles.integrate_optimal_bee(
            o["eps_pen"], b["c"], gamma, b["omega"], o["y0"], o["v0"], o["horizon"], o["tol"],
            orientation=o["orientation"])
        return {
            "env": "bee",
            "available": True,
            "average_nectar": traj.average_nectar,
            "integrator_steps": traj.steps,
            "orientation": traj.orientation,
            "eps_pen": o["eps_pen"],
            "tol": o["tol"],
            "horizon": o["horizon"],
            "max_abs_velocity": float(np.max(np.abs(traj.v))),
        }
    mm = cfg["market_maker"]
    if not 0.0 < gamma < 1.0:
        return {"env": "market_maker", "available": False, "reason": "discount outside (0, 1)"}
    sol = oracles.mm_discrete(mm["alpha"], mm["beta"], gamma, mm["sigma"], mm["r_base"])
    cont = oracles.mm_continuous(mm["alpha"], mm["beta"], -math.log(gamma), mm["sigma"], mm["r_base"])
    grid = np.linspace(-5.0, 5.0, 201)
    sim_seed = o["simulation_seed"]
    steps = o["simulation_steps"]
    return {
        "env": "market_maker",
        "available": True,
        "assumes_unit_epsilon": mm["epsilon"] == 1.0,
        "p": sol.p,
        "p_quadratic_residual": sol.quadratic_residual(),
        "stationary_std": sol.stationary_std,
        "stationary_variance": sol.stationary_std**2,
        "simulated_stationary_std": oracles.simulate_stationary_std(
            sol.p, mm["sigma"], steps, RngStream(sim_seed, 0)),
        "fixed_point_error": oracles.mm_stationary_fixed_point_check(sol, grid, o["quad_points"]),
        "optimal_gain": sol.optimal_gain,
        "optimal_stationary_std": sol.optimal_stationary_std,
        "optimal_stationary_variance": sol.optimal_stationary_std**2,
        "simulated_optimal_stationary_std": oracles.simulate_stationary_std(
            sol.optimal_gain, mm["sigma"], steps, RngStream(sim_seed, 1)),
        "expected_cost_optimal": sol.expected_cost(),
        "expected_cost_p_feedback": sol.expected_cost(sol.p),
        "bellman_residual_optimal_feedback": oracles.mm_bellman_check(sol, np.linspace(-4, 4, 20)),
        "bellman_residual_p_feedback": oracles.mm_bellman_check(
            sol, np.linspace(-4, 4, 20), feedback="printed"),
        "one_step_gain": oracles.mm_one_step_gain(
            mm["alpha"], mm["beta"], gamma, mm["eta"], mm["epsilon"]),
        "continuous_h": cont.h,
        "continuous_h_residual": cont.residual(),
    }


# --------------------------------------------------------------------------
# comparisons against the oracle


def _mm_comparison(improved, oracle: dict, initial_metrics: dict, improved_metrics: dict) -> dict:
    inv = improved.latent
    act = improved.actions[:, 0]
    slope = float(np.polyfit(inv, act, 1)[0])
    out = {
        "cost_initial": initial_metrics["mean_cost"],
        "cost_improved": improved_metrics["mean_cost"],
        "inventory_mean": float(inv.mean()),
        "inventory_std": float(inv.std()),
        "scatter_slope": slope,
    }
    if not oracle.get("available"):
        return out
    ks_p = stats.kstest(inv, "norm", args=(0.0, oracle["stationary_std"]))
    ks_opt = stats.kstest(inv, "norm", args=(0.0, oracle["optimal_stationary_std"]))
    out.update({
        "slope_target": -oracle["p"],
        "slope_within_0.4": abs(slope + oracle["p"]) <= 0.4,
        "slope_one_step_prediction": -oracle["one_step_gain"],
        "ks_statistic": float(ks_p.statistic),
        "ks_pvalue": float(ks_p.pvalue),
        "ks_passed": bool(ks_p.pvalue >= 0.01),
        "deviation_flagged": bool(ks_p.pvalue < 0.01),
        "ks_optimal_law_statistic": float(ks_opt.statistic),
        "ks_optimal_law_pvalue": float(ks_opt.pvalue),
        "cost_oracle_expected": oracle["expected_cost_optimal"],
    })
    return out


def _bee_comparison(oracle: dict, initial_metrics: dict, improved_metrics: dict) -> dict:
    out = {"nectar_initial": initial_metrics["mean_reward"],
           "nectar_improved": improved_metrics["mean_reward"]}
    if oracle.get("available"):
        out["nectar_oracle"] = oracle["average_nectar"]
        out["gap_to_oracle"] = oracle["average_nectar"] - improved_metrics["mean_reward"]
    return out


# --------------------------------------------------------------------------
# tables


def _experience_table(phases) -> Table:
    rows = []
    cols = ("k", "phase", "obs_0", "action_0", "reward", "latent")
    for name, exp in phases:
        for k in range(len(exp)):
            rows.append([k, name, float(exp.observations[k, 0]), float(exp.actions[k, 0]),
                         float(exp.rewards[k]), float(exp.latent[k])])
    return Table(cols, rows)


def _values_table(phases) -> Table:
    cols = ("k", "phase", "obs_0", "latent", "action_0", "value")
    rows = []
    for name, exp, values in phases:
        for k in range(len(exp)):
            rows.append([k, name, float(exp.observations[k, 0]), float(exp.latent[k]),
                         float(exp.actions[k, 0]), float(values[k])])
    return Table(cols, rows)


def _scatter_table(exp) -> Table:
    return Table(("k", "latent", "obs_0", "action_0"),
                 [[k, float(exp.latent[k]), float(exp.observations[k, 0]), float(exp.actions[k, 0])]
                  for k in range(len(exp))])


def _histogram(env_id, latent, bins, oracle) -> Table:
    if env_id == "bee":
        return histogram_table(latent, bins, 0.0, 1.0)
    if env_id == "market_maker":
        half = max(1.0, math.ceil(float(np.max(np.abs(latent)))))
        refs = {}
        if oracle.get("available"):
            s1, s2 = oracle["stationary_std"], oracle["optimal_stationary_std"]
            refs = {"density_p_law": lambda x: stats.norm.pdf(x, 0.0, s1),
                    "density_optimal_law": lambda x: stats.norm.pdf(x, 0.0, s2)}
        return histogram_table(latent, bins, -half, half, refs)
    lo, hi = float(np.min(latent)), float(np.max(latent))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return histogram_table(latent, bins, lo, hi)


def _header(cfg: ExperimentConfig) -> dict:
    doc = cfg.to_dict()
    return {
        "config": doc,
        "config_hash": config_hash(doc, __version__),
        "version": __version__,
        "backend": get_backend(),
        "seed": cfg.seed,
        "mode": cfg.mode,
        "env": cfg.env,
    }


# --------------------------------------------------------------------------
# offline one-step improvement


def run_offline_one_step(cfg: ExperimentConfig, env_builder=None) -> ExperimentReport:
    """Initial rollout, Bellman fit, greedy rollout, oracle comparison.

    ``env_builder(cfg, noise_rng) -> (env, initial_policy, sampler)``
    replaces the configured environment (used for stubs).
    """
    seed = cfg.seed
    timings = {}
    t_start = time.perf_counter()
    streams = {k: RngStream(seed, v) for k, v in STREAMS.items()}
    ell, L = cfg["train_steps"], cfg["eval_steps"]
    gamma, lam, washout = cfg["gamma"], cfg["lambda"], cfg["washout"]
    alignment = cfg["reward_alignment"]

    with _phase("setup", timings):
        env, policy, sampler = (env_builder or build_env)(cfg, streams["env"])
        params = build_reservoir(cfg, env.obs_dim + env.action_dim, streams["reservoir"])
    with _phase("initial_rollout", timings):
        exp0 = rollout(env, policy, ell, streams["policy"], seed=seed)
    with _phase("fit", timings):
        traj = run(params, zero_state(params), exp0.inputs)
        model = fit_readout(traj, exp0.rewards, gamma, lam, washout, alignment)
        zero = ValueModel(np.zeros(params.n), gamma, lam, alignment)
        fit = {
            "bellman_residual": bellman_residual(traj, exp0.rewards, model, washout),
            "zero_readout_residual": bellman_residual(traj, exp0.rewards, zero, washout),
            "readout_norm": float(np.linalg.norm(model.W)),
            "rows": len(exp0) - washout - (1 if alignment == "post" else 0),
            "alignment": alignment,
        }
        diag = autocorr_diagnostics(traj, washout, gamma=gamma).summary()
    with _phase("improved_rollout", timings):
        greedy = GreedyPolicy(params, model, sampler, x0=traj.final)
        exp1 = rollout(env, greedy, L, streams["candidates"], seed=seed)
    is_mm = env.env_id == "market_maker"
    with _phase("oracle", timings):
        oracle = oracle_summary(cfg) if env.env_id in ("bee", "market_maker") else {
            "env": env.env_id, "available": False, "reason": "no oracle for this environment"}
    m0, m1 = _phase_metrics(exp0, is_mm), _phase_metrics(exp1, is_mm)
    if is_mm:
        comparison = _mm_comparison(exp1, oracle, m0, m1)
    elif env.env_id == "bee":
        comparison = _bee_comparison(oracle, m0, m1)
    else:
        comparison = {}
    m1["first_candidate_fraction"] = float(np.mean(np.asarray(greedy.chosen) == 0))

    data = _header(cfg)
    data.update({
        "phases": {"initial": m0, "fit": fit, "improved": m1},
        "improvement": m1["mean_reward"] - m0["mean_reward"],
        "diagnostics": diag,
        "oracle": oracle,
        "comparison": comparison,
        TIMING_KEY: {"total": time.perf_counter() - t_start, "phases": timings},
    })
    tables = {
        "experience.csv": _experience_table([("initial", exp0), ("improved", exp1)]),
        "values.csv": _values_table([("initial", exp0, traj.states[1:] @ model.W),
                                     ("improved", exp1, np.asarray(greedy.scores))]),
        "histogram.csv": _histogram(env.env_id, exp1.latent, cfg["histogram_bins"], oracle),
        "scatter.csv": _scatter_table(exp1),
    }
    return ExperimentReport(data, tables)


# --------------------------------------------------------------------------
# online learning


def _decade_windows(steps: int):
    edges = [0, 10]
    while edges[-1] < steps:
        edges.append(edges[-1] * 10)
    edges[-1] = min(edges[-1], steps)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_online(cfg: ExperimentConfig) -> ExperimentReport:
    """Stochastic readout updates along an initial-policy trajectory.

    The initial policy is rolled out once; the reservoir is driven by the
    executed inputs and the readout is updated at every step. Candidate
    actions for the max term are drawn from the environment's scheme.
    """
    seed = cfg.seed
    timings = {}
    t_start = time.perf_counter()
    streams = {k: RngStream(seed, v) for k, v in STREAMS.items()}
    ell = cfg["train_steps"]
    gamma = cfg["gamma"]
    on = cfg["online"]
    gamma_eff = gamma if on["gamma_eff"] is None else on["gamma_eff"]
    schedule = StepSizeSchedule(on["a"], on["b"])
    count = cfg["candidates"]["count"]

    with _phase("setup", timings):
        env, policy, _ = build_env(cfg, streams["env"])
        params = build_reservoir(cfg, env.obs_dim + env.action_dim, streams["reservoir"])
    with _phase("initial_rollout", timings):
        exp = rollout(env, policy, ell, streams["policy"], seed=seed)
        X = run(params, zero_state(params), exp.inputs).states
        cands = env.sample_candidates(streams["candidates"], ell * count).reshape(ell, count, 1)
        r_att = attached_rewards(exp.rewards, cfg["reward_alignment"])
    c_obs = np.ascontiguousarray(params.C[:, : env.obs_dim])
    c_act = np.ascontiguousarray(params.C[:, env.obs_dim:])
    checkpoints = sorted({0, ell, *[10**j for j in range(1, 20) if 10**j < ell]})
    ckpt = np.asarray(checkpoints, dtype=np.int64)
    Xk = np.ascontiguousarray(X[:ell])
    with _phase("online_updates", timings):
        W, step_norm, td2, snaps, diverged_at = kernels.online_sweep(
            params.A, c_obs, c_act, params.zeta, Xk, exp.observations, cands, r_att,
            schedule.alphas(ell), float(gamma_eff), np.zeros(params.n), ckpt, float(on["guard"]))
    if diverged_at >= 0:
        done = int(diverged_at)
        raise DivergenceError(
            f"[online_updates] readout norm exceeded {on['guard']:g} after {done} updates",
            partial={"updates": done, "step_norms": step_norm.tolist(),
                     "td_sq": td2.tolist(), "w_norm": float(np.linalg.norm(W))})
    with _phase("evaluation", timings):
        idx = np.unique(np.linspace(0, ell - 1, min(on["eval_points"], ell)).astype(np.int64))
        ckpt_rows = []
        for step, Wc in zip(checkpoints, snaps):
            td = kernels.td_errors(params.A, c_obs, c_act, params.zeta, Xk, exp.observations,
                                   cands, r_att, float(gamma_eff), np.ascontiguousarray(Wc), idx)
            ckpt_rows.append({"step": step, "w_norm": float(np.linalg.norm(Wc)),
                              "bellman_residual": float(np.mean(td * td))})
        windows = [{"start": a, "end": b, "mean_td_sq": float(td2[a:b].mean()),
                    "mean_step_norm": float(step_norm[a:b].mean())}
                   for a, b in _decade_windows(ell)]
    m0 = _phase_metrics(exp, env.env_id == "market_maker")
    data = _header(cfg)
    data.update({
        "phases": {"initial": m0},
        "online": {
            "gamma_eff": float(gamma_eff),
            "schedule": {"a": schedule.a, "b": schedule.b},
            "updates": ell,
            "checkpoints": ckpt_rows,
            "windows": windows,
            "total_drift": float(np.linalg.norm(W - snaps[0])),
            "final_w_norm": float(np.linalg.norm(W)),
            "w_trajectory_hash": _array_hash(snaps),
        },
        "oracle": oracle_summary(cfg),
        TIMING_KEY: {"total": time.perf_counter() - t_start, "phases": timings},
    })
    values = X[1:] @ W
    tables = {
        "experience.csv": _experience_table([("initial", exp)]),
        "values.csv": _values_table([("online", exp, values)]),
        "histogram.csv": _histogram(env.env_id, exp.latent, cfg["histogram_bins"], data["oracle"]),
        "scatter.csv": _scatter_table(exp),
    }
    return ExperimentReport(data, tables)


def _array_hash(a) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return run_online(cfg) if cfg.mode == "online" else run_offline_one_step(cfg)


# --------------------------------------------------------------------------
# multi-seed sweep


def _sweep_worker(doc: dict, seed: int, out_dir: str | None):
    cfg = ExperimentConfig.from_dict(doc, seed)
    report = run_experiment(cfg)
    if out_dir is not None:
        emit_report(report, os.path.join(out_dir, f"seed_{seed}"))
    phases = report["phases"]
    row = {"seed": seed, "initial": phases["initial"]["mean_reward"]}
    if "improved" in phases:
        row["improved"] = phases["improved"]["mean_reward"]
    return row


def sweep(cfg: ExperimentConfig, seeds: int, out_dir=None, workers: int | None = None) -> dict:
    """Run ``seeds`` consecutive seeds from the config seed (default 0).

    Returns per-seed mean rewards, their averages and, for offline runs, a
    one-sided sign test of improved over initial.
    """
    base = int(cfg.doc.get("seed", 0))
    seed_list = [base + i for i in range(int(seeds))]
    workers = workers or min(len(seed_list), os.cpu_count() or 1)
    doc = cfg.to_dict()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, [doc] * len(seed_list), seed_list,
                                 [out_dir] * len(seed_list)))
    else:
        rows = [_sweep_worker(doc, s, out_dir) for s in seed_list]
    summary = {"env": cfg.env, "mode": cfg.mode, "seeds": seed_list, "runs": rows,
               "mean_initial_reward": float(np.mean([r["initial"] for r in rows]))}
    if all("improved" in r for r in rows):
        diffs = [r["improved"] - r["initial"] for r in rows]
        summary.update({
            "mean_improved_reward": float(np.mean([r["improved"] for r in rows])),
            "wins": int(sum(d > 0 for d in diffs)),
            "sign_test_pvalue": sign_test(diffs),
        })
        summary["improvement_significant"] = summary["sign_test_pvalue"] < 0.01
    return summary
