"""Command-line entry points.

Subcommands: validate | run | selfcorr | phase-diagram | bench-scaling |
analyze. Exit codes: 0 success, 1 validation/check failure, 2 configuration
error. Everything numeric is reproducible from (config, master_seed); the
worker pool only changes wall time, never file content.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from . import analysis, dynamics, linops, model, runio
from .analysis import combine_contributions
from .dynamics import Schedule
from .runio import ConfigError, Manifest, RunConfig
from .seeding import split_seed

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_CONFIG = 2

PRESETS = {
    # full-scale protocol: 36 replica groups per temperature, 20 samples
    "paper": dict(
        M=50, n_photons=2, alpha=0.0004,
        temperatures=dict(t_min=0.05, t_max=0.6, count=12, spacing="geometric"),
        n_therm=200_000, n_measure=200_000, exchange_interval=200,
        n_replicas=36, n_samples=20, master_seed=20260815,
        output_dir="runs/paper",
    ),
    # laptop-scale: same physics, 10x fewer steps, 12 groups, 4 samples
    "desk": dict(
        M=50, n_photons=2, alpha=0.0004,
        temperatures=dict(t_min=0.05, t_max=0.6, count=12, spacing="geometric"),
        n_therm=20_000, n_measure=20_000, exchange_interval=200,
        n_replicas=12, n_samples=4, master_seed=20260815,
        output_dir="runs/desk",
    ),
}


class CheckFailure(Exception):
    """A validation or artifact check failed; maps to exit code 1."""


# -- config plumbing ------------------------------------------------------


def resolve_config(args) -> RunConfig:
    """Preset (base) overlaid by --config file, then --seed/--out flags."""
    doc = {}
    if getattr(args, "preset", None):
        doc.update(PRESETS[args.preset])
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except ValueError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config document must be a JSON object")
        doc.update(loaded)
    if not doc:
        raise ConfigError("no configuration given; pass --config PATH or --preset NAME")
    if getattr(args, "seed", None) is not None:
        doc["master_seed"] = args.seed
    if getattr(args, "out", None):
        doc["output_dir"] = args.out
    return runio.config_from_dict(doc)


def _require_dynamics(cfg: RunConfig) -> None:
    if cfg.lambda_mode != "bunched-subset":
        raise ConfigError("dynamics runs need lambda_mode 'bunched-subset'; "
                          "explicit output sets are only supported by the exact oracles")
    if cfg.n_replicas < 2:
        raise ConfigError("overlap statistics need n_replicas >= 2")
    if cfg.n_measure == 1:
        raise ConfigError("n_measure must be 0 (thermalization only) or >= 2")
    if 0 < cfg.n_measure < cfg.stride():
        raise ConfigError(f"snapshot stride {cfg.stride()} exceeds n_measure "
                          f"{cfg.n_measure}; no snapshots would be recorded")


def _schedule(cfg: RunConfig) -> Schedule:
    return Schedule(temperatures=cfg.temperatures.values(), n_therm=cfg.n_therm,
                    n_measure=cfg.n_measure, exchange_interval=cfg.exchange_interval,
                    snapshot_stride=cfg.stride())


# -- validate -------------------------------------------------------------


def _exact_bunched(S, sigma, modes, n_ph: int) -> float:
    # amplitude route spelled out, usable at M = 1 where alpha = 1 forbids
    # a ModelInstance
    M = S.shape[0]
    psi = linops.apply_phase_layer(linops.dft_input_amplitudes(M, n_ph), sigma)
    return sum(abs(linops.evolve_superposition(S, psi, linops.ModeConfig((m,) * n_ph, M))) ** 2
               for m in modes)


def _check_fast_vs_exact(max_M: int, max_nph: int, n_cases: int, seed: int) -> float:
    rng = np.random.default_rng(split_seed(seed, "validate", "fast"))
    worst = 0.0
    for M in range(1, max_M + 1):
        for n_ph in range(2, max_nph + 1):
            for _ in range(n_cases):
                S = linops.haar_random_unitary(M, int(rng.integers(2**63)))
                P = int(rng.integers(1, M + 1))
                modes = tuple(int(m) for m in rng.choice(M, size=P, replace=False))
                sigma = model.random_spins(M, rng)
                fast = model.fully_bunched_probability(S, sigma, modes, n_ph)
                exact = _exact_bunched(S, sigma, modes, n_ph)
                if M > 1:  # alpha < 1 holds, so the instance API applies too
                    inst = model.ModelInstance(S=S, out_set=model.BunchedSubset(modes),
                                               M=M, n_ph=n_ph)
                    exact = model.output_probability_exact(inst, sigma)
                worst = max(worst, abs(fast - exact) / max(abs(exact), 1e-300))
    return worst


def _check_normalization(max_M: int, max_nph: int, seed: int) -> float:
    rng = np.random.default_rng(split_seed(seed, "validate", "norm"))
    worst = 0.0
    for M in range(1, min(max_M, 5) + 1):
        for n_ph in range(1, max_nph + 1):
            S = linops.haar_random_unitary(M, int(rng.integers(2**63)))
            psi = linops.dft_input_amplitudes(M, n_ph)
            psi = linops.apply_phase_layer(psi, model.random_spins(M, rng))
            total = sum(abs(linops.evolve_superposition(S, psi, k)) ** 2
                        for k in linops.enumerate_configs(M, n_ph))
            worst = max(worst, abs(total - 1.0))
    return worst


def _check_dft_amplitudes(max_M: int, max_nph: int) -> float:
    worst = 0.0
    for M in range(1, min(max_M, 6) + 1):
        U = linops.dft_matrix(M)
        for n_ph in range(1, max_nph + 1):
            closed = linops.dft_input_amplitudes(M, n_ph)
            src = linops.ModeConfig((0,) * n_ph, M)
            for x in linops.enumerate_configs(M, n_ph):
                via_perm = linops.scattering_amplitude(U, src, x)
                worst = max(worst, abs(closed.amplitude(x) - via_perm))
    return worst


def _check_flip_updates(max_M: int, max_nph: int, seed: int) -> float:
    rng = np.random.default_rng(split_seed(seed, "validate", "flip"))
    worst = 0.0
    for M in (max(2, max_M // 2), max_M):
        for n_ph in range(2, max_nph + 1):
            S = linops.haar_random_unitary(M, int(rng.integers(2**63)))
            P = int(rng.integers(1, M + 1))
            modes = tuple(int(m) for m in rng.choice(M, size=P, replace=False))
            sigma = model.random_spins(M, rng)
            cache = model.FieldCache.build(S, modes, sigma, n_ph)
            for _ in range(200 * M):
                i = int(rng.integers(M))
                model.flip_update(cache, sigma, i)
                sigma[i] = -sigma[i]
            fresh = model.fully_bunched_probability(S, sigma, modes, n_ph)
            worst = max(worst, abs(cache.probability() - fresh))
    return worst


def run_validation(max_M: int = 6, max_nph: int = 3, n_cases: int = 20, seed: int = 0):
    """The oracle suite: (name, max deviation, tolerance, passed) rows."""
    if max_M > 8 or max_nph > 3:
        raise ConfigError(f"validation caps: max_M <= 8 and max_nph <= 3, "
                          f"got {max_M}, {max_nph}")
    if max_M < 1 or max_nph < 1 or n_cases < 1:
        raise ConfigError("validation sizes must be >= 1")
    checks = [
        ("fast-vs-exact", _check_fast_vs_exact(max_M, max_nph, n_cases, seed), 1e-9),
        ("normalization", _check_normalization(max_M, max_nph, seed), 1e-9),
        ("dft-amplitudes", _check_dft_amplitudes(max_M, max_nph), 1e-12),
        ("flip-update", _check_flip_updates(max_M, max_nph, seed), 1e-8),
    ]
    return [(name, dev, tol, dev < tol) for name, dev, tol in checks]


def cmd_validate(args) -> int:
    report = run_validation(args.max_m, args.max_nph, args.cases, args.seed or 0)
    width = max(len(r[0]) for r in report)
    ok = True
    for name, dev, tol, passed in report:
        ok &= passed
        print(f"{name:<{width}}  max dev {dev:.3e}  tol {tol:.0e}  "
              f"{'pass' if passed else 'FAIL'}")
    print("validation " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_CHECK


# -- run ------------------------------------------------------------------


def _sample_paths(s: int) -> dict:
    d = f"sample{s:03d}"
    return {"dir": d, "summary": f"{d}/summary.csv", "checkpoint": f"{d}/checkpoint.npz"}


def _run_sample(payload: dict) -> dict:
    """Worker: run one disorder sample end to end and write its artifacts."""
    cfg = runio.config_from_dict(payload["config"])
    s = payload["sample"]
    root = payload["root"]
    paths = _sample_paths(s)
    sdir = os.path.join(root, paths["dir"])
    os.makedirs(sdir, exist_ok=True)

    alpha = cfg.alphas()[0]
    P = cfg.channel_count(alpha)
    inst = model.sample_instance(cfg.M, cfg.n_photons, P, cfg.master_seed, s)
    sched = _schedule(cfg)
    emc = dynamics.EMC(inst, sched, n_groups=cfg.n_replicas,
                       seed=analysis.dynamics_seed(cfg.master_seed, s))
    ckpt = os.path.join(root, paths["checkpoint"])
    if os.path.exists(ckpt):
        emc.restore_state(runio.load_checkpoint(ckpt))

    def hook(e):
        runio.save_checkpoint(ckpt, e.snapshot_state())

    trajs = emc.run(checkpoint_hook=hook)
    files = []

    if cfg.n_measure == 0:
        # thermalization-only: record the final energy of every replica slot
        rows = [(T, g, -cfg.M * emc.replicas[g][ti].pr)
                for ti, T in enumerate(sched.temperatures)
                for g in range(cfg.n_replicas)]
        rel = f"{paths['dir']}/therm_energy.csv"
        runio.write_csv(os.path.join(root, rel),
                        ["temperature", "group", "energy"], rows)
        files.append(rel)
        if os.path.exists(ckpt):
            os.remove(ckpt)
        return {"sample": s, "files": files, "summary": None}

    stride = cfg.stride()
    summary_rows = []
    for ti, T in enumerate(sched.temperatures):
        at_T = [t for t in trajs if t.temp_index == ti]
        # decimated energy trace, one column per replica group
        steps = np.arange(stride, cfg.n_measure + 1, stride)
        cols = [t.energy[steps - 1] for t in at_T]
        rel = f"{paths['dir']}/energy_t{ti:02d}.csv"
        runio.write_csv(os.path.join(root, rel),
                        ["step"] + [f"g{t.group:02d}" for t in at_T],
                        ([st] + [c[r] for c in cols] for r, st in enumerate(steps)))
        files.append(rel)

        rel = f"{paths['dir']}/spins_t{ti:02d}.bin"
        runio.save_spins(os.path.join(root, rel),
                         np.stack([t.spins for t in at_T]),
                         meta={"temperature": T, "sample": s, "alpha": alpha,
                               "snapshot_stride": stride, "groups": len(at_T)})
        files.extend([rel, rel + ".json"])

        e = np.concatenate([t.energy for t in at_T])
        sig_t = float(np.mean([dynamics.thermal_fluctuation(t) for t in at_T]))
        summary_rows.append((T, float(-e.mean() / cfg.M), float(e.mean()),
                             float(e.std()), sig_t))

    rel = paths["summary"]
    runio.write_csv(os.path.join(root, rel),
                    ["temperature", "pr_mean", "energy_mean", "energy_std",
                     "sigma_thermal"], summary_rows)
    files.append(rel)
    if os.path.exists(ckpt):
        os.remove(ckpt)
    return {"sample": s, "files": files, "summary": summary_rows}


def _pool_imap(fn, payloads, workers: int):
    """Yield results as jobs finish (inline when workers <= 1)."""
    if workers <= 1 or len(payloads) <= 1:
        for p in payloads:
            yield fn(p)
        return
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, p) for p in payloads]
        for fut in concurrent.futures.as_completed(futures):
            yield fut.result()


def _load_sample_contribution(root: str, man: Manifest, cfg: RunConfig,
                              s: int, ti: int, inst) -> dict:
    """Rebuild a cell contribution from persisted, manifest-verified files."""
    paths = _sample_paths(s)
    spin_rel = f"{paths['dir']}/spins_t{ti:02d}.bin"
    for rel in (spin_rel, spin_rel + ".json", paths["summary"]):
        man.verify(root, rel)
    stack, _ = runio.load_spins(os.path.join(root, spin_rel))
    contrib = analysis.spin_contribution(stack, inst)
    header, rows = runio.read_csv(os.path.join(root, paths["summary"]))
    row = rows[ti]
    vals = dict(zip(header, row))
    e_mean, e_std = float(vals["energy_mean"]), float(vals["energy_std"])
    e_n = cfg.n_measure * cfg.n_replicas
    contrib.update({
        "e_sum": e_mean * e_n,
        "e_sumsq": (e_std**2 + e_mean**2) * e_n,
        "e_n": e_n,
        "sigma_t": float(vals["sigma_thermal"]),
    })
    return contrib


def _write_cell_outputs(out_dir: str, cells, n_exp: int) -> list:
    """Summary, per-cell histograms and the noise-window table. Returns relpaths."""
    files = []
    rows = []
    alphas = sorted({c.alpha for c in cells})
    temps = sorted({c.temperature for c in cells})
    for c in cells:
        ai, ti = alphas.index(c.alpha), temps.index(c.temperature)
        rows.append((c.alpha, c.temperature, c.P, c.label, c.mean_abs_q,
                     c.frac_q_above, c.mean_max_mhat_family, c.mean_max_mhat_allpairs,
                     c.mean_abs_mhat_family, c.mean_abs_mhat_allpairs,
                     c.energy_mean, c.energy_std, c.sigma_thermal, c.n_pairs))
        for kind, hist in (("q", c.hist_q), ("mre", c.hist_m_re), ("mabs", c.hist_m_abs)):
            rel = f"hist_{kind}_a{ai:02d}_t{ti:02d}.csv"
            runio.write_csv(os.path.join(out_dir, rel),
                            ["bin_center", "count", "density"],
                            zip(hist.centers, hist.counts, hist.density))
            files.append(rel)
    runio.write_csv(os.path.join(out_dir, "summary.csv"),
                    ["alpha", "temperature", "P", "label", "mean_abs_q",
                     "frac_q_above_0.5", "mean_max_mhat_family",
                     "mean_max_mhat_allpairs", "mean_abs_mhat_family",
                     "mean_abs_mhat_allpairs", "energy_mean", "energy_std",
                     "sigma_thermal", "n_pairs"], rows)
    files.append("summary.csv")

    noise = []
    for c in cells:
        pr = max(0.0, min(1.0, -c.energy_mean / c.M))
        s_exp = dynamics.measurement_noise(pr, n_exp)
        noise.append((c.alpha, c.temperature, s_exp, c.sigma_thermal, n_exp,
                      int(s_exp < c.sigma_thermal)))
    runio.write_csv(os.path.join(out_dir, "noise_window.csv"),
                    ["alpha", "temperature", "sigma_exp", "sigma_thermal",
                     "n_exp", "valid"], noise)
    files.append("noise_window.csv")
    return files


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    _require_dynamics(cfg)
    if len(cfg.alphas()) != 1:
        raise ConfigError("run takes a scalar alpha; use phase-diagram for grids")
    root = cfg.output_dir
    os.makedirs(root, exist_ok=True)

    man_path = os.path.join(root, "manifest.json")
    if os.path.exists(man_path):
        man = Manifest.load(root)
        if man.doc["config"] != runio.config_to_dict(cfg):
            raise ConfigError(f"output dir {root} holds a different run; "
                              "pick a fresh --out or delete it")
        print(f"resuming run in {root}")
    else:
        man = Manifest.create(cfg)
        runio.save_config(cfg, os.path.join(root, "config.json"))
        man.declare(root, "config.json")
        man.save(root)

    pending = [s for s in range(cfg.n_samples)
               if _sample_paths(s)["summary"] not in man.doc["files"]
               and f"{_sample_paths(s)['dir']}/therm_energy.csv" not in man.doc["files"]]
    payloads = [{"config": runio.config_to_dict(cfg), "sample": s, "root": root}
                for s in pending]
    for res in _pool_imap(_run_sample, payloads, args.workers or 1):
        # declare as each sample lands so an interrupt never loses finished work
        for rel in res["files"]:
            man.declare(root, rel)
        man.save(root)
        print(f"sample {res['sample']:03d} done ({len(res['files'])} files)")

    if cfg.n_measure > 0:
        files = _analyze_into(root, man, cfg, root, n_exp=args.n_exp)
        for rel in files:
            man.declare(root, rel)
    man.finish()
    man.save(root)
    print(f"run complete: {len(man.doc['files'])} files in {root}")
    return EXIT_OK


# -- analyze ---------------------------------------------------------------


def _analyze_into(root: str, man: Manifest, cfg: RunConfig, out_dir: str,
                  n_exp: int = 10_000) -> list:
    """Pool persisted samples into per-temperature cells; write tables."""
    alpha = cfg.alphas()[0]
    P = cfg.channel_count(alpha)
    temps = cfg.temperatures.values()
    if any(f"sample{s:03d}/spins_t00.bin" not in man.doc["files"]
           for s in range(cfg.n_samples)):
        raise CheckFailure("run has no measurement snapshots to analyze "
                           "(n_measure = 0 or incomplete run)")
    os.makedirs(out_dir, exist_ok=True)
    insts = [model.sample_instance(cfg.M, cfg.n_photons, P, cfg.master_seed, s)
             for s in range(cfg.n_samples)]
    cells = []
    for ti, T in enumerate(temps):
        contribs = [_load_sample_contribution(root, man, cfg, s, ti, insts[s])
                    for s in range(cfg.n_samples)]
        cells.append(combine_contributions(alpha, T, contribs))
    return _write_cell_outputs(out_dir, cells, n_exp)


def cmd_analyze(args) -> int:
    root = args.run_dir
    try:
        man = Manifest.load(root)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc))
    cfg = man.config
    out_dir = args.out or os.path.join(root, "analysis")
    try:
        files = _analyze_into(root, man, cfg, out_dir, n_exp=args.n_exp)
    except ValueError as exc:
        # manifest verification failures: undeclared or tampered inputs
        raise CheckFailure(str(exc))
    print(f"analyzed {cfg.n_samples} samples -> {len(files)} files in {out_dir}")
    return EXIT_OK


# -- selfcorr ---------------------------------------------------------------


def cmd_selfcorr(args) -> int:
    root = args.run_dir
    try:
        man = Manifest.load(root)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc))
    cfg = man.config
    taus = [int(t) for t in args.tau.split(",")]
    if any(t < 0 for t in taus):
        raise ConfigError(f"taus must be non-negative, got {taus}")
    if cfg.stride() != 1:
        raise CheckFailure("self-correlation needs per-step snapshots; "
                           "re-run with \"snapshot_stride\": 1 in the config")
    if cfg.n_measure == 0:
        raise CheckFailure("run has no measurement snapshots")
    if max(taus) >= cfg.n_measure:
        raise CheckFailure(f"tau {max(taus)} >= {cfg.n_measure} recorded steps")
    temps = cfg.temperatures.values()
    table = np.zeros((len(taus), len(temps)))
    for ti in range(len(temps)):
        acc = []
        for s in range(cfg.n_samples):
            rel = f"sample{s:03d}/spins_t{ti:02d}.bin"
            try:
                man.verify(root, rel)
                man.verify(root, rel + ".json")
            except ValueError as exc:
                raise CheckFailure(str(exc))
            stack, _ = runio.load_spins(os.path.join(root, rel))
            for g in range(stack.shape[0]):
                traj = dynamics.Trajectory(group=g, temp_index=ti,
                                           temperature=temps[ti],
                                           pr=np.empty(0), spins=stack[g],
                                           snapshot_stride=1)
                acc.append([dynamics.self_correlation(traj, t) for t in taus])
        table[:, ti] = np.mean(acc, axis=0)
    out = args.out or os.path.join(root, "selfcorr.csv")
    runio.write_csv(out, ["tau"] + [f"T={T:g}" for T in temps],
                    ([tau] + list(table[r]) for r, tau in enumerate(taus)))
    print(f"wrote F(tau) for {len(temps)} temperatures to {out}")
    return EXIT_OK


# -- phase diagram -----------------------------------------------------------


def _sweep_job(payload: dict) -> dict:
    """Worker: one (alpha, sample) EMC run -> per-temperature contributions."""
    cfg = runio.config_from_dict(payload["config"])
    alpha = payload["alpha"]
    s = payload["sample"]
    P = cfg.channel_count(alpha)
    inst = model.sample_instance(cfg.M, cfg.n_photons, P, cfg.master_seed, s)
    sched = _schedule(cfg)
    trajs = dynamics.run_emc(inst, sched, n_replica_groups=cfg.n_replicas,
                             seed=analysis.dynamics_seed(cfg.master_seed, s))
    by_T = {}
    for ti in range(sched.n_temps):
        at_T = [t for t in trajs if t.temp_index == ti]
        by_T[ti] = analysis.cell_contribution(at_T, inst)
    return {"alpha": alpha, "sample": s, "contribs": by_T}


def cmd_phase_diagram(args) -> int:
    cfg = resolve_config(args)
    _require_dynamics(cfg)
    if cfg.n_measure == 0:
        raise ConfigError("phase-diagram needs n_measure > 0")
    root = cfg.output_dir
    os.makedirs(root, exist_ok=True)
    runio.save_config(cfg, os.path.join(root, "config.json"))
    man = Manifest.create(cfg)
    man.declare(root, "config.json")

    temps = cfg.temperatures.values()
    payloads = [{"config": runio.config_to_dict(cfg), "alpha": a, "sample": s}
                for a in cfg.alphas() for s in range(cfg.n_samples)]
    results = list(_pool_imap(_sweep_job, payloads, args.workers or 1))
    results.sort(key=lambda r: (r["alpha"], r["sample"]))

    cells = []
    for a in cfg.alphas():
        per_alpha = [r for r in results if r["alpha"] == a]
        for ti, T in enumerate(temps):
            cells.append(combine_contributions(a, T, [r["contribs"][ti] for r in per_alpha]))
    files = _write_cell_outputs(root, cells, n_exp=args.n_exp)
    for rel in files:
        man.declare(root, rel)
    man.finish()
    man.save(root)
    for c in cells:
        print(f"alpha={c.alpha:<10g} T={c.temperature:<8.4g} {c.label:11s} "
              f"max|m|_fam={c.mean_max_mhat_family:.3f} |q|={c.mean_abs_q:.3f}")
    print(f"phase diagram: {len(cells)} cells -> {root}")
    return EXIT_OK


# -- bench-scaling ------------------------------------------------------------


def bench_scaling(sizes, M: int = 50, n_ph: int = 2, seed: int = 0,
                  flips_per_rep: int = 200_000, repeats: int = 3):
    """Mean per-flip seconds vs |Lambda|, plus a linear fit (slope, intercept, R^2)."""
    sizes = sorted(set(int(s) for s in sizes))
    if any(s < 1 or s > M for s in sizes):
        raise ConfigError(f"lambda sizes must lie in [1, M={M}], got {sizes}")
    if not dynamics.HAVE_NUMBA:  # pure-python kernel: keep the benchmark short
        flips_per_rep = min(flips_per_rep, 5_000)
    times = []
    for P in sizes:
        inst = model.sample_instance(M, n_ph, P, seed, 0)
        times.append(dynamics.update_time_per_flip(
            inst, n_steps=max(1, flips_per_rep // M), repeats=repeats,
            seed=split_seed(seed, "bench", P)))
    x = np.array(sizes, dtype=np.float64)
    y = np.array(times)
    if len(sizes) >= 2:
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = ((y - y.mean()) ** 2).sum()
        r2 = 1.0 - float((resid**2).sum() / ss_tot) if ss_tot > 0 else 1.0
    else:
        slope, intercept, r2 = 0.0, float(y[0]), 1.0
    return list(zip(sizes, times)), float(slope), float(intercept), float(r2)


def cmd_bench_scaling(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    rows, slope, intercept, r2 = bench_scaling(
        sizes, M=args.m, n_ph=args.nph, seed=args.seed or 0,
        flips_per_rep=args.flips)
    out = args.out or "bench_scaling.csv"
    runio.write_csv(out, ["lambda_size", "per_flip_seconds"], rows)
    for P, t in rows:
        print(f"|Lambda|={P:<4d} {t * 1e9:9.1f} ns/flip")
    print(f"linear fit: slope {slope:.3e} s/channel, intercept {intercept:.3e} s, "
          f"R^2 {r2:.4f} -> {out}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def _add_common(sp, out_help="output directory override"):
    sp.add_argument("--config", help="JSON run configuration")
    sp.add_argument("--out", help=out_help)
    sp.add_argument("--seed", type=int, help="master seed override")
    sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--preset", choices=sorted(PRESETS), help="named base configuration")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="phsim",
        description="Monte Carlo simulator for interference-induced spin models")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="run the exact-oracle cross checks")
    _add_common(sp)
    sp.add_argument("--max-m", type=int, default=6, help="largest mode count (<= 8)")
    sp.add_argument("--max-nph", type=int, default=3, help="largest photon number (<= 3)")
    sp.add_argument("--cases", type=int, default=20, help="random cases per size")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("run", help="EMC run with full artifact output")
    _add_common(sp)
    sp.add_argument("--n-exp", type=int, default=10_000,
                    help="shots assumed in the noise window table")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("selfcorr", help="time autocorrelation F(tau) from a run")
    sp.add_argument("run_dir", help="directory written by `run`")
    _add_common(sp, out_help="output CSV path")
    sp.add_argument("--tau", default="0,1,2,5,10,20,50,100,200,500,1000",
                    help="comma-separated lag list")
    sp.set_defaults(fn=cmd_selfcorr)

    sp = sub.add_parser("phase-diagram", help="(alpha, T) sweep with histograms")
    _add_common(sp)
    sp.add_argument("--n-exp", type=int, default=10_000,
                    help="shots assumed in the noise window table")
    sp.set_defaults(fn=cmd_phase_diagram)

    sp = sub.add_parser("bench-scaling", help="per-flip cost vs channel count")
    _add_common(sp, out_help="output CSV path")
    sp.add_argument("--sizes", default="1,5,10,25,50", help="comma-separated |Lambda| list")
    sp.add_argument("--m", type=int, default=50, help="mode count")
    sp.add_argument("--nph", type=int, default=2, help="photon number")
    sp.add_argument("--flips", type=int, default=200_000, help="flips per timing repeat")
    sp.set_defaults(fn=cmd_bench_scaling)

    sp = sub.add_parser("analyze", help="recompute summaries from run artifacts")
    sp.add_argument("run_dir", help="directory written by `run`")
    _add_common(sp, out_help="analysis output directory")
    sp.add_argument("--n-exp", type=int, default=10_000,
                    help="shots assumed in the noise window table")
    sp.set_defaults(fn=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
