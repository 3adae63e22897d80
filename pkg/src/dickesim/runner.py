"""Experiment pipelines: config parsing, execution, delimited outputs.

Configs are flat `key = value` text under `[section]` headers.  Unknown keys
and unknown sections are rejected by name; missing required keys name the
key and section.  Every run writes CSV files plus a run_manifest.json
carrying the echoed config, seed, wall time and a sha256 per output, so the
figure tooling can detect stale inputs.  CSV floats use the shortest
round-trip decimal representation; rerunning a config with the same seed
reproduces the files byte for byte.

Exit-code contract (used by the CLI): 0 success, 2 validation failure,
3 numerical contract violation (cutoff tail breach, conservation breach).
"""

from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, classical, mqc, spectrum, twa
from .model import (CutoffError, ModelParams, coherent_spin_state,
                    critical_state, make_generator)
from .propagate import (EigenSystem, FitWindowPolicy, NoExponentialWindow,
                        diagonalize_model, evolve_batch, extract_lambda_q,
                        fotoc_series, scrambling_time)

MAX_DIM = 8192
MAX_TRAJECTORIES = 10**6

EXPERIMENTS = ("spectrum", "lyapunov-map", "fotoc", "twa", "renyi",
               "thermalize")


class ConfigError(ValueError):
    """Configuration rejected; message names the offending section/key."""


# schema: section -> key -> (parser, required, default)
def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s: str) -> list[float]:
    return [float(tok) for tok in s.replace(",", " ").split()]


def _int_list(s: str) -> list[int]:
    out = []
    for tok in s.replace(",", " ").split():
        if "-" in tok[1:]:
            lo, hi = tok.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


_SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "n_spins": (int, True, None),
        "g_khz": (float, True, None),
        "delta_khz": (float, True, None),
        "b_khz": (float, True, None),
        "n_max": (str, True, None),  # integer or "auto"
        "tail_threshold": (float, False, 1e-8),
    },
    "state": {
        "recipe": (str, False, "critical"),
        "theta": (float, False, 0.5 * np.pi),
        "phi": (float, False, 0.0),
        "sign": (int, False, -1),
        "n_fock": (int, False, 0),
    },
    "time": {
        "t_start": (float, False, 0.0),
        "t_end": (float, True, None),
        "n_points": (int, True, None),
    },
    "fotoc": {
        "generator": (str, True, None),
        "dphi": (str, False, "auto"),
        "theta": (float, False, 0.0),
        "phi": (float, False, 0.0),
        # crossing level for t*, in variance units per spin; 0 means use the
        # measured plateau (needs the grid to cover saturation untruncated)
        "t_star_level_per_spin": (float, False, 0.0),
    },
    "twa": {
        "n_traj": (int, True, None),
        "rtol": (float, False, 1e-8),
        "atol": (float, False, 1e-10),
        "rescaled": (str, False, "auto"),
    },
    "renyi": {
        "axis": (str, False, "optimize"),
        "strategy": (str, False, "max_capture"),
        "theta": (float, False, 0.5 * np.pi),
        "phi": (float, False, 0.0),
        "n_theta": (int, False, 24),
        "n_phi": (int, False, 48),
        "subsystems": (_int_list, False, []),
        "average_start": (float, False, 4.0),
        "average_end": (float, False, 12.0),
    },
    "spectrum": {
        "resolve_parity": (_bool, False, True),
        "unfold_degree": (int, False, 7),
        "trim_fraction": (float, False, 0.05),
        "tail_threshold": (float, False, 1e-6),
        "min_levels": (int, False, 50),
        "compute_references": (_bool, False, False),
    },
    "lyapunov": {
        "b_khz_values": (_float_list, True, None),
        "n_samples": (int, False, 100),
        "r_max": (float, False, 1.5),
        "t_end": (float, False, 100.0),
        "renorm_interval": (float, False, 0.1),
        "energy_min": (float, False, -2.0),
        "energy_max": (float, False, 2.0),
        "energy_bins": (int, False, 16),
        "rtol": (float, False, 1e-8),
        "atol": (float, False, 1e-10),
        "drift_tol": (float, False, 0.05),
    },
    "thermalize": {
        "window_start": (float, False, 6.0),
        "window_end": (float, False, 12.0),
        "n_window_points": (int, False, 121),
        "subsystems": (_int_list, False, []),
    },
    "decoherence": {
        "gamma_per_s": (float, False, 0.0),
        "enhancement": (float, False, 1.0),
    },
    "run": {
        "seed": (int, False, 1),
        "out_dir": (str, False, ""),
    },
}

_REQUIRED_SECTIONS = {
    "spectrum": ("model",),
    "lyapunov-map": ("model", "lyapunov"),
    "fotoc": ("model", "time", "fotoc"),
    "twa": ("model", "time", "twa"),
    "renyi": ("model", "time"),
    "thermalize": ("model", "thermalize"),
}


@dataclass
class ExperimentConfig:
    experiment: str
    sections: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def has(self, section: str) -> bool:
        return section in self.sections


def parse_config(path: str | Path, experiment: str) -> ExperimentConfig:
    """Read, type-check and default-fill a config for one experiment."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc

    sections: dict[str, dict] = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        spec = _SCHEMA[sec]
        parsed = {}
        for key, raw in cp.items(sec):
            if key not in spec:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            parser = spec[key][0]
            try:
                parsed[key] = parser(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"bad value for [{sec}] {key}: {raw!r} ({exc})") from exc
        sections[sec] = parsed

    for sec in _REQUIRED_SECTIONS[experiment]:
        if sec not in sections:
            raise ConfigError(f"experiment {experiment!r} requires section [{sec}]")

    for sec, parsed in sections.items():
        for key, (parser, required, default) in _SCHEMA[sec].items():
            if key in parsed:
                continue
            if required:
                raise ConfigError(f"missing required key {key!r} in section [{sec}]")
            parsed[key] = default
    return ExperimentConfig(experiment=experiment, sections=sections)


def _model_params(cfg: ExperimentConfig, n_max_override: int | None = None) -> ModelParams:
    m = cfg["model"]
    n_max = n_max_override
    if n_max is None:
        raw = m["n_max"]
        if raw.strip().lower() == "auto":
            raise ConfigError("n_max=auto must be resolved by choose_cutoff "
                              "before building params")
        n_max = int(raw)
    params = ModelParams(n_spins=m["n_spins"], g_khz=m["g_khz"],
                         delta_khz=m["delta_khz"], b_khz=m["b_khz"],
                         n_max=n_max)
    if params.dim > MAX_DIM:
        raise ConfigError(
            f"dimension {params.dim} exceeds the ceiling {MAX_DIM}; "
            f"reduce n_max or n_spins")
    return params


def _initial_state(cfg: ExperimentConfig, params: ModelParams) -> np.ndarray:
    st = cfg.sections.get("state", {k: v[2] for k, v in _SCHEMA["state"].items()})
    recipe = st.get("recipe", "critical")
    if recipe == "critical":
        return critical_state(params)
    if recipe == "coherent":
        return coherent_spin_state(params, theta=st["theta"], phi=st["phi"],
                                   sign=st["sign"], n_fock=st["n_fock"])
    raise ConfigError(f"unknown state recipe {recipe!r}")


def _time_grid(cfg: ExperimentConfig) -> np.ndarray:
    t = cfg["time"]
    if t["n_points"] < 2:
        raise ConfigError("time.n_points must be >= 2")
    if t["t_end"] <= t["t_start"]:
        raise ConfigError("time.t_end must exceed time.t_start")
    return np.linspace(t["t_start"], t["t_end"], t["n_points"])


def _enhancement(cfg: ExperimentConfig) -> tuple[float, float]:
    if not cfg.has("decoherence"):
        return 0.0, 1.0
    d = cfg["decoherence"]
    if d["gamma_per_s"] < 0 or d["enhancement"] <= 0:
        raise ConfigError("decoherence values out of range")
    return d["gamma_per_s"], d["enhancement"]


def apply_dephasing_decay(t_ms: np.ndarray, intensities: np.ndarray,
                          gamma_per_s: float, n_spins: int) -> np.ndarray:
    """Collective-dephasing envelope I -> I exp(-Gamma N t)."""
    gamma_per_ms = gamma_per_s / 1000.0
    return np.asarray(intensities) * np.exp(
        -gamma_per_ms * n_spins * np.asarray(t_ms))


def choose_cutoff(cfg: ExperimentConfig, start: int = 32,
                  tail_threshold: float = 1e-8,
                  mean_shift_tol: float = 1e-6) -> int:
    """Double n_max from `start` until the evolved state passes the tail
    check and <n>(t) stops moving between consecutive cutoffs."""
    from .model import check_fock_tail, generator_n
    from .propagate import expectation_series
    t_grid = _time_grid(cfg) if cfg.has("time") else np.linspace(0.0, 12.0, 49)
    probe = t_grid[:: max(1, len(t_grid) // 32)]
    prev_means = None
    n_max = start
    while True:
        params = _model_params(cfg, n_max_override=n_max)
        eig = diagonalize_model(params)
        psi0 = _initial_state(cfg, params)
        states = evolve_batch(eig, psi0, probe)
        means, _ = expectation_series(eig, psi0, generator_n(params), probe)
        try:
            check_fock_tail(states.T, params, threshold=tail_threshold)
            tail_ok = True
        except CutoffError:
            tail_ok = False
        if tail_ok and prev_means is not None:
            shift = np.abs(means - prev_means).max() / max(means.max(), 1.0)
            if shift < mean_shift_tol:
                return n_max
        prev_means = means
        n_max *= 2
        if (n_max + 1) * (params.spin_dim) > MAX_DIM:
            raise CutoffError(
                f"cutoff doubling exceeded the dimension ceiling {MAX_DIM}")


def resolve_n_max(cfg: ExperimentConfig) -> int:
    raw = cfg["model"]["n_max"]
    if raw.strip().lower() == "auto":
        return choose_cutoff(cfg, tail_threshold=cfg["model"]["tail_threshold"])
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"model.n_max must be an integer or 'auto', got {raw!r}")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows, comment: str | None = None) -> int:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(",".join(header))
    count = 0
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
        count += 1
    path.write_text("\n".join(lines) + "\n")
    return count


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    experiment: str
    seed: int
    version: str
    config: dict
    outputs: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def register(self, path: Path, n_rows: int):
        self.outputs[path.name] = {"sha256": sha256_file(path), "rows": n_rows}

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "run_manifest.json"
        payload = {
            "experiment": self.experiment,
            "seed": self.seed,
            "version": self.version,
            "config": self.config,
            "outputs": self.outputs,
            "derived": self.derived,
            "wall_time_s": self.wall_time_s,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True,
                                   default=_json_default) + "\n")
        return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _fit_summary(fit) -> dict:
    return {"rate_per_ms": fit.rate, "ci95": fit.ci95,
            "window_ms": list(fit.window), "n_points": fit.n_points,
            "r_squared": fit.r_squared}


# ---------------------------------------------------------------------------
# experiment pipelines


def run_fotoc(cfg: ExperimentConfig, out_dir: Path, seed: int,
              manifest: RunManifest):
    params = _model_params(cfg, resolve_n_max(cfg))
    gamma, enhancement = _enhancement(cfg)
    if enhancement != 1.0:
        params = _enhanced(params, enhancement)
    t_grid = _time_grid(cfg)
    eig = diagonalize_model(params)
    psi0 = _initial_state(cfg, params)
    fc = cfg["fotoc"]
    dphi = 0.01 / params.n_spins if fc["dphi"].strip().lower() == "auto" \
        else float(fc["dphi"])
    manifest.derived["dphi"] = dphi
    manifest.derived["dim"] = params.dim
    tail_threshold = cfg["model"]["tail_threshold"]
    for name in fc["generator"].replace(",", " ").split():
        gen = make_generator(params, name, theta=fc["theta"], phi=fc["phi"])
        series = fotoc_series(eig, psi0, gen, dphi, t_grid,
                              tail_threshold=tail_threshold)
        tag = name.replace("(", "").replace(")", "")
        path = out_dir / f"fotoc_{tag}.csv"
        n = write_csv(path, ["t_ms", "F", "one_minus_F_over_dphi2", "var_G"],
                      zip(series.t_ms, series.fidelity, series.growth,
                          series.var_g),
                      comment=f"generator={series.generator} dphi={dphi!r}")
        manifest.register(path, n)
        entry = {"max_fock_tail": series.max_fock_tail}
        try:
            fit = extract_lambda_q(t_grid, series.one_minus_f)
            entry["lambda_q"] = _fit_summary(fit)
        except NoExponentialWindow as exc:
            entry["lambda_q"] = f"no window: {exc}"
        per_spin = cfg["fotoc"]["t_star_level_per_spin"]
        ts = scrambling_time(t_grid, series.growth,
                             level=per_spin * params.n_spins
                             if per_spin > 0 else None)
        entry["t_star_ms"] = ts.t_star
        entry["t_star_saturated"] = ts.saturated
        manifest.derived[f"fotoc_{tag}"] = entry


def _enhanced(params: ModelParams, factor: float) -> ModelParams:
    return params.with_updates(g_khz=params.g_khz * factor,
                               delta_khz=params.delta_khz * factor,
                               b_khz=params.b_khz * factor)


def run_twa(cfg: ExperimentConfig, out_dir: Path, seed: int,
            manifest: RunManifest):
    params = _model_params(cfg, resolve_n_max(cfg))
    t_grid = _time_grid(cfg)
    tw = cfg["twa"]
    if tw["n_traj"] > MAX_TRAJECTORIES:
        raise ConfigError(f"n_traj exceeds ceiling {MAX_TRAJECTORIES}")
    rescaled = None if tw["rescaled"] == "auto" else _bool(tw["rescaled"])
    st = cfg.sections.get("state", {})
    recipe = twa.WignerRecipe(theta=st.get("theta", 0.5 * np.pi),
                              phi=st.get("phi", 0.0),
                              sign=st.get("sign", -1))
    moments = twa.evolve_ensemble(params, recipe, tw["n_traj"], t_grid,
                                  seed=seed, rescaled=rescaled,
                                  rtol=tw["rtol"], atol=tw["atol"])
    header = ["t_ms"]
    cols = [moments.t_ms]
    for name in moments.means:
        header += [f"mean_{name}", f"var_{name}", f"stderr_var_{name}"]
        cols += [moments.means[name], moments.variances[name],
                 moments.var_stderr[name]]
    path = out_dir / "twa_moments.csv"
    n = write_csv(path, header, zip(*cols))
    manifest.register(path, n)
    manifest.derived["rescaled"] = moments.rescaled
    manifest.derived["max_energy_drift"] = moments.max_energy_drift
    manifest.derived["max_spin_drift"] = moments.max_spin_drift
    for name, fit in twa.extract_exponents(moments).items():
        manifest.derived[f"lambda_var_{name}"] = _fit_summary(fit)


def run_renyi(cfg: ExperimentConfig, out_dir: Path, seed: int,
              manifest: RunManifest):
    params = _model_params(cfg, resolve_n_max(cfg))
    gamma, enhancement = _enhancement(cfg)
    if enhancement != 1.0:
        params = _enhanced(params, enhancement)
    t_grid = _time_grid(cfg)
    eig = diagonalize_model(params)
    psi0 = _initial_state(cfg, params)
    ry = cfg.sections.get("renyi", {k: v[2] for k, v in _SCHEMA["renyi"].items()})

    states = evolve_batch(eig, psi0, t_grid)
    from .model import check_fock_tail
    manifest.derived["max_fock_tail"] = check_fock_tail(
        states.T, params, threshold=cfg["model"]["tail_threshold"])
    manifest.derived["dim"] = params.dim

    rows = []
    sub_rows = []
    for i, t in enumerate(t_grid):
        psi = states[:, i]
        if ry["axis"] == "optimize":
            choice = mqc.optimize_axis(psi, params, strategy=ry["strategy"],
                                       n_theta=ry["n_theta"],
                                       n_phi=ry["n_phi"])
            theta, phi = choice.theta, choice.phi
        elif ry["axis"] == "x":
            theta, phi = 0.5 * np.pi, 0.0
        elif ry["axis"] == "fixed":
            theta, phi = ry["theta"], ry["phi"]
        else:
            raise ConfigError(f"unknown renyi.axis {ry['axis']!r}")
        est = mqc.renyi_spin_phonon(psi, params, theta, phi)
        dec = est.decomposition
        i0_sum = dec.i0_traced + dec.i0_kept
        row = [t, est.s2_exact, est.s_f_spin, est.s_f_spin_boson, theta, phi,
               dec.i0_traced, dec.i0_kept, dec.d_diag, dec.c_off]
        if gamma > 0:
            decayed = float(apply_dephasing_decay(
                np.array([t]), np.array([i0_sum]), gamma, params.n_spins)[0])
            row += [-np.log(decayed)]
        rows.append(row)
        for l_a in ry["subsystems"]:
            sub = mqc.subsystem_fotoc_renyi(psi, params, l_a, theta, phi)
            sub_rows.append([t, l_a, sub.s2_exact, sub.estimator,
                             sub.i0_subsystem, sub.i0_complement,
                             sub.d_diag, sub.c_off])

    header = ["t_ms", "s2_exact", "s_f_spin", "s_f_spin_boson", "theta",
              "phi", "i0_spin", "i0_boson", "d_diag", "c_off"]
    if gamma > 0:
        header += ["s_f_spin_boson_decayed"]
    path = out_dir / "renyi_series.csv"
    n = write_csv(path, header, rows)
    manifest.register(path, n)

    arr = np.asarray([r[:4] for r in rows], dtype=float)
    win = (arr[:, 0] >= ry["average_start"]) & (arr[:, 0] <= ry["average_end"])
    if win.any():
        i0w = np.asarray([[r[6], r[6] + r[7]] for r in rows], dtype=float)[win]
        manifest.derived["time_averages"] = {
            "window_ms": [ry["average_start"], ry["average_end"]],
            "s2_exact": float(arr[win, 1].mean()),
            "s_f_spin": float(arr[win, 2].mean()),
            "s_f_spin_boson": float(arr[win, 3].mean()),
            # window means taken on purities/intensities, then logged, so
            # the estimator and the exact value are averaged identically
            "s2_log_mean_purity": float(-np.log(np.exp(-arr[win, 1]).mean())),
            "s_f_spin_log_mean": float(-np.log(i0w[:, 0].mean())),
            "s_f_spin_boson_log_mean": float(-np.log(i0w[:, 1].mean())),
        }
    if sub_rows:
        path = out_dir / "renyi_subsystems.csv"
        n = write_csv(path, ["t_ms", "l_a", "s2_exact", "estimator",
                             "i0_subsystem", "i0_complement", "d_diag",
                             "c_off"], sub_rows)
        manifest.register(path, n)
    if gamma > 0:
        manifest.derived["gamma_per_s"] = gamma
        manifest.derived["enhancement"] = enhancement


def run_spectrum(cfg: ExperimentConfig, out_dir: Path, seed: int,
                 manifest: RunManifest):
    params = _model_params(cfg, resolve_n_max(cfg))
    eig = diagonalize_model(params)
    sp = cfg.sections.get("spectrum",
                          {k: v[2] for k, v in _SCHEMA["spectrum"].items()})
    stats = spectrum.level_statistics(
        eig, params, resolve_parity=sp["resolve_parity"],
        unfold_degree=sp["unfold_degree"], trim_fraction=sp["trim_fraction"],
        tail_threshold=sp["tail_threshold"], min_levels=sp["min_levels"])

    path = out_dir / "level_summary.csv"
    n = write_csv(path, ["window", "parity", "n_levels", "ok", "mean_r",
                         "ks_wigner", "ks_poisson"],
                  [[s.window, s.parity, s.n_levels, s.ok, s.mean_r,
                    s.ks_wigner, s.ks_poisson] for s in stats])
    manifest.register(path, n)

    path = out_dir / "level_spacings.csv"
    rows = [[s.window, s.parity, v] for s in stats for v in s.spacings]
    n = write_csv(path, ["window", "parity", "spacing"], rows)
    manifest.register(path, n)

    keep = spectrum.converged_mask(eig, params, sp["tail_threshold"])
    par = spectrum.resolved_parities(eig, params)
    path = out_dir / "levels.csv"
    n = write_csv(path, ["energy_rad_per_ms", "parity", "converged"],
                  zip(eig.energies, np.where(par > 0, 1, -1),
                      keep.astype(int)))
    manifest.register(path, n)

    manifest.derived["critical_energy"] = params.critical_energy
    manifest.derived["dim"] = params.dim
    if sp["compute_references"]:
        manifest.derived["goe_mean_r"] = spectrum.goe_reference_mean_r(seed=seed)
        manifest.derived["poisson_mean_r"] = spectrum.poisson_reference_mean_r(seed=seed)


def run_lyapunov_map(cfg: ExperimentConfig, out_dir: Path, seed: int,
                     manifest: RunManifest):
    m = cfg["model"]
    ly = cfg["lyapunov"]
    edges = np.linspace(ly["energy_min"], ly["energy_max"],
                        ly["energy_bins"] + 1)
    cells = classical.phase_diagram_scan(
        m["g_khz"], m["delta_khz"], ly["b_khz_values"],
        n_samples=ly["n_samples"], r_max=ly["r_max"], t_end=ly["t_end"],
        renorm_interval=ly["renorm_interval"], energy_edges=edges,
        rtol=ly["rtol"], atol=ly["atol"], seed=seed,
        drift_tol=ly["drift_tol"])
    path = out_dir / "lyapunov_map.csv"
    n = write_csv(path, ["b_khz", "sqrt_bc_over_b", "e_lo", "e_hi",
                         "lambda_max", "n_samples", "n_converged"],
                  [[c.b_khz, c.sqrt_bc_over_b, c.e_lo, c.e_hi, c.lambda_max,
                    c.n_samples, c.n_converged] for c in cells])
    manifest.register(path, n)


def run_thermalize(cfg: ExperimentConfig, out_dir: Path, seed: int,
                   manifest: RunManifest):
    params = _model_params(cfg, resolve_n_max(cfg))
    eig = diagonalize_model(params)
    psi0 = _initial_state(cfg, params)
    th = cfg["thermalize"]
    window = (th["window_start"], th["window_end"])

    diag_w = spectrum.diagonal_ensemble(eig, psi0)
    p_m_diag, p_n_diag = spectrum.weighted_distributions(eig, diag_w, params)
    p_m_avg, p_n_avg = spectrum.time_averaged_distributions(
        eig, psi0, params, window, th["n_window_points"])

    target = float(diag_w @ eig.energies)
    therm = spectrum.thermal_ensemble(eig, target)

    path = out_dir / "dist_spin.csv"
    n = write_csv(path, ["m", "p_time_avg", "p_diagonal"],
                  zip(params.m_values, p_m_avg, p_m_diag))
    manifest.register(path, n)
    path = out_dir / "dist_fock.csv"
    n = write_csv(path, ["n", "p_time_avg", "p_diagonal"],
                  zip(range(params.fock_dim), p_n_avg, p_n_diag))
    manifest.register(path, n)

    manifest.derived["tv_spin"] = spectrum.total_variation(p_m_avg, p_m_diag)
    manifest.derived["tv_fock"] = spectrum.total_variation(p_n_avg, p_n_diag)
    manifest.derived["beta_per_rad_ms"] = therm.beta
    manifest.derived["beta_residual"] = therm.residual
    manifest.derived["negative_beta_branch"] = therm.negative_branch
    manifest.derived["target_energy"] = target

    if th["subsystems"]:
        s2_th = spectrum.ensemble_subsystem_renyi(eig, therm.weights, params,
                                                  th["subsystems"])
        s2_dg = spectrum.ensemble_subsystem_renyi(eig, diag_w, params,
                                                  th["subsystems"])
        path = out_dir / "ensemble_renyi.csv"
        n = write_csv(path, ["l_a", "s2_thermal", "s2_diagonal"],
                      [[l, s2_th[l], s2_dg[l]] for l in th["subsystems"]])
        manifest.register(path, n)


_RUNNERS = {
    "fotoc": run_fotoc,
    "twa": run_twa,
    "renyi": run_renyi,
    "spectrum": run_spectrum,
    "lyapunov-map": run_lyapunov_map,
    "thermalize": run_thermalize,
}


def run(experiment: str, config_path: str | Path, out_dir: str | Path,
        seed: int | None = None) -> RunManifest:
    """Execute one experiment; returns the manifest written alongside CSVs."""
    cfg = parse_config(config_path, experiment)
    run_sec = cfg.sections.get("run", {})
    out = Path(out_dir) if str(out_dir) else Path(run_sec.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    run_seed = seed if seed is not None else run_sec.get(
        "seed", _SCHEMA["run"]["seed"][2])
    manifest = RunManifest(experiment=experiment, seed=int(run_seed),
                           version=__version__, config=cfg.sections)
    t0 = time.perf_counter()
    _RUNNERS[experiment](cfg, out, int(run_seed), manifest)
    manifest.wall_time_s = time.perf_counter() - t0
    manifest.write(out)
    return manifest
