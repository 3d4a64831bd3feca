"""Orchestration behind the command-line front end."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from .config import ConfigError, RunConfig, from_dict
from .dynamics import (
    FieldState,
    HorizonError,
    PicardDivergence,
    Trajectory,
    energy,
    evolve,
    gaussian_data,
    picard_iterate,
    to_halfwaves,
)
from .params import (
    InfeasibleParams,
    check_constraints,
    derive_exponents,
    report_to_json,
    theoretical_decay,
)
from .potential import PotentialSpec, build_kernel
from .scattering import (
    DataTooLarge,
    extract_final_state,
    solve_final_state_problem,
    xnorm_diagnostics,
)
from .spectral import SpectralGrid, SupportError, clean_horizon, hnorm, read_field, write_field

__all__ = [
    "GuardError",
    "NumericalFailure",
    "Setup",
    "build_setup",
    "simulate",
    "scatter",
    "sweep",
    "SWEEP_COLUMNS",
]


class GuardError(RuntimeError):
    """A domain guard refused the run (feasibility, horizon, hash, support)."""


class NumericalFailure(RuntimeError):
    """Non-finite values or a diverged iteration."""


GUARD_ERRORS = (GuardError, InfeasibleParams, HorizonError, SupportError, DataTooLarge)
NUMERICAL_ERRORS = (NumericalFailure, PicardDivergence, FloatingPointError)


def fmt(x) -> str:
    """CSV float format: 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header, rows, config_hash: str) -> None:
    buf = io.StringIO(newline="")
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_csv_hash(path: Path) -> Optional[str]:
    first = Path(path).read_text(encoding="utf-8").splitlines()[:1]
    if first and first[0].startswith("# config_hash="):
        return first[0].split("=", 1)[1].strip()
    return None


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def environment_metadata(threads: int) -> dict:
    return {
        "threads": threads,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "fft": "numpy.fft (pocketfft), single-threaded",
    }


def _finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("non-finite values in the solution")


@dataclass
class Setup:
    cfg: RunConfig
    grid: SpectralGrid
    mult: object
    f: np.ndarray
    g: np.ndarray
    horizon: float
    strict: bool


def _admissibility_guard(cfg: RunConfig) -> dict:
    report = check_constraints(cfg.params)
    if cfg.mode == "theorem" and not report.feasible:
        names = ", ".join(c.name for c in report.violations)
        raise GuardError(f"theorem mode requires admissible parameters; violated: {names}")
    return report_to_json(report)


def build_setup(cfg: RunConfig) -> Setup:
    n = cfg.params.n
    if n > 3:
        raise ConfigError(f"simulation supports n <= 3, got n={n}")
    try:
        grid = SpectralGrid(n, cfg.points, cfg.box_length)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    pot = cfg.doc["potential"]
    try:
        spec = PotentialSpec(
            gamma=cfg.params.gamma,
            backend=pot["backend"],
            origin_rule=pot["origin_rule"],
            coupling=cfg.coupling,
            padded=bool(pot["padded"]),
        )
        mult = build_kernel(grid, spec)
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}") from None
    if cfg.k0 is not None and len(cfg.k0) != n:
        raise ConfigError("data.k0 needs one entry per dimension")
    f, g = gaussian_data(grid, cfg.amplitude, cfg.sigma, cfg.k0)
    horizon = clean_horizon(grid, f, g)
    return Setup(cfg, grid, mult, f, g, horizon, cfg.mode == "theorem")


def _sample_times(t_end: float, every: Optional[float], dt: float) -> list[float]:
    if every is None:
        return [0.0, t_end]
    m = round(t_end / every)
    if abs(m * every - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError("integrator.T must be a multiple of integrator.sample_every")
    return [j * every for j in range(m + 1)]


def _run_forward(s: Setup, T: float, dt: float, every: Optional[float]) -> Trajectory:
    state = FieldState(s.f, s.g, 0.0)
    times = _sample_times(T, every, dt)
    try:
        traj = evolve(
            s.grid, state, T, dt, s.mult, s.cfg.coupling, times, horizon=s.horizon, strict_horizon=s.strict
        )
    except ValueError as exc:
        if isinstance(exc, (SupportError, DataTooLarge)):
            raise
        raise ConfigError(f"integrator: {exc}") from None
    traj.meta["horizon"] = s.horizon
    _finite(traj.w)
    return traj


def _norm_rows(s: Setup, traj: Trajectory):
    beta = s.cfg.beta_float
    rows = []
    for j, t in enumerate(traj.times):
        st = traj.state(j)
        pair = traj.pair(j)
        rows.append(
            [
                float(t),
                energy(s.grid, st, s.mult, s.cfg.coupling),
                hnorm(s.grid, st.u, beta),
                hnorm(s.grid, pair.w_plus, beta),
                hnorm(s.grid, pair.w_minus, beta),
            ]
        )
    return rows


NORM_COLUMNS = ["t", "energy", "u_Hbeta", "w_plus_Hbeta", "w_minus_Hbeta"]


def _write_samples(out: Path, traj: Trajectory) -> list[dict]:
    sdir = out / "samples"
    sdir.mkdir(parents=True, exist_ok=True)
    files = []
    for j in range(len(traj)):
        for b, tag in enumerate(("w_plus", "w_minus")):
            p = sdir / f"{tag}_{j:04d}.bin"
            write_field(p, traj.grid, traj.w[j, b])
            files.append({"path": str(p.relative_to(out)), "sha256": _sha256(p), "t": float(traj.times[j])})
    return files


def simulate(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    adm = _admissibility_guard(cfg)
    s = build_setup(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj = _run_forward(s, cfg.T, cfg.dt, cfg.sample_every)
    out.mkdir(parents=True, exist_ok=True)
    rows = _norm_rows(s, traj)
    write_csv(out / "norms.csv", NORM_COLUMNS, rows, cfg.hash)
    files = _write_samples(out, traj)
    e = np.array([r[1] for r in rows])
    drift = float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] != 0 else 0.0
    manifest = {
        "kind": "simulate",
        "config_hash": cfg.hash,
        "config": cfg.doc,
        "admissibility": adm,
        "grid": s.grid.to_json(),
        "horizon": s.horizon,
        "times": traj.times.tolist(),
        "energy_drift": drift,
        "in_theorem_scope": s.mult.spec.in_theorem_scope,
        "warnings": [str(w.message) for w in caught if issubclass(w.category, RuntimeWarning)],
        "files": files + [{"path": "norms.csv", "sha256": _sha256(out / "norms.csv")}],
        "environment": environment_metadata(threads),
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def load_trajectory(cfg: RunConfig, run_dir: Path) -> Trajectory:
    """Rebuild a simulate run's trajectory; the config hash must match."""
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read trajectory manifest in {run_dir}: {exc}") from None
    if manifest.get("config_hash") != cfg.hash:
        raise GuardError(
            f"config hash mismatch: trajectory {manifest.get('config_hash')} vs config {cfg.hash}"
        )
    times = np.array(manifest["times"])
    grid = None
    w = None
    for j in range(len(times)):
        for b, tag in enumerate(("w_plus", "w_minus")):
            g, field = read_field(run_dir / "samples" / f"{tag}_{j:04d}.bin")
            if w is None:
                grid = g
                w = np.empty((len(times), 2) + g.shape, dtype=complex)
            w[j, b] = field
    return Trajectory(grid, times, w, {"horizon": manifest["horizon"]})


def _exponents_or_none(cfg: RunConfig):
    try:
        return derive_exponents(cfg.params)
    except InfeasibleParams:
        return None


def _xnorm_rows(x):
    return [
        [t, a, b, c, d]
        for t, a, b, c, d in zip(x.times, x.hbeta, x.dt_hbeta1, x.P_hbeta1, x.J_hbeta1)
    ]


XNORM_COLUMNS = ["t", "w_Hbeta", "dtw_Hbeta-1", "Pw_Hbeta-1", "Jw_Hbeta-1"]


def scatter(cfg: RunConfig, out: Path, threads: int = 1, trajectory: Optional[Path] = None) -> dict:
    adm = _admissibility_guard(cfg)
    s = build_setup(cfg)
    beta = cfg.beta_float
    extra: dict = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.problem == "forward":
            if trajectory is not None:
                traj = load_trajectory(cfg, trajectory)
            else:
                traj = _run_forward(s, cfg.T, cfg.dt, cfg.sample_every)
            report = extract_final_state(traj, beta, transient_fraction=cfg.transient_fraction)
            final_fields = {"w_plus_final": report.final_states[0], "w_minus_final": report.final_states[1]}
        else:
            if trajectory is not None:
                raise ConfigError("--trajectory applies to the forward problem only")
            sol = solve_final_state_problem(
                s.grid,
                s.f,
                s.g,
                cfg.T_start,
                cfg.dtau,
                cfg.iterations,
                s.mult,
                cfg.coupling,
                beta=beta,
                sample_every=cfg.sample_every,
                tol=cfg.tol,
                literal_sign=cfg.literal_sign,
                max_data_norm=cfg.max_data_norm,
                strict_horizon=s.strict,
            )
            traj = sol.trajectory
            report = sol.report
            _finite(sol.f_plus, sol.g_plus)
            extra = {
                "picard_differences": sol.picard.differences,
                "picard_diverged": sol.picard.diverged,
                "S_minus_identity_Hbeta": hnorm(s.grid, sol.f_plus - s.f, beta)
                + hnorm(s.grid, sol.g_plus - s.g, beta - 1),
                "horizon": sol.horizon,
            }
            final_fields = {"f_plus": sol.f_plus, "g_plus": sol.g_plus}
        xrep = None
        if cfg.doc["scatter"]["xnorm"]:
            xrep = xnorm_diagnostics(traj, s.mult, cfg.coupling, beta, exponents=_exponents_or_none(cfg))
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, field in final_fields.items():
        p = out / f"{name}.bin"
        write_field(p, s.grid, field)
        files.append({"path": p.name, "sha256": _sha256(p)})
    doc = {
        "kind": "scatter",
        "problem": cfg.problem,
        "config_hash": cfg.hash,
        "config": cfg.doc,
        "admissibility": adm,
        "scattering": None if report is None else report.to_json(),
        "xnorm": None if xrep is None else xrep.to_json(),
        "warnings": [str(w.message) for w in caught if issubclass(w.category, RuntimeWarning)],
        "environment": environment_metadata(threads),
        **extra,
    }
    if report is not None:
        write_csv(out / "tail.csv", ["t", "value"], report.tail_series, cfg.hash)
        write_csv(out / "cauchy.csv", ["t", "value"], report.cauchy_series, cfg.hash)
        files += [{"path": n, "sha256": _sha256(out / n)} for n in ("tail.csv", "cauchy.csv")]
    if xrep is not None:
        write_csv(out / "xnorm.csv", XNORM_COLUMNS, _xnorm_rows(xrep), cfg.hash)
        files.append({"path": "xnorm.csv", "sha256": _sha256(out / "xnorm.csv")})
    doc["files"] = files
    write_json(out / "report.json", doc)
    return doc


SWEEP_COLUMNS = [
    "row",
    "amplitude",
    "gamma",
    "beta",
    "points",
    "dt",
    "status",
    "feasible",
    "region_feasible",
    "delta_theory",
    "energy_drift",
    "self_convergence_error",
    "contraction_ratio",
    "picard_diverged",
    "delta_fit",
    "error",
]

SWEEP_METRICS = ("energy_drift", "self_convergence", "contraction", "delta_fit")


def sweep_rows(cfg: RunConfig) -> list[dict]:
    """Cartesian product of the sweep axes; a null axis keeps the base value."""
    sw = cfg.doc["sweep"]
    base = {
        "amplitude": cfg.doc["data"]["amplitude"],
        "gamma": cfg.doc["params"]["gamma"],
        "beta": cfg.doc["params"]["beta"],
        "points": cfg.points,
        "dt": cfg.doc["integrator"]["dt"],
    }
    axes = {k: ([v] if sw[k] is None else sw[k]) for k, v in base.items()}
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def _row_config(cfg: RunConfig, row: dict) -> RunConfig:
    doc = json.loads(json.dumps(cfg.doc))
    doc["data"]["amplitude"] = row["amplitude"]
    doc["params"]["gamma"] = row["gamma"]
    doc["params"]["beta"] = row["beta"]
    doc["grid"]["points"] = row["points"]
    doc["integrator"]["dt"] = row["dt"]
    for k in ("amplitude", "gamma", "beta", "points", "dt"):
        doc["sweep"][k] = None
    return from_dict(doc)


def _max_energy_drift(s: Setup, traj: Trajectory) -> float:
    e = np.array([energy(s.grid, traj.state(j), s.mult, s.cfg.coupling) for j in range(len(traj))])
    return float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] != 0 else 0.0


def run_sweep_row(task) -> dict:
    """One sweep point; failures come back as a row with status ``error``."""
    index, doc, row = task
    out = {"row": index, **{k: row[k] for k in ("amplitude", "gamma", "beta", "points", "dt")}}
    try:
        cfg = _row_config(from_dict(doc), row)
        rep = check_constraints(cfg.params)
        out["feasible"] = rep.feasible
        out["region_feasible"] = rep.region_feasible
        out["delta_theory"] = float(theoretical_decay(cfg.params.n, cfg.params.beta))
        if cfg.mode == "theorem" and not rep.feasible:
            raise GuardError("infeasible parameters")
        metrics = cfg.doc["sweep"]["metrics"]
        unknown = set(metrics) - set(SWEEP_METRICS)
        if unknown:
            raise ConfigError(f"unknown sweep metrics {sorted(unknown)}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            s = build_setup(cfg)
            beta = cfg.beta_float
            traj = None
            if "energy_drift" in metrics or "delta_fit" in metrics:
                traj = _run_forward(s, cfg.T, cfg.dt, cfg.sample_every)
            if "energy_drift" in metrics:
                out["energy_drift"] = _max_energy_drift(s, traj)
            if "self_convergence" in metrics:
                a = _run_forward(s, cfg.T, cfg.dt, None)
                b = _run_forward(s, cfg.T, cfg.dt / 2, None)
                out["self_convergence_error"] = sum(
                    hnorm(s.grid, a.w[-1, k] - b.w[-1, k], beta) for k in range(2)
                )
            if "contraction" in metrics:
                w0 = to_halfwaves(s.grid, s.f, s.g)
                scale = sum(hnorm(s.grid, x, beta) for x in (w0.w_plus, w0.w_minus))
                res = picard_iterate(
                    s.grid, w0, cfg.picard_T, cfg.dtau, cfg.iterations, s.mult, cfg.coupling,
                    beta=beta, tol=1e-13 * scale, strict=False,
                )
                out["contraction_ratio"] = res.contraction_ratio(floor=1e-13 * scale)
                out["picard_diverged"] = res.diverged
            if "delta_fit" in metrics:
                out["delta_fit"] = extract_final_state(traj, beta).delta_fit
        out["status"] = "ok"
    except Exception as exc:  # per-row isolation
        out["status"] = "error"
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def sweep(cfg: RunConfig, out: Path, threads: int = 1) -> list[dict]:
    rows = sweep_rows(cfg)
    tasks = [(i, cfg.doc, r) for i, r in enumerate(rows)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_sweep_row, tasks))
    else:
        results = [run_sweep_row(t) for t in tasks]
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "sweep.csv",
        SWEEP_COLUMNS,
        [[r.get(c) for c in SWEEP_COLUMNS] for r in results],
        cfg.hash,
    )
    write_json(
        out / "manifest.json",
        {
            "kind": "sweep",
            "config_hash": cfg.hash,
            "config": cfg.doc,
            "rows": len(results),
            "failures": sum(r["status"] != "ok" for r in results),
            "environment": environment_metadata(threads),
            "files": [{"path": "sweep.csv", "sha256": _sha256(out / "sweep.csv")}],
        },
    )
    return results


def check_params(cfg: RunConfig) -> tuple[dict, bool]:
    report = check_constraints(cfg.params)
    doc = report_to_json(report)
    doc["config_hash"] = cfg.hash
    return doc, report.feasible
