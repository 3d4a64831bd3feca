"""Command-line front end: ``kgscatter <subcommand> --config run.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import runs
from .config import ConfigError, from_dict, load_config

EXIT_OK, EXIT_GUARD, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("kgscatter")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--mode", choices=("theorem", "exploratory"), help="override the config mode")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="kgscatter", description="Klein-Gordon Hartree scattering experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("check-params", parents=[common], help="admissibility report as JSON")
    sub.add_parser("simulate", parents=[common], help="Strang evolution with trajectory output")
    sc = sub.add_parser("scatter", parents=[common], help="final states, tails and X-norm diagnostics")
    sc.add_argument("--trajectory", type=Path, help="re-analyse the output directory of a simulate run")
    sub.add_parser("sweep", parents=[common], help="parameter sweep to one aggregated CSV")
    sub.add_parser("selftest", parents=[common], help="fast internal consistency checks")
    return p


def _config(args):
    if args.config is None:
        cfg = from_dict({}, args.mode, None)
    else:
        cfg = load_config(args.config, args.mode, None)
    if args.out is not None:
        cfg.doc["output"] = str(args.out)
    return cfg


def _selftest(seed: int) -> list[tuple[str, bool, str]]:
    from fractions import Fraction

    from .dynamics import FieldState, evolve, from_halfwaves, to_halfwaves
    from .params import Params, check_constraints, feasible_gamma_interval
    from .potential import PotentialSpec, build_kernel, hartree_force
    from .scattering import solve_final_state_problem
    from .spectral import SpectralGrid, free_propagate, hnorm

    rng = np.random.default_rng(seed)
    out = []
    rep = check_constraints(Params(3, Fraction(13, 10), Fraction(9, 5)))
    ok = rep.feasible and rep.derived.q == Fraction(75, 34) and rep.delta == Fraction(4, 25)
    out.append(("admissibility goldens", ok, f"q={rep.derived.q} delta={rep.delta}"))
    out.append(("n=2 gamma interval empty", feasible_gamma_interval(2).empty, ""))

    grid = SpectralGrid(2, 8, 8.0)
    mult = build_kernel(grid, PotentialSpec(1.3))
    u = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    kern = np.fft.fftshift(np.fft.ifftn(mult.spectrum).real) / grid.cell_volume
    rho = np.abs(u) ** 2
    direct = np.zeros(grid.shape)
    c = grid.points // 2
    for i in range(8):
        for j in range(8):
            for a in range(8):
                for b in range(8):
                    direct[i, j] += kern[(i - a + c) % 8, (j - b + c) % 8] * rho[a, b]
    direct *= grid.cell_volume
    err = np.max(np.abs(hartree_force(u, mult) - (-direct * u))) / np.max(np.abs(direct * u))
    out.append(("convolution oracle", err < 1e-10, f"rel err {err:.2e}"))

    g2 = SpectralGrid(2, 32, 16.0)
    f = rng.standard_normal(g2.shape) + 0j
    g = rng.standard_normal(g2.shape) + 0j
    back = from_halfwaves(g2, to_halfwaves(g2, f, g))
    rt = max(np.max(np.abs(back.u - f)), np.max(np.abs(back.v - g)))
    out.append(("half-wave round trip", rt < 1e-12, f"{rt:.2e}"))
    w = free_propagate(g2, free_propagate(g2, f, 0.7, 1), 0.5, 1)
    grp = np.max(np.abs(w - free_propagate(g2, f, 1.2, 1)))
    out.append(("free group property", grp < 1e-10, f"{grp:.2e}"))

    g3 = SpectralGrid(2, 32, 16 * np.pi)
    x2 = g3.r2
    f0 = 0.05 * np.exp(-x2 / 8) + 0j
    m3 = build_kernel(g3, PotentialSpec(1.3))
    sol = solve_final_state_problem(g3, f0, 0 * f0, 2.0, 0.05, 3, m3, coupling=0.0, beta=1.8)
    sid = hnorm(g3, sol.f_plus - f0, 1.8) + hnorm(g3, sol.g_plus, 0.8)
    out.append(("scattering map is the identity at zero coupling", sid < 1e-10, f"{sid:.2e}"))

    tr = evolve(g3, FieldState(f0, 0 * f0, 0.0), 1.0, 0.05, m3, 0.0)
    back = evolve(g3, FieldState(tr.state(1).u, -tr.state(1).v, 0.0), 1.0, 0.05, m3, 0.0)
    rev = np.max(np.abs(back.state(1).u - f0))
    out.append(("free time reversal", rev < 1e-11, f"{rev:.2e}"))
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config(args)
        out = Path(cfg.output)
        if args.command == "check-params":
            doc, feasible = runs.check_params(cfg)
            text = json.dumps(doc, indent=2, sort_keys=True)
            print(text)
            if args.out is not None:
                out.mkdir(parents=True, exist_ok=True)
                (out / "admissibility.json").write_text(text + "\n", encoding="utf-8")
            return EXIT_OK if feasible else EXIT_GUARD
        if args.command == "simulate":
            m = runs.simulate(cfg, out, args.threads)
            print(f"simulate: {len(m['times'])} samples, energy drift {m['energy_drift']:.3e} -> {out}")
            return EXIT_OK
        if args.command == "scatter":
            doc = runs.scatter(cfg, out, args.threads, args.trajectory)
            sr = doc["scattering"] or {}
            print(f"scatter ({cfg.problem}): delta_fit={sr.get('delta_fit')} -> {out}")
            return EXIT_OK
        if args.command == "sweep":
            rows = runs.sweep(cfg, out, args.threads)
            bad = sum(r["status"] != "ok" for r in rows)
            print(f"sweep: {len(rows)} rows, {bad} failed -> {out / 'sweep.csv'}")
            return EXIT_OK
        if args.command == "selftest":
            t0 = time.perf_counter()
            results = _selftest(int(cfg.doc["seed"]))
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
            print(f"selftest finished in {time.perf_counter() - t0:.1f} s")
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except runs.GUARD_ERRORS as exc:
        print(f"guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except runs.NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
