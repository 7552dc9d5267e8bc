"""Command line entry point ``cme-wavepack``."""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .bloch import BlochProblem, default_k_grid, solve_bands, write_bands_csv, write_mode_csv
from .cme import rational_reduction
from .config import ConfigError, RunConfig, config_from_sections, read_sections, serialize_config
from .harness import (
    AnsatzSpec,
    build_uapp,
    commensurate_cell,
    convergence_study,
    domain_half_length,
    prepare_setup,
    soliton_params,
    sup_error,
)
from .pnls import SimulationConfig, build_grid, simulate, write_metadata, write_snapshot_csv
from .soliton import default_x_grid, gap_soliton, verify_soliton

SUBCOMMANDS = ("bands", "coeffs", "soliton", "simulate", "converge")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v + 0.0:.17g}"
    return str(v)


def _header(cfg: RunConfig, sub: str) -> list[str]:
    return [f"cme-wavepack {sub}", f"config_hash={cfg.hash}", f"setup={cfg.setup or 'custom'}"]


def load_config(args) -> RunConfig:
    """Config file, then ``--setup``, then the command line overrides, in rising priority."""
    sections: dict = {}
    if args.config:
        try:
            sections = read_sections(Path(args.config).read_text(encoding="utf-8"))
        except configparser.Error as exc:
            raise ConfigError([f"syntax: {exc}"]) from None
    if args.setup:
        sections.setdefault("run", {})["setup"] = args.setup
    if not sections:
        raise ConfigError(["need --setup NAME or --config FILE"])
    if args.epsilon:
        sections.setdefault("numerics", {})["epsilon"] = args.epsilon
    if args.out:
        sections.setdefault("output", {})["dir"] = args.out
    return config_from_sections(sections)


def _out_dir(cfg: RunConfig, sub: str) -> Path:
    path = Path(cfg.out_dir) / sub
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.ini").write_text(serialize_config(cfg), encoding="utf-8")
    return path


def cmd_bands(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, "bands")
    setup = cfg.to_setup()
    problem = BlochProblem(cfg.V, cfg.period, cfg.cutoff)
    k_grid = default_k_grid(problem, cfg.n_k)
    bands = solve_bands(problem, cfg.n_bands, k_grid, threads=args.threads)
    header = _header(cfg, "bands")
    with open(out / "bands.csv", "w", encoding="utf-8", newline="") as fh:
        write_bands_csv(bands, fh, header)
    prep = prepare_setup(setup)
    for label, mode in (("plus", prep.pair.p_plus), ("minus", prep.pair.p_minus)):
        with open(out / f"mode_{label}.csv", "w", encoding="utf-8", newline="") as fh:
            write_mode_csv(mode, fh, header=header + [f"k={_fmt(mode.k)}"])
    print(f"omega0={_fmt(prep.pair.omega0)}")
    print(f"case={prep.pair.case.value}")
    print(f"wrote {out / 'bands.csv'}")
    return 0


def cmd_coeffs(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, "coeffs")
    prep = prepare_setup(cfg.to_setup())
    coeffs = prep.coeffs
    if prep.pair.reduction_order > 1:
        coeffs_q = rational_reduction(prep.pair, coeffs, prep.W, prep.sigma)
    else:
        coeffs_q = coeffs
    lines = [f"{k}={_fmt(v)}" for k, v in coeffs.table()]
    if args.deltas:
        lines += [f"delta_{k}={_fmt(float(v))}" for k, v in sorted(coeffs_q.deltas.items())]
        if coeffs_q is not coeffs:
            lines += [f"alpha_Q={_fmt(coeffs_q.alpha)}", f"N_Q={coeffs_q.N}"]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    with open(out / "coeffs.txt", "w", encoding="utf-8") as fh:
        for h in _header(cfg, "coeffs"):
            fh.write(f"# {h}\n")
        fh.write(text)
    return 0


def cmd_soliton(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, "soliton")
    prep = prepare_setup(cfg.to_setup())
    params = soliton_params(cfg.to_setup(), prep)
    X = default_x_grid(params, 40, cfg.tail_widths)
    env = gap_soliton(params, X, 0.0)
    with open(out / "soliton.csv", "w", encoding="utf-8", newline="") as fh:
        for h in _header(cfg, "soliton"):
            fh.write(f"# {h}\n")
        fh.write("X,re_A_plus,im_A_plus,re_A_minus,im_A_minus\n")
        for x, ap, am in zip(X.tolist(), env.A_plus[0].tolist(), env.A_minus[0].tolist()):
            fh.write(f"{_fmt(x)},{_fmt(ap.real)},{_fmt(ap.imag)},{_fmt(am.real)},{_fmt(am.imag)}\n")
    check = verify_soliton(params)
    print(f"residual_relative={_fmt(check.relative)}")
    print(f"residual_order={_fmt(check.order)}")
    print(f"wrote {out / 'soliton.csv'}")
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, "simulate")
    setup = cfg.to_setup()
    prep = prepare_setup(setup)
    params = soliton_params(setup, prep)
    eps = cfg.epsilons[0]
    t_end = cfg.t_end if cfg.t_end is not None else setup.t_end(eps)
    half = cfg.L if cfg.L is not None else domain_half_length(setup, params, eps)
    grid = build_grid(half, cfg.dx, commensurate_cell(prep))
    sim = SimulationConfig(grid, cfg.dt, eps, prep.V, prep.W, prep.sigma, t_end, args.threads)
    spec = AnsatzSpec(prep.pair, eps, soliton=params)
    u0 = build_uapp(spec, grid.x, 0.0)
    traj = simulate(sim, u0, [t for t in cfg.snapshots if t <= t_end])
    header = _header(cfg, "simulate")
    meta = dict(traj.metadata)
    for snap in traj.snapshots:
        name = f"snapshot_t{snap.t:.6f}.csv"
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            write_snapshot_csv(fh, grid.x, snap.u, header + [f"t={_fmt(snap.t)}"])
        meta[f"sup_error_t{snap.t:.6f}"] = sup_error(snap.u, build_uapp(spec, grid.x, snap.t))
    with open(out / "run.txt", "w", encoding="utf-8") as fh:
        write_metadata(fh, meta, header)
    print(f"sup_error={_fmt(meta[f'sup_error_t{t_end:.6f}'])}")
    print(f"mass_drift={_fmt(meta['mass_drift'])}")
    print(f"wrote {out}")
    return 0


def cmd_converge(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, "converge")
    setup = cfg.to_setup()

    def progress(rec):
        print(f"epsilon={_fmt(rec.epsilon)} sup_error={_fmt(rec.sup_error)}", file=sys.stderr, flush=True)

    report = convergence_study(setup, cfg.epsilons, threads=args.threads, progress=progress)
    with open(out / "convergence.csv", "w", encoding="utf-8", newline="") as fh:
        for h in _header(cfg, "converge"):
            fh.write(f"# {h}\n")
        fh.write("epsilon,sup_error,t_end,mass_drift\n")
        for r in report.records:
            fh.write(f"{_fmt(r.epsilon)},{_fmt(r.sup_error)},{_fmt(r.t_end)},{_fmt(r.mass_drift)}\n")
    lo, hi = report.window
    status = "PASS" if report.in_window else "FAIL"
    summary = (
        f"fitted_rate={_fmt(report.fitted_rate)} fit_residual={_fmt(report.fit_residual)} "
        f"window=[{_fmt(lo)},{_fmt(hi)}] monotone={report.monotone} status={status}"
    )
    if report.caveat:
        summary += f" caveat={report.caveat!r}"
    print(summary)
    with open(out / "summary.txt", "w", encoding="utf-8") as fh:
        for h in _header(cfg, "converge"):
            fh.write(f"# {h}\n")
        fh.write(summary + "\n")
    return 0 if report.in_window else 1


_COMMANDS = {
    "bands": cmd_bands,
    "coeffs": cmd_coeffs,
    "soliton": cmd_soliton,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cme-wavepack", description=__doc__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--setup", help="named setup: sec611, sec612, sec62")
    parser.add_argument("--out", help="output directory (overrides [output] dir)")
    parser.add_argument("--epsilon", help="comma separated epsilon list (overrides [numerics] epsilon)")
    parser.add_argument("--threads", type=int, default=1, help="FFT / band-solve threads")
    parser.add_argument("--deltas", action="store_true", help="coeffs: also print cross-check deltas")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print("config error:\n  " + "\n  ".join(exc.errors), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.subcommand](cfg, args)
    except (ValueError, RuntimeError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"error [{module}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
