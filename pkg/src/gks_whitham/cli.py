"""Command-line interface: ``gks <command> [options]``.

Options may also come from a ``key = value`` file given with ``--config``;
flags on the command line win. Every command writes a ``.manifest`` file in
the same format next to its outputs, so ``gks --config out.manifest`` reruns it.

Exit codes: 0 success, 2 validation failure, 3 solver failure, 4 bad configuration.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bloch, cnoidal, direct_sim, profile, validation, whitham

EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4

VERDICTS = ("hyperbolic-stable-to-2nd-order", "hyperbolic-2nd-order-unstable", "elliptic")


class ConfigError(ValueError):
    pass


def _f(x):
    return f"{x:.12e}"


def read_config(path):
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def write_manifest(path, command, args, keys):
    lines = [f"command = {command}"]
    lines += [f"{k} = {getattr(args, k)}" for k in keys if getattr(args, k) is not None]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands


def _wave(args):
    params = profile.WaveParams(args.k, args.M, args.delta)
    return profile.initial_profile(params, args.n)


def cmd_profile(args):
    prof = _wave(args)
    out = Path(args.out)
    with open(out.with_suffix(".gksprof"), "wb") as fh:
        profile.write_binary(prof, fh)
    out.with_suffix(".csv").write_text(profile.to_csv(prof))
    print(f"c = {_f(prof.c)}  qbar = {_f(prof.qbar)}  residual = {prof.residual_norm:.3e}")
    return 0


def cmd_spectrum(args):
    prof = _wave(args)
    if args.n_modes < 32:
        raise ConfigError("n_modes must be at least 32")
    xi = np.linspace(args.xi_min, args.xi_max, args.xi_steps)
    sw = bloch.sweep(prof, xi, args.n_modes, keep=args.keep)
    out = Path(args.out)
    out.with_suffix(".csv").write_text(sw.to_csv())
    fits = bloch.low_freq_fit(prof, n_modes=args.n_modes)
    first = whitham.first_order(prof)
    text = whitham.to_json(first, bloch_fit=bloch.fit_record(fits))
    out.with_name(out.name + "_fit.json").write_text(text + "\n")
    for f in fits:
        print(f"branch {f.branch_id}: lambda0/k = {_f(f.lambda0_tilde.real)}{f.lambda0_tilde.imag:+.3e}i  "
              f"lambda1/k = {_f(f.lambda1_tilde.real)}{f.lambda1_tilde.imag:+.3e}i")
    return 0


def cmd_whitham(args):
    prof = _wave(args)
    system = whitham.first_order(prof) if args.order == 1 else whitham.second_order(prof)
    Path(args.out).write_text(whitham.to_json(system) + "\n")
    first = system if args.order == 1 else system.first
    print(f"Delta = {_f(first.discriminant)}  hyperbolic = {first.hyperbolic}")
    return 0


def cmd_kdv_limit(args):
    if args.p is None:
        p = cnoidal.solve_p_for_k(args.k)
    else:
        p = args.p
        if abs(cnoidal.selection_residual(p, args.k)) > 1e-8:
            raise ConfigError("(p, k) is not on the selection curve")
    wave = cnoidal.CnoidalWave(p, args.k, args.M)
    res = bloch.kdv_limit_dispersion(wave, args.deltabar, complex(0.0, args.xibar), path=args.path, n=args.n)
    rec = {
        "schema": whitham.SCHEMA,
        "kind": "kdv_limit_dispersion",
        "state": {"k": args.k, "M": args.M, "p": p},
        "deltabar": args.deltabar,
        "nubar": [0.0, args.xibar],
        "path": args.path,
        "cubic": [[float(z.real), float(z.imag)] for z in res.cubic],
        "roots": [[float(z.real), float(z.imag)] for z in res.roots],
        "lab_speeds": [[float(z.real), float(z.imag)] for z in res.lab_speeds],
        "multiplicities": res.multiplicities,
    }
    Path(args.out).write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    print("roots: " + ", ".join(f"{z.real:.6f}{z.imag:+.6f}i" for z in res.roots))
    return 0


def atlas_row(k, M, delta, n):
    """One atlas entry: (k, Delta, Lambda pair, Re lambda1 pair, verdict)."""
    prof = profile.initial_profile(profile.WaveParams(k, M, delta), n)
    der = profile.param_derivatives(prof)
    first = whitham.first_order(prof, der)
    lam0 = first.characteristics
    if not first.hyperbolic:
        lam1 = np.array([np.nan, np.nan])
        verdict = VERDICTS[2]
    else:
        lam1 = whitham.second_order(prof, first, der).lambda1.real
        # lambda ~ nu k Lambda + nu^2 k lambda1 with nu imaginary: growth needs Re lambda1 < 0
        verdict = VERDICTS[0] if np.all(lam1 > 0) else VERDICTS[1]
    return k, first.discriminant, lam0, lam1, verdict


def _workers():
    env = os.environ.get("GKS_NUM_WORKERS")
    if env is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(f"GKS_NUM_WORKERS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError("GKS_NUM_WORKERS must be at least 1")
    return n


def cmd_atlas(args):
    if args.k_steps < 1 or not 0 < args.k_min <= args.k_max <= 1:
        raise ConfigError("need 0 < k_min <= k_max <= 1 and k_steps >= 1")
    profile.WaveParams(args.k_min, args.M, args.delta)
    ks = np.linspace(args.k_min, args.k_max, args.k_steps)
    jobs = [(float(k), args.M, args.delta, args.n) for k in ks]
    workers = _workers()
    if workers == 1:
        rows = [atlas_row(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(atlas_row, *zip(*jobs)))
    header = "k,Delta,re_L0_1,im_L0_1,re_L0_2,im_L0_2,re_L1_1,re_L1_2,verdict"
    lines = [header]
    for k, disc, lam0, lam1, verdict in rows:
        vals = [k, disc, lam0[0].real, lam0[0].imag, lam0[1].real, lam0[1].imag, lam1[0], lam1[1]]
        lines.append(",".join(_f(v) for v in vals) + f",{verdict}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    counts = {v: sum(r[4] == v for r in rows) for v in VERDICTS}
    print("  ".join(f"{v}: {c}" for v, c in counts.items()))
    return 0


def cmd_simulate(args):
    prof = _wave(args)
    state, _ = direct_sim.modulated_state(prof, args.amp, args.L, dt=args.dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    saved = []

    def save(s):
        name = f"snapshot_{len(saved):04d}.csv"
        (out / name).write_text(direct_sim.snapshot_csv(s))
        saved.append({"file": name, "t": s.t})

    save(state)
    every = max(1, int(round(args.save_every / state.dt)))
    final = direct_sim.run(state, args.T, every=every, callback=save)
    params = {
        "k": args.k, "M": args.M, "delta": args.delta, "L": args.L, "T": args.T, "amp": args.amp,
        "dt": state.dt, "n_points": state.n_points, "length": state.length,
        "mass_drift": final.mass - state.mass, "snapshots": saved,
    }
    if args.measure:
        res = direct_sim.modulation_experiment(prof, args.amp, args.L, args.T, dt=args.dt)
        params["measured_speeds"] = list(res.measured_speeds)
        params["predicted_speeds"] = [str(s) for s in res.predicted_speeds]
        params["growth_rate"] = res.growth_rate
    (out / "manifest.json").write_text(direct_sim.manifest_json(params) + "\n")
    print(f"{len(saved)} snapshots in {out}; mass drift {final.mass - state.mass:.3e}")
    return 0


def cmd_validate(args):
    results = validation.run_suite(args.suite)
    text = validation.report(results)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0 if all(r.passed for r in results) else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# parser


def _wave_opts(p, delta_required=True):
    p.add_argument("--k", type=float, required=True, help="wavenumber, 0 < k <= 1")
    p.add_argument("--M", type=float, default=0.0, help="mean value")
    p.add_argument("--delta", type=float, required=delta_required, default=None, help="dissipation strength")
    p.add_argument("--n", type=int, default=profile.DEFAULT_N, help="grid points per period")


COMMANDS = {}


def _command(sub, name, fn, keys, **kw):
    p = sub.add_parser(name, **kw)
    p.set_defaults(func=fn, manifest_keys=keys)
    COMMANDS[name] = p
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="gks", description="Periodic waves of the dissipative KdV equation.")
    parser.add_argument("--config", help="file of 'key = value' lines")
    parser.add_argument("--json-errors", action="store_true", help="also print errors as JSON on stdout")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    wave_keys = ["k", "M", "delta", "n"]
    p = _command(sub, "profile", cmd_profile, wave_keys + ["out"], help="solve a periodic profile")
    _wave_opts(p)
    p.add_argument("--out", default="profile", help="output prefix (.gksprof and .csv)")

    p = _command(sub, "spectrum", cmd_spectrum,
                 wave_keys + ["xi_min", "xi_max", "xi_steps", "n_modes", "keep", "out"], help="Bloch spectrum sweep")
    _wave_opts(p)
    p.add_argument("--xi-min", type=float, default=-np.pi)
    p.add_argument("--xi-max", type=float, default=np.pi)
    p.add_argument("--xi-steps", type=int, default=101)
    p.add_argument("--n-modes", type=int, default=bloch.DEFAULT_MODES)
    p.add_argument("--keep", type=int, default=10, help="eigenvalues kept per xi (largest real part)")
    p.add_argument("--out", default="spectrum")

    p = _command(sub, "whitham", cmd_whitham, wave_keys + ["order", "out"], help="modulation system at a wave")
    _wave_opts(p)
    p.add_argument("--order", type=int, choices=(1, 2), default=2)
    p.add_argument("--out", default="whitham.json")

    p = _command(sub, "kdv-limit", cmd_kdv_limit, ["k", "M", "p", "deltabar", "xibar", "path", "n", "out"],
                 help="cubic dispersion relation of the small-dissipation limit")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--M", type=float, default=0.0)
    p.add_argument("--p", type=float, default=None, help="elliptic modulus (default: from the selection curve)")
    p.add_argument("--deltabar", type=float, default=0.0)
    p.add_argument("--xibar", type=float, default=1.0, help="scaled Floquet exponent")
    p.add_argument("--path", choices=("lin", "mod_lin"), default="lin")
    p.add_argument("--n", type=int, default=bloch.KDV_LIMIT_GRID)
    p.add_argument("--out", default="kdv_limit.json")

    p = _command(sub, "atlas", cmd_atlas, ["delta", "M", "k_min", "k_max", "k_steps", "n", "out"],
                 help="stability verdicts over a k grid")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--M", type=float, default=0.0)
    p.add_argument("--k-min", type=float, default=0.5)
    p.add_argument("--k-max", type=float, default=0.99)
    p.add_argument("--k-steps", type=int, default=50)
    p.add_argument("--n", type=int, default=profile.DEFAULT_N)
    p.add_argument("--out", default="atlas.csv")

    p = _command(sub, "simulate", cmd_simulate,
                 wave_keys + ["L", "T", "amp", "dt", "save_every", "measure", "out"], help="direct simulation")
    _wave_opts(p)
    p.add_argument("--L", type=int, default=64, help="wave periods in the domain")
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--amp", type=float, default=1e-3, help="modulation amplitude")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--save-every", type=float, default=20.0, help="time between snapshots")
    p.add_argument("--measure", action="store_true", help="also measure transport speeds")
    p.add_argument("--out", default="sim")

    p = _command(sub, "validate", cmd_validate, ["suite", "out"], help="run the acceptance checks")
    p.add_argument("--suite", default="all", choices=sorted(validation.SUITES))
    p.add_argument("--out", default=None, help="also write the report here")
    return parser


TOP_LEVEL_FLAGS = ("--json-errors", "-v", "--verbose")


def _command_index(argv):
    """Index just past the top-level options, where the subcommand belongs."""
    i = 0
    while i < len(argv):
        if argv[i] == "--config":
            i += 2
        elif argv[i] in TOP_LEVEL_FLAGS or argv[i].startswith("--config="):
            i += 1
        else:
            break
    return i


def _apply_config(argv):
    """Fold config-file values into subparser defaults so that flags still override them."""
    head = argparse.ArgumentParser(add_help=False)
    head.add_argument("--config")
    pre, _ = head.parse_known_args(argv)
    if not pre.config:
        return argv
    cfg = read_config(pre.config)
    command = cfg.pop("command", None)
    idx = _command_index(argv)
    if idx >= len(argv) or argv[idx] not in COMMANDS:
        if command is None:
            raise ConfigError("config file names no command and none was given")
        argv = argv[:idx] + [command] + argv[idx:]
    name = argv[idx]
    if name not in COMMANDS:
        raise ConfigError(f"unknown command {name!r}")
    sub = COMMANDS[name]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key not in known or key == "help":
            raise ConfigError(f"unknown option {key!r} for {name}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif raw == "None":
            defaults[key] = None
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        action.required = False
    sub.set_defaults(**defaults)
    return argv


def _error(exc, code, json_errors):
    msg = str(exc) or type(exc).__name__
    print(f"gks: error: {msg}", file=sys.stderr)
    if json_errors:
        print(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}, sort_keys=True))
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    json_errors = "--json-errors" in argv
    try:
        argv = _apply_config(argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            if exc.code in (0, None):
                return 0
            return _error(ConfigError("invalid command line"), EXIT_CONFIG, json_errors)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        code = args.func(args)
        out = getattr(args, "out", None)
        if code == 0 and out and args.command != "validate":
            target = Path(out) / "run.manifest" if args.command == "simulate" else Path(str(out) + ".manifest")
            write_manifest(target, args.command, args, args.manifest_keys)
        return code
    except (profile.ConvergenceError, cnoidal.SelectionError, direct_sim.BlowUpError,
            direct_sim.DemodulationError, bloch.BranchTrackingError, whitham.DegenerateBranch) as exc:
        return _error(exc, EXIT_SOLVER, json_errors)
    except (ConfigError, ValueError) as exc:
        return _error(exc, EXIT_CONFIG, json_errors)


if __name__ == "__main__":
    sys.exit(main())
