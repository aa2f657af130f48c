"""Command-line entry point: ``qpathdim <subcommand> ...``.

Every run writes its tables into ``--outdir`` together with a JSON run
manifest. Tables carry no timestamps, so repeating a run with the same
flags and seed reproduces them byte for byte; ``replay`` re-executes a
manifest and checks exactly that.

Exit codes: 0 ok, 2 usage error, 3 numeric or consistency failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .exp1 import CSV_COLUMNS, ScanGrid, preset_grid, run_scan
from .exp2 import (
    DegenerateWeights,
    NonConvergence,
    Underdetermined,
    hausdorff_pipeline,
)
from .exp2 import load_config as load_exp2_config
from .hausdorff import fit_with_window
from .pimc import PRESETS as PIMC_PRESETS
from .pimc import PimcConfig, estimate_dh
from .pimc import load_config as load_pimc_config
from .propagator import (
    ExperimentGeometry,
    PhysParams,
    QuadratureError,
    free_exact,
    free_partial_wave,
    to_polar,
    winding_sector_free,
)
from .windings import DecodeError, FluxAssignment, NotUniqueError, decode_total_flux, format_winding

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

NUMERIC_ERRORS = (
    ArithmeticError,
    QuadratureError,
    DecodeError,
    Underdetermined,
    NonConvergence,
    DegenerateWeights,
)


class UsageError(Exception):
    pass


class ConsistencyError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def fmt(v) -> str:
    """9 significant digits in scientific notation; integers stay integers."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.8e}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Run:
    """Collects output files of one invocation and writes the manifest last."""

    def __init__(self, args, argv, config=None, seeds=None):
        self.outdir = Path(args.outdir)
        self.command = args.command
        self.argv = list(argv)
        self.config = config or {}
        self.seeds = seeds or {}
        self.started = _now()
        self.pending: list[tuple[Path, str]] = []

    def add(self, name: str, text: str) -> None:
        self.pending.append((self.outdir / name, text))

    def commit(self) -> Path:
        outputs = []
        for path, text in self.pending:
            write_atomic(path, text)
            outputs.append({"file": path.name, "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest()})
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seeds": self.seeds,
            "version": __version__,
            "backend": backend_name(),
            "started": self.started,
            "finished": _now(),
            "outputs": outputs,
        }
        path = self.outdir / f"{self.command}.manifest.json"
        write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _physparams(args) -> PhysParams:
    try:
        return PhysParams(mass_mu=args.mu, hbar=args.hbar, light_c=1.0, charge_q=1.0, time_T=args.T)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _axis(lo_hi, points, name):
    lo, hi = lo_hi
    if hi < lo:
        raise UsageError(f"--{name}: upper end below lower end")
    if lo == hi:
        return np.array([lo])
    if points < 2:
        raise UsageError(f"--{name}-points must be >= 2 for a range")
    return np.linspace(lo, hi, points)


# ---------------------------------------------------------------------------
# subcommands


def cmd_propagator(args, argv) -> int:
    if args.preset == "fig8":
        p = PhysParams(mass_mu=1.0, hbar=1.0, time_T=10.0)
        length = 2.0
        hs = np.linspace(0.0, 10.0, 41)
        ms = list(range(5, 16))
    else:
        if args.h is None or args.m_max is None:
            raise UsageError("propagator needs --preset fig8 or both --h and --m-max")
        p = _physparams(args)
        length = args.L
        hs = np.asarray(args.h, dtype=float)
        ms = list(args.m_max)
        if length <= 0 or np.any(hs < 0) or any(m < 0 for m in ms):
            raise UsageError("need L > 0, h >= 0 and m_max >= 0")
    rows = []
    for h in hs:
        pp = to_polar(ExperimentGeometry(length, float(h)))
        ex = free_exact(p, pp, args.normalize)
        for m in ms:
            k = free_partial_wave(p, pp, m, args.normalize)
            rows.append((float(h), int(m), k.real, k.imag, ex.real, ex.imag))
    run = Run(args, argv, config={"L": length, "mu": p.mass_mu, "hbar": p.hbar, "T": p.time_T})
    run.add("propagator.csv", csv_text(("h", "m_max", "re", "im", "re_exact", "im_exact"), rows))
    run.commit()
    return EXIT_OK


def cmd_exp1(args, argv) -> int:
    if args.preset:
        grid = preset_grid(args.preset)
        if args.alpha is not None:
            grid = ScanGrid(grid.h_values, _axis(args.alpha, args.alpha_points, "alpha"), grid.params,
                            grid.length_L, grid.m_max, grid.normalize)
    else:
        p = _physparams(args)
        hs = _axis(args.h or (0.0, 10.0), args.h_points, "h")
        alphas = _axis(args.alpha or (0.0, 3.0), args.alpha_points, "alpha")
        try:
            grid = ScanGrid(hs, alphas, p, args.L, args.m_max, args.normalize)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    res = run_scan(grid, jobs=args.jobs)
    cols = res.columns()
    rows = zip(*(cols[c] for c in CSV_COLUMNS))
    config = {
        "L": grid.length_L,
        "mu": grid.params.mass_mu,
        "hbar": grid.params.hbar,
        "T": grid.params.time_T,
        "m_max": grid.m_max,
        "normalize": grid.normalize,
        "n_h": int(grid.h_values.size),
        "n_alpha": int(grid.alpha_values.size),
        "boundary": res.boundary,
    }
    run = Run(args, argv, config=config)
    run.add("exp1.csv", csv_text(CSV_COLUMNS, rows))
    run.commit()
    return EXIT_OK


def cmd_exp2(args, argv) -> int:
    try:
        cfg = load_exp2_config(_read_text(args.config))
        if args.synthetic:
            cfg = replace(cfg, mode="synthetic")
    except (ValueError, configparser.Error) as exc:
        raise UsageError(f"bad exp2 config: {exc}") from exc
    res = hausdorff_pipeline(config=cfg, jobs=args.jobs)
    rows = [
        (r.estimate.dx, r.estimate.quantum_length.real, r.estimate.quantum_length.imag,
         r.estimate.quantum_length_modulus, r.estimate.n_classes, r.estimate.residual)
        for r in res.records
    ]
    run = Run(args, argv, config=cfg.as_mapping(), seeds={"seed": cfg.seed, "init_seed": cfg.init_seed})
    run.add("exp2_scales.csv", csv_text(("dx", "re_L", "im_L", "abs_L", "n_classes", "residual"), rows))
    summary = res.report.summary_line()
    run.add("exp2_fit.txt", summary + "\n")
    worst = 0.0
    if cfg.mode == "single_solenoid":
        class_rows = []
        for r in res.records:
            dx = r.estimate.dx
            pp = to_polar(ExperimentGeometry(cfg.path_length, 0.5 * dx))
            raw = np.array([winding_sector_free(cfg.params, pp, c[0], cfg.lambda_cut, normalize=True)
                            for c in r.recovered.classes])
            g = r.recovered.gauge
            direct = raw * (abs(raw[g]) / raw[g])
            scale = float(np.max(np.abs(direct)))
            for c, k, d in zip(r.recovered.classes, r.recovered.k_free, direct):
                err = abs(k - d) / scale
                worst = max(worst, err)
                class_rows.append((dx, format_winding(c), k.real, k.imag, d.real, d.imag, err))
        run.add("exp2_classes.csv",
                csv_text(("dx", "winding", "re_k", "im_k", "re_sector", "im_sector", "rel_err"), class_rows))
    run.commit()
    print(summary)
    if worst > 1e-3:
        raise ConsistencyError(f"recovered class amplitudes deviate from the winding-sector values by {worst:.3e}")
    return EXIT_OK


def cmd_pimc(args, argv) -> int:
    try:
        cfg = load_pimc_config(_read_text(args.config)) if args.config else PimcConfig()
        overrides = dict(PIMC_PRESETS[args.preset]) if args.preset else {}
        for key in ("potential", "alpha_v", "seed", "dim", "sweeps", "therm_sweeps", "n_chains", "fit_window"):
            val = getattr(args, key)
            if val is not None:
                overrides[key] = val
        cfg = replace(cfg, **overrides)
    except (ValueError, configparser.Error) as exc:
        raise UsageError(f"bad pimc config: {exc}") from exc
    res = estimate_dh(cfg, jobs=args.jobs)
    header = ("delta", "mean_abs_dx", "mean_L", "stderr_L", "ratio_eq13", "n_slices", "stderr_abs_dx",
              "mean_sq_dx", "stderr_sq_dx", "stderr_ratio", "acceptance", "tau_L", "tau_slow")
    rows = [
        (r.delta, r.mean_abs_dx.mean, r.mean_L.mean, r.mean_L.stderr, r.ratio_eq13.mean, r.n_slices,
         r.mean_abs_dx.stderr, r.mean_sq_dx.mean, r.mean_sq_dx.stderr, r.ratio_eq13.stderr, r.acceptance,
         r.mean_L.autocorr_time, r.tau_slow)
        for r in res.rows
    ]
    run = Run(args, argv, config=cfg.as_mapping(), seeds={"seed": cfg.seed})
    run.add("pimc.csv", csv_text(header, rows))
    summary = res.report.summary_line() + " (Euclidean time)"
    run.add("pimc_fit.txt", summary + "\n")
    run.commit()
    print(summary)
    return EXIT_OK


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"not an exact rational: {text!r}") from exc


def cmd_decode(args, argv) -> int:
    fluxes = tuple(_fraction(t) for t in args.fluxes.split(",") if t.strip())
    total = _fraction(args.total)
    if args.cutoff < 1:
        raise UsageError("--cutoff must be >= 1")
    try:
        fa = FluxAssignment(fluxes, args.cutoff)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    run = Run(args, argv, config={"fluxes": [str(f) for f in fluxes], "total": str(total), "cutoff": args.cutoff})
    try:
        w = decode_total_flux(total, fa)
    except NotUniqueError as exc:
        run.add("decode.txt", "NOT_UNIQUE\n")
        run.commit()
        print("NOT_UNIQUE")
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    except DecodeError as exc:
        run.add("decode.txt", "NO_SOLUTION\n")
        run.commit()
        print("NO_SOLUTION")
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    text = format_winding(w)
    run.add("decode.txt", text + "\n")
    run.commit()
    print(text)
    return EXIT_OK


def cmd_fit(args, argv) -> int:
    text = _read_text(args.input)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration as exc:
        raise UsageError("empty input table") from exc
    try:
        ix = header.index(args.x_col)
        iy = header.index(args.y_col)
    except ValueError as exc:
        raise UsageError(f"columns {args.x_col!r}/{args.y_col!r} not in header {header}") from exc
    try:
        pts = [(float(r[ix]), float(r[iy])) for r in reader if r]
    except (ValueError, IndexError) as exc:
        raise UsageError(f"malformed row in {args.input}") from exc
    try:
        rep = fit_with_window(pts, args.window)
    except ValueError as exc:
        raise ConsistencyError(str(exc)) from exc
    run = Run(args, argv, config={"input": args.input, "x_col": args.x_col, "y_col": args.y_col, "window": args.window})
    run.add("fit.txt", rep.summary_line() + "\n")
    run.commit()
    print(rep.summary_line())
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(_read_text(args.manifest))
        old_argv = list(manifest["argv"])
        expected = {o["file"]: o["sha256"] for o in manifest["outputs"]}
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"not a run manifest: {args.manifest}") from exc
    new_argv = _with_outdir(old_argv, args.outdir)
    code = main(new_argv)
    if code not in (EXIT_OK, EXIT_NUMERIC):
        return code
    mismatched = []
    for name, digest in sorted(expected.items()):
        path = Path(args.outdir) / name
        got = hashlib.sha256(path.read_bytes()).hexdigest() if path.exists() else None
        if got != digest:
            mismatched.append(name)
    if mismatched:
        print("REPLAY_MISMATCH " + ",".join(mismatched))
        return EXIT_NUMERIC
    print(f"REPLAY_OK {len(expected)} file(s)")
    return code


def _with_outdir(argv, outdir):
    out = []
    skip = False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == "--outdir":
            skip = True
            continue
        if a.startswith("--outdir="):
            continue
        out.append(a)
    return ["--outdir", str(outdir)] + out


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _phys_flags(p, T=10.0):
    p.add_argument("--L", type=float, default=2.0, help="source-detector separation")
    p.add_argument("--T", type=float, default=T, help="flight time")
    p.add_argument("--mu", type=float, default=1.0, help="particle mass")
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--normalize", action="store_true", help="divide by mu / (2 pi i hbar T)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qpathdim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qpathdim {__version__}")
    ap.add_argument("--outdir", default=".", help="directory for tables and the run manifest")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--outdir", default=argparse.SUPPRESS, help="same as the global --outdir")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("propagator", parents=[common], help="partial-wave convergence of the free propagator")
    p.add_argument("--preset", choices=["fig8"])
    _phys_flags(p)
    p.add_argument("--h", type=float, nargs="+")
    p.add_argument("--m-max", type=int, nargs="+")
    p.set_defaults(func=cmd_propagator)

    p = sub.add_parser("exp1", parents=[common], help="AB versus semi-classical scan over (h, alpha)")
    p.add_argument("--preset", choices=["fig9", "fig10", "fig13"])
    _phys_flags(p)
    p.add_argument("--h", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--h-points", type=int, default=41)
    p.add_argument("--alpha", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--alpha-points", type=int, default=61)
    p.add_argument("--m-max", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_exp1)

    p = sub.add_parser("exp2", parents=[common], help="class-amplitude reconstruction and length scaling")
    p.add_argument("--config", required=True)
    p.add_argument("--synthetic", action="store_true", help="force synthetic amplitudes")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_exp2)

    p = sub.add_parser("pimc", parents=[common], help="Euclidean path-integral Monte Carlo estimate of d_H")
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PIMC_PRESETS))
    p.add_argument("--potential", choices=["free", "harmonic", "coulomb", "velocity"])
    p.add_argument("--alpha-v", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--therm-sweeps", type=int)
    p.add_argument("--n-chains", type=int)
    p.add_argument("--fit-window", choices=["all", "auto"])
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_pimc)

    p = sub.add_parser("decode", parents=[common], help="exact winding-vector decoding of a total flux")
    p.add_argument("--fluxes", required=True, help="comma-separated rationals, e.g. 97/99,101/111")
    p.add_argument("--total", required=True)
    p.add_argument("--cutoff", type=int, required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("fit", parents=[common], help="power-law fit of a two-column table")
    p.add_argument("--input", required=True)
    p.add_argument("--x-col", default="dx")
    p.add_argument("--y-col", default="abs_L")
    p.add_argument("--window", choices=["all", "auto"], default="all")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare output hashes")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("qpathdim: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"qpathdim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConsistencyError as exc:
        print(f"qpathdim: consistency failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NUMERIC_ERRORS as exc:
        print(f"qpathdim: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
