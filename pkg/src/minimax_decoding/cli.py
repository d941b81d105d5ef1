"""Command-line front end: ``xi``, ``exponent``, ``simulate`` and ``oracle``.

Exit codes: 0 success, 2 invalid flags or configuration, 3 empty effective
channel family, 4 oracle size limit exceeded. Emitted files embed the
resolved configuration and the package version; timings go to stderr only,
so identical flags give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import ChannelFamily, Dmc, bsc
from .decoders import DecoderKind
from .ensembles import sample_linear, stream
from .exponents import DeltaStarSpec, bsc_Er_star
from .mcsim import (
    CSV_COLUMNS,
    MAX_EXACT_N,
    SimConfig,
    brute_force_moment,
    exact_message_error,
    ratio_row,
    rows_to_csv,
    run_sim,
)
from .probcore import Pmf
from .xisolver import EmptyFamilyError, XiGrids, XiProblem, log_moment_rate, solve

EXIT_OK, EXIT_USAGE, EXIT_EMPTY_FAMILY, EXIT_CAPACITY = 0, 2, 3, 4
XI_CSV_COLUMNS = ("xi", "mode", "rate", "theta", "theta_prime", "rho", "s_or_lambda", "branch")


class UsageError(Exception):
    """Flag combination rejected after parsing (exit code 2)."""


class CapacityError(Exception):
    """Requested oracle exceeds its enumeration limit (exit code 4)."""


@dataclass
class ExperimentConfig:
    """Resolved command payload plus output settings."""

    command: str
    payload: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"

    def to_dict(self) -> dict:
        return {"command": self.command, "payload": self.payload, "out": self.out,
                "format": self.format}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(d["command"], dict(d.get("payload", {})), d.get("out"), d.get("format", "json"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# parsing helpers


def _add_rate(p: argparse.ArgumentParser, required: bool = True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--rate", type=float, help="rate in nats per channel symbol")
    g.add_argument("--rate-bits", type=float, help="rate in bits per channel symbol (converted by ln 2)")


def _rate(args) -> float | None:
    if args.rate_bits is not None:
        return args.rate_bits * math.log(2)
    return args.rate


def _add_output(p: argparse.ArgumentParser, csv_help: str):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help=csv_help)


def _add_family(p: argparse.ArgumentParser):
    p.add_argument("--channel", choices=("bsc", "dmc"), default="bsc",
                   help="family kind; 'dmc' reads --family-file")
    p.add_argument("--theta-lo", type=float, required=False, help="smallest crossover of the BSC grid")
    p.add_argument("--theta-hi", type=float, required=False, help="largest crossover of the BSC grid")
    p.add_argument("--theta-step", type=float, required=False, help="BSC grid spacing")
    p.add_argument("--family-file", help='JSON {"channels": [{"x_size", "y_size", "rows"}, ...]}')


def _family(args) -> ChannelFamily:
    if args.channel == "dmc":
        if not args.family_file:
            raise UsageError("--channel dmc needs --family-file")
        data = json.loads(Path(args.family_file).read_text())
        return ChannelFamily.explicit([Dmc.from_dict(c) for c in data["channels"]])
    if None in (args.theta_lo, args.theta_hi, args.theta_step):
        raise UsageError("--channel bsc needs --theta-lo, --theta-hi and --theta-step")
    return ChannelFamily.bsc_interval(args.theta_lo, args.theta_hi, args.theta_step)


def _read_pmf(path: str) -> Pmf:
    data = json.loads(Path(path).read_text())
    return Pmf(data["probs"] if isinstance(data, dict) else data)


def _delta(text: str) -> DeltaStarSpec:
    if text == "uniform":
        return DeltaStarSpec.uniform()
    if text == "linear":
        return DeltaStarSpec.linear()
    kind, _, rest = text.partition(":")
    if kind == "iid" and rest:
        return DeltaStarSpec.iid(_read_pmf(rest))
    if kind == "nbhd" and rest:
        path, _, radius = rest.rpartition(":")
        if not path:
            raise UsageError("--delta nbhd needs <file>:<radius>")
        return DeltaStarSpec.neighborhood(_read_pmf(path), float(radius))
    raise UsageError(f"unrecognized --delta {text!r}")


def _emit(text: str, out: str | None):
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _provenance(args, command: str) -> dict:
    payload = {k: v for k, v in sorted(vars(args).items())
               if not k.startswith("_") and k not in ("func", "out", "format", "threads")}
    return ExperimentConfig(command, payload, args.out, args.format).to_dict()


# --------------------------------------------------------------------------
# commands


def cmd_xi(args) -> int:
    R = _rate(args)
    fam = _family(args)
    defaults = XiGrids.for_mode(args.mode)
    overrides = {k: getattr(args, k) for k in vars(defaults) if getattr(args, k, None) is not None}
    grids = XiGrids(**{**vars(defaults), **overrides})
    problem = XiProblem(fam, R, _delta(args.delta), args.mode, grids, args.denom_floor)
    result = solve(problem)
    if args.format == "json":
        d = result.to_dict()
        d["config"] = _provenance(args, "xi")
        _emit(_dump(d), args.out)
    else:
        w = result.witness
        s_or_lam = w.get("s", w.get("lambda"))
        row = [result.xi, args.mode, R, w["theta"]["label"], w["theta_prime"]["label"],
               w["rho"], s_or_lam, w["branch"]]
        _emit(_csv([XI_CSV_COLUMNS, row]), args.out)
    return EXIT_OK


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_exponent(args) -> int:
    R = _rate(args)
    curve = bsc_Er_star(args.theta, R)
    d = {"schema": "exponent/1", "version": __version__, "theta": args.theta, "rate": R,
         "value": curve.value, "rho_hat": curve.rho_hat, "config": _provenance(args, "exponent")}
    if args.format == "json":
        _emit(_dump(d), args.out)
    else:
        _emit(_csv([("theta", "rate", "value", "rho_hat"), (args.theta, R, curve.value, curve.rho_hat)]),
              args.out)
    return EXIT_OK


def _block_decoder(args, N: int, M: int) -> DecoderKind:
    seed = args.seed if args.tie_policy == "random" else None
    if args.decoder == "ml":
        if args.decoder_theta is None and len(args.theta) != 1:
            raise UsageError("--decoder ml over several --theta values needs --decoder-theta")
        th = args.decoder_theta if args.decoder_theta is not None else args.theta[0]
        return DecoderKind.ml(bsc(th), args.tie_policy, seed)
    if args.decoder == "rho":
        return DecoderKind.rho(args.tie_policy, seed)
    if args.decoder == "mmi":
        return DecoderKind.mmi(args.tie_policy, seed)
    if args.decoder == "minimax":
        fam = _family(args)
        R = _rate(args)
        R = math.log(M) / N if R is None else R
        return DecoderKind.minimax(fam, args.xi, R, tie_policy=args.tie_policy, seed=seed)
    raise UsageError(f"decoder {args.decoder!r} is not a block decoder")


def cmd_simulate(args) -> int:
    thetas = args.theta
    reports = []
    for th in thetas:
        if args.kind == "conv":
            if args.decoder not in ("two-trellis", "ml"):
                raise UsageError("conv simulation supports --decoder two-trellis or ml")
            cfg = SimConfig(th, args.decoder, args.trials, args.seed, "conv", b=args.b, n=args.n,
                            K=args.K, L=args.L, fresh_code_per_trial=not args.fixed_code,
                            batch=args.batch)
        else:
            if args.N is None or args.M is None:
                raise UsageError("block simulation needs --N and --M")
            kind = _block_decoder(args, args.N, args.M)
            cfg = SimConfig(th, kind, args.trials, args.seed, args.ensemble, N=args.N, M=args.M,
                            fresh_code_per_trial=not args.fixed_code, batch=args.batch)
        rep = run_sim(cfg)
        print(f"theta={th:g}: {rep.errors}/{rep.trials} errors in {rep.elapsed:.2f}s", file=sys.stderr)
        reports.append(rep)
    R = reports[0].config.rate
    rows = [ratio_row(r, args.ratio_xi, bsc_Er_star(r.config.theta, R).value) for r in reports]
    if args.format == "csv":
        _emit(rows_to_csv(r.as_csv_row() for r in rows), args.out)
        return EXIT_OK
    d = {"schema": "simulate/1", "version": __version__, "config": _provenance(args, "simulate"),
         "reports": [r.to_dict() for r in reports],
         "ratios": {"xi": args.ratio_xi, "max_ratio": max(r.ratio for r in rows),
                    "rows": [vars(r).copy() for r in rows]}}
    _emit(_dump(d), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.oracle == "lemma2":
        if args.N > MAX_EXACT_N:
            raise CapacityError(f"exhaustive enumeration limited to N <= {MAX_EXACT_N}")
        spec = sample_linear(args.K, args.N, args.systematic, stream(args.seed, 2))
        if args.decoder == "minimax":
            fam = ChannelFamily.bsc_interval(args.theta_lo, args.theta_hi, args.theta_step)
            kind = DecoderKind.minimax(fam, args.xi, spec.K * math.log(2) / spec.N, tie_policy="error")
        else:
            kind = DecoderKind.rho(tie_policy="error")
        errs = exact_message_error(spec, args.theta, kind)
        d = {"schema": "oracle-lemma2/1", "version": __version__, "code": spec.to_dict(),
             "per_message_error": errs.tolist(), "spread": float(errs.max() - errs.min())}
    else:
        if 2 ** args.N > 2 ** 20:
            raise CapacityError("moment oracle limited to 2^N <= 2^20 input words")
        if args.ensemble == "type" and args.N % 2:
            raise UsageError("type-class ensemble needs even N")
        w = bsc(args.theta)
        y = np.arange(args.N) % 2
        R = _rate(args) or 0.0
        bf = brute_force_moment(w, args.alpha, args.xi, y, args.N, Pmf.uniform(2), R, args.ensemble)
        spec = DeltaStarSpec.uniform() if args.ensemble == "iid" \
            else DeltaStarSpec.neighborhood(Pmf.uniform(2), 0.0)
        rate = log_moment_rate(w, args.alpha, args.xi, Pmf.uniform(2), spec, R)
        d = {"schema": "oracle-moment/1", "version": __version__, "brute_force": bf,
             "method_of_types": rate, "gap": abs(bf - rate)}
    d["config"] = _provenance(args, "oracle")
    if args.format == "csv":
        keys = [k for k in d if not isinstance(d[k], (dict, list))]
        _emit(_csv([keys, [d[k] for k in keys]]), args.out)
    else:
        _emit(_dump(d), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-decoding", allow_abbrev=False,
        description="Competitive-minimax universal decoding: exponent fractions, "
                    "exponents, simulations and exact oracles.",
        epilog="Exit codes: 0 ok, 2 invalid flags, 3 empty effective family, 4 oracle too large.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("xi", allow_abbrev=False, help="solve for the guaranteed exponent fraction",
                       epilog="CSV columns: " + ",".join(XI_CSV_COLUMNS))
    _add_family(p)
    _add_rate(p)
    p.add_argument("--delta", default="uniform",
                   help="ensemble penalty: uniform | linear | iid:<file> | nbhd:<file>:<radius>")
    p.add_argument("--mode", choices=("lb", "exact", "bsc-closed"), default="lb")
    for name in ("p_y_points", "conditional_points", "rho_points", "s_points", "refinement_rounds"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int,
                       help="override the mode's default grid")
    p.add_argument("--denom-floor", type=float, default=1e-6,
                   help="exclude channels whose ML exponent is below this value")
    _add_output(p, "json (full witnesses) or csv (one summary row)")
    p.set_defaults(func=cmd_xi)

    p = sub.add_parser("exponent", allow_abbrev=False, help="BSC random-coding exponent",
                       epilog="CSV columns: theta,rate,value,rho_hat")
    p.add_argument("--theta", type=float, required=True, help="crossover probability")
    _add_rate(p)
    _add_output(p, "json or csv")
    p.set_defaults(func=cmd_exponent)

    p = sub.add_parser("simulate", allow_abbrev=False, help="Monte Carlo error rates",
                       epilog="CSV columns: " + ",".join(CSV_COLUMNS))
    p.add_argument("kind", choices=("block", "conv"))
    p.add_argument("--theta", type=float, nargs="+", required=True,
                   help="true crossover probability (several values give a ratio table)")
    p.add_argument("--decoder", required=True, choices=("ml", "minimax", "rho", "mmi", "two-trellis"))
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True, help="master seed (mandatory)")
    p.add_argument("--ensemble", choices=("iid", "linear", "systematic"), default="iid",
                   help="block ensemble")
    p.add_argument("--N", type=int, help="block length")
    p.add_argument("--M", type=int, help="number of codewords")
    p.add_argument("--b", type=int, default=1, help="info bits per branch")
    p.add_argument("--n", type=int, default=2, help="code bits per branch")
    p.add_argument("--K", type=int, default=3, help="constraint-length factor")
    p.add_argument("--L", type=int, default=64, help="info branches before the zero tail")
    p.add_argument("--tie-policy", choices=("lowest", "error", "random"), default="lowest")
    p.add_argument("--decoder-theta", type=float, help="crossover assumed by --decoder ml")
    p.add_argument("--xi", type=float, default=1.0, help="fraction used by --decoder minimax")
    _add_family(p)
    _add_rate(p, required=False)
    p.add_argument("--ratio-xi", type=float, default=1.0,
                   help="fraction in the ratio column p_hat / exp(-N xi E*)")
    p.add_argument("--fixed-code", action="store_true", help="one code for all trials")
    p.add_argument("--batch", type=int, default=2000, help="trials decoded per vectorized batch")
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for interface stability; results never depend on it")
    _add_output(p, "json (reports and ratios) or csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", allow_abbrev=False, help="exact enumeration oracles")
    p.add_argument("oracle", choices=("lemma2", "moment"))
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--K", type=int, default=2, help="message bits (lemma2)")
    p.add_argument("--systematic", action="store_true", help="systematic code (lemma2)")
    p.add_argument("--seed", type=int, default=0, help="code seed (lemma2)")
    p.add_argument("--decoder", choices=("minimax", "rho"), default="minimax")
    p.add_argument("--theta-lo", type=float, default=0.05)
    p.add_argument("--theta-hi", type=float, default=0.30)
    p.add_argument("--theta-step", type=float, default=0.0125)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0, help="tilt (moment)")
    p.add_argument("--ensemble", choices=("iid", "type"), default="type", help="codeword law (moment)")
    _add_rate(p, required=False)
    _add_output(p, "json or csv (scalar fields)")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except EmptyFamilyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_FAMILY
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (UsageError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
