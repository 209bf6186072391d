"""Command line front end: ``adafilter <scenario> --model m.json ...``.

Exit codes: 0 success, 2 configuration error, 3 identifiability failure,
4 numerical not-applicable (non-mixing kernel or infinite Lambda). Errors
are emitted as JSON on standard error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, IdentifiabilityError, NotApplicableError
from .harness import SCENARIOS, ExperimentConfig, run


def _emit_error(kind: str, message: str, details=None) -> None:
    payload = {"error": kind, "message": message, "details": details or []}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("config", message)
        raise SystemExit(2)


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adafilter", description=__doc__)
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--model", required=True, help="model spec JSON file")
        p.add_argument("--n", type=int, default=100, help="horizon")
        p.add_argument("--seeds", type=_seed_list, default=[0], help="comma-separated seed list")
        p.add_argument("--eta", type=float, default=0.1, help="parameter neighborhood radius")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--alpha-index", type=int, default=None, help="grid index of the true parameter")
        p.add_argument("--particles", type=int, default=0, help="particle count for PF runs")
        p.add_argument("--fd-step", type=float, default=1e-6, help="finite-difference step")
        p.add_argument("--ess-frac", type=float, default=0.5, help="resampling trigger as a fraction of N")
        p.add_argument("--rate-window", type=float, default=0.5, help="tail fraction for rate fitting")
        p.add_argument("--ident-tol", type=float, default=1e-6, help="identifiability scan tolerance")
        p.add_argument("--mu", type=_float_list, default=None, help="initial state law override")
        p.add_argument("--mu-prime", type=_float_list, default=None, help="reference initial law override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExperimentConfig(
        scenario=args.scenario,
        model=args.model,
        n=args.n,
        seeds=args.seeds,
        eta=args.eta,
        out=args.out,
        alpha_index=args.alpha_index,
        particles=args.particles,
        fd_step=args.fd_step,
        ess_frac=args.ess_frac,
        rate_window=args.rate_window,
        ident_tol=args.ident_tol,
        mu=args.mu,
        mu_prime=args.mu_prime,
    )
    try:
        return run(config)
    except ConfigError as exc:
        _emit_error("config", str(exc), exc.details)
        return 2
    except IdentifiabilityError as exc:
        _emit_error("identifiability", str(exc))
        return 3
    except NotApplicableError as exc:
        _emit_error("not-applicable", str(exc))
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
