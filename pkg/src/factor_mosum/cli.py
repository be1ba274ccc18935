"""Command-line front end.

Subcommands::

    factor-mosum detect PANEL.csv [tuning flags] [--r-sweep 1..7]
    factor-mosum simulate {M1,M2,M3} --T 400 --N 100 --reps 200 --seed 1
    factor-mosum simulate --paper-table 2
    factor-mosum spectrum PANEL.csv --r-max 8
    factor-mosum volatility PRICES.csv --out PANEL.csv

Exit codes: 0 success, 1 invalid input, 2 numerical failure. Errors are
reported on stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .factor import bai_ng_ic, eigenvalue_ratio_count, stable_factor_count
from .mosum import DetectorConfig, run_pipeline
from .panel import load_panel, save_panel
from .simlab import DgpSpec, monte_carlo, table_config, table_specs, summaries_to_csv
from .volatility import load_ohlc, log_range_volatility

# flag dest -> DetectorConfig field
TUNING_FLAGS = {
    "gamma": "gamma",
    "r": "r",
    "r_strategy": "r_strategy",
    "r_max": "r_max",
    "alpha": "alpha",
    "eta": "eta",
    "kappa": "kappa",
    "mode": "mode",
    "m": "m",
    "varrho": "varrho",
    "seed": "seed",
}


def _parse_sweep(text: str) -> list[int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise ValidationError(f"--r-sweep expects a..b, got {text!r}") from None
    if not 1 <= lo <= hi:
        raise ValidationError(f"--r-sweep range {text!r} must satisfy 1 <= a <= b")
    return list(range(lo, hi + 1))


def _add_tuning(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector tuning (override --config)")
    g.add_argument("--config", type=Path, help="JSON file with detector settings")
    g.add_argument("--gamma", type=int, help="MOSUM bandwidth (default: data-driven)")
    g.add_argument("--r", type=int, help="number of factors (implies --r-strategy fixed)")
    g.add_argument("--r-strategy", choices=["fixed", "ic-stable", "eigen-ratio"])
    g.add_argument("--r-max", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--kappa", type=float)
    g.add_argument("--mode", choices=["full", "diagonal"])
    g.add_argument("--m", type=int, help="HAC lag truncation (default floor(T^(1/4)))")
    g.add_argument("--varrho", type=float, help="log exponent in the default bandwidth")
    g.add_argument("--seed", type=int, help="seed for subsampling in factor-number selection")
    g.add_argument("--threads", type=int, default=1, help="accepted for symmetry; detection is serial")


def build_config(args) -> DetectorConfig:
    data = {}
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
    for dest, key in TUNING_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[key] = value
    if args.r is not None and args.r_strategy is None:
        data["r_strategy"] = "fixed"
    return DetectorConfig.from_dict(data)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_detect(args) -> int:
    config = build_config(args)
    panel = load_panel(args.panel, layout=args.layout, demean=not args.no_demean)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.r_sweep:
        summary = {}
        for r in _parse_sweep(args.r_sweep):
            res = run_pipeline(panel, replace(config, r=r, r_strategy="fixed"))
            res.profile.to_csv(out / f"profile_r{r}.csv")
            _write_json(out / f"report_r{r}.json", _report_payload(res, panel))
            summary[str(r)] = [panel.time_labels[k - 1] for k in res.report.estimates]
        print(json.dumps({"dates_by_r": summary}, indent=2, sort_keys=True, default=str))
        return 0

    res = run_pipeline(panel, config)
    res.profile.to_csv(out / "profile.csv")
    payload = _report_payload(res, panel)
    _write_json(out / "report.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _report_payload(res, panel) -> dict:
    payload = res.report.to_dict()
    payload["dates"] = [str(panel.time_labels[k - 1]) for k in res.report.estimates]
    payload["panel"] = {"N": panel.N, "T": panel.T, "demeaned": panel.demeaned}
    if res.gamma_choice is not None:
        payload["gamma_choice"] = res.gamma_choice.to_dict()
    if res.factor_count is not None:
        payload["factor_count"] = res.factor_count.to_dict()
    payload["long_run_cov"] = {"mode": res.lrcov.mode, "m": res.lrcov.m, "ridge": res.lrcov.ridge}
    return payload


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise ValidationError("--reps must be at least 1")
    if args.table is not None:
        specs = table_specs(args.table)
        modes = ["diagonal", "full"] if args.mode == "both" else [args.mode]
    else:
        if args.kind is None:
            raise ValidationError("give a design (M1, M2, M3) or --paper-table")
        T, N = args.T, args.N
        if args.kind == "M1":
            T, N = T or 400, N or 200
        specs = [DgpSpec(args.kind, T or 400, N or 100, args.rho_f, args.rho_e)]
        modes = ["diagonal", "full"] if args.mode == "both" else [args.mode]

    summaries = []
    for spec in specs:
        spec = replace(spec, m2_last_loadings=args.m2_last_loadings)
        for mode in modes:
            config = table_config(spec, mode=mode)
            if args.gamma is not None:
                config = config.with_(gamma=args.gamma)
            summaries.append(monte_carlo(spec, config, args.reps, args.seed, workers=args.threads))
            if args.verbose:
                print(summaries_to_csv(summaries[-1:]), file=sys.stderr, end="")
    text = summaries_to_csv(summaries)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_spectrum(args) -> int:
    panel = load_panel(args.panel, layout=args.layout, demean=not args.no_demean)
    ic = bai_ng_ic(panel, args.r_max)
    stable = stable_factor_count(panel, args.r_max, seed=args.seed)
    ratio = eigenvalue_ratio_count(panel, args.r_max)
    payload = {
        "N": panel.N,
        "T": panel.T,
        "r_max": args.r_max,
        "eigenvalues": ic.to_dict()["eigenvalues"],
        "ic_curves": ic.to_dict()["ic_curves"],
        "bai_ng": ic.to_dict()["per_criterion"],
        "ic_stable": {"r_hat": stable.r_hat, "per_criterion": stable.to_dict()["per_criterion"]},
        "eigen_ratio": {"r_hat": ratio.r_hat, "ratios": ratio.to_dict()["ic_curves"]["ER"]},
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_volatility(args) -> int:
    ohlc = load_ohlc(args.prices)
    panel = log_range_volatility(ohlc, demean=not args.no_demean)
    save_panel(panel, args.out, layout="series-in-rows")
    print(panel.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factor-mosum", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect change points in a panel CSV")
    p.add_argument("panel", type=Path)
    p.add_argument("--layout", choices=["series-in-rows", "series-in-columns"], default="series-in-rows")
    p.add_argument("--no-demean", action="store_true")
    p.add_argument("--out-dir", default=".", help="where report/profile files go")
    p.add_argument("--r-sweep", help="run for each r in a..b, writing threshold-normalised profiles")
    _add_tuning(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="Monte Carlo study on designs M1-M3")
    p.add_argument("kind", nargs="?", choices=["M1", "M2", "M3"])
    p.add_argument("--T", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--rho-f", type=float, default=0.0)
    p.add_argument("--rho-e", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--mode", choices=["diagonal", "full", "both"], default="diagonal")
    p.add_argument("--gamma", type=int, help="override the default bandwidth")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--paper-table", "--table", dest="table", type=int, choices=[1, 2, 3, 4], help="run a whole simulation-table grid")
    p.add_argument("--m2-last-loadings", choices=["fresh", "rotation"], default="fresh")
    p.add_argument("--out", help="CSV destination (default stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spectrum", help="eigenvalues and factor-number diagnostics")
    p.add_argument("panel", type=Path)
    p.add_argument("--r-max", type=int, default=8)
    p.add_argument("--layout", choices=["series-in-rows", "series-in-columns"], default="series-in-rows")
    p.add_argument("--no-demean", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("volatility", help="turn daily high/low prices into a log-range panel")
    p.add_argument("prices", type=Path, help="CSV with columns date, series, high, low")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-demean", action="store_true")
    p.set_defaults(func=cmd_volatility)
    return parser


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        return _fail(exc, 1)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
