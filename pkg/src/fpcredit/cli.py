"""``fpcredit`` command line: calibrate, survival, price-cds, ers.

Exit codes: 0 success, 1 input or parse error, 2 numerical non-convergence.
Every option can also come from a JSON file passed with ``--config``; keys
are option names (dashes or underscores), unknown keys are rejected and
explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from fpcredit.calibrate import (
    CalibrationConfig,
    OptimizerConfig,
    bid_ask_weights,
    calibrate,
    parameters_to_dict,
    pv_windows,
    scenarios_from_dict,
)
from fpcredit.cdspricer import DEFAULT_STEP, CdsGrid
from fpcredit.errors import CalibrationError, InputError, NonConvergenceError
from fpcredit.ersmc import (
    EquityDynamics,
    ErsContract,
    McConfig,
    ers_price,
    fair_ers_spread,
    simulate_default_and_equity,
)
from fpcredit.intensity import strip_hazard
from fpcredit.marketdata import CdsQuote, DiscountCurve, flat_curve, load_curve, load_quotes
from fpcredit.survival import ScenarioSet

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
DEFAULT_RATE = 0.03
log = logging.getLogger("fpcredit")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise InputError(message)


def _fraction(text: str) -> float:
    try:
        value = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_market(p: argparse.ArgumentParser, quotes: bool = True) -> None:
    if quotes:
        p.add_argument("--quotes", help="CDS quote CSV")
    p.add_argument("--curve", help="zero curve CSV (default: flat 3%%)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fpcredit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cal = sub.add_parser("calibrate", help="calibrate AT1P, SBAT1P or SVBAT1P to CDS quotes")
    _add_common(cal)
    _add_market(cal)
    cal.add_argument("--model", choices=("at1p", "sbat1p", "svbat1p"), default="at1p")
    cal.add_argument("--beta", type=float, default=0.5)
    cal.add_argument("--h", type=float, default=0.4, help="barrier ratio H/V0 (at1p)")
    cal.add_argument("--scenarios", type=int, default=2, help="scenario count (sbat1p/svbat1p)")
    cal.add_argument("--sigma", type=float, default=0.24, help="common volatility (sbat1p)")
    cal.add_argument("--fixed-h", type=_float_list, default=None,
                     help="sbat1p kernel mode: comma-separated fixed barriers")
    cal.add_argument("--weights", default="none", help="none | bidask | file:<csv>")
    cal.add_argument("--multistarts", type=int, default=OptimizerConfig.multistart_count)
    cal.add_argument("--seed", type=int, default=OptimizerConfig.seed)
    cal.add_argument("--table", help="also write the text table to this file")

    srv = sub.add_parser("survival", help="survival curve CSV from calibrated parameters")
    _add_common(srv)
    srv.add_argument("--params", help="parameter or report JSON")
    srv.add_argument("--diff", help="second parameter JSON; emit params minus diff")
    srv.add_argument("--horizon", type=_fraction, default=10.0)
    srv.add_argument("--step", type=_fraction, default=1.0 / 12.0)

    cds = sub.add_parser("price-cds", help="CDS values at bid/mid/ask rates")
    _add_common(cds)
    _add_market(cds)
    cds.add_argument("--params", help="parameter or report JSON")
    cds.add_argument("--json", action="store_true", help="emit JSON instead of a table")

    ers = sub.add_parser("ers", help="equity return swap with counterparty risk")
    _add_common(ers)
    _add_market(ers, quotes=False)
    ers.add_argument("--params", help="counterparty parameter or report JSON")
    mode = ers.add_mutually_exclusive_group()
    mode.add_argument("--fair-spread", action="store_true", help="solve for the fair spread (default)")
    mode.add_argument("--price", action="store_true", help="price at --spread")
    ers.add_argument("--spread", type=float, default=0.0, help="spread X in bps")
    ers.add_argument("--rho", type=_float_list, default=[0.0], help="correlation(s), e.g. --rho=-1,0,0.5")
    ers.add_argument("--paths", type=int, default=200_000)
    ers.add_argument("--steps", type=int, default=250, help="time steps per year")
    ers.add_argument("--seed", type=int, default=20040310)
    ers.add_argument("--s0", type=float, default=20.0)
    ers.add_argument("--equity-vol", type=float, default=0.20)
    ers.add_argument("--dividend-yield", type=float, default=0.008)
    ers.add_argument("--maturity", type=float, default=5.0)
    ers.add_argument("--frequency", type=int, default=2)
    ers.add_argument("--recovery", type=float, default=0.4)
    ers.add_argument("--stock-count", type=float, default=1.0)
    ers.add_argument("--stub-fixing", choices=("period_start", "at_default"), default="period_start")
    ers.add_argument("--no-control-variate", action="store_true")
    ers.add_argument("--no-bridge", action="store_true")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    known = {k for k in vars(args) if k not in ("command", "config")}
    values = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise InputError(f"{path}: unknown key {key!r}")
        values[dest] = value
    # Re-parse so explicit flags override file values.
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices[args.command]
    for action in subparser._actions:
        if action.dest in values and action.type is not None and isinstance(values[action.dest], str):
            values[action.dest] = action.type(values[action.dest])
    subparser.set_defaults(**values)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _require(args: argparse.Namespace, name: str) -> str:
    value = getattr(args, name)
    if not value:
        raise InputError(f"--{name.replace('_', '-')} is required")
    return value


def _curve(args: argparse.Namespace) -> DiscountCurve:
    return load_curve(args.curve) if args.curve else flat_curve(DEFAULT_RATE)


def _load_json(path: str) -> dict:
    p = Path(path)
    try:
        return json.loads(p.read_text())
    except FileNotFoundError:
        raise InputError(f"parameter file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON: {exc}") from None


def _weights(spec: str, quotes: Sequence[CdsQuote]) -> Optional[np.ndarray]:
    if spec in (None, "none"):
        return None
    if spec == "bidask":
        return bid_ask_weights(quotes)
    if spec.startswith("file:"):
        path = Path(spec[5:])
        if not path.exists():
            raise InputError(f"weights file not found: {path}")
        by_tenor = {}
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].startswith("#") or row[0].strip() == "tenor_years":
                    continue
                try:
                    by_tenor[float(row[0])] = float(row[1])
                except (ValueError, IndexError):
                    raise InputError(f"{path}:{lineno}: expected tenor_years,weight") from None
        try:
            return np.array([by_tenor[q.tenor] for q in quotes])
        except KeyError as exc:
            raise InputError(f"{path}: no weight for tenor {exc.args[0]}") from None
    raise InputError(f"unknown weights mode {spec!r}; use none, bidask or file:<csv>")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def _pct(x: float, digits: int = 3) -> str:
    return f"{100.0 * x:.{digits}f}%"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_calibrate(args: argparse.Namespace) -> int:
    quotes = load_quotes(_require(args, "quotes"))
    if not quotes:
        raise InputError(f"{args.quotes}: no quotes to calibrate")
    curve = _curve(args)
    w = _weights(args.weights, quotes)
    config = CalibrationConfig(
        model=args.model, beta=args.beta, h_ratio=args.h,
        fixed_h=tuple(args.fixed_h) if args.fixed_h else None,
        scenario_count=args.scenarios, common_sigma=args.sigma,
        weights=None if w is None else tuple(float(v) for v in w),
        optimizer=OptimizerConfig(multistart_count=args.multistarts, seed=args.seed),
    )
    report = calibrate(quotes, curve, config)
    data = report.to_dict()
    data["valid_to_years"] = max(q.tenor for q in quotes)
    _emit(_dumps(data), args.out)
    table = _calibration_table(report, quotes, curve)
    if args.table:
        Path(args.table).write_text(table)
    elif args.out:
        sys.stdout.write(table)
    if not report.converged:
        log.error("optimizer did not meet its tolerance; best point reported")
        return EXIT_NONCONVERGED
    return EXIT_OK


def _calibration_table(report, quotes: Sequence[CdsQuote], curve: DiscountCurve) -> str:
    scen = report.scenarios
    hazard = strip_hazard(quotes, curve)
    if report.model == "at1p":
        firm = scen.firms[0]
        rows = [["0", _pct(firm.sigmas[0]), _pct(1.0), _pct(hazard.intensities[0]), _pct(1.0)]]
        for q, s, lam in zip(quotes, firm.sigmas, hazard.intensities):
            rows.append([f"{q.tenor:g}y", _pct(s), _pct(firm.survival(q.tenor)), _pct(lam),
                         _pct(hazard.survival(q.tenor))])
        return _table(("T", "sigma", "surv", "intensity", "surv(int)"), rows)
    rows = [[f"{f.h_ratio:.4f}", _pct(f.sigmas[0], 2), _pct(p, 2)] for f, p in scen.scenarios]
    out = _table(("H", "sigma", "p"), rows)
    res_rows = [[f"{q.tenor:g}y", f"{r:.2f}", f"{lo:.2f}", f"{hi:.2f}", "yes" if ok else "no"]
                for q, r, (lo, hi), ok in zip(quotes, report.residuals, report.windows, report.in_window)]
    out += "\n" + _table(("T", "pv_mid", "pv_ask", "pv_bid", "in_window"), res_rows)
    out += f"\nobjective {report.objective:.4f} bps^2  E[H] {report.expected_barrier:.4f}\n"
    return out


def _params(path: str) -> tuple[ScenarioSet, float]:
    data = _load_json(path)
    valid = float(data.get("valid_to_years", math.inf)) if isinstance(data, dict) else math.inf
    return scenarios_from_dict(data), valid


def cmd_survival(args: argparse.Namespace) -> int:
    scen, valid = _params(_require(args, "params"))
    other = None
    if args.diff:
        other, valid_other = _params(args.diff)
        valid = max(valid, valid_other)
    if args.step <= 0.0 or args.horizon <= 0.0:
        raise InputError("horizon and step must be positive")
    if args.horizon > valid + 1e-12:
        raise InputError(f"horizon {args.horizon}y exceeds calibrated range ({valid}y)")
    n = int(round(args.horizon / args.step))
    if abs(n * args.step - args.horizon) > 1e-9:
        raise InputError("horizon must be a whole number of steps")
    times = np.arange(n + 1) * args.step
    values = np.asarray(scen.survival(times))
    header = "survival"
    if other is not None:
        values = values - np.asarray(other.survival(times))
        header = "survival_diff"
    buf = io.StringIO()
    buf.write(f"time_years,{header}\n")
    for t, v in zip(times, values):
        buf.write(f"{t:.12g},{v:.12g}\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_price_cds(args: argparse.Namespace) -> int:
    scen, _ = _params(_require(args, "params"))
    quotes = load_quotes(_require(args, "quotes"))
    curve = _curve(args)
    rows, records = [], []
    if quotes:
        windows = pv_windows(quotes, curve)
        for q, (lo, hi) in zip(quotes, windows):
            grid = CdsGrid(q.schedule(), curve, DEFAULT_STEP)
            surv = scen.survival(grid.times)
            pvs = {name: float(grid.pv(surv, rate, q.lgd))
                   for name, rate in (("bid", q.r_bid), ("mid", q.r_mid), ("ask", q.r_ask))}
            inside = bool(lo <= pvs["mid"] <= hi)
            records.append({"tenor_years": q.tenor, "pv_bid_bps": pvs["bid"], "pv_mid_bps": pvs["mid"],
                            "pv_ask_bps": pvs["ask"], "window_bps": [float(lo), float(hi)],
                            "in_window": inside})
            rows.append([f"{q.tenor:g}y", f"{pvs['bid']:.4f}", f"{pvs['mid']:.4f}", f"{pvs['ask']:.4f}",
                         f"[{lo:.2f}, {hi:.2f}]", "yes" if inside else "no"])
    if args.json:
        _emit(_dumps({"quotes": records}), args.out)
    else:
        _emit(_table(("T", "pv_bid", "pv_mid", "pv_ask", "window", "in_window"), rows), args.out)
    return EXIT_OK


def cmd_ers(args: argparse.Namespace) -> int:
    scen, _ = _params(_require(args, "params"))
    curve = _curve(args)
    contract = ErsContract.standard(s0=args.s0, maturity=args.maturity, frequency=args.frequency,
                                    spread_bps=args.spread, recovery=args.recovery,
                                    stock_count=args.stock_count, stub_fixing=args.stub_fixing)
    equity = EquityDynamics(args.s0, args.equity_vol, args.dividend_yield)
    if not args.rho:
        raise InputError("--rho needs at least one value")
    base = McConfig(paths=args.paths, steps_per_year=args.steps, seed=args.seed,
                    control_variate=not args.no_control_variate, brownian_bridge=not args.no_bridge)
    sample = simulate_default_and_equity(scen, contract.maturity, base, contract.schedule.dates)
    results = []
    for rho in args.rho:
        cfg = McConfig(paths=base.paths, steps_per_year=base.steps_per_year, seed=base.seed, rho=rho,
                       control_variate=base.control_variate, brownian_bridge=base.brownian_bridge)
        if args.price:
            est = ers_price(contract, scen, equity, curve, cfg, sample=sample)
            results.append(est.to_dict())
        else:
            x = fair_ers_spread(contract, scen, equity, curve, cfg, sample=sample)
            est = ers_price(contract.with_spread(x), scen, equity, curve, cfg, sample=sample)
            record = est.to_dict()
            record["fair_spread_bps"] = x
            results.append(record)
    echo = {
        "mode": "price" if args.price else "fair_spread",
        "seed": args.seed, "paths": args.paths, "steps_per_year": args.steps,
        "control_variate": base.control_variate, "brownian_bridge": base.brownian_bridge,
        "contract": {"s0": args.s0, "maturity": args.maturity, "frequency": args.frequency,
                     "spread_bps": args.spread, "recovery": args.recovery,
                     "stock_count": args.stock_count, "stub_fixing": args.stub_fixing},
        "equity": {"sigma": args.equity_vol, "dividend_yield": args.dividend_yield},
        "counterparty": parameters_to_dict(scen),
    }
    _emit(_dumps({"results": results, "config_echo": echo}), args.out)
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "survival": cmd_survival,
    "price-cds": cmd_price_cds,
    "ers": cmd_ers,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="fpcredit: %(message)s")
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
        return COMMANDS[args.command](args)
    except (NonConvergenceError, CalibrationError) as exc:
        print(f"fpcredit: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InputError, OSError) as exc:
        print(f"fpcredit: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
