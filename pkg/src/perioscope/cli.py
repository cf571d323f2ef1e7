"""Command-line entry point: ``perioscope {detect,batch,synth,bench}``.

Exit codes: 0 on success (periodic or not), 2 for unreadable or malformed
input, 3 for invalid configuration. Messages go to stderr, results to stdout
or ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from .detector import DetectConfig, DetectionResult, detect_period
from .mspec import HuberConfig
from .series import SeriesError, load_series, save_csv
from .synthbench import (
    ALGORITHMS,
    MISSING_MODES,
    TABLE_GRID,
    WAVEFORMS,
    SpecError,
    SynthSpec,
    Trend,
    generate,
    run_benchmark,
)
from .trendfilter import TrendConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3

# synth and bench defaults; detection defaults come from DetectConfig itself
DEFAULTS = {
    "synth": {
        "length": 480,
        "period": 24,
        "waveform": "sine",
        "trend": "none",
        "slope": 0.0,
        "jump": 0.0,
        "noise": 0.1,
        "mr": 0.0,
        "or": 0.0,
        "missing_mode": "single_block",
        "blocks": 1,
        "seed": 0,
    },
    "bench": {
        "trials": 20,
        "mr": sorted({g[0] for g in TABLE_GRID}),
        "or": sorted({g[1] for g in TABLE_GRID}),
        "algorithms": list(ALGORITHMS),
        "seed": 0,
    },
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_detect_flags(p: argparse.ArgumentParser) -> None:
    d = DetectConfig()
    t, h = d.trend_cfg, d.huber_cfg
    g = p.add_argument_group("detection")
    g.add_argument("--alpha", type=float, default=d.alpha, help="significance level of the g-test")
    g.add_argument("--peak-height", type=float, default=d.peak_height_frac,
                   help="minimum normalised ACF height of a peak")
    g.add_argument("--lambda1", type=float, default=t.lambda1, help="first-difference penalty")
    g.add_argument("--lambda2", type=float, default=t.lambda2, help="second-difference penalty")
    g.add_argument("--rho", type=float, default=t.rho, help="ADMM penalty parameter")
    g.add_argument("--max-iter", type=int, default=t.max_iter, help="ADMM iteration cap")
    g.add_argument("--delta", type=float, default=None, help="fixed Huber knee (default adaptive)")
    g.add_argument("--huber-scale", choices=("difference", "residual"), default=h.scale,
                   help="adaptive knee rule")
    g.add_argument("--fast-mode", action="store_true",
                   help="use the plain squared-DFT numerator instead of the Huber periodogram")
    g.add_argument("--fallback", action="store_true",
                   help="report N/k* when the ACF spacing disagrees with the periodogram bin")
    p.add_argument("--column", default=None, help="CSV column name or 0-based index")


def _detect_config(args) -> DetectConfig:
    try:
        trend = TrendConfig(lambda1=args.lambda1, lambda2=args.lambda2, rho=args.rho, max_iter=args.max_iter)
        huber = HuberConfig(delta=args.delta, scale=args.huber_scale)
        return DetectConfig(
            alpha=args.alpha,
            peak_height_frac=args.peak_height,
            trend_cfg=trend,
            huber_cfg=huber,
            use_m_periodogram=not args.fast_mode,
            fallback_to_bin=args.fallback,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _column(args):
    col = args.column
    if col is not None and col.isdigit():
        return int(col)
    return col


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _result_text(name: str, res: DetectionResult) -> str:
    if res.periodic:
        verdict = f"periodic, period {res.period}"
    else:
        verdict = f"not periodic ({res.diagnostics.get('reason', '')})"
    return f"{name}: {verdict}; g={res.g_stat:.4g} p={res.p_value:.3g} k*={res.k_star}"


def _show(section: str, resolved: dict) -> int:
    sys.stdout.write(json.dumps({section: resolved}, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _detect_config(args)
    if args.show_config:
        return _show("detect", {**asdict(cfg), "fast_mode": args.fast_mode})
    s = load_series(args.input, _column(args))
    res = detect_period(s, cfg)
    if args.format == "json":
        _emit(res.to_json(indent=2), args.out)
    else:
        _emit(_result_text(args.input, res), args.out)
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _detect_config(args)
    if args.show_config:
        return _show("detect", {**asdict(cfg), "fast_mode": args.fast_mode})
    root = Path(args.directory)
    if not root.is_dir():
        raise SeriesError(f"{root} is not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".csv", ".json") and p.is_file())
    records = []
    failed = False
    for path in files:
        try:
            res = detect_period(load_series(path, _column(args)), cfg)
            records.append((path.name, res, None))
        except SeriesError as exc:
            failed = True
            print(f"{path.name}: {exc}", file=sys.stderr)
            records.append((path.name, None, str(exc)))
    if args.format == "json":
        payload = [
            {"file": name, "result": res.to_dict() if res else None, "error": err}
            for name, res, err in records
        ]
        _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    else:
        lines = [_result_text(name, res) if res else f"{name}: error: {err}" for name, res, err in records]
        _emit("\n".join(lines) if lines else "no .csv or .json files found", args.out)
    return EXIT_INPUT if failed else EXIT_OK


def _synth_spec(args) -> SynthSpec:
    try:
        if args.trend == "none":
            trend = Trend()
        elif args.trend == "linear":
            trend = Trend("linear", slope=args.slope)
        else:
            cp = args.change_point if args.change_point is not None else args.length // 2
            trend = Trend("piecewise", change_points=(cp,), slopes=(args.slope, -args.slope),
                          jumps=(args.jump,))
            trend.evaluate(args.length)
        return SynthSpec(
            n=args.length,
            period=args.period,
            waveform=args.waveform,
            trend=trend,
            noise_sigma=args.noise,
            outlier_ratio=args.outlier_ratio,
            missing_ratio=args.mr,
            missing_mode=args.missing_mode,
            block_count=args.blocks,
            seed=args.seed,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_synth(args) -> int:
    spec = _synth_spec(args)
    if args.show_config:
        return _show("synth", asdict(spec))
    try:
        s, period = generate(spec)
    except SpecError as exc:
        raise ConfigError(str(exc)) from None
    fmt = args.format
    if args.out and Path(args.out).suffix.lower() == ".csv" and fmt != "json":
        save_csv(s, args.out)
        print(f"wrote {args.out} (period {period})", file=sys.stderr)
        return EXIT_OK
    if fmt == "json":
        payload = {**s.to_dict(), "period": period, "spec": asdict(spec)}
        _emit(json.dumps(payload, sort_keys=True), args.out)
    else:
        # NaN rather than a blank row, so trailing gaps survive a reload
        rows = ["NaN" if not m else repr(float(v)) for v, m in zip(s.values, s.mask)]
        _emit("value\n" + "\n".join(rows), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    unknown = [a for a in algorithms if a not in (*ALGORITHMS, "proposed_fast")]
    if unknown or not algorithms:
        raise ConfigError(f"unknown algorithms: {', '.join(unknown) or '(none given)'}")
    if args.trials < 1:
        raise ConfigError("trials must be at least 1")
    grid = [(mr, o) for mr in args.mr for o in args.outlier_ratio]
    for mr, o in grid:
        if not (0 <= mr < 0.5 and 0 <= o < 0.5):
            raise ConfigError(f"ratios must lie in [0, 0.5), got MR={mr}, OR={o}")
    cfg = _detect_config(args)
    if args.show_config:
        return _show("bench", {"detect": asdict(cfg), "grid": grid, "trials": args.trials,
                               "algorithms": algorithms, "seed": args.seed})

    def progress(done: int, total: int) -> None:
        print(f"trial {done}/{total}", file=sys.stderr)

    report = run_benchmark(grid=grid, trials=args.trials, algorithms=algorithms,
                           base_seed=args.seed, cfg=cfg, progress=progress)
    if args.format == "json":
        _emit(report.to_json(include_runtime=args.timing), args.out)
    else:
        _emit(report.to_table(include_runtime=args.timing), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perioscope", description="Robust dominant-period detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, fmt_default: str = "json") -> None:
        p.add_argument("--out", default=None, help="write output to this file instead of stdout")
        p.add_argument("--format", choices=("json", "text"), default=fmt_default)
        p.add_argument("--show-config", action="store_true", help="print the resolved configuration and exit")

    p = sub.add_parser("detect", help="detect the dominant period of one series")
    p.add_argument("input", help="CSV (one value per row, blanks missing) or JSON file")
    _add_detect_flags(p)
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("batch", help="run detect on every .csv/.json file in a directory")
    p.add_argument("directory")
    _add_detect_flags(p)
    common(p)
    p.set_defaults(func=cmd_batch)

    sd = DEFAULTS["synth"]
    p = sub.add_parser("synth", help="generate a corrupted synthetic series")
    p.add_argument("--length", type=int, default=sd["length"])
    p.add_argument("--period", type=int, default=sd["period"])
    p.add_argument("--waveform", choices=WAVEFORMS, default=sd["waveform"])
    p.add_argument("--trend", choices=("none", "linear", "piecewise"), default=sd["trend"])
    p.add_argument("--slope", type=float, default=sd["slope"], help="trend slope per sample")
    p.add_argument("--jump", type=float, default=sd["jump"], help="level shift of a piecewise trend")
    p.add_argument("--change-point", type=int, default=None, help="piecewise change point (default N/2)")
    p.add_argument("--noise", type=float, default=sd["noise"], help="Gaussian noise sigma")
    p.add_argument("--mr", type=float, default=sd["mr"], help="missing ratio")
    p.add_argument("--or", dest="outlier_ratio", type=float, default=sd["or"], help="outlier ratio")
    p.add_argument("--missing-mode", choices=MISSING_MODES, default=sd["missing_mode"])
    p.add_argument("--blocks", type=int, default=sd["blocks"], help="block count for multi_block")
    p.add_argument("--seed", type=int, default=sd["seed"])
    common(p, fmt_default="text")
    p.set_defaults(func=cmd_synth)

    bd = DEFAULTS["bench"]
    p = sub.add_parser("bench", help="precision sweep over (MR, OR) cells")
    p.add_argument("--trials", type=int, default=bd["trials"])
    p.add_argument("--mr", type=_float_list, default=bd["mr"], help="comma-separated missing ratios")
    p.add_argument("--or", dest="outlier_ratio", type=_float_list, default=bd["or"],
                   help="comma-separated outlier ratios")
    p.add_argument("--algorithms", default=",".join(bd["algorithms"]),
                   help=f"comma-separated subset of {', '.join((*ALGORITHMS, 'proposed_fast'))}")
    p.add_argument("--seed", type=int, default=bd["seed"])
    p.add_argument("--timing", action="store_true", help="include mean runtimes (output no longer byte-stable)")
    _add_detect_flags(p)
    common(p, fmt_default="text")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"perioscope: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SeriesError, OSError) as exc:
        print(f"perioscope: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
