"""Parameter sweeps over threshold, QoS exponent or sensing duration, written as CSV.

Configuration files are plain ``key = value`` lines; ``#`` starts a comment.
See ``cogcap/presets/*.cfg`` for annotated examples and README.md for the
full key list.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import LinkParams, db_to_linear
from .effective_capacity import effective_capacity
from .power_policy import MODES, OPTIMAL
from .queue_sim import SimConfig, validate_effective_capacity
from .sensing import characterize

CSV_COLUMNS = ("swept", "mode", "pf", "pd", "gamma1", "gamma2", "term_busy", "term_idle",
               "term_outage", "effcap_bits_s_hz", "error")
SWEPT = ("threshold", "theta", "sensing_duration")
PRESETS = ("fig2", "fig3", "fig4")


class ConfigError(ValueError):
    """Invalid configuration key or value."""


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str
    grid: tuple[float, ...]
    base: LinkParams
    threshold: float = 1.4
    modes: tuple[str, ...] = (OPTIMAL,)
    output: str | None = None
    series: tuple[float, ...] = ()
    seed: int = 0
    validate_frames: int = 1_000_000

    def series_values(self) -> tuple[float | None, ...]:
        return self.series if self.series else (None,)


# config key -> LinkParams field
_FLOAT_KEYS = {
    "bandwidth_hz": "bandwidth",
    "frame_s": "frame",
    "sensing_s": "sensing",
    "prior_busy": "prior_busy",
    "noise_power": "noise_power",
    "primary_power": "primary_power",
    "fading_mean": "fading_mean",
    "theta": "theta",
    "avg_power_busy_w": "avg_power_busy",
    "avg_power_idle_w": "avg_power_idle",
}
_OTHER_KEYS = {"swept", "grid", "modes", "series", "threshold", "snr1_db", "snr4_db", "out",
               "seed", "validate_frames"}

DEFAULTS = {
    "bandwidth_hz": "1e4",
    "frame_s": "0.1",
    "sensing_s": "0.01",
    "prior_busy": "0.1",
    "noise_power": "1",
    "primary_power": "1",
    "fading_mean": "1",
    "theta": "0.01",
    "snr1_db": "0",
    "snr4_db": "10",
    "threshold": "1.4",
    "swept": "threshold",
    "grid": "linspace(0.5, 3.0, 26)",
    "modes": "optimal",
    "seed": "0",
    "validate_frames": "1000000",
}

_RANGE = re.compile(r"^(linspace|logspace)\(\s*([^,]+),\s*([^,]+),\s*([^,)]+)\)$")


def _float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _values(key: str, text: str) -> tuple[float, ...]:
    m = _RANGE.match(text.strip())
    if m:
        kind, a, b, n = m.groups()
        num = _int(key, n.strip())
        if num < 1:
            raise ConfigError(f"{key}: point count must be >= 1, got {num}")
        fn = np.linspace if kind == "linspace" else np.logspace
        vals = fn(_float(key, a), _float(key, b), num)
        # round away linspace noise so grid values print as typed
        return tuple(float(f"{v:.12g}") for v in vals)
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(_float(key, t) for t in items)


def _read_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FLOAT_KEYS and key not in _OTHER_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_config(text: str) -> SweepSpec:
    """Parse and validate a sweep configuration.

    SNRs may be given in dB (``snr1_db``, ``snr4_db``) or as average powers
    in watts (``avg_power_busy_w``, ``avg_power_idle_w``), not both.
    """
    given = _read_pairs(text)
    for a, b in (("snr1_db", "avg_power_busy_w"), ("snr4_db", "avg_power_idle_w")):
        if a in given and b in given:
            raise ConfigError(f"{a} and {b} are mutually exclusive")
    cfg = dict(DEFAULTS)
    for a, b in (("snr1_db", "avg_power_busy_w"), ("snr4_db", "avg_power_idle_w")):
        if b in given:
            cfg.pop(a)
    cfg.update(given)

    link_kw = {field: _float(key, cfg[key]) for key, field in _FLOAT_KEYS.items() if key in cfg}
    noise = link_kw["noise_power"]
    primary = link_kw["primary_power"]
    bw = link_kw["bandwidth"]
    if "snr1_db" in cfg:
        link_kw["avg_power_busy"] = float(db_to_linear(_float("snr1_db", cfg["snr1_db"]))) * bw * (noise + primary)
    if "snr4_db" in cfg:
        link_kw["avg_power_idle"] = float(db_to_linear(_float("snr4_db", cfg["snr4_db"]))) * bw * noise
    try:
        base = LinkParams(**link_kw)
    except ValueError as exc:
        raise ConfigError(f"link parameters: {exc}") from None

    swept = cfg["swept"].strip()
    if swept not in SWEPT:
        raise ConfigError(f"swept: must be one of {SWEPT}, got {swept!r}")
    grid = _values("grid", cfg["grid"])
    if not grid:
        raise ConfigError("grid: must contain at least one value")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"grid: values must be strictly increasing, got {grid}")

    modes = tuple(m.strip() for m in cfg["modes"].split(",") if m.strip())
    if not modes or any(m not in MODES for m in modes) or len(set(modes)) != len(modes):
        raise ConfigError(f"modes: must be a subset of {MODES}, got {cfg['modes']!r}")

    threshold = _float("threshold", cfg["threshold"])
    if threshold < 0:
        raise ConfigError(f"threshold: must be >= 0, got {threshold}")

    series = _values("series", cfg["series"]) if "series" in cfg else ()
    if series and swept == "sensing_duration":
        raise ConfigError("series: cannot combine a sensing-duration series with swept = sensing_duration")

    if swept == "threshold" and grid[0] < 0:
        raise ConfigError(f"grid: thresholds must be >= 0, got {grid[0]}")
    if swept == "theta" and grid[0] < 0:
        raise ConfigError(f"grid: theta must be >= 0, got {grid[0]}")
    durations = grid if swept == "sensing_duration" else series
    for n in durations:
        if not 0 < n < base.frame:
            key = "grid" if swept == "sensing_duration" else "series"
            raise ConfigError(f"{key}: sensing duration must satisfy 0 < N < T = {base.frame}, got {n}")

    seed = _int("seed", cfg["seed"])
    frames = _int("validate_frames", cfg["validate_frames"])
    if frames < 2:
        raise ConfigError(f"validate_frames: must be >= 2, got {frames}")
    return SweepSpec(swept_parameter=swept, grid=grid, base=base, threshold=threshold,
                     modes=modes, output=cfg.get("out"), series=series, seed=seed,
                     validate_frames=frames)


def load_preset(name: str) -> SweepSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("cogcap").joinpath("presets", f"{name}.cfg").read_text("utf-8")
    return parse_config(text)


@dataclass(frozen=True)
class SweepRow:
    series: float | None
    swept: float
    mode: str
    pf: float = math.nan
    pd: float = math.nan
    gamma1: float | None = None
    gamma2: float | None = None
    term_busy: float = math.nan
    term_idle: float = math.nan
    term_outage: float = math.nan
    effcap: float = math.nan
    error: str = ""


def point_params(spec: SweepSpec, series: float | None, value: float) -> tuple[LinkParams, float]:
    link = spec.base if series is None else dataclasses.replace(spec.base, sensing=series)
    threshold = spec.threshold
    if spec.swept_parameter == "threshold":
        threshold = value
    elif spec.swept_parameter == "theta":
        link = dataclasses.replace(link, theta=value)
    else:
        link = dataclasses.replace(link, sensing=value)
    return link, threshold


def _evaluate(task) -> SweepRow:
    spec, series, value, mode = task
    try:
        link, threshold = point_params(spec, series, value)
        sc = characterize(link.sensing_params(threshold))
        res = effective_capacity(link, sc, mode)
        pp = res.policy
        optimal = pp.mode == OPTIMAL
        return SweepRow(series, value, mode, sc.p_false_alarm, sc.p_detect,
                        pp.gamma1 if optimal else None, pp.gamma2 if optimal else None,
                        res.term_busy, res.term_idle, res.term_outage, res.r_e)
    except (ArithmeticError, ValueError) as exc:
        return SweepRow(series, value, mode, error=f"{type(exc).__name__}: {exc}")


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Evaluate every (series, grid value, mode) point.

    Rows come back ordered by series, then grid value, then mode, however
    many workers evaluate them. Numeric failures land in ``error``.
    """
    tasks = [(spec, s, v, m) for s in spec.series_values() for v in spec.grid for m in spec.modes]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_evaluate, tasks))
    return [_evaluate(t) for t in tasks]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(rows, stream) -> None:
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.swept), r.mode, _fmt(r.pf), _fmt(r.pd), _fmt(r.gamma1),
                         _fmt(r.gamma2), _fmt(r.term_busy), _fmt(r.term_idle),
                         _fmt(r.term_outage), _fmt(r.effcap), r.error])


def read_csv(stream) -> list[dict]:
    """Rows of an emitted CSV with numeric columns parsed back to floats (None if empty)."""
    out = []
    for rec in csv.DictReader(stream):
        row = {}
        for k, v in rec.items():
            if k in ("mode", "error"):
                row[k] = v
            else:
                row[k] = float(v) if v != "" else None
        out.append(row)
    return out


def series_path(out: str, series: float, parameter: str = "N") -> Path:
    path = Path(out)
    return path.with_name(f"{path.stem}_{parameter}{series:g}{path.suffix or '.csv'}")


def _validate(spec: SweepSpec, rows: list[SweepRow], err) -> None:
    for s in spec.series_values():
        candidates = [r for r in rows if r.series == s and not r.error and r.mode in spec.modes]
        if not candidates:
            continue
        best = max(candidates, key=lambda r: r.effcap)
        link, threshold = point_params(spec, s, best.swept)
        if link.theta <= 0:
            print(f"validate: skipped series {s}: theta = 0", file=err)
            continue
        sc = characterize(link.sensing_params(threshold))
        cfg = SimConfig(frames=spec.validate_frames, seed=spec.seed,
                        warmup=min(1000, spec.validate_frames // 10))
        label = f"N={link.sensing:g} {spec.swept_parameter}={best.swept:g} mode={best.mode}"
        print(f"validate: {label}", file=err)
        try:
            report = validate_effective_capacity(link, sc, best.mode, cfg)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            print(f"  error: {exc}", file=err)
            continue
        for line in report.lines():
            print(line, file=err)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cogcap", description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="key = value configuration file")
    src.add_argument("--preset", choices=PRESETS, help="shipped figure configuration")
    ap.add_argument("--out", help="CSV output path (default: config 'out', else stdout)")
    ap.add_argument("--seed", type=int, help="seed for --validate (overrides config)")
    ap.add_argument("--validate", action="store_true",
                    help="cross-check the best point of each series by queue simulation")
    ap.add_argument("--workers", type=int, default=1, help="processes for the sweep")
    return ap


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        if args.preset:
            spec = load_preset(args.preset)
        else:
            spec = parse_config(args.config.read_text(encoding="utf-8"))
    except (ConfigError, OSError) as exc:
        print(f"cogcap: {exc}", file=stderr)
        return 2
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out = args.out or spec.output

    if out is None and len(spec.series_values()) > 1:
        print("cogcap: this sweep has several series; pass --out to write one CSV per series",
              file=stderr)
        return 2

    rows = run_sweep(spec, workers=args.workers)
    if out is None:
        write_csv(rows, stdout)
    elif len(spec.series_values()) > 1:
        for s in spec.series_values():
            path = series_path(out, s)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                write_csv([r for r in rows if r.series == s], fh)
            print(f"wrote {path}", file=stderr)
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
        print(f"wrote {out}", file=stderr)

    if args.validate:
        _validate(spec, rows, stderr)

    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"cogcap: point {r.swept!r} ({r.mode}) failed: {r.error}", file=stderr)
    return 1 if failed else 0


def rows_to_csv_text(rows) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
