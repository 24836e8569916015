"""CSV and JSON readers/writers for every file interface of the toolkit.

Readers give line-numbered diagnostics on malformed rows; writers format
floats with ``repr`` so outputs are byte-stable and round-trip exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

from .data import EnsemblePrecipForecast
from .errors import InputError
from .series import DailySeries, InflowSeries
from .telemetry import (
    CompensationSchedule,
    GridTable,
    StorageCurve,
    TelemetrySeries,
)
from .verification import NaoIndex


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _require(path: Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise InputError(f"required input file is missing: {path}")
    return path


def _rows(path: Path, required: tuple[str, ...]):
    """Yield (lineno, dict) rows of a CSV; validates the header up front."""
    path = _require(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing required columns {missing} (header: {header})")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _parse(path: Path, lineno: int, row: dict, column: str, conv):
    raw = row.get(column)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise InputError(f"{path}:{lineno}: bad value {raw!r} in column {column!r}") from None


def _to_date(raw: str) -> np.datetime64:
    return np.datetime64(dt.date.fromisoformat(raw.strip()), "D")


def _to_timestamp(raw: str) -> np.datetime64:
    s = raw.strip()
    if s.endswith("Z"):
        s = s[:-1]
    return np.datetime64(dt.datetime.fromisoformat(s), "s")


# ---------------------------------------------------------------------------
# telemetry and curves
# ---------------------------------------------------------------------------


def read_telemetry_csv(path) -> TelemetrySeries:
    """`timestamp,water_level_m,power_w` with ISO-8601 UTC timestamps."""
    ts, level, power = [], [], []
    for lineno, row in _rows(Path(path), ("timestamp", "water_level_m", "power_w")):
        ts.append(_parse(path, lineno, row, "timestamp", _to_timestamp))
        level.append(_parse(path, lineno, row, "water_level_m", float))
        power.append(_parse(path, lineno, row, "power_w", float))
    if not ts:
        raise InputError(f"{path}: no telemetry rows")
    return TelemetrySeries(np.array(ts, dtype="datetime64[s]"), level, power)


def write_telemetry_csv(path, telemetry: TelemetrySeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "water_level_m", "power_w"])
        for t, l, p in zip(telemetry.timestamps, telemetry.water_level, telemetry.power):
            w.writerow([f"{t}Z", _fmt(l), _fmt(p)])


def read_grid_table_csv(path) -> GridTable:
    """Rectangular grid: header `power_w,<level>,...`, one row per power value."""
    path = _require(Path(path))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty grid file") from None
        try:
            levels = [float(c) for c in header[1:]]
        except ValueError:
            raise InputError(f"{path}:1: level axis header must be numeric") from None
        powers, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                powers.append(float(row[0]))
                values.append([float(c) for c in row[1:]])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric grid entry") from None
            if len(values[-1]) != len(levels):
                raise InputError(f"{path}:{lineno}: expected {len(levels)} grid columns")
    return GridTable(np.array(powers), np.array(levels), np.array(values))


def write_grid_table_csv(path, table: GridTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["power_w"] + [_fmt(l) for l in table.level_axis])
        for p, row in zip(table.power_axis, table.values):
            w.writerow([_fmt(p)] + [_fmt(v) for v in row])


def read_storage_csv(path) -> StorageCurve:
    """`level_m,volume_m3`, strictly increasing."""
    levels, volumes = [], []
    for lineno, row in _rows(Path(path), ("level_m", "volume_m3")):
        levels.append(_parse(path, lineno, row, "level_m", float))
        volumes.append(_parse(path, lineno, row, "volume_m3", float))
    return StorageCurve(np.array(levels), np.array(volumes))


def write_storage_csv(path, curve: StorageCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level_m", "volume_m3"])
        for l, v in zip(curve.level_axis, curve.volume):
            w.writerow([_fmt(l), _fmt(v)])


def read_compensation_csv(path) -> CompensationSchedule:
    """`start_date,end_date,flow_m3s`, non-overlapping date ranges."""
    starts, ends, rates = [], [], []
    for lineno, row in _rows(Path(path), ("start_date", "end_date", "flow_m3s")):
        starts.append(_parse(path, lineno, row, "start_date", _to_date))
        ends.append(_parse(path, lineno, row, "end_date", _to_date))
        rates.append(_parse(path, lineno, row, "flow_m3s", float))
    if not starts:
        raise InputError(f"{path}: no compensation rows")
    return CompensationSchedule(np.array(starts), np.array(ends), rates)


def write_compensation_csv(path, schedule: CompensationSchedule) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start_date", "end_date", "flow_m3s"])
        for s, e, r in zip(schedule.starts, schedule.ends, schedule.rates):
            w.writerow([str(s), str(e), _fmt(r)])


# ---------------------------------------------------------------------------
# daily series
# ---------------------------------------------------------------------------


def read_daily_series_csv(path, value_column: str, date_column: str = "date") -> DailySeries:
    dates, values = [], []
    for lineno, row in _rows(Path(path), (date_column, value_column)):
        dates.append(_parse(path, lineno, row, date_column, _to_date))
        values.append(_parse(path, lineno, row, value_column, float))
    if not dates:
        raise InputError(f"{path}: no rows")
    return DailySeries(np.array(dates, dtype="datetime64[D]"), values)


def read_inflow_csv(path, sidecar=None) -> InflowSeries:
    """`date,inflow_norm`; the JSON sidecar restores the normalisation constant."""
    base = read_daily_series_csv(path, "inflow_norm")
    norm = 1.0
    window = "daily"
    if sidecar is not None and Path(sidecar).exists():
        with open(sidecar) as fh:
            meta = json.load(fh)
        norm = float(meta.get("normalization_constant", 1.0))
        window = meta.get("window", "daily")
    return InflowSeries(base.dates, base.values, normalization_constant=norm, window=window)


def write_inflow_csv(path, series: InflowSeries, sidecar=None, cleaning_report: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "inflow_norm"])
        for d, v in zip(series.dates, series.values):
            w.writerow([str(d), _fmt(v)])
    if sidecar is not None:
        meta = {
            "normalization_constant": series.normalization_constant,
            "window": series.window,
            "n_values": int(len(series)),
        }
        if cleaning_report is not None:
            meta["cleaning_report"] = cleaning_report
        write_json(sidecar, meta)


def read_reanalysis_csv(path) -> DailySeries:
    """`date,precip_mm_day`."""
    series = read_daily_series_csv(path, "precip_mm_day")
    if np.any(series.values < 0):
        raise InputError(f"{path}: negative precipitation rates")
    return series


def write_reanalysis_csv(path, series: DailySeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "precip_mm_day"])
        for d, v in zip(series.dates, series.values):
            w.writerow([str(d), _fmt(v)])


def read_nao_csv(path) -> NaoIndex:
    """`year,month,index`."""
    entries = {}
    for lineno, row in _rows(Path(path), ("year", "month", "index")):
        y = _parse(path, lineno, row, "year", int)
        m = _parse(path, lineno, row, "month", int)
        if not 1 <= m <= 12:
            raise InputError(f"{path}:{lineno}: month {m} out of range")
        entries[(y, m)] = _parse(path, lineno, row, "index", float)
    return NaoIndex(entries)


def write_nao_csv(path, nao: NaoIndex) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "month", "index"])
        for (y, m), value in nao.items():
            w.writerow([y, m, _fmt(value)])


# ---------------------------------------------------------------------------
# ensemble forecasts
# ---------------------------------------------------------------------------


def read_ensemble_csv(path, min_lead_days: int = 42) -> list[EnsemblePrecipForecast]:
    """Long-form ensemble file, daily or 6-hourly.

    Daily rows: `issue_date,member,lead_day,precip_mm_day`.  Six-hourly rows
    (`issue_date,member,lead_step_hours,precip_mm`) are summed into daily
    totals, i.e. mm/day rates.  When total precipitation is split into
    `largescale_mm_day` and `convective_mm_day` columns the two are summed.
    """
    path = _require(Path(path))
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    cols = set(header)
    if {"issue_date", "member", "lead_day", "precip_mm_day"} <= cols:
        mode = "daily"
    elif {"issue_date", "member", "lead_day", "largescale_mm_day", "convective_mm_day"} <= cols:
        mode = "split"
    elif {"issue_date", "member", "lead_step_hours", "precip_mm"} <= cols:
        mode = "six_hourly"
    else:
        raise InputError(f"{path}: unrecognised ensemble schema (header: {sorted(cols)})")

    data: dict[np.datetime64, dict[int, dict[int, float]]] = {}
    required = {
        "daily": ("issue_date", "member", "lead_day", "precip_mm_day"),
        "split": ("issue_date", "member", "lead_day", "largescale_mm_day", "convective_mm_day"),
        "six_hourly": ("issue_date", "member", "lead_step_hours", "precip_mm"),
    }[mode]
    for lineno, row in _rows(path, required):
        issue = _parse(path, lineno, row, "issue_date", _to_date)
        member = _parse(path, lineno, row, "member", int)
        if mode == "six_hourly":
            step = _parse(path, lineno, row, "lead_step_hours", int)
            if step <= 0 or step % 6:
                raise InputError(f"{path}:{lineno}: lead_step_hours must be a positive multiple of 6")
            day = (step + 23) // 24
            amount = _parse(path, lineno, row, "precip_mm", float)
        else:
            day = _parse(path, lineno, row, "lead_day", int)
            if mode == "daily":
                amount = _parse(path, lineno, row, "precip_mm_day", float)
            else:
                amount = _parse(path, lineno, row, "largescale_mm_day", float) + _parse(
                    path, lineno, row, "convective_mm_day", float
                )
        if day <= 0:
            raise InputError(f"{path}:{lineno}: lead day must be positive")
        per_day = data.setdefault(issue, {}).setdefault(member, {})
        total, count = per_day.get(day, (0.0, 0))
        per_day[day] = (total + amount, count + 1)

    steps_per_day = 4 if mode == "six_hourly" else 1
    forecasts = []
    for issue in sorted(data):
        members = sorted(data[issue])
        n_days = min(max(d.keys()) for d in data[issue].values())
        if n_days < min_lead_days:
            raise InputError(
                f"{path}: issue {issue} has only {n_days} lead days (need >= {min_lead_days})"
            )
        grid = np.empty((len(members), n_days))
        for i, m in enumerate(members):
            per_day = data[issue][m]
            for d in range(1, n_days + 1):
                if d not in per_day or per_day[d][1] != steps_per_day:
                    raise InputError(
                        f"{path}: issue {issue} member {m} has incomplete data for lead day {d}"
                    )
                grid[i, d - 1] = per_day[d][0]
        forecasts.append(EnsemblePrecipForecast(issue.astype(dt.date), grid))
    if not forecasts:
        raise InputError(f"{path}: no forecast rows")
    return forecasts


def write_ensemble_csv(path, forecasts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["issue_date", "member", "lead_day", "precip_mm_day"])
        for f in forecasts:
            for k in range(f.n_members):
                for d in range(1, f.n_lead_days + 1):
                    w.writerow([f.issue_date.isoformat(), k, d, _fmt(f.members[k, d - 1])])


# ---------------------------------------------------------------------------
# tabular outputs
# ---------------------------------------------------------------------------


def write_table_csv(path, header, rows) -> None:
    """Generic deterministic CSV writer; floats via repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(c) for c in row])


def read_table_csv(path, columns):
    """Read selected columns back; returns list of dicts with raw strings."""
    out = []
    for _, row in _rows(Path(path), tuple(columns)):
        out.append({c: row[c] for c in columns})
    return out


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(_require(Path(path))) as fh:
        return json.load(fh)
