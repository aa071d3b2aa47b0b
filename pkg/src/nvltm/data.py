"""Measured/synthesized datasets and their CSV representation.

CSV files carry SI units in the header and full round-trip float
precision, so synthesized output and instrument exports with the same
columns are interchangeable.
"""

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("position_m", "power_W")
SPECTRUM_COLUMNS = ("frequency_Hz", "power_W")
MAP_COLUMNS = ("pump_W", "seed_W", "value")


@dataclass
class ScanTrace:
    positions: np.ndarray
    detected_power: np.ndarray
    channel: str = "transmitted"
    truth: dict = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.detected_power = np.asarray(self.detected_power, dtype=float)
        if self.positions.shape != self.detected_power.shape:
            raise ValueError("positions and detected_power differ in length")
        if self.positions.ndim != 1 or self.positions.size == 0:
            raise ValueError("trace must be a non-empty 1-D sequence")
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")
        if np.any(self.detected_power < 0):
            raise ValueError("detected power must be >= 0")
        if self.channel not in ("transmitted", "reflected"):
            raise ValueError(f"unknown channel {self.channel!r}")

    def __len__(self):
        return self.positions.size


@dataclass
class OdmrSpectrum:
    frequencies: np.ndarray
    power: np.ndarray
    channel: str = "cavity"
    truth: dict = None

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.frequencies.shape != self.power.shape:
            raise ValueError("frequencies and power differ in length")
        if self.channel not in ("cavity", "pl"):
            raise ValueError(f"unknown channel {self.channel!r}")

    def normalized(self):
        return self.power / np.max(self.power)


@dataclass
class PowerMap:
    pump_grid: np.ndarray
    seed_grid: np.ndarray
    values: np.ndarray
    quantity: str = "amplification"
    axis_names: tuple = field(default=("pump_W", "seed_W"))

    def __post_init__(self):
        self.pump_grid = np.atleast_1d(np.asarray(self.pump_grid, dtype=float))
        self.seed_grid = np.atleast_1d(np.asarray(self.seed_grid, dtype=float))
        self.values = np.asarray(self.values, dtype=float).reshape(
            self.pump_grid.size, self.seed_grid.size)

    def argmax(self):
        i, j = np.unravel_index(np.nanargmax(self.values), self.values.shape)
        return self.pump_grid[i], self.seed_grid[j], self.values[i, j]


def _fmt(x):
    return repr(float(x))


def _write_rows(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _read_columns(path, expected):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        missing = [c for c in expected if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}, found {header}")
        idx = [header.index(c) for c in expected]
        rows = [[float(r[i]) for i in idx] for r in reader if r]
    return np.array(rows, dtype=float).reshape(-1, len(expected)).T


def write_trace(path, trace):
    _write_rows(path, TRACE_COLUMNS, zip(trace.positions, trace.detected_power))


def read_trace(path, channel="transmitted", column=TRACE_COLUMNS[1]):
    """Scan trace from ``path``; ``column`` picks the power column of
    multi-trace files."""
    x, y = _read_columns(path, (TRACE_COLUMNS[0], column))
    return ScanTrace(x, y, channel)


def write_spectrum(path, spectrum):
    _write_rows(path, SPECTRUM_COLUMNS, zip(spectrum.frequencies, spectrum.power))


def read_spectrum(path, channel="cavity"):
    f, p = _read_columns(path, SPECTRUM_COLUMNS)
    return OdmrSpectrum(f, p, channel)


def write_map(path, pmap):
    rows = ((p, s, pmap.values[i, j])
            for i, p in enumerate(pmap.pump_grid)
            for j, s in enumerate(pmap.seed_grid))
    _write_rows(path, (*pmap.axis_names, "value"), rows)


def read_map(path, axis_names=("pump_W", "seed_W")):
    a, b, v = _read_columns(path, (*axis_names, "value"))
    pump, seed = np.unique(a), np.unique(b)
    return PowerMap(pump, seed, v.reshape(pump.size, seed.size), axis_names=axis_names)


def write_columns(path, columns):
    """Write a dict of equal-length arrays; keys are the header."""
    names = list(columns)
    _write_rows(path, names, zip(*(np.asarray(columns[n]) for n in names)))


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
