"""File formats: sweep CSV, Touchstone import, fit-result JSON, truth sidecars.

The sweep CSV is the package's interchange format: header ``f_hz,s21_re,s21_im``,
decimal ASCII at 17 significant digits (lossless for doubles), LF line ends.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ValidationError
from .fit import FitResult
from .synth import Sweep

SWEEP_HEADER = "f_hz,s21_re,s21_im"


def write_sweep_csv(path, sweep: Sweep) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for f, z in zip(sweep.f_hz, sweep.s21):
            fh.write(f"{f:.17g},{z.real:.17g},{z.imag:.17g}\n")


def read_sweep_csv(path, grid_kind: str = "SPD") -> Sweep:
    """Read a sweep CSV; malformed rows raise line-numbered errors."""
    f_list, re_list, im_list = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != SWEEP_HEADER:
            raise ValidationError(f"{path}: line 1: expected header {SWEEP_HEADER!r}, "
                                  f"got {header!r}")
        prev_f = None
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"{path}: line {lineno}: expected 3 fields, "
                                      f"got {len(parts)}")
            try:
                f, re_v, im_v = (float(p) for p in parts)
            except ValueError:
                raise ValidationError(f"{path}: line {lineno}: non-numeric field "
                                      f"in {line!r}") from None
            if prev_f is not None and f <= prev_f:
                raise ValidationError(f"{path}: line {lineno}: frequency {f:.17g} "
                                      "is not strictly increasing")
            prev_f = f
            f_list.append(f)
            re_list.append(re_v)
            im_list.append(im_v)
    if not f_list:
        raise ValidationError(f"{path}: no data rows")
    return Sweep(f_hz=np.asarray(f_list),
                 s21=np.asarray(re_list) + 1j * np.asarray(im_list),
                 grid_kind=grid_kind, provenance=f"file:{path}")


_TOUCHSTONE_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


def read_touchstone_s21(path) -> Sweep:
    """Import the S21 column pair of a two-port Touchstone (.s2p) file.

    Supports RI, MA, and DB formats; all other network data is ignored.
    """
    unit_scale = 1e9
    fmt = "ma"
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("!")[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].lower().split()
                for tok in tokens:
                    if tok in _TOUCHSTONE_UNITS:
                        unit_scale = _TOUCHSTONE_UNITS[tok]
                    elif tok in ("ri", "ma", "db"):
                        fmt = tok
                continue
            parts = line.split()
            if len(parts) < 5:
                raise ValidationError(f"{path}: line {lineno}: need at least "
                                      "5 columns for two-port data")
            try:
                values = [float(p) for p in parts[:5]]
            except ValueError:
                raise ValidationError(f"{path}: line {lineno}: non-numeric "
                                      "network data") from None
            rows.append(values)
    if not rows:
        raise ValidationError(f"{path}: no network data found")
    data = np.asarray(rows)
    f = data[:, 0] * unit_scale
    a, b = data[:, 3], data[:, 4]  # S21 column pair
    if fmt == "ri":
        s21 = a + 1j * b
    elif fmt == "ma":
        s21 = a * np.exp(1j * np.deg2rad(b))
    else:  # db
        s21 = 10.0 ** (a / 20.0) * np.exp(1j * np.deg2rad(b))
    order = np.argsort(f)
    return Sweep(f_hz=f[order], s21=s21[order], provenance=f"touchstone:{path}")


def write_fit_json(path, result: FitResult) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")


def read_fit_json(path) -> FitResult:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return FitResult.from_dict(payload)
    except KeyError as exc:
        raise ValidationError(f"{path}: missing fit field {exc}") from exc


def write_truth_json(path, truth: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")


def read_truth_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
