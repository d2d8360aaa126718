"""Scenario and report serialization.

Scenario JSON schema (indices are 1-based in files, matching the reports)::

    {
      "T0": 8, "L": 3, "T": 4, "C": 5.0, "gamma": 30.0, "p0": 1.0,
      "alpha": [[...L columns...] x T0 rows]  |  "alpha.csv",
      "user_types": [
        {
          "utility": {"kind": "log" | "linear", "param": 1.0},
          "delta": 0.6,
          "x_ini": [[...]] | "usage.csv",
          "beta": [{"t": 1, "l": 1, "t_next": 2, "l_next": 3, "prob": 0.25}, ...]
        }
      ]
    }

Matrices given as strings are loaded from CSV files resolved relative to the
scenario file, rows = time slots and columns = locations.  Omitted ``beta``
entries default to zero; rows that are entirely omitted are only legal for
origins without demand.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import GeneralConcave, Linear, Logarithmic, Scenario, UserType, normalize_scenario
from .objective import SolveReport


def _load_matrix(value, T0: int, L: int, base: Path | None, field: str) -> np.ndarray:
    if isinstance(value, str):
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        with open(path, newline="") as fh:
            rows = [[float(cell) for cell in row] for row in csv.reader(fh) if row]
        arr = np.asarray(rows, dtype=float)
    else:
        arr = np.asarray(value, dtype=float)
    if arr.shape != (T0, L):
        raise ValueError(f"{field}: expected {T0}x{L} matrix, got {arr.shape}")
    return arr


def _utility_from_dict(d: dict):
    kind = d.get("kind")
    param = float(d.get("param", 0.0))
    if kind in ("log", "logarithmic"):
        return Logarithmic(k=param)
    if kind == "linear":
        return Linear(rho=param)
    raise ValueError(f"unsupported utility kind {kind!r} in scenario file")


def scenario_from_dict(data: dict, base: Path | None = None) -> Scenario:
    T0 = int(data["T0"])
    L = int(data["L"])
    alpha = _load_matrix(data["alpha"], T0, L, base, "alpha")
    types = []
    for i, td in enumerate(data.get("user_types", [])):
        x_ini = _load_matrix(td["x_ini"], T0, L, base, f"user_types[{i}].x_ini")
        beta = np.zeros((T0, L, T0, L))
        for entry in td.get("beta", []):
            t = int(entry["t"]) - 1
            l = int(entry["l"]) - 1
            t2 = int(entry["t_next"]) - 1
            l2 = int(entry["l_next"]) - 1
            beta[t, l, t2, l2] = float(entry["prob"])
        types.append(
            UserType(
                utility=_utility_from_dict(td["utility"]),
                delta=float(td["delta"]),
                beta=beta,
                x_ini=x_ini,
            )
        )
    scenario = Scenario(
        T0=T0,
        L=L,
        T=int(data["T"]),
        capacity=float(data["C"]),
        gamma=float(data["gamma"]),
        p0=float(data["p0"]),
        alpha=alpha,
        user_types=types,
    )
    return normalize_scenario(scenario)


def load_scenario(path) -> Scenario:
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    return scenario_from_dict(data, base=path.parent)


def scenario_to_dict(s: Scenario) -> dict:
    types = []
    for ut in s.user_types:
        util = ut.utility
        if isinstance(util, Logarithmic):
            util_d = {"kind": "log", "param": util.k}
        elif isinstance(util, Linear):
            util_d = {"kind": "linear", "param": util.rho}
        elif isinstance(util, GeneralConcave):
            raise ValueError("general-concave utilities (callables) cannot be serialized")
        beta_entries = []
        beta = np.asarray(ut.beta)
        for t, l, t2, l2 in np.argwhere(beta > 0.0):
            beta_entries.append(
                {
                    "t": int(t) + 1,
                    "l": int(l) + 1,
                    "t_next": int(t2) + 1,
                    "l_next": int(l2) + 1,
                    "prob": float(beta[t, l, t2, l2]),
                }
            )
        types.append(
            {
                "utility": util_d,
                "delta": ut.delta,
                "x_ini": np.asarray(ut.x_ini).tolist(),
                "beta": beta_entries,
            }
        )
    return {
        "T0": s.T0,
        "L": s.L,
        "T": s.T,
        "C": s.capacity,
        "gamma": s.gamma,
        "p0": s.p0,
        "alpha": np.asarray(s.alpha).tolist(),
        "user_types": types,
    }


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=1)
        fh.write("\n")


def write_report(report: SolveReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, default=float)
        fh.write("\n")


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_load_csv(matrix: np.ndarray, path) -> None:
    """Write a slots-by-locations matrix as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(matrix, dtype=float):
            writer.writerow([f"{v:.12g}" for v in row])
