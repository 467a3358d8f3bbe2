"""CSV tables with '#' provenance headers and fixed column orders."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from app import __version__
from app.domain.models import VARIANCE_PAIRS, ModePopulations, PopulationScan, RobustnessRow, SweepResult, pair_key
from app.utils.hashing import short_token

SCAN_COLUMNS = (
    "model",
    "t_fwm_s",
    "nt_chi_t",
    "N_aL",
    "N_bL",
    "N_aR",
    "N_bR",
    *(f"v_{pair_key(pair)}" for pair in VARIANCE_PAIRS),
    "se_v_aR_bL",
    "N_undepleted",
    "v_undepleted",
)
DENSITY_COLUMNS = ("t_fwm_s", "x_m", "n_a", "n_b")
INTERFERE_COLUMNS = ("phi2", "mean_S", "var_S_over_Nt", "delta_phi_sqrtNt", "N_aL", "N_bL", "N_aR", "N_bR")
ROBUSTNESS_COLUMNS = ("scheme", "N_bar", "epsilon", "min_delta_phi_sqrtNt", "frozen_delta_phi_sqrtNt", "N_t")


def _cell(value: Any) -> str:
    if isinstance(value, str):
        return value
    number = float(value)
    if math.isnan(number):
        return "nan"
    if math.isinf(number):
        return "inf" if number > 0 else "-inf"
    return repr(number)


def write_table(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    config_hash: bytes,
    seed: int,
    command: str,
) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"# config_hash: {config_hash.hex()}\n")
        handle.write(f"# seed: {seed}\n")
        handle.write(f"# version: {__version__}\n")
        handle.write(f"# command: {command}\n")
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
            writer.writerow([_cell(value) for value in row])
    return out


def read_table(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Return (header fields, rows) of a table written by :func:`write_table`."""
    header: dict[str, str] = {}
    body: list[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
        elif line:
            body.append(line)
    return header, list(csv.DictReader(body))


def scan_rows(scan: PopulationScan) -> list[list[Any]]:
    """Populations are clamped for display only; variances use the raw estimates."""
    rows = []
    for index, t in enumerate(scan.t_values):
        rows.append(
            [
                scan.model,
                t,
                scan.nt_chi_t[index],
                *ModePopulations.from_array(scan.populations[index]).clamped().as_tuple(),
                *(scan.v[pair_key(pair)][index] for pair in VARIANCE_PAIRS),
                scan.v_se["aR_bL"][index],
                scan.N_undepleted[index],
                scan.v_undepleted[index],
            ]
        )
    return rows


def density_rows(densities: dict[float, np.ndarray], x: np.ndarray) -> list[list[Any]]:
    rows = []
    for t, profile in sorted(densities.items()):
        rows.extend([t, xi, na, nb] for xi, na, nb in zip(x, profile[0], profile[1]))
    return rows


def sweep_rows(sweep: SweepResult) -> list[list[Any]]:
    rows = []
    scaled = sweep.delta_phi_sqrt_nt
    for index, (phi, record) in enumerate(zip(sweep.phi2_values, sweep.population_records())):
        rows.append(
            [
                phi,
                sweep.mean_S[index],
                sweep.var_S[index] / sweep.N_t,
                scaled[index],
                *record.clamped().as_tuple(),
            ]
        )
    return rows


def robustness_rows(rows: Iterable[RobustnessRow]) -> list[list[Any]]:
    return [
        [row.scheme, row.N_bar, row.epsilon, row.min_delta_phi_sqrt_nt, row.frozen_delta_phi_sqrt_nt, row.N_t]
        for row in rows
    ]


def table_name(command: str, config_hash: bytes, suffix: str = "") -> str:
    tail = f"_{suffix}" if suffix else ""
    return f"{command}{tail}_{short_token(config_hash)}.csv"
