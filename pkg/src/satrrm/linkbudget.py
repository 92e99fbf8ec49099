"""Forward-link budget for a multibeam GEO payload.

The chain is EIRP -> CNR -> CINR (with co-channel interference) -> spectral
efficiency -> offered capacity. The payload can only be configured to one of a
small catalog of (bandwidth, power) options per beam; the shipped catalog is
read from ``data/payload_catalog.csv``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

BOLTZMANN_DB = 10.0 * math.log10(1.380649e-23)  # dBW/(K*Hz), about -228.599

CATALOG_HEADER = ["index", "bw_hz", "p_dbw", "eirp_dbw", "cinr_db", "se", "capacity_bps"]


class CatalogValidationError(ValueError):
    """Raised when a payload option catalog fails its consistency checks."""

    def __init__(self, message: str, report: "CatalogReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class LinkParams:
    """Scenario-wide link parameters.

    ``path_attenuation_a`` lumps free-space loss and clear-sky losses into one
    number. ``default_cir`` is the effective carrier-to-interference ratio seen
    by every beam; ``math.inf`` disables interference.
    """

    center_frequency: float = 19e9
    satellite_altitude: float = 35_786e3
    merit_figure_g_over_t: float = 17.0
    path_attenuation_a: float = 207.0370  # fitted to the shipped catalog
    boltzmann_db: float = BOLTZMANN_DB
    default_cir: float = 24.9989

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise ValueError("center_frequency must be positive")
        if self.satellite_altitude <= 0:
            raise ValueError("satellite_altitude must be positive")
        if abs(self.boltzmann_db - BOLTZMANN_DB) > 1e-3:
            raise ValueError(f"boltzmann_db must be {BOLTZMANN_DB:.3f} dBW/(K*Hz)")


@dataclass(frozen=True)
class PayloadOption:
    index: int
    bandwidth: float  # Hz
    power: float  # dBW
    eirp_3db: float  # dBW
    cinr: float  # dB
    spectral_efficiency: float  # bps/Hz
    offered_capacity: float  # bps

    @property
    def power_w(self) -> float:
        return float(db_to_linear(self.power))


@dataclass(frozen=True)
class ModcodTable:
    """Piecewise-constant CINR -> spectral efficiency map."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        thresholds = [t for t, _ in self.entries]
        efficiencies = [s for _, s in self.entries]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("modcod thresholds must be strictly increasing")
        if any(b < a for a, b in zip(efficiencies, efficiencies[1:])):
            raise ValueError("modcod spectral efficiencies must be non-decreasing")

    @classmethod
    def from_catalog(cls, options: Iterable[PayloadOption]) -> "ModcodTable":
        pairs = sorted({(o.cinr, o.spectral_efficiency) for o in options})
        return cls(tuple(pairs))


@dataclass
class CatalogReport:
    residuals: list[float]
    failures: list[str] = field(default_factory=list)
    failed_rows: set[int] = field(default_factory=set)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0


def db_to_linear(x):
    return np.power(10.0, np.divide(x, 10.0))


def cnr_db(eirp_3db: float, params: LinkParams, bandwidth: float) -> float:
    """Carrier-to-noise ratio in dB for a beam radiating ``eirp_3db`` dBW."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth!r}")
    return (
        eirp_3db
        + params.merit_figure_g_over_t
        - params.path_attenuation_a
        - params.boltzmann_db
        - 10.0 * math.log10(bandwidth)
    )


def combine_cinr(cir: float, cnr: float) -> float:
    """Combine CIR and CNR (both dB) into CINR in dB.

    Either argument may be ``inf`` to mean that impairment is absent.
    """
    if math.isinf(cir) and cir > 0:
        return float(cnr)
    if math.isinf(cnr) and cnr > 0:
        return float(cir)
    return -10.0 * math.log10(10.0 ** (-cir / 10.0) + 10.0 ** (-cnr / 10.0))


def se_from_cinr(cinr: float, table: ModcodTable, tolerance_db: float = 0.0) -> float:
    """Spectral efficiency of the highest threshold at or below ``cinr``.

    Returns 0 (outage) below the lowest threshold. ``tolerance_db`` lets a
    computed CINR that lands a hair under a threshold still select it.
    """
    if not table.entries:
        raise ValueError("modcod table is empty")
    se = 0.0
    for threshold, eff in table.entries:
        if threshold <= cinr + tolerance_db:
            se = eff
        else:
            break
    return se


def offered_capacity(bandwidth: float, se: float) -> float:
    return bandwidth * se


def validate_catalog(options: Sequence[PayloadOption], rtol: float = 1e-4) -> CatalogReport:
    """Check a catalog for internal consistency.

    Checks, per row, that capacity equals bandwidth times spectral efficiency
    (relative residual below ``rtol``); that capacity is non-decreasing in
    power at fixed bandwidth and in bandwidth at fixed power; and that
    spectral efficiency is non-decreasing in CINR across rows.

    Raises:
        CatalogValidationError: with the full report attached, listing the
            offending rows.
    """
    if len(options) != 9:
        raise ValueError(f"expected 9 payload options, got {len(options)}")
    report = CatalogReport(residuals=[])
    for o in options:
        res = abs(o.offered_capacity - o.bandwidth * o.spectral_efficiency) / abs(o.offered_capacity)
        report.residuals.append(res)
        if not res < rtol:
            report.failures.append(f"row {o.index}: capacity residual {res:.3g} >= {rtol:g}")
            report.failed_rows.add(o.index)

    def _monotone(group_key, order_key, what):
        groups: dict[float, list[PayloadOption]] = {}
        for o in options:
            groups.setdefault(group_key(o), []).append(o)
        for members in groups.values():
            members = sorted(members, key=order_key)
            for lo, hi in zip(members, members[1:]):
                if hi.offered_capacity < lo.offered_capacity:
                    report.failures.append(
                        f"rows {lo.index}->{hi.index}: capacity decreases with {what}"
                    )
                    report.failed_rows.update((lo.index, hi.index))

    _monotone(lambda o: o.bandwidth, lambda o: o.power, "power")
    _monotone(lambda o: o.power, lambda o: o.bandwidth, "bandwidth")

    by_cinr = sorted(options, key=lambda o: o.cinr)
    for lo, hi in zip(by_cinr, by_cinr[1:]):
        if hi.spectral_efficiency < lo.spectral_efficiency:
            report.failures.append(
                f"rows {lo.index}->{hi.index}: spectral efficiency decreases with CINR"
            )
            report.failed_rows.update((lo.index, hi.index))

    if report.failures:
        raise CatalogValidationError("; ".join(report.failures), report)
    return report


def load_catalog(path: str | Path | None = None) -> list[PayloadOption]:
    """Read a catalog CSV; defaults to the shipped nine-option table."""
    if path is None:
        text = resources.files("satrrm.data").joinpath("payload_catalog.csv").read_text()
    else:
        text = Path(path).read_text()
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames != CATALOG_HEADER:
        raise ValueError(f"catalog header must be {','.join(CATALOG_HEADER)}")
    options = [
        PayloadOption(
            index=int(row["index"]),
            bandwidth=float(row["bw_hz"]),
            power=float(row["p_dbw"]),
            eirp_3db=float(row["eirp_dbw"]),
            cinr=float(row["cinr_db"]),
            spectral_efficiency=float(row["se"]),
            offered_capacity=float(row["capacity_bps"]),
        )
        for row in reader
    ]
    return sorted(options, key=lambda o: o.index)


def calibrate_link(
    options: Sequence[PayloadOption], base: LinkParams | None = None
) -> LinkParams:
    """Least-squares fit of (path attenuation, CIR) to the catalog's CINR column.

    The catalog's EIRP values are taken as given; only the aggregate
    attenuation and a single effective interference level are fitted.
    """
    base = base or LinkParams()
    eirp = np.array([o.eirp_3db for o in options])
    bw = np.array([o.bandwidth for o in options])
    target = np.array([o.cinr for o in options])

    def residual(p):
        atten, cir = p
        cnr = eirp + base.merit_figure_g_over_t - atten - base.boltzmann_db - 10 * np.log10(bw)
        return -10 * np.log10(10 ** (-cir / 10) + 10 ** (-cnr / 10)) - target

    fit = least_squares(residual, x0=[200.0, 20.0], xtol=1e-14, ftol=1e-14, gtol=1e-14)
    atten, cir = fit.x
    return replace(base, path_attenuation_a=float(atten), default_cir=float(cir))


def link_cinr(option: PayloadOption, params: LinkParams) -> float:
    """CINR of ``option`` predicted by the analytic chain."""
    return combine_cinr(params.default_cir, cnr_db(option.eirp_3db, params, option.bandwidth))


def build_catalog(
    options: Sequence[PayloadOption],
    params: LinkParams,
    table: ModcodTable,
    tolerance_db: float = 1e-3,
) -> list[PayloadOption]:
    """Recompute CINR, SE and capacity for each option through the link chain.

    Bandwidth, power and EIRP come from ``options``; everything downstream is
    recomputed.
    """
    out = []
    for o in options:
        cinr = link_cinr(o, params)
        se = se_from_cinr(cinr, table, tolerance_db=tolerance_db)
        out.append(
            replace(o, cinr=cinr, spectral_efficiency=se, offered_capacity=offered_capacity(o.bandwidth, se))
        )
    return out
