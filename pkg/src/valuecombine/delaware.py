"""Delaware Block Method valuation and the bundled appraisal-case table."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import EmptyTable, InfeasibleWeights, InvalidParam, InvalidWeights, ValidationError
from .inversion import ImpliedPrecisions, implied_ratios

CASE_SUM_TOL = 0.005
CASE_COLUMNS = ("name", "year", "w_market", "w_asset", "w_earnings")
DATA_DIR_ENV = "VALUECOMBINE_DATA_DIR"


@dataclass(frozen=True)
class CaseRecord:
    name: str
    year: int
    w_market: float
    w_asset: float
    w_earnings: float

    def __post_init__(self):
        _check_block_weights(self.w_market, self.w_asset, self.w_earnings, label=self.name)

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_market, self.w_asset, self.w_earnings)


@dataclass(frozen=True)
class BlockInputs:
    price: float
    net_asset: float
    avg_earnings: float
    cap_factor: float

    def __post_init__(self):
        for name in ("price", "net_asset", "avg_earnings", "cap_factor"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite", field=name)
        if self.cap_factor <= 0:
            raise ValidationError("cap_factor must be > 0", field="cap_factor")


@dataclass(frozen=True)
class CaseStats:
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    n: int


@dataclass(frozen=True)
class CaseSkip:
    """Marker for a case whose weights cannot be inverted."""

    name: str
    reason: str
    limit: str | None = None


def _check_block_weights(w_market, w_asset, w_earnings, label=None):
    where = f" ({label})" if label else ""
    for field, w in zip(("w_market", "w_asset", "w_earnings"), (w_market, w_asset, w_earnings)):
        if not math.isfinite(w) or not 0.0 <= w <= 1.0:
            raise InvalidWeights(f"{field}={w!r} must lie in [0, 1]{where}", field=field)
    total = w_market + w_asset + w_earnings
    if abs(total - 1.0) > CASE_SUM_TOL:
        raise InvalidWeights(f"block weights sum to {total:.4f}, not 1{where}", field="weights")


def block_value(inputs: BlockInputs, weights: CaseRecord | Sequence[float]) -> float:
    """Weighted average of price, net asset value and capitalized earnings."""
    if isinstance(weights, CaseRecord):
        w_market, w_asset, w_earnings = weights.weights
    else:
        w_market, w_asset, w_earnings = (float(w) for w in weights)
        _check_block_weights(w_market, w_asset, w_earnings)
    return (
        w_market * inputs.price
        + w_asset * inputs.net_asset
        + w_earnings * inputs.cap_factor * inputs.avg_earnings
    )


def _parse_cases(handle: Iterable[str], source: str) -> list[CaseRecord]:
    reader = csv.DictReader(handle)
    missing = [c for c in CASE_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"{source}: missing columns {missing}", field="header")
    cases = []
    for lineno, row in enumerate(reader, start=2):
        try:
            cases.append(
                CaseRecord(
                    name=row["name"],
                    year=int(row["year"]),
                    w_market=float(row["w_market"]),
                    w_asset=float(row["w_asset"]),
                    w_earnings=float(row["w_earnings"]),
                )
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{source}:{lineno}: {exc}", field="row") from exc
    return cases


def load_cases(path: str | os.PathLike | None = None) -> list[CaseRecord]:
    """Read a case CSV; with no path, the bundled appraisal table."""
    if path is None:
        text = resources.files("valuecombine").joinpath("data/table1.csv").read_text("utf-8")
        return _parse_cases(io.StringIO(text), "table1.csv")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return _parse_cases(fh, str(path))


def case_table_stats(cases: Sequence[CaseRecord]) -> CaseStats:
    """Column means and sample (n - 1) standard deviations of the weights."""
    if len(cases) == 0:
        raise EmptyTable("no cases", field="cases")
    table = np.array([c.weights for c in cases], dtype=float)
    mean = table.mean(axis=0)
    std = table.std(axis=0, ddof=1) if len(cases) > 1 else np.zeros(3)
    return CaseStats(tuple(mean.tolist()), tuple(std.tolist()), len(cases))


def case_implied_precisions(case: CaseRecord, rho: float) -> ImpliedPrecisions | CaseSkip:
    if not -1.0 < rho < 1.0:
        raise InvalidParam(f"rho={rho!r} must lie strictly inside (-1, 1)", field="rho")
    # net asset value plays the intrinsic leg, capitalized earnings the comparables leg
    try:
        return implied_ratios(case.w_asset, case.w_earnings, rho)
    except InfeasibleWeights as exc:
        return CaseSkip(case.name, str(exc), exc.limit)
