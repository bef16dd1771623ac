"""Logical error rates, per-round conversion, suppression-factor fits and thresholds."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import binomtest

from .errors import InsufficientDataError, NoCrossingError

REPORT_SCHEMA = "planar-report/1"
CSV_COLUMNS = (
    "decoder", "d", "r", "p", "dataset", "shots", "failures",
    "p_l", "eps_l", "p_l_low", "p_l_high", "eps_l_low", "eps_l_high", "seed",
)
METRICS = ("per_round", "per_shot")


def per_round_rate(p_l, rounds: int):
    """Per-round rate ``(1 - (1 - 2 p_L)^(1/r)) / 2``; ``p_L > 0.5`` is clamped with a warning."""
    if rounds <= 0:
        raise ValueError("rounds must be positive")
    p = np.asarray(p_l, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p_L must lie in [0, 1]")
    if np.any(p > 0.5):
        warnings.warn("p_L above 0.5 clamped to 0.5", RuntimeWarning, stacklevel=2)
        p = np.minimum(p, 0.5)
    out = p.copy() if rounds == 1 else 0.5 * (1.0 - (1.0 - 2.0 * p) ** (1.0 / rounds))
    return float(out) if out.ndim == 0 else out


def wilson_interval(failures: int, shots: int, confidence: float = 0.95) -> tuple[float, float]:
    if shots <= 0:
        return 0.0, 1.0
    ci = binomtest(int(failures), int(shots)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ReportRow:
    decoder: str
    d: int
    r: int
    p: float | None
    shots: int
    failures: int
    dataset: str = ""
    seed: int | None = None

    def __post_init__(self):
        if not 0 <= self.failures <= self.shots:
            raise ValueError("failures must lie in [0, shots]")

    @property
    def p_l(self) -> float:
        return self.failures / self.shots if self.shots else 0.0

    @property
    def eps_l(self) -> float:
        return per_round_rate(min(self.p_l, 0.5), self.r)

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.shots)

    @property
    def eps_ci(self) -> tuple[float, float]:
        lo, hi = self.ci
        return per_round_rate(min(lo, 0.5), self.r), per_round_rate(min(hi, 0.5), self.r)

    def metric(self, kind: str = "per_round") -> float:
        if kind not in METRICS:
            raise ValueError(f"unknown metric {kind!r}; expected one of {METRICS}")
        return self.eps_l if kind == "per_round" else self.p_l

    def eps_stderr(self) -> float:
        """Binomial standard error of ``eps_l`` by the delta method."""
        p, n = self.p_l, self.shots
        if n == 0 or p >= 0.5:
            return math.inf
        dp = math.sqrt(p * (1 - p) / n)
        return dp * (1 - 2 * p) ** (1 / self.r - 1) / self.r

    def csv_values(self) -> list:
        lo, hi = self.ci
        elo, ehi = self.eps_ci
        return [
            self.decoder, self.d, self.r, "" if self.p is None else repr(self.p), self.dataset,
            self.shots, self.failures, f"{self.p_l:.9g}", f"{self.eps_l:.9g}",
            f"{lo:.9g}", f"{hi:.9g}", f"{elo:.9g}", f"{ehi:.9g}", "" if self.seed is None else self.seed,
        ]


@dataclass(frozen=True)
class LambdaFit:
    lam: float
    stderr: float
    slope: float
    intercept: float
    distances: tuple[int, ...]
    excluded: tuple[int, ...]


def fit_lambda(rows: Sequence[ReportRow] | Sequence[tuple[int, float, float]]) -> LambdaFit:
    """Weighted least squares of ``log eps_L`` on ``(d + 1) / 2``; ``Lambda = exp(-slope)``.

    Accepts report rows or ``(d, eps_l, stderr)`` triples. Distances with zero
    failures (or zero rate) are excluded and reported. Weights are inverse
    variances of ``log eps_L``; the slope error is scaled by the residuals.
    """
    pts, excluded = [], []
    for row in rows:
        if isinstance(row, ReportRow):
            d, eps, se = row.d, row.eps_l, row.eps_stderr()
        else:
            d, eps, se = row
        if eps <= 0 or not np.isfinite(eps):
            excluded.append(int(d))
            continue
        pts.append((int(d), float(eps), float(se)))
    if len({p[0] for p in pts}) < 3:
        raise InsufficientDataError("fit_lambda needs at least three distances with nonzero failures")
    d = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    rel = np.array([p[2] / p[1] for p in pts])
    w = 1.0 / rel**2 if np.all(rel > 0) and np.all(np.isfinite(rel)) else np.ones(len(pts))
    x = (d + 1) / 2
    xm = np.sum(w * x) / w.sum()
    ym = np.sum(w * y) / w.sum()
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = len(x) - 2
    scale = float(np.sum(w * resid**2) / dof) if dof > 0 else 0.0
    se_slope = math.sqrt(scale / sxx)
    lam = math.exp(-slope)
    return LambdaFit(lam, lam * se_slope, slope, intercept, tuple(int(v) for v in d), tuple(excluded))


@dataclass(frozen=True)
class ThresholdEstimate:
    threshold: float
    low: float
    high: float
    crossings: tuple[tuple[int, int, float], ...]  # (d1, d2, p)
    metric: str = "per_round"

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def _curve(ps: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Monotone non-decreasing fit of ``log`` rates in ``p``."""
    y = np.log(np.maximum(vals, 1e-300))
    return isotonic_regression(y, increasing=True).x


def _crossings(p1, y1, p2, y2) -> list[float]:
    grid = np.union1d(p1, p2)
    grid = grid[(grid >= max(p1[0], p2[0])) & (grid <= min(p1[-1], p2[-1]))]
    if len(grid) < 2:
        return []
    diff = np.interp(grid, p1, y1) - np.interp(grid, p2, y2)
    out = []
    for k in range(len(grid) - 1):
        a, b = diff[k], diff[k + 1]
        if a == 0:
            out.append(float(grid[k]))
        elif a * b < 0:
            out.append(float(grid[k] + (grid[k + 1] - grid[k]) * a / (a - b)))
    if diff[-1] == 0:
        out.append(float(grid[-1]))
    return out


def estimate_threshold(
    rows: Iterable[ReportRow] | dict[int, Sequence[tuple[float, float]]], metric: str = "per_round"
) -> ThresholdEstimate:
    """Crossing of the per-distance error curves.

    Each distance's curve is made monotone in ``p`` and interpolated linearly in
    ``log`` rate. Every pair of distances contributes its crossing points; the
    estimate is their median and the bracket spans their extremes.
    """
    if isinstance(rows, dict):
        curves = {int(d): sorted((float(p), float(v)) for p, v in pts) for d, pts in rows.items()}
    else:
        curves: dict[int, list[tuple[float, float]]] = {}
        for row in rows:
            curves.setdefault(row.d, []).append((float(row.p), row.metric(metric)))
        curves = {d: sorted(v) for d, v in curves.items()}
    if len(curves) < 2 or any(len(v) < 4 for v in curves.values()):
        raise InsufficientDataError("need at least two distances with four p values each")
    fitted = {
        d: (np.array([a for a, _ in v]), _curve(np.array([a for a, _ in v]), np.array([b for _, b in v])))
        for d, v in curves.items()
    }
    found = []
    for d1, d2 in itertools.combinations(sorted(fitted), 2):
        for p in _crossings(*fitted[d1], *fitted[d2]):
            found.append((d1, d2, p))
    if not found:
        raise NoCrossingError("the curves do not cross inside the sampled range")
    ps = np.array([c[2] for c in found])
    return ThresholdEstimate(float(np.median(ps)), float(ps.min()), float(ps.max()), tuple(found), metric)


def _toolchain() -> str:
    from . import __version__

    return f"planar_decoder {__version__}; numpy {np.__version__}"


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    seed: int | None = None
    toolchain: str = field(default_factory=_toolchain)

    def add(self, row: ReportRow) -> None:
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {REPORT_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow(row.csv_values())
        return buf.getvalue()

    def to_json(self) -> str:
        fits = {k: (asdict(v) if hasattr(v, "__dataclass_fields__") else v) for k, v in self.fits.items()}
        body = {"schema": REPORT_SCHEMA, "seed": self.seed, "toolchain": self.toolchain, "fits": fits}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def read_report_csv(text: str) -> list[ReportRow]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {REPORT_SCHEMA}":
        raise ValueError(f"expected a {REPORT_SCHEMA} header line")
    rows = []
    for rec in csv.DictReader(lines[1:]):
        rows.append(
            ReportRow(
                decoder=rec["decoder"],
                d=int(rec["d"]),
                r=int(rec["r"]),
                p=float(rec["p"]) if rec["p"] else None,
                shots=int(rec["shots"]),
                failures=int(rec["failures"]),
                dataset=rec["dataset"],
                seed=int(rec["seed"]) if rec["seed"] else None,
            )
        )
    return rows
