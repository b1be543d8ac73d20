"""Pearson correlation and two-sample t-tests with their p-values.

Undefined statistics are ``nan`` throughout; nothing is silently mapped to 0
or 1.  The Student-t tail is computed from the regularized incomplete beta
function (continued fraction, modified Lentz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .extract import FEATURES, FeatureVector

DEFAULT_ALPHA = 0.05

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 20000


def _beta_cf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta ``I_x(a, b)``.

    ``y`` may carry ``1 - x`` computed without cancellation by the caller.
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, y) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper-tail probability ``P(T > t)`` for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isnan(t):
        return math.nan
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    t2 = t * t
    denom = df + t2
    tail = 0.5 * betainc(df / 2.0, 0.5, df / denom, t2 / denom)
    return tail if t > 0 else 1.0 - tail


def _clean_pairs(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError(f"length mismatch: {xa.shape} vs {ya.shape}")
    keep = ~(np.isnan(xa) | np.isnan(ya))
    return xa[keep], ya[keep]


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson coefficient; ``nan`` if n < 3 or either input is constant.

    Rows where either value is ``nan`` are dropped pairwise first.
    """
    xa, ya = _clean_pairs(x, y)
    return _pearson_clean(xa, ya)


def _pearson_clean(xa: np.ndarray, ya: np.ndarray) -> float:
    if xa.size < 3 or xa.min() == xa.max() or ya.min() == ya.max():
        return math.nan
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_p(r: float, n: int) -> float:
    """Two-sided p-value for H0: rho = 0."""
    if n < 3 or math.isnan(r):
        return math.nan
    if abs(r) >= 1.0:
        return 0.0
    if r == 0.0:
        return 1.0
    df = n - 2
    t = r * math.sqrt(df / ((1.0 - r) * (1.0 + r)))
    return min(1.0, 2.0 * student_t_sf(abs(t), df))


@dataclass(frozen=True)
class CorrelationResult:
    feature_a: str
    feature_b: str
    r: float
    p: float
    n: int

    @property
    def defined(self) -> bool:
        return not math.isnan(self.r)


@dataclass(frozen=True)
class CorrelationMatrix:
    features: tuple[str, ...]
    cells: tuple[tuple[CorrelationResult, ...], ...]

    def diagonal(self) -> list[CorrelationResult]:
        return [self.cells[i][i] for i in range(len(self.features))]

    def r_grid(self) -> list[list[float]]:
        return [[c.r for c in row] for row in self.cells]

    def p_grid(self) -> list[list[float]]:
        return [[c.p for c in row] for row in self.cells]


def _aligned_columns(
    table_a: Iterable[FeatureVector], table_b: Iterable[FeatureVector], features: Sequence[str]
) -> tuple[np.ndarray, np.ndarray]:
    b_by_id = {v.record_id: v for v in table_b if not v.degenerate}
    rows_a, rows_b = [], []
    for va in table_a:
        vb = b_by_id.get(va.record_id)
        if vb is None or va.degenerate:
            continue
        rows_a.append([va[f] for f in features])
        rows_b.append([vb[f] for f in features])
    if not rows_a:
        raise ValueError("feature tables share no usable record ids")
    return np.asarray(rows_a, dtype=float), np.asarray(rows_b, dtype=float)


def correlation_matrix(
    table_a: Iterable[FeatureVector],
    table_b: Iterable[FeatureVector],
    features: Sequence[str] = FEATURES,
) -> CorrelationMatrix:
    """Pearson r between every feature of ``table_a`` and every feature of ``table_b``.

    Rows are joined on ``record_id``; degenerate rows on either side are dropped.
    """
    cols_a, cols_b = _aligned_columns(table_a, table_b, features)
    cells = []
    for i, fa in enumerate(features):
        row = []
        for j, fb in enumerate(features):
            xa, ya = _clean_pairs(cols_a[:, i], cols_b[:, j])
            r = _pearson_clean(xa, ya)
            row.append(CorrelationResult(fa, fb, r, pearson_p(r, int(xa.size)), int(xa.size)))
        cells.append(tuple(row))
    return CorrelationMatrix(tuple(features), tuple(cells))


@dataclass(frozen=True)
class TTestResult:
    feature: str
    t: float
    df: float
    p: float
    mean_female: float
    mean_male: float
    n_female: int
    n_male: int
    significant: bool

    @property
    def defined(self) -> bool:
        return not math.isnan(self.t)


def welch_t(
    xs: Sequence[float],
    ys: Sequence[float],
    feature: str = "",
    alpha: float = DEFAULT_ALPHA,
    equal_var: bool = False,
) -> TTestResult:
    """Two-sample t-test of ``mean(xs) - mean(ys)``.

    Welch's unequal-variance form by default; ``equal_var`` switches to the
    pooled Student test.  ``xs`` is reported as the male group and ``ys`` as
    the female group, so a positive t means the male mean is higher.
    Missing values (``nan``) are dropped per sample.
    """
    xa = np.asarray(xs, dtype=float)
    ya = np.asarray(ys, dtype=float)
    xa = xa[~np.isnan(xa)]
    ya = ya[~np.isnan(ya)]
    nx, ny = int(xa.size), int(ya.size)
    mx = float(xa.mean()) if nx else math.nan
    my = float(ya.mean()) if ny else math.nan
    undefined = TTestResult(feature, math.nan, math.nan, math.nan, my, mx, ny, nx, False)
    if nx < 2 or ny < 2:
        return undefined
    vx = float(np.var(xa, ddof=1))
    vy = float(np.var(ya, ddof=1))
    if equal_var:
        pooled = ((nx - 1) * vx + (ny - 1) * vy) / (nx + ny - 2)
        se2 = pooled * (1.0 / nx + 1.0 / ny)
        df = float(nx + ny - 2)
    else:
        qx, qy = vx / nx, vy / ny
        se2 = qx + qy
        # Welch-Satterthwaite on ratios so tiny variances don't underflow
        s = max(qx, qy)
        if s > 0:
            a, b = qx / s, qy / s
            df = (a + b) ** 2 / (a * a / (nx - 1) + b * b / (ny - 1))
        else:
            df = math.nan
    if not se2 > 0:
        # both groups constant: no spread to test against
        return undefined
    t = (mx - my) / math.sqrt(se2)
    p = min(1.0, 2.0 * student_t_sf(abs(t), df))
    return TTestResult(feature, t, df, p, my, mx, ny, nx, p < alpha)


def gender_gap_tests(
    tables: Mapping[str, Iterable[FeatureVector]],
    genders: Mapping[str, str],
    alpha: float = DEFAULT_ALPHA,
    equal_var: bool = False,
    bonferroni: bool = False,
    features: Sequence[str] = FEATURES,
) -> dict[str, list[TTestResult]]:
    """Male-vs-female t-tests per variant and feature.

    ``genders`` maps record_id to a label; only ``Female`` and ``Male``
    records enter the tests.  t is male minus female: negative when the
    female group has the higher mean.
    """
    out: dict[str, list[TTestResult]] = {}
    for variant, table in tables.items():
        female: list[list[float]] = []
        male: list[list[float]] = []
        for v in table:
            if v.degenerate:
                continue
            label = str(getattr(genders.get(v.record_id), "value", genders.get(v.record_id)))
            if label == "Female":
                female.append([v[f] for f in features])
            elif label == "Male":
                male.append([v[f] for f in features])
        fa = np.asarray(female, dtype=float).reshape(-1, len(features))
        ma = np.asarray(male, dtype=float).reshape(-1, len(features))
        results = [
            welch_t(ma[:, i], fa[:, i], feature=f, alpha=alpha, equal_var=equal_var)
            for i, f in enumerate(features)
        ]
        if bonferroni:
            m = sum(1 for r in results if r.defined) or 1
            results = [
                replace(r, significant=r.defined and r.p < alpha / m) for r in results
            ]
        out[variant] = results
    return out
