"""Scores and scaling-law fits.

``normalized_score`` maps raw task scores onto a scale where the worst
observed run is 0 and the state of the art is 1, after the ``march_of_9s``
transform. The fitting helpers cover isoFLOP parabolas, the compute-optimal
frontier and Pareto filtering of (latency, loss) points.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import ArchsmithError
from .proxy import Direction


class ZeroTotal(ArchsmithError, ZeroDivisionError):
    pass


class AtOptimum(ArchsmithError, ValueError):
    pass


class DegenerateContext(ArchsmithError, ValueError):
    pass


class DegenerateFit(ArchsmithError, ValueError):
    pass


def vsr(valid_runs: int, total_runs: int) -> float:
    """Valid submission rate."""
    if total_runs <= 0:
        raise ZeroTotal("no runs to rate")
    if not 0 <= valid_runs <= total_runs:
        raise ValueError(f"valid runs {valid_runs} outside [0, {total_runs}]")
    return valid_runs / total_runs


def march_of_9s(s: float, s_opt: float) -> float:
    # decimal arithmetic on the shortest repr keeps 1 - 0.99 at exactly 0.01
    gap = abs(Decimal(repr(float(s))) - Decimal(repr(float(s_opt))))
    if gap == 0:
        raise AtOptimum(f"score {s} equals the optimum; the transform is unbounded there")
    return float(-gap.log10())


@dataclass(frozen=True)
class ScoreContext:
    s_min: float
    s_sota: float
    s_opt: float
    direction: Direction = Direction.MAXIMIZE

    def __post_init__(self) -> None:
        if self.s_min == self.s_opt or self.s_sota == self.s_opt:
            raise DegenerateContext("s_min and s_sota must both differ from s_opt")
        if self.s_min == self.s_sota:
            raise DegenerateContext("s_min equals s_sota")


def normalized_score(s: float, ctx: ScoreContext) -> float:
    """0 at ``ctx.s_min``, 1 at ``ctx.s_sota``; above 1 beats the state of the art."""
    lo = march_of_9s(ctx.s_min, ctx.s_opt)
    hi = march_of_9s(ctx.s_sota, ctx.s_opt)
    if hi == lo:
        raise DegenerateContext("s_min and s_sota are equally far from the optimum")
    return (march_of_9s(s, ctx.s_opt) - lo) / (hi - lo)


def generalization_gap(best: float, submitted: float, direction: Direction = Direction.MAXIMIZE) -> float:
    if not (math.isfinite(best) and math.isfinite(submitted)):
        raise ValueError("scores must be finite")
    return best - submitted if direction is Direction.MAXIMIZE else submitted - best


# -- fits ----------------------------------------------------------------------


@dataclass(frozen=True)
class ParabolaFit:
    a: float
    b: float
    c: float
    residual: float = 0.0

    @property
    def x_min(self) -> float:
        return -self.b / (2 * self.a)

    @property
    def y_min(self) -> float:
        return self.c - self.b * self.b / (4 * self.a)

    def __call__(self, x: float) -> float:
        return self.a * x * x + self.b * x + self.c


def fit_parabola(xs: Sequence[float], ys: Sequence[float]) -> ParabolaFit:
    """Least-squares ``y = a x^2 + b x + c``; needs a > 0 for a minimum."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y):
        raise ValueError("xs and ys differ in length")
    if len(np.unique(x)) < 3:
        raise DegenerateFit("need at least 3 distinct x values")
    # centring keeps the normal equations well conditioned for x near 9
    x0 = float(x.mean())
    design = np.stack([(x - x0) ** 2, x - x0, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    ac, bc, cc = (float(v) for v in coef)
    scale = max(1.0, float(np.abs(y).max()))
    if ac <= 1e-12 * scale:
        raise DegenerateFit(f"fitted curvature {ac:.3g} has no minimum")
    a, b, c = ac, bc - 2 * ac * x0, ac * x0 * x0 - bc * x0 + cc
    resid = float(np.sum((design @ coef - y) ** 2))
    return ParabolaFit(a, b, c, resid)


def fit_isoflop_parabola(points: Iterable[tuple[float, float]]) -> ParabolaFit:
    """Fit loss against ``log10(model size)`` for one compute budget."""
    pts = list(points)
    if any(size <= 0 for size, _ in pts):
        raise ValueError("model sizes must be positive")
    return fit_parabola([math.log10(size) for size, _ in pts], [loss for _, loss in pts])


@dataclass(frozen=True)
class FrontierFit:
    q: float
    m: float
    points: tuple[tuple[float, float], ...] = ()

    def predict(self, budget: float) -> float:
        return 10 ** (self.q * math.log10(budget) + self.m)


def fit_frontier(minima: Iterable[tuple[float, float]]) -> FrontierFit:
    """OLS line ``log10 loss = q log10 C + m`` through per-budget minima."""
    pts = tuple((float(c), float(loss)) for c, loss in minima)
    if len(pts) < 2:
        raise DegenerateFit("need at least two budgets")
    if any(c <= 0 or loss <= 0 for c, loss in pts):
        raise ValueError("budgets and losses must be positive")
    x = np.log10([c for c, _ in pts])
    y = np.log10([loss for _, loss in pts])
    if np.ptp(x) == 0:
        raise DegenerateFit("all budgets are equal")
    xm, ym = x.mean(), y.mean()
    q = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    m = float(ym - q * xm)
    if not (math.isfinite(q) and math.isfinite(m)):
        raise DegenerateFit("non-finite frontier coefficients")
    return FrontierFit(q, m, pts)


def frontier_delta(fit: FrontierFit, baseline: FrontierFit) -> tuple[float, float]:
    """Negative Δq means a steeper (better) frontier than the baseline."""
    return fit.q - baseline.q, fit.m - baseline.m


def frontier_from_sweep(rows: Iterable[tuple[float, float, float]]) -> tuple[FrontierFit, dict[float, ParabolaFit]]:
    """Per-budget parabolas over (budget, size, loss) rows, then the frontier through their minima."""
    by_budget: dict[float, list[tuple[float, float]]] = defaultdict(list)
    for budget, size, loss in rows:
        by_budget[budget].append((size, loss))
    parabolas = {b: fit_isoflop_parabola(pts) for b, pts in sorted(by_budget.items())}
    return fit_frontier((b, p.y_min) for b, p in parabolas.items()), parabolas


# -- Pareto --------------------------------------------------------------------


def dominates(p: tuple[float, float], q: tuple[float, float]) -> bool:
    return p[0] <= q[0] and p[1] <= q[1] and (p[0] < q[0] or p[1] < q[1])


def pareto_frontier(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated points (minimise both), sorted by latency then loss.

    Exact duplicates do not dominate each other, so all copies are kept.
    """
    pts = [(float(a), float(b)) for a, b in points]
    if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in pts):
        raise ValueError("points must be finite")
    out: list[tuple[float, float]] = []
    best = math.inf  # lowest loss among strictly smaller latencies
    i = 0
    pts.sort()
    while i < len(pts):
        j = i
        while j < len(pts) and pts[j][0] == pts[i][0]:
            j += 1
        group_min = pts[i][1]  # sorted, so the first loss in the group is lowest
        if group_min < best:
            out.extend(p for p in pts[i:j] if p[1] == group_min)
            best = group_min
        i = j
    return out


# -- CSV -----------------------------------------------------------------------

SWEEP_HEADER = ("budget_flops", "model_size", "val_loss")
FRONTIER_HEADER = ("q", "m", "dq", "dm")
PARETO_HEADER = ("latency_ms", "val_loss")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _read_csv(path: str | Path, header: Sequence[str]) -> list[tuple[float, ...]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [h for h in header if h not in (reader.fieldnames or [])]
        if missing:
            raise ArchsmithError(f"{path}: missing column(s) {', '.join(missing)}")
        try:
            return [tuple(float(row[h]) for h in header) for row in reader]
        except (TypeError, ValueError) as exc:
            raise ArchsmithError(f"{path}: non-numeric value ({exc})") from None


def read_sweep_csv(path: str | Path) -> list[tuple[float, float, float]]:
    return _read_csv(path, SWEEP_HEADER)  # type: ignore[return-value]


def read_pareto_csv(path: str | Path) -> list[tuple[float, float]]:
    return _read_csv(path, PARETO_HEADER)  # type: ignore[return-value]


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def frontier_csv(fit: FrontierFit, baseline: FrontierFit | None = None) -> str:
    dq, dm = frontier_delta(fit, baseline) if baseline is not None else (0.0, 0.0)
    return _csv_text(FRONTIER_HEADER, [(fit.q, fit.m, dq, dm)])


def pareto_csv(points: Iterable[tuple[float, float]]) -> str:
    return _csv_text(PARETO_HEADER, points)
