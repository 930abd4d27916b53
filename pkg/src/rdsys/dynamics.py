"""Path simulation, ergodic averages, and empirical convergence rates.

Trace positions stay exact rationals until their denominators exceed a
bit cap, then continue in float64; probabilities and edge draws remain
exact throughout (cell lookup compares positions against exact
breakpoints, which Python evaluates exactly even for floats). Test
functions are restricted to polynomials and interval indicators with
rational data so averages over exact prefixes stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from . import sampling
from .model import (DegenerateCellOnly, EmptySamples, EmptyTrace, Interval,
                    Point, PointLike, RdsError, SystemSpec, as_point,
                    format_rational, parse_rational)

DENOMINATOR_BIT_CAP = 4096


# ---------------------------------------------------------------------------
# test functions

@dataclass(frozen=True)
class Polynomial:
    coeffs: tuple  # of Fraction, ascending degree

    def __call__(self, x):
        value = x.value if isinstance(x, Point) else x
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * value + c
        return acc

    def __str__(self) -> str:
        return "poly:" + ",".join(format_rational(c) for c in self.coeffs)


@dataclass(frozen=True)
class Indicator:
    interval: Interval

    def __call__(self, x):
        value = x.value if isinstance(x, Point) else x
        return Fraction(1) if self.interval.contains_value(value) else Fraction(0)

    def __str__(self) -> str:
        iv = self.interval
        return "ind:%s,%s,%s,%s" % (format_rational(iv.lo), format_rational(iv.hi),
                                    str(iv.own_lo).lower(), str(iv.own_hi).lower())


TestFunction = Union[Polynomial, Indicator]


def parse_test_function(text: str) -> TestFunction:
    """`poly:c0,c1,...` or `ind:lo,hi,own_lo,own_hi` with rational data."""
    kind, _, body = text.partition(":")
    if kind == "poly":
        coeffs = tuple(parse_rational(c) for c in body.split(","))
        return Polynomial(coeffs)
    if kind == "ind":
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 4:
            raise RdsError("indicator needs lo,hi,own_lo,own_hi")
        return Indicator(Interval(parse_rational(parts[0]), parse_rational(parts[1]),
                                  parts[2].lower() == "true", parts[3].lower() == "true"))
    raise RdsError(f"unknown test function {text!r} (use poly:/ind:)")


# ---------------------------------------------------------------------------
# traces

@dataclass
class Trace:
    """A simulated path: labels drawn at exact probabilities, positions
    exact up to `exact_steps` and float64 afterwards."""

    seed: int
    x0: Point
    labels: list          # edge ids per step
    values: list          # positions x_0..x_n (Fraction while exact, then float)
    tags: list            # irrationality tag per position
    exact_steps: int      # index of the last exact position

    def __len__(self) -> int:
        return len(self.labels)

    def point(self, k: int) -> Point:
        v = self.values[k]
        if isinstance(v, Fraction):
            return Point(v, self.tags[k])
        return Point(Fraction(*v.as_integer_ratio()), self.tags[k])

    def write_csv(self, fh) -> None:
        fh.write("step,label,point,precision\n")
        for k, v in enumerate(self.values):
            label = self.labels[k - 1] if k > 0 else "-"
            if isinstance(v, Fraction):
                fh.write(f"{k},{label},{format_rational(v)},exact\n")
            else:
                fh.write(f"{k},{label},{v!r},float64\n")


def simulate(spec: SystemSpec, x0: PointLike, steps: int, seed: int, *,
             bit_cap: int = DENOMINATOR_BIT_CAP) -> Trace:
    """Simulate the chain from x0, drawing each edge at its exact
    probability via 64-bit thresholds from substream 0 of the seed."""
    if steps < 0:
        raise RdsError("steps must be >= 0")
    start = as_point(x0)
    spec.require_in_domain(start)
    tables = sampling.EvalTables(spec)
    rng = sampling.substream(seed, 0)

    from bisect import bisect_right

    x = start.value
    tag = start.irrational_tag
    labels = []
    values = [x]
    tags = [tag]
    exact_steps = 0
    exact = True

    slopes = tables.slopes
    intercepts = tables.intercepts
    slopes_f = [float(s) for s in slopes]
    intercepts_f = [float(c) for c in intercepts]
    slope_nonzero = [s != 0 for s in slopes]
    edge_ids = tables.edge_ids
    selectors = tables.row_selectors
    cuts_f = tables.cut_points_float
    owned_left = tables._cut_owned_left
    tagged = tables.tagged

    done = 0
    while done < steps:
        chunk = rng.integers(0, sampling.TWO64 - 1, endpoint=True,
                             dtype=np.uint64, size=min(1 << 16, steps - done)).tolist()
        done += len(chunk)
        for u in chunk:
            if exact:
                # exact cell lookup against rational breakpoints
                row = tables.cell_index_scalar(x, tag)
            else:
                # float positions compare against float breakpoints; only a
                # position within rounding of a breakpoint can be misfiled
                pos = bisect_right(cuts_f, x)
                if pos > 0 and cuts_f[pos - 1] == x and owned_left[pos - 1]:
                    pos -= 1
                row = pos * 2 + tag if tagged else pos
            idx = 0
            for k, threshold in selectors[row]:
                if u >= threshold:
                    idx = k
                else:
                    break
            labels.append(edge_ids[idx])
            if exact:
                x = slopes[idx] * x + intercepts[idx]
                if x.denominator.bit_length() > bit_cap:
                    x = float(x)
                    exact = False
                else:
                    exact_steps += 1
            else:
                x = slopes_f[idx] * x + intercepts_f[idx]
            tag = tag and slope_nonzero[idx]
            values.append(x)
            tags.append(tag)
    return Trace(seed=seed, x0=start, labels=labels, values=values,
                 tags=tags, exact_steps=exact_steps)


def ergodic_average(trace: Trace, f: TestFunction):
    """Mean of f over the trace positions.

    Exact rational arithmetic while every position is exact; once the
    trace has degraded to float64 the average is computed in float64
    (vectorized), since exactness of the summation cannot recover the
    positions' rounding anyway.
    """
    if not trace.values:
        raise EmptyTrace("trace has no positions")
    n = len(trace.values)
    if trace.exact_steps + 1 >= n:
        return sum((Fraction(f(v)) for v in trace.values), Fraction(0)) / n

    values_f = np.array([float(v) for v in trace.values], dtype=np.float64)
    if isinstance(f, Polynomial):
        acc = np.zeros(n, dtype=np.float64)
        for c in reversed(f.coeffs):
            acc = acc * values_f + float(c)
        return float(np.mean(acc))
    iv = f.interval
    lo, hi = float(iv.lo), float(iv.hi)
    above = (values_f > lo) | ((values_f == lo) & iv.own_lo)
    below = (values_f < hi) | ((values_f == hi) & iv.own_hi)
    return float(np.mean(above & below))


def class_frequencies(trace: Trace, fp) -> dict:
    """Visit frequency of each merged class along the trace (sums to 1).

    Positions are classified in bulk against the cell boundaries; float
    positions can only be misfiled within rounding error of a boundary.
    """
    cells = fp.chain.cells
    state_class = fp.state_class
    n = len(trace.values)
    values_f = np.array([float(v) for v in trace.values], dtype=np.float64)

    if fp.partition.tagged:
        tags = np.array(trace.tags, dtype=bool)
        irr_state = next(s for s, c in enumerate(cells) if c.tag == "irrational")
        rat_state = next(s for s, c in enumerate(cells) if c.tag == "rational")
        states = np.where(tags, irr_state, rat_state)
    else:
        cuts = np.array([float(c.interval.hi) for c in cells[:-1]], dtype=np.float64)
        owned = np.array([c.interval.own_hi for c in cells[:-1]], dtype=bool)
        states = np.searchsorted(cuts, values_f, side="right")
        if cuts.size:
            eq = np.searchsorted(cuts, values_f, side="left")
            hit = eq < cuts.size
            at = np.zeros(n, dtype=bool)
            at[hit] = cuts[eq[hit]] == values_f[hit]
            own = np.zeros(n, dtype=bool)
            own[hit] = owned[eq[hit]]
            states = states - (at & own)

    class_of = np.array([state_class[s] for s in range(len(cells))])
    counts = np.bincount(class_of[states], minlength=len(fp.classes))
    return {info.class_id: Fraction(int(counts[info.class_id]), n)
            for info in fp.classes}


# ---------------------------------------------------------------------------
# contraction on average

def contraction_estimate(spec: SystemSpec, part, num_pairs: int, seed: int) -> Fraction:
    """Largest sampled one-step average contraction quotient.

    Pairs are drawn inside a common cell, so both points share the same
    exact probabilities; for systems with constant-slope maps the quotient
    is the same for every pair and the estimate is exact.
    """
    cells = [c for c in part.cells if not c.interval.is_degenerate]
    if not cells:
        raise DegenerateCellOnly("no nondegenerate cell to sample from")
    rng = sampling.substream(seed, 0)
    worst = Fraction(0)
    for k in range(num_pairs):
        cell = cells[k % len(cells)]
        iv = cell.interval
        width = iv.hi - iv.lo
        while True:
            u1 = int(rng.integers(0, sampling.TWO64 - 1, endpoint=True, dtype=np.uint64))
            u2 = int(rng.integers(0, sampling.TWO64 - 1, endpoint=True, dtype=np.uint64))
            a = iv.lo + width * Fraction(u1 + 1, sampling.TWO64 + 2)
            b = iv.lo + width * Fraction(u2 + 1, sampling.TWO64 + 2)
            if a != b:
                break
        tag = cell.tag == "irrational"
        pa = Point(a, tag)
        quotient = Fraction(0)
        for e in spec.edges:
            pe = e.prob.value_at(pa)
            if pe == 0:
                continue
            quotient += pe * abs(e.map.apply_value(a) - e.map.apply_value(b))
        quotient = quotient / abs(a - b)
        if quotient > worst:
            worst = quotient
    return worst


# ---------------------------------------------------------------------------
# one-dimensional transport distance

def w1_distance(samples_a, samples_b) -> float:
    """Exact transport distance between two equal-size empirical measures:
    mean absolute difference of the sorted samples. Unequal sizes are
    compared through quantile interpolation on the larger grid."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySamples("need nonempty sample sets")
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    n = max(a.size, b.size)
    q = (np.arange(n) + 0.5) / n
    qa = np.quantile(a, q, method="inverted_cdf")
    qb = np.quantile(b, q, method="inverted_cdf")
    return float(np.mean(np.abs(qa - qb)))


# ---------------------------------------------------------------------------
# cloud dynamics and rate measurement

def push_cloud(spec: SystemSpec, cloud: np.ndarray, steps: int, seed: int, *,
               record: bool = False):
    """Advance every atom `steps` steps; atom i consumes the first draws of
    substream i, so scheduling cannot change the result."""
    tables = sampling.EvalTables(spec)
    positions = np.asarray(cloud, dtype=np.float64)
    paths = sampling.VectorPaths(tables, positions, np.zeros(len(positions), dtype=bool))
    draws = sampling.draw_matrix(seed, len(positions), steps)
    history = [paths.positions.copy()] if record else None
    for k in range(steps):
        paths.step(draws[:, k])
        if record:
            history.append(paths.positions.copy())
    return history if record else paths.positions


def stationary_cloud(spec: SystemSpec, size: int, burn: int, seed: int) -> np.ndarray:
    """Reference sample: a uniform grid cloud pushed `burn` steps."""
    grid = (np.arange(size) + 0.5) / size
    lo, hi = float(spec.domain.lo), float(spec.domain.hi)
    return push_cloud(spec, lo + (hi - lo) * grid, burn, seed)


@dataclass
class RateReport:
    distances: list          # d_0 .. d_{n_max}
    ratios: list             # (n, d_{n+1}/d_n) while d_n above the noise floor
    noise_floor: float
    geometric_mean_ratio: Optional[float]
    bound: Optional[float]

    def to_csv(self) -> str:
        ratio_at = dict(self.ratios)
        lines = ["n,d_n,ratio"]
        for n, d in enumerate(self.distances):
            r = ratio_at.get(n)
            lines.append(f"{n},{d!r},{'' if r is None else repr(r)}")
        gm = "" if self.geometric_mean_ratio is None else repr(self.geometric_mean_ratio)
        bd = "" if self.bound is None else repr(self.bound)
        lines.append(f"summary,geometric_mean_ratio={gm},bound={bd},"
                     f"noise_floor={self.noise_floor!r},precision=float64")
        return "\n".join(lines) + "\n"


def convergence_rate(spec: SystemSpec, start_cloud, reference_cloud,
                     n_max: int, seed: int, *, bound: Optional[float] = None,
                     bootstrap: int = 32) -> RateReport:
    """Transport distance to the reference cloud after each push step.

    Step ratios are reported only while the distance stays above a noise
    floor of three times the bootstrap error scale of the transport
    distance at this cloud size (the mean distance between independent
    resamples of the reference).
    """
    ref = np.asarray(reference_cloud, dtype=np.float64)
    start = np.asarray(start_cloud, dtype=np.float64)
    if ref.size == 0 or start.size == 0:
        raise EmptySamples("need nonempty clouds")

    boot_rng = sampling.substream(seed, 1 << 40)
    scales = []
    for _ in range(bootstrap):
        ra = ref[boot_rng.integers(0, ref.size, size=ref.size)]
        rb = ref[boot_rng.integers(0, ref.size, size=ref.size)]
        scales.append(w1_distance(ra, rb))
    noise_floor = 3.0 * float(np.mean(scales))

    history = push_cloud(spec, start, n_max, seed, record=True)
    distances = [w1_distance(cloud, ref) for cloud in history]

    ratios = []
    for n in range(len(distances) - 1):
        if distances[n] < noise_floor:
            break
        ratios.append((n, distances[n + 1] / distances[n]))
    gm = None
    if ratios:
        gm = float(np.exp(np.mean([math.log(r) for _, r in ratios if r > 0])))
    return RateReport(distances=distances, ratios=ratios,
                      noise_floor=noise_floor, geometric_mean_ratio=gm,
                      bound=bound)
