"""Stable interval partitions and their merge into equivalence classes.

The pipeline refines the domain into cells on which every probability
function is constant and every map sends a cell into a single cell, reads
off the finite labeled chain, and then decides for each pair of cells
whether the path measures started inside them share null sets. Exact
certificates (a separating word, equality of the measures, or a coupling
argument on the product chain) take precedence over seeded statistical
evidence. The certified-equivalent cells merge into classes, producing a
reduced edge set with a label projection back onto the original edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import graph as graphmod
from .measures import (Word, XiParams, XiReport, cylinder_measure, format_word,
                       xi_estimate)
from .model import (BudgetExceeded, ImageSplitsCells, InconsistentMerge,
                    Interval, NonConstantOnCell, NotPiecewiseConstant,
                    OutOfDomain, PiecewiseConstant, Point, PointLike,
                    RationalityPredicate, RdsError, RefinementBudgetExceeded,
                    SystemSpec, as_point, cells_from_cuts, format_rational)

RATIONAL_TAG = "rational"
IRRATIONAL_TAG = "irrational"


# ---------------------------------------------------------------------------
# cells and partitions

@dataclass(frozen=True)
class Cell:
    """An interval cell, optionally restricted to (ir)rational points."""

    interval: Interval
    tag: Optional[str] = None

    def contains_point(self, p: Point) -> bool:
        if self.tag == RATIONAL_TAG and p.irrational_tag:
            return False
        if self.tag == IRRATIONAL_TAG and not p.irrational_tag:
            return False
        return self.interval.contains_value(p.value)

    def representative(self) -> Point:
        return Point(self.interval.interior_point(), self.tag == IRRATIONAL_TAG)

    def __str__(self) -> str:
        if self.tag is None:
            return str(self.interval)
        return f"{self.interval} {self.tag}"


@dataclass
class IntervalPartition:
    """Ordered cells covering the domain exactly."""

    domain: Interval
    cells: list
    provenance: dict   # (breakpoint, side) -> "probability" | "preimage"
    tagged: bool

    @property
    def breakpoints(self) -> list:
        return sorted({t for (t, _side) in self.provenance})

    def cell_of_point(self, p: Point) -> int:
        for k, cell in enumerate(self.cells):
            if cell.contains_point(p):
                return k
        raise OutOfDomain(f"point {p} not covered by any cell")


def refine_markov_partition(spec: SystemSpec, cap: int = 256) -> IntervalPartition:
    """Breakpoint closure of a piecewise-constant system.

    Starting from the probability discontinuities, repeatedly pulls every
    cut back through every invertible map until closed, so each map sends
    each resulting cell into exactly one cell. A cut (t, +1) separates
    points <= t from points > t, and (t, -1) separates < t from >= t;
    increasing maps preserve the side, decreasing maps flip it.
    """
    if spec.has_rationality_edges:
        raise NotPiecewiseConstant(
            "refinement needs piecewise-constant probabilities only")
    domain = spec.domain
    cuts: dict = {}
    worklist = []
    for e in spec.edges:
        for t, side in e.prob.boundary_cuts(domain):
            if (t, side) not in cuts:
                cuts[(t, side)] = "probability"
                worklist.append((t, side))

    def usable(t, side) -> bool:
        if t < domain.lo or t > domain.hi:
            return False
        if t == domain.lo and side == -1:
            return False
        if t == domain.hi and side == +1:
            return False
        return True

    while worklist:
        t, side = worklist.pop()
        for e in spec.edges:
            if e.map.slope == 0:
                continue
            x = e.map.preimage_value(t)
            new_side = side if e.map.slope > 0 else -side
            if not usable(x, new_side):
                continue
            if (x, new_side) not in cuts:
                cuts[(x, new_side)] = "preimage"
                worklist.append((x, new_side))
                if len({pt for pt, _ in cuts}) > cap:
                    raise RefinementBudgetExceeded(
                        f"no finite stable partition found at cap {cap} breakpoints")

    cells = [Cell(iv) for iv in cells_from_cuts(domain, cuts.keys())]
    return IntervalPartition(domain=domain, cells=cells, provenance=dict(cuts),
                             tagged=False)


def tagged_partition(spec: SystemSpec) -> IntervalPartition:
    """The rational/irrational two-cell partition for predicate systems.

    Valid because rational map coefficients preserve rationality (a zero
    slope collapses to the rational intercept). Any piecewise edge must be
    globally constant, else no tag-only partition can make probabilities
    constant per cell.
    """
    for e in spec.edges:
        if isinstance(e.prob, PiecewiseConstant) and e.prob.constant_value() is None:
            raise NotPiecewiseConstant(
                f"edge {e.edge_id} mixes interval pieces with rationality "
                "predicates; no tag partition applies")
    dom = Interval(spec.domain.lo, spec.domain.hi, spec.domain.own_lo, spec.domain.own_hi)
    cells = [Cell(dom, RATIONAL_TAG), Cell(dom, IRRATIONAL_TAG)]
    return IntervalPartition(domain=spec.domain, cells=cells, provenance={},
                             tagged=True)


def stable_partition(spec: SystemSpec, cap: int = 256) -> IntervalPartition:
    if spec.has_rationality_edges:
        return tagged_partition(spec)
    return refine_markov_partition(spec, cap)


# ---------------------------------------------------------------------------
# the symbolic chain

@dataclass
class LabeledChain:
    """Finite chain with constant per-cell probabilities and labeled arcs."""

    n_states: int
    labels: tuple                     # edge ids, spec order
    prob: dict                        # (state, label) -> Fraction, positive only
    target: dict                      # (state, label) -> state
    reps: dict                        # state -> Point
    cells: list                       # state -> Cell

    def support(self, state: int) -> tuple:
        return tuple(l for l in self.labels if (state, l) in self.prob)

    def word_mass(self, state: int, word: Word) -> Fraction:
        mass = Fraction(1)
        s = state
        for label in word:
            p = self.prob.get((s, label))
            if p is None:
                return Fraction(0)
            mass *= p
            s = self.target[(s, label)]
        return mass


def extract_symbolic_chain(spec: SystemSpec, part: IntervalPartition) -> LabeledChain:
    """Read off per-cell probabilities and single-cell images, verifying
    constancy and image containment exactly."""
    prob = {}
    target = {}
    reps = {}
    for s, cell in enumerate(part.cells):
        rep = cell.representative()
        reps[s] = rep
        for e in spec.edges:
            value = e.prob.value_at(rep)
            if isinstance(e.prob, PiecewiseConstant):
                holder = next((iv for iv, _v in e.prob.pieces
                               if iv.contains_interval(cell.interval)), None)
                if holder is None:
                    raise NonConstantOnCell(
                        f"edge {e.edge_id} not constant on cell {cell}")
            elif cell.tag is None and e.prob.constant_value() is None:
                raise NonConstantOnCell(
                    f"edge {e.edge_id} reads the tag but cell {cell} has none")
            if value == 0:
                continue
            image = e.map.apply_interval(cell.interval)
            if cell.tag is None:
                image_tag = None
            else:
                image_tag = (cell.tag if (e.map.slope != 0 or cell.tag == RATIONAL_TAG)
                             else RATIONAL_TAG)
            hits = [t for t, c2 in enumerate(part.cells)
                    if c2.tag == image_tag and c2.interval.contains_interval(image)]
            if not hits:
                raise ImageSplitsCells(
                    f"edge {e.edge_id} image {image} of cell {cell} "
                    "not inside a single cell")
            prob[(s, e.edge_id)] = value
            target[(s, e.edge_id)] = hits[0]
    return LabeledChain(n_states=len(part.cells), labels=spec.edge_ids,
                        prob=prob, target=target, reps=reps, cells=list(part.cells))


# ---------------------------------------------------------------------------
# certificates

@dataclass(frozen=True)
class SupportSeparation:
    """A word with zero mass from one state and positive mass from the other."""

    kind = "support_separation"
    word: Word
    mass_i: Fraction
    mass_j: Fraction

    def __str__(self) -> str:
        return (f"support_separation word={format_word(self.word)} "
                f"masses {format_rational(self.mass_i)} vs {format_rational(self.mass_j)}")


@dataclass(frozen=True)
class MeasureEquality:
    """Transcript of the span iteration proving the two measures equal."""

    kind = "measure_equality"
    basis_words: tuple
    dimension: int

    def __str__(self) -> str:
        return (f"measure_equality dim={self.dimension} basis="
                + ",".join(format_word(w) for w in self.basis_words))


@dataclass(frozen=True)
class Distinguisher:
    word: Word
    mass_i: Fraction
    mass_j: Fraction

    def __str__(self) -> str:
        return (f"distinguishing word {format_word(self.word)}: "
                f"{format_rational(self.mass_i)} vs {format_rational(self.mass_j)}")


@dataclass
class MeasureEqualityResult:
    equal: bool
    certificate: Optional[MeasureEquality]
    witness: Optional[Distinguisher]


@dataclass(frozen=True)
class CouplingMerge:
    """Witness that the synchronous product chain couples almost surely:
    every terminal component of the reachable product graph meets the
    diagonal, after which the likelihood ratio freezes."""

    kind = "coupling_merge"
    product_states: tuple            # reachable (a, b) pairs
    terminal_components: tuple       # tuple of tuples of pairs
    diagonal_witnesses: tuple        # one diagonal pair per terminal component

    def __str__(self) -> str:
        return (f"coupling_merge reachable={len(self.product_states)} "
                f"terminal={len(self.terminal_components)} "
                f"diagonal={list(self.diagonal_witnesses)}")


@dataclass(frozen=True)
class StatisticalEvidence:
    kind = "statistical"
    report: XiReport

    def __str__(self) -> str:
        r = self.report
        return (f"statistical verdict={r.verdict} drift={r.mc_drift:.6g} "
                f"stderr={r.mc_drift_stderr:.2g} seed={r.seed}")


def support_separation(chain: LabeledChain, i: int, j: int) -> Optional[SupportSeparation]:
    """Breadth-first search of the shared-label product graph for a pair of
    reachable states where exactly one side supports a label. The witness
    word is an exact singularity certificate."""
    start = (i, j)
    seen = {start}
    queue = [(start, ())]
    while queue:
        (a, b), word = queue.pop(0)
        for label in chain.labels:
            in_a = (a, label) in chain.prob
            in_b = (b, label) in chain.prob
            if in_a != in_b:
                witness = word + (label,)
                return SupportSeparation(word=witness,
                                         mass_i=chain.word_mass(i, witness),
                                         mass_j=chain.word_mass(j, witness))
            if in_a and in_b:
                nxt = (chain.target[(a, label)], chain.target[(b, label)])
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append((nxt, word + (label,)))
    return None


def measure_equality(chain: LabeledChain, i: int, j: int) -> MeasureEqualityResult:
    """Decide exactly whether the two states generate the same measure on
    label sequences, by iterating prefix-weight vectors until the spanned
    space stabilizes. A failure yields a shortest distinguishing word."""
    n = chain.n_states
    if i == j:
        return MeasureEqualityResult(True, MeasureEquality((), 0), None)

    def times_label(vec, label):
        out = [Fraction(0)] * n
        for s in range(n):
            if vec[s] == 0:
                continue
            p = chain.prob.get((s, label))
            if p is None:
                continue
            out[chain.target[(s, label)]] += vec[s] * p
        return out

    basis = []  # list of (pivot index, vector)

    def reduce(vec):
        v = list(vec)
        for pidx, b in basis:
            if v[pidx] != 0:
                factor = v[pidx] / b[pidx]
                v = [a - factor * c for a, c in zip(v, b)]
        return v

    start = [Fraction(0)] * n
    start[i] = Fraction(1)
    start[j] = start[j] - 1
    queue = [((), start)]
    basis_words = []
    while queue:
        word, vec = queue.pop(0)
        total = sum(vec, Fraction(0))
        if total != 0:
            return MeasureEqualityResult(
                False, None,
                Distinguisher(word=word, mass_i=chain.word_mass(i, word),
                              mass_j=chain.word_mass(j, word)))
        residual = reduce(vec)
        pivot = next((k for k, v in enumerate(residual) if v != 0), None)
        if pivot is None:
            continue
        basis.append((pivot, residual))
        basis_words.append(word)
        for label in chain.labels:
            queue.append((word + (label,), times_label(vec, label)))
    return MeasureEqualityResult(
        True, MeasureEquality(tuple(basis_words), len(basis)), None)


def _product_graph(chain: LabeledChain, i: int, j: int):
    """Reachable synchronous product under shared labels; requires equal
    supports along the way (i.e. no separation certificate exists)."""
    start = (i, j)
    seen = {start}
    order = [start]
    arcs = []
    queue = [start]
    while queue:
        a, b = queue.pop(0)
        for label in chain.labels:
            in_a = (a, label) in chain.prob
            in_b = (b, label) in chain.prob
            if in_a != in_b:
                raise RdsError(
                    "support separation exists; run support_separation first")
            if not in_a:
                continue
            nxt = (chain.target[(a, label)], chain.target[(b, label)])
            arcs.append((((a, b), label), (a, b), nxt))
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order, arcs


def coupling_merge_test(chain: LabeledChain, i: int, j: int, *,
                        spec: Optional[SystemSpec] = None,
                        xi_params: Optional[XiParams] = None):
    """Sufficient exact condition for mutual absolute continuity: from
    (i, j), every terminal component of the shared-label product chain
    contains a diagonal pair, so the paths couple with probability one
    under both marginals and the likelihood ratio freezes. When the
    condition fails, falls back to seeded statistical evidence at the
    representative points."""
    states, arcs = _product_graph(chain, i, j)
    g = graphmod.Digraph(vertices=tuple(states), arcs=tuple(arcs))
    terms = graphmod.terminal_components(g)
    witnesses = []
    all_hit = True
    for comp in terms:
        diag = next((pair for pair in comp if pair[0] == pair[1]), None)
        if diag is None:
            all_hit = False
            break
        witnesses.append(diag)
    if all_hit:
        return CouplingMerge(product_states=tuple(states),
                             terminal_components=tuple(tuple(c) for c in terms),
                             diagonal_witnesses=tuple(witnesses))
    if spec is None or xi_params is None:
        raise RdsError("statistical fallback needs the system and xi parameters")
    report = xi_estimate(spec, chain.reps[i], chain.reps[j], xi_params)
    return StatisticalEvidence(report=report)


def verify_coupling_certificate(chain: LabeledChain, i: int, j: int,
                                cert: CouplingMerge) -> bool:
    """Re-run the witness: rebuilding the product graph must reproduce the
    reachable set and the diagonal hits."""
    states, arcs = _product_graph(chain, i, j)
    if tuple(states) != cert.product_states:
        return False
    g = graphmod.Digraph(vertices=tuple(states), arcs=tuple(arcs))
    terms = graphmod.terminal_components(g)
    if tuple(tuple(c) for c in terms) != cert.terminal_components:
        return False
    return all(any(pair[0] == pair[1] for pair in comp)
               for comp in cert.terminal_components)


# ---------------------------------------------------------------------------
# the merged partition

@dataclass
class PartitionParams:
    refinement_cap: int = 256
    seed: Optional[int] = None
    xi: XiParams = field(default_factory=XiParams)


@dataclass
class ClassInfo:
    class_id: int
    states: tuple
    cells: tuple
    rep: Point
    support: tuple

    def describe(self) -> str:
        return " + ".join(str(c) for c in self.cells)


@dataclass(frozen=True)
class FmsEdge:
    """A reduced edge: (class, original label) with its target class.

    The label projection back onto original edges is the `label` field.
    """

    class_id: int
    label: str
    target: int


@dataclass
class FundamentalPartition:
    partition: IntervalPartition
    chain: LabeledChain
    classes: list                   # of ClassInfo
    state_class: dict               # chain state -> class id
    fms_edges: list                 # of FmsEdge
    certificates: dict              # (i, j) state pair, i < j -> certificate
    merged_pairs: list              # (i, j, grade) actually merged
    statistical: bool               # any merge rested on statistical evidence

    def class_count(self) -> int:
        return len(self.classes)

    def edges_from(self, class_id: int) -> list:
        return [fe for fe in self.fms_edges if fe.class_id == class_id]


def _pair_seed(seed: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(i, j)).generate_state(1)[0])


def fundamental_partition(spec: SystemSpec,
                          params: Optional[PartitionParams] = None) -> FundamentalPartition:
    """Full pipeline: stable partition, symbolic chain, pairwise
    certificates with exact-before-statistical precedence, transitive
    merge, and the reduced labeled system with its label projection."""
    params = params or PartitionParams()
    part = stable_partition(spec, params.refinement_cap)
    chain = extract_symbolic_chain(spec, part)

    certificates = {}
    merged = []
    parent = list(range(chain.n_states))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i in range(chain.n_states):
        for j in range(i + 1, chain.n_states):
            sep = support_separation(chain, i, j)
            if sep is not None:
                certificates[(i, j)] = sep
                continue
            eq = measure_equality(chain, i, j)
            if eq.equal:
                certificates[(i, j)] = eq.certificate
                merged.append((i, j, "exact"))
                union(i, j)
                continue
            xi_params = params.xi
            if params.seed is not None:
                xi_params = XiParams(**{**params.xi.__dict__,
                                        "seed": _pair_seed(params.seed, i, j)})
            cert = coupling_merge_test(chain, i, j, spec=spec, xi_params=xi_params)
            certificates[(i, j)] = cert
            if isinstance(cert, CouplingMerge):
                merged.append((i, j, "exact"))
                union(i, j)
            elif cert.report.verdict == "equivalent":
                merged.append((i, j, "statistical"))
                union(i, j)

    # coherence: no separated pair may end up merged
    for (i, j), cert in certificates.items():
        if isinstance(cert, SupportSeparation) and find(i) == find(j):
            raise InconsistentMerge(
                f"states {i},{j} merged transitively but separated by "
                f"word {format_word(cert.word)}")

    groups: dict = {}
    for s in range(chain.n_states):
        groups.setdefault(find(s), []).append(s)
    ordered = [tuple(groups[root]) for root in sorted(groups)]

    state_class = {}
    classes = []
    for cid, states in enumerate(ordered):
        for s in states:
            state_class[s] = cid
        support = chain.support(states[0])
        for s in states[1:]:
            if chain.support(s) != support:
                raise InconsistentMerge(
                    f"class {cid} mixes states with different label supports")
        classes.append(ClassInfo(
            class_id=cid, states=states,
            cells=tuple(chain.cells[s] for s in states),
            rep=chain.reps[states[0]], support=support))

    fms_edges = []
    for info in classes:
        for label in info.support:
            targets = {state_class[chain.target[(s, label)]] for s in info.states}
            if len(targets) != 1:
                raise InconsistentMerge(
                    f"label {label} from class {info.class_id} lands in "
                    f"several classes {sorted(targets)}; evidence incomplete")
            fms_edges.append(FmsEdge(info.class_id, label, targets.pop()))

    rests_on_sampling = (any(grade == "statistical" for _, _, grade in merged)
                         or any(isinstance(c, StatisticalEvidence)
                                for c in certificates.values()))
    return FundamentalPartition(
        partition=part, chain=chain, classes=classes, state_class=state_class,
        fms_edges=fms_edges, certificates=certificates, merged_pairs=merged,
        statistical=rests_on_sampling)


def classify_point(fp: FundamentalPartition, x: PointLike) -> int:
    p = as_point(x)
    state = fp.partition.cell_of_point(p)
    return fp.state_class[state]


# ---------------------------------------------------------------------------
# consistency checks against the original system

def lift_check(spec: SystemSpec, fp: FundamentalPartition, x: PointLike,
               depth: int, *, budget: int = 1 << 20) -> Fraction:
    """Largest defect between original cylinder masses and the summed
    masses of their path-consistent lifts through the reduced system.

    A lift follows the reduced transition table from some starting class;
    its factors are the original probabilities gated by membership of the
    actual orbit point in the lift's current class, so any wrong entry in
    the reduced tables shows up as a positive defect.
    """
    if len(spec.edges) ** depth > budget:
        raise BudgetExceeded(f"|E|^{depth} exceeds budget {budget}")
    start = as_point(x)
    spec.require_in_domain(start)
    edge_target = {(fe.class_id, fe.label): fe.target for fe in fp.fms_edges}
    n_classes = len(fp.classes)
    worst = Fraction(0)

    def walk(point, px, lifts, k):
        nonlocal worst
        if k == depth:
            total = sum((r for _c, r in lifts), Fraction(0))
            defect = abs(px - total)
            if defect > worst:
                worst = defect
            return
        here = classify_point(fp, point)
        for e in spec.edges:
            fx = e.prob.value_at(point)
            if fx == 0:
                continue
            new_lifts = []
            for c, r in lifts:
                if c is None or r == 0:
                    new_lifts.append((None, Fraction(0)))
                    continue
                nxt = edge_target.get((c, e.edge_id))
                if nxt is None:
                    new_lifts.append((None, Fraction(0)))
                    continue
                factor = fx if c == here else Fraction(0)
                new_lifts.append((nxt, r * factor))
            walk(e.map.apply_point(point), px * fx, new_lifts, k + 1)

    walk(start, Fraction(1), [(c, Fraction(1)) for c in range(n_classes)], 0)
    return worst


def adjoint_discrepancy(spec: SystemSpec, fp: FundamentalPartition,
                        x: PointLike, f) -> Fraction:
    """Exact defect between one-step averaging through the reduced edge
    set and through the original system (zero when the reduction is an
    equivalent system)."""
    p = as_point(x)
    spec.require_in_domain(p)
    cid = classify_point(fp, p)
    reduced = Fraction(0)
    for fe in fp.edges_from(cid):
        e = spec.edge(fe.label)
        pe = e.prob.value_at(p)
        if pe == 0:
            continue
        reduced = reduced + pe * f(e.map.apply_point(p))
    from .model import markov_operator
    return abs(reduced - markov_operator(spec, f, p))


def verify_separations(fp: FundamentalPartition, spec: SystemSpec) -> list:
    """Re-check every separation witness against exact cylinder masses at
    the representative points; returns human-readable failures."""
    problems = []
    for (i, j), cert in sorted(fp.certificates.items()):
        if not isinstance(cert, SupportSeparation):
            continue
        mi = cylinder_measure(spec, fp.chain.reps[i], cert.word)
        mj = cylinder_measure(spec, fp.chain.reps[j], cert.word)
        if mi != cert.mass_i or mj != cert.mass_j:
            problems.append(f"pair ({i},{j}): recomputed masses "
                            f"{format_rational(mi)},{format_rational(mj)} differ")
        if not ((mi == 0) != (mj == 0)):
            problems.append(f"pair ({i},{j}): word {format_word(cert.word)} "
                            "does not separate")
    return problems


# ---------------------------------------------------------------------------
# report serialization

def partition_report(fp: FundamentalPartition) -> str:
    lines = []
    bps = fp.partition.breakpoints
    lines.append("breakpoints: " + (", ".join(format_rational(b) for b in bps)
                                    if bps else "(none)"))
    lines.append("cells:")
    for s, cell in enumerate(fp.chain.cells):
        origin = ""
        lines.append(f"  state {s}: {cell}{origin}")
    lines.append("classes:")
    for info in fp.classes:
        lines.append(f"  class {info.class_id}: {info.describe()} "
                     f"(states {','.join(str(s) for s in info.states)})")
    lines.append("certificates:")
    for (i, j), cert in sorted(fp.certificates.items()):
        lines.append(f"  states ({i},{j}): {cert}")
    lines.append("reduced edges (class,label) -> target [projection=label]:")
    for fe in fp.fms_edges:
        lines.append(f"  ({fe.class_id},{fe.label}) -> {fe.target}")
    grades = [f"({i},{j}) {grade}" for i, j, grade in fp.merged_pairs]
    lines.append("merges: " + ("; ".join(grades) if grades else "(none)"))
    lines.append("evidence grade: "
                 + ("statistical merges present" if fp.statistical
                    else "all certificates exact"))
    return "\n".join(lines) + "\n"
