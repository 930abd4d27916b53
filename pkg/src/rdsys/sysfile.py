"""Reader and writer for system specification files.

The format is an INI-style key-value schema:

    [domain]
    lo = 0
    hi = 1

    [edge 0]
    slope = 1/3
    intercept = 0
    prob = piecewise (0,1/9,true,true,0);(1/9,1,false,true,1/2)

    [edge 1]
    slope = 1/3
    intercept = 1/3
    prob = rationality q_value=3/4 irr_value=2/3

Rationals are written `p/q` or `p`. Piecewise pieces list
(lo,hi,own_lo,own_hi,value) separated by `;`; ownership flags say whether
each endpoint belongs to the piece. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from fractions import Fraction
from pathlib import Path

from .model import (AffineMap, Edge, Interval, PiecewiseConstant, Point,
                    RationalityPredicate, SpecFileError, SystemSpec,
                    format_rational, parse_rational)

_DOMAIN_KEYS = {"lo", "hi"}
_EDGE_KEYS = {"slope", "intercept", "prob"}


def _parse_bool(text: str) -> bool:
    s = text.strip().lower()
    if s == "true":
        return True
    if s == "false":
        return False
    raise SpecFileError(f"not a boolean: {text!r} (use true/false)")


def _parse_piecewise(body: str) -> PiecewiseConstant:
    pieces = []
    for chunk in body.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if not (chunk.startswith("(") and chunk.endswith(")")):
            raise SpecFileError(f"piece must be parenthesized: {chunk!r}")
        fields = [f.strip() for f in chunk[1:-1].split(",")]
        if len(fields) != 5:
            raise SpecFileError(f"piece needs 5 fields (lo,hi,own_lo,own_hi,value): {chunk!r}")
        lo, hi = parse_rational(fields[0]), parse_rational(fields[1])
        own_lo, own_hi = _parse_bool(fields[2]), _parse_bool(fields[3])
        val = parse_rational(fields[4])
        pieces.append((Interval(lo, hi, own_lo, own_hi), val))
    if not pieces:
        raise SpecFileError("piecewise prob has no pieces")
    return PiecewiseConstant(tuple(pieces))


def _parse_rationality(body: str) -> RationalityPredicate:
    q_value = None
    irr_value = None
    for token in body.replace(",", " ").split():
        if "=" not in token:
            raise SpecFileError(f"rationality prob expects key=value tokens, got {token!r}")
        key, _, val = token.partition("=")
        if key == "q_value":
            q_value = parse_rational(val)
        elif key == "irr_value":
            irr_value = parse_rational(val)
        else:
            raise SpecFileError(f"unknown rationality key {key!r}")
    if q_value is None or irr_value is None:
        raise SpecFileError("rationality prob needs q_value= and irr_value=")
    return RationalityPredicate(q_value, irr_value)


def _parse_prob(text: str):
    kind, _, body = text.strip().partition(" ")
    if kind == "piecewise":
        return _parse_piecewise(body)
    if kind == "rationality":
        return _parse_rationality(body)
    raise SpecFileError(f"unknown prob kind {kind!r} (use piecewise/rationality)")


def parse_system(text: str) -> SystemSpec:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecFileError(f"malformed system file: {exc}") from exc

    if "domain" not in cp:
        raise SpecFileError("missing [domain] section")
    dom = cp["domain"]
    extra = set(dom.keys()) - _DOMAIN_KEYS
    if extra:
        raise SpecFileError(f"unknown keys in [domain]: {sorted(extra)}")
    if _DOMAIN_KEYS - set(dom.keys()):
        raise SpecFileError("[domain] needs lo= and hi=")
    lo, hi = parse_rational(dom["lo"]), parse_rational(dom["hi"])
    if lo >= hi:
        raise SpecFileError(f"domain requires lo < hi, got [{lo}, {hi}]")
    domain = Interval(lo, hi)

    edges = []
    for section in cp.sections():
        if section == "domain":
            continue
        if not section.startswith("edge "):
            raise SpecFileError(f"unknown section [{section}]")
        edge_id = section[len("edge "):].strip()
        if not edge_id:
            raise SpecFileError("edge section needs an id: [edge <id>]")
        sec = cp[section]
        extra = set(sec.keys()) - _EDGE_KEYS
        if extra:
            raise SpecFileError(f"unknown keys in [{section}]: {sorted(extra)}")
        if _EDGE_KEYS - set(sec.keys()):
            raise SpecFileError(f"[{section}] needs slope=, intercept=, prob=")
        edges.append(Edge(
            edge_id=edge_id,
            map=AffineMap(parse_rational(sec["slope"]), parse_rational(sec["intercept"])),
            prob=_parse_prob(sec["prob"]),
        ))
    if not edges:
        raise SpecFileError("system needs at least one [edge <id>] section")
    return SystemSpec(domain=domain, edges=tuple(edges))


def load_system(path) -> SystemSpec:
    return parse_system(Path(path).read_text(encoding="utf-8"))


def _format_prob(prob) -> str:
    if isinstance(prob, PiecewiseConstant):
        chunks = []
        for iv, val in prob.pieces:
            chunks.append("(%s,%s,%s,%s,%s)" % (
                format_rational(iv.lo), format_rational(iv.hi),
                str(iv.own_lo).lower(), str(iv.own_hi).lower(),
                format_rational(val)))
        return "piecewise " + ";".join(chunks)
    return "rationality q_value=%s irr_value=%s" % (
        format_rational(prob.value_on_rationals),
        format_rational(prob.value_on_irrationals))


def format_system(spec: SystemSpec) -> str:
    lines = ["[domain]",
             f"lo = {format_rational(spec.domain.lo)}",
             f"hi = {format_rational(spec.domain.hi)}"]
    for e in spec.edges:
        lines.append("")
        lines.append(f"[edge {e.edge_id}]")
        lines.append(f"slope = {format_rational(e.map.slope)}")
        lines.append(f"intercept = {format_rational(e.map.intercept)}")
        lines.append(f"prob = {_format_prob(e.prob)}")
    return "\n".join(lines) + "\n"


def save_system(spec: SystemSpec, path) -> None:
    Path(path).write_text(format_system(spec), encoding="utf-8")
