"""AQL: the service's small SQL-like query language.

Grammar (keywords case-insensitive, tokens whitespace-separated):

    query  := cone | lc | events | stats
    cone   := "CONE" "ra="num "dec="num "r="num ["acc="num]
    lc     := "LIGHTCURVE" "star="id ["from="t "to="t]
              ["source="("auto"|"cache"|"archive")]
    events := "EVENTS" ["from="int "to="int] ["minscore="num]
    stats  := "STATS" "star="id

Syntax errors carry the 1-based character position and the expected tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union


class AqlSyntaxError(ValueError):
    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        self.position = position
        self.expected = expected
        suffix = f" (expected {' | '.join(expected)})" if expected else ""
        super().__init__(f"syntax error at position {position}: {message}{suffix}")


@dataclass(frozen=True)
class ConeQuery:
    ra_deg: float
    dec_deg: float
    radius_deg: float
    accuracy: float = 1.0

    def to_text(self) -> str:
        base = f"CONE ra={_num(self.ra_deg)} dec={_num(self.dec_deg)} r={_num(self.radius_deg)}"
        if self.accuracy != 1.0:
            base += f" acc={_num(self.accuracy)}"
        return base


@dataclass(frozen=True)
class LightCurveQuery:
    star_id: int
    t_from: int | None = None
    t_to: int | None = None
    source: str = "auto"

    def to_text(self) -> str:
        base = f"LIGHTCURVE star={self.star_id}"
        if self.t_from is not None:
            base += f" from={self.t_from}"
        if self.t_to is not None:
            base += f" to={self.t_to}"
        if self.source != "auto":
            base += f" source={self.source}"
        return base


@dataclass(frozen=True)
class EventsQuery:
    seq_from: int | None = None
    seq_to: int | None = None
    min_score: float = 0.0

    def to_text(self) -> str:
        base = "EVENTS"
        if self.seq_from is not None:
            base += f" from={self.seq_from}"
        if self.seq_to is not None:
            base += f" to={self.seq_to}"
        if self.min_score != 0.0:
            base += f" minscore={_num(self.min_score)}"
        return base


@dataclass(frozen=True)
class StatsQuery:
    star_id: int

    def to_text(self) -> str:
        return f"STATS star={self.star_id}"


QueryAst = Union[ConeQuery, LightCurveQuery, EventsQuery, StatsQuery]


def _num(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


_TOKEN = re.compile(r"\S+")

_GRAMMAR = {
    "CONE": {"required": ("ra", "dec", "r"), "optional": ("acc",)},
    "LIGHTCURVE": {"required": ("star",), "optional": ("from", "to", "source")},
    "EVENTS": {"required": (), "optional": ("from", "to", "minscore")},
    "STATS": {"required": ("star",), "optional": ()},
}

_INT_KEYS = {"star", "from", "to"}
_ENUM_KEYS = {"source": ("auto", "cache", "archive")}


def parse(text: str) -> QueryAst:
    """Parse AQL text into a query AST."""
    tokens = [(m.group(0), m.start()) for m in _TOKEN.finditer(text)]
    if not tokens:
        raise AqlSyntaxError("empty query", 1, tuple(_GRAMMAR))
    head, head_pos = tokens[0]
    keyword = head.upper()
    if keyword not in _GRAMMAR:
        raise AqlSyntaxError(f"unknown query kind {head!r}", head_pos + 1, tuple(_GRAMMAR))
    rule = _GRAMMAR[keyword]
    allowed = rule["required"] + rule["optional"]

    args: dict[str, float | int | str] = {}
    for tok, pos in tokens[1:]:
        if "=" not in tok:
            raise AqlSyntaxError(f"expected key=value, got {tok!r}", pos + 1,
                                 tuple(f"{k}=" for k in allowed))
        key, _, value = tok.partition("=")
        key = key.lower()
        if key not in allowed:
            raise AqlSyntaxError(f"unknown argument {key!r} for {keyword}", pos + 1,
                                 tuple(f"{k}=" for k in allowed))
        if key in args:
            raise AqlSyntaxError(f"duplicate argument {key!r}", pos + 1, ())
        value_pos = pos + len(key) + 2    # 1-based position of the value
        if not value:
            raise AqlSyntaxError(f"missing value for {key!r}", value_pos,
                                 ("number",) if key not in _ENUM_KEYS else _ENUM_KEYS[key])
        if key in _ENUM_KEYS:
            value = value.lower()
            if value not in _ENUM_KEYS[key]:
                raise AqlSyntaxError(f"bad value for {key!r}", value_pos, _ENUM_KEYS[key])
            args[key] = value
        elif key in _INT_KEYS:
            try:
                args[key] = int(value)
            except ValueError:
                raise AqlSyntaxError(f"expected integer for {key!r}", value_pos,
                                     ("integer",)) from None
        else:
            try:
                args[key] = float(value)
            except ValueError:
                raise AqlSyntaxError(f"expected number for {key!r}", value_pos,
                                     ("number",)) from None

    for key in rule["required"]:
        if key not in args:
            raise AqlSyntaxError(f"{keyword} requires {key}=", len(text) + 1,
                                 (f"{key}=",))
    return _build(keyword, args, head_pos)


def _build(keyword: str, args: dict, head_pos: int) -> QueryAst:
    if keyword == "CONE":
        ast = ConeQuery(ra_deg=float(args["ra"]), dec_deg=float(args["dec"]),
                        radius_deg=float(args["r"]),
                        accuracy=float(args.get("acc", 1.0)))
        if not 0.0 <= ast.ra_deg < 360.0 or not -90.0 <= ast.dec_deg <= 90.0:
            raise AqlSyntaxError("cone center out of range", head_pos + 1, ())
        if ast.radius_deg <= 0:
            raise AqlSyntaxError("cone radius must be > 0", head_pos + 1, ())
        if not 0.0 < ast.accuracy <= 1.0:
            raise AqlSyntaxError("acc must be in (0, 1]", head_pos + 1, ())
        return ast
    if keyword == "LIGHTCURVE":
        ast = LightCurveQuery(star_id=int(args["star"]),
                              t_from=args.get("from"), t_to=args.get("to"),
                              source=str(args.get("source", "auto")))
        if ast.t_from is not None and ast.t_to is not None and ast.t_from > ast.t_to:
            raise AqlSyntaxError("from must be <= to", head_pos + 1, ())
        return ast
    if keyword == "EVENTS":
        ast = EventsQuery(seq_from=args.get("from"), seq_to=args.get("to"),
                          min_score=float(args.get("minscore", 0.0)))
        if ast.seq_from is not None and ast.seq_to is not None \
                and ast.seq_from > ast.seq_to:
            raise AqlSyntaxError("from must be <= to", head_pos + 1, ())
        return ast
    return StatsQuery(star_id=int(args["star"]))
