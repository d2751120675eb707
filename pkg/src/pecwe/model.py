"""Domain vocabulary: identifiers, probabilities, catalogs, snapshots, series.

Every type here is immutable after construction, so instances can be shared
freely between threads.
"""

from __future__ import annotations

import datetime as _dt
import enum
import math
import re
from dataclasses import dataclass
from functools import cached_property, total_ordering
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from .errors import CatalogError, ParseError

ScoreDate = _dt.date

NVD_OTHER_TOKEN = "NVD-CWE-Other"
NVD_NOINFO_TOKEN = "NVD-CWE-noinfo"
_SPECIAL_TOKENS = {t.lower(): t for t in (NVD_OTHER_TOKEN, NVD_NOINFO_TOKEN)}
_CWE_RE = re.compile(r"^(?:CWE-)?(\d+)$", re.IGNORECASE)
_CVE_RE = re.compile(r"^CVE-(\d{4})-(\d{4,})$", re.IGNORECASE)

# First EPSS snapshot; also the first day of the version-1 era.
EPSS_FIRST_DATE = _dt.date(2021, 4, 14)


@total_ordering
@dataclass(frozen=True)
class CweId:
    """A View-1003 weakness number or one of NVD's two special designators.

    Numbered weaknesses sort before the designators.
    """

    value: int | str

    def __post_init__(self):
        if isinstance(self.value, bool):
            raise ValueError(f"invalid CWE value {self.value!r}")
        if isinstance(self.value, int):
            if self.value <= 0:
                raise ValueError(f"CWE number must be positive, got {self.value}")
        elif self.value not in (NVD_OTHER_TOKEN, NVD_NOINFO_TOKEN):
            raise ValueError(f"unknown CWE designator {self.value!r}")

    @property
    def is_special(self) -> bool:
        return isinstance(self.value, str)

    def _key(self):
        if self.is_special:
            return (1, 0, self.value)
        return (0, self.value, "")

    def __lt__(self, other):
        if not isinstance(other, CweId):
            return NotImplemented
        return self._key() < other._key()

    def __str__(self) -> str:
        return self.value if self.is_special else f"CWE-{self.value}"


NVD_OTHER = CweId(NVD_OTHER_TOKEN)
NVD_NOINFO = CweId(NVD_NOINFO_TOKEN)
SPECIAL_DESIGNATORS = (NVD_OTHER, NVD_NOINFO)


def parse_cwe_id(text: str) -> CweId:
    """Parse ``CWE-79``, ``79`` or a special designator token (any case)."""
    token = text.strip() if isinstance(text, str) else ""
    if not token:
        raise ParseError(f"empty CWE identifier {text!r}")
    special = _SPECIAL_TOKENS.get(token.lower())
    if special is not None:
        return CweId(special)
    m = _CWE_RE.match(token)
    if m is None or int(m.group(1)) <= 0:
        raise ParseError(f"malformed CWE identifier {text!r}")
    return CweId(int(m.group(1)))


class CveId(NamedTuple):
    year: int
    sequence: int

    def __str__(self) -> str:
        return f"CVE-{self.year:04d}-{self.sequence:04d}"


def parse_cve_id(text: str) -> CveId:
    m = _CVE_RE.match(text.strip())
    if m is None:
        raise ParseError(f"malformed CVE identifier {text!r}")
    seq_text = m.group(2)
    sequence = int(seq_text)
    # Longer-than-4 sequences never carry leading zeros in canonical form.
    if sequence < 1 or (len(seq_text) > 4 and seq_text[0] == "0"):
        raise ParseError(f"non-canonical CVE identifier {text!r}")
    return CveId(int(m.group(1)), sequence)


class Probability(float):
    """A float constrained to the closed unit interval."""

    def __new__(cls, value):
        v = float(value)
        if math.isnan(v) or v < 0.0 or v > 1.0:
            raise ValueError(f"probability out of range: {value!r}")
        return super().__new__(cls, v)


def check_probability(value: float) -> float:
    v = float(value)
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"probability out of range: {value!r}")
    return v


def parse_score_date(text: str) -> ScoreDate:
    """Parse ``YYYY-MM-DD``; a trailing time component is ignored."""
    try:
        return _dt.date.fromisoformat(text.strip()[:10])
    except ValueError as exc:
        raise ParseError(f"malformed date {text!r}") from exc


@dataclass(frozen=True)
class CweCatalog:
    nodes: frozenset
    child_edges: Mapping[CweId, frozenset]
    snapshot_label: str = ""

    def __post_init__(self):
        nodes = frozenset(self.nodes)
        edges = {p: frozenset(c) for p, c in self.child_edges.items() if c}
        for parent, children in edges.items():
            if parent not in nodes:
                raise CatalogError(f"edge from unknown node {parent}")
            unknown = sorted(c for c in children if c not in nodes)
            if unknown:
                raise CatalogError(
                    f"{parent} references unknown node(s) {', '.join(map(str, unknown))}"
                )
            if parent.is_special:
                raise CatalogError(f"special designator {parent} cannot have children")
        for special in SPECIAL_DESIGNATORS:
            if special not in nodes:
                raise CatalogError(f"catalog is missing {special}")
        try:
            tuple(TopologicalSorter(edges).static_order())
        except CycleError as exc:
            cycle = " -> ".join(str(n) for n in exc.args[1])
            raise CatalogError(f"cycle in catalog hierarchy: {cycle}") from exc
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "child_edges", edges)

    @classmethod
    def from_parents(cls, parents: Mapping[CweId, CweId | None], snapshot_label: str = "") -> "CweCatalog":
        """Build from a child -> parent (or None for roots) mapping.

        The two special designators are added as isolated nodes if absent.
        """
        nodes = set(parents)
        nodes.update(SPECIAL_DESIGNATORS)
        edges: dict[CweId, set] = {}
        for child, parent in parents.items():
            if parent is not None:
                edges.setdefault(parent, set()).add(child)
        return cls(frozenset(nodes), edges, snapshot_label)

    def __contains__(self, cwe) -> bool:
        return cwe in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[CweId]:
        return iter(sorted(self.nodes))

    def children(self, cwe: CweId) -> frozenset:
        return self.child_edges.get(cwe, frozenset())

    def descendants(self, cwe: CweId) -> frozenset:
        """All nodes reachable from ``cwe`` through child edges (excluding itself)."""
        seen: set = set()
        stack = list(self.children(cwe))
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self.children(node))
        return frozenset(seen)

    @cached_property
    def parents(self) -> dict:
        out: dict = {}
        for parent, children in self.child_edges.items():
            for child in children:
                out.setdefault(child, set()).add(parent)
        return out

    def roots(self) -> list:
        return sorted(n for n in self.nodes if n not in self.parents)


@dataclass(frozen=True)
class CveCweIndex:
    assignments: Mapping[CveId, frozenset]
    retrieval_date: ScoreDate

    def __post_init__(self):
        clean = {}
        for cve, cwes in self.assignments.items():
            cwes = frozenset(cwes)
            if not cwes:
                raise ValueError(f"{cve} has an empty CWE set")
            clean[cve] = cwes
        object.__setattr__(self, "assignments", clean)

    def __len__(self) -> int:
        return len(self.assignments)

    @cached_property
    def _by_cwe(self) -> dict:
        inverse: dict = {}
        for cve, cwes in self.assignments.items():
            for cwe in cwes:
                inverse.setdefault(cwe, set()).add(cve)
        return {k: frozenset(v) for k, v in inverse.items()}

    def cves_for(self, cwe: CweId) -> frozenset:
        """CVEs directly assigned to ``cwe`` (no hierarchy expansion)."""
        return self._by_cwe.get(cwe, frozenset())


@dataclass(frozen=True)
class EpssSnapshot:
    score_date: ScoreDate
    model_version: str
    scores: Mapping[CveId, float]

    def __post_init__(self):
        for cve, p in self.scores.items():
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{cve}: score {p!r} outside [0, 1]")

    def score(self, cve: CveId) -> float:
        # Unscored (including not-yet-published) CVEs count as zero.
        return self.scores.get(cve, 0.0)

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class PecweSeries:
    cwe: CweId
    points: tuple
    schedule_label: str = ""

    def __post_init__(self):
        pts = tuple((d, check_probability(v)) for d, v in self.points)
        for (a, _), (b, _) in zip(pts, pts[1:]):
            if not a < b:
                raise ValueError(f"series dates must strictly increase ({a} then {b})")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def dates(self) -> list:
        return [d for d, _ in self.points]

    @property
    def values(self) -> list:
        return [v for _, v in self.points]


class RangeClass(str, enum.Enum):
    EXPLOITED = "Exploited"
    HIGH = "High"
    VARIABLE = "Variable"
    LOW = "Low"

    def __str__(self) -> str:
        return self.value


class PatternKind(str, enum.Enum):
    DROP = "Drop"
    JUMP = "Jump"
    STABLE = "Stable"
    STEP_UP = "StepUp"
    STEP_DOWN = "StepDown"

    def __str__(self) -> str:
        return self.value

    def mirrored(self) -> "PatternKind":
        return _MIRROR.get(self, self)


_MIRROR = {
    PatternKind.DROP: PatternKind.JUMP,
    PatternKind.JUMP: PatternKind.DROP,
    PatternKind.STEP_UP: PatternKind.STEP_DOWN,
    PatternKind.STEP_DOWN: PatternKind.STEP_UP,
}


@dataclass(frozen=True)
class PatternSegment:
    kind: PatternKind
    start: ScoreDate
    end: ScoreDate
    delta: float

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("segment start after end")


@dataclass(frozen=True)
class EpssVersionEra:
    version: int
    start: ScoreDate
    end: ScoreDate | None = None  # exclusive; None means open-ended

    def __contains__(self, day: ScoreDate) -> bool:
        return self.start <= day and (self.end is None or day < self.end)

    @property
    def label(self) -> str:
        return f"v{self.version}"


def default_eras() -> tuple:
    """EPSS model-version eras; a release date opens its own era."""
    v2 = _dt.date(2022, 2, 4)
    v3 = _dt.date(2023, 3, 7)
    return (
        EpssVersionEra(1, EPSS_FIRST_DATE, v2),
        EpssVersionEra(2, v2, v3),
        EpssVersionEra(3, v3, None),
    )


def validate_eras(eras: Sequence[EpssVersionEra]) -> None:
    for a, b in zip(eras, eras[1:]):
        if b.version <= a.version:
            raise ValueError("era versions must strictly increase")
        if a.end != b.start:
            raise ValueError(f"eras {a.label} and {b.label} are not contiguous")
    for era in eras:
        if era.end is not None and era.end <= era.start:
            raise ValueError(f"era {era.label} is empty")


def era_for(day: ScoreDate, eras: Iterable[EpssVersionEra] | None = None) -> EpssVersionEra | None:
    for era in default_eras() if eras is None else eras:
        if day in era:
            return era
    return None
