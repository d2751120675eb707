"""Feed clients and parsers for EPSS daily CSVs, the NVD CVE API and the CWE catalog.

Every fetch function accepts a :class:`FeedSource` that points either at the
live HTTP service or at a local directory holding files in the upstream
formats, so the whole pipeline runs offline against fixtures.
"""

from __future__ import annotations

import csv
import datetime as _dt
import enum
import gzip
import io
import json
import logging
import math
import threading
import time
import xml.etree.ElementTree as ET
import zipfile
from bisect import bisect_right
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import (
    CatalogError,
    NotPublished,
    ParseError,
    RateLimited,
    SchemaError,
    TransportError,
)
from .model import (
    EPSS_FIRST_DATE,
    SPECIAL_DESIGNATORS,
    CveCweIndex,
    CweCatalog,
    CweId,
    EpssSnapshot,
    parse_cve_id,
    parse_cwe_id,
    parse_score_date,
)

log = logging.getLogger(__name__)

EPSS_BASE_URL = "https://epss.cyentia.com/"
NVD_BASE_URL = "https://services.nvd.nist.gov/rest/json/cves/2.0"
CWE_CATALOG_URL = "https://cwe.mitre.org/data/xml/cwec_latest.xml.zip"
BUNDLED_CATALOG_LABEL = "View-1003 as of March 2023"

NVD_RATE_LIMIT = 5
NVD_RATE_LIMIT_WITH_KEY = 50
RATE_WINDOW_SECONDS = 30.0


class RateLimiter:
    """Allow at most ``max_requests`` calls to :meth:`acquire` per rolling window.

    ``clock`` and ``sleep`` are injectable so pacing can be tested without
    real waiting.
    """

    def __init__(self, max_requests: int, window: float = RATE_WINDOW_SECONDS,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if max_requests < 1:
            raise ValueError("rate limit must be at least 1")
        self.max_requests = max_requests
        self.window = window
        self._clock = clock
        self._sleep = sleep
        self._stamps: list[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self._clock()
                # same expression as the wait below, so a positive wait is guaranteed
                while self._stamps and self._stamps[0] + self.window <= now:
                    self._stamps.pop(0)
                if len(self._stamps) < self.max_requests:
                    self._stamps.append(now)
                    return
                self._sleep(self._stamps[0] + self.window - now)


class FeedKind(str, enum.Enum):
    LIVE_HTTP = "live"
    LOCAL_DIRECTORY = "local"


@dataclass(frozen=True)
class FeedSource:
    kind: FeedKind
    base_location: str
    api_key: str | None = field(default=None, repr=False)
    rate_limit: int = NVD_RATE_LIMIT
    limiter: RateLimiter | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.rate_limit < 1:
            raise ValueError("rate_limit must be >= 1")
        if self.kind is FeedKind.LIVE_HTTP:
            if not str(self.base_location).startswith(("http://", "https://")):
                raise ValueError(f"live feed needs an http(s) URL, got {self.base_location!r}")
        else:
            path = Path(self.base_location)
            if not path.exists():
                raise ValueError(f"local feed path does not exist: {path}")
        if self.limiter is None:
            object.__setattr__(self, "limiter", RateLimiter(self.rate_limit))

    @classmethod
    def live(cls, url: str, api_key: str | None = None, rate_limit: int | None = None) -> "FeedSource":
        if rate_limit is None:
            rate_limit = NVD_RATE_LIMIT_WITH_KEY if api_key else NVD_RATE_LIMIT
        return cls(FeedKind.LIVE_HTTP, url, api_key, rate_limit)

    @classmethod
    def local(cls, path) -> "FeedSource":
        return cls(FeedKind.LOCAL_DIRECTORY, str(path))

    @classmethod
    def from_location(cls, location: str, api_key: str | None = None) -> "FeedSource":
        if location.startswith(("http://", "https://")):
            return cls.live(location, api_key)
        return cls.local(location)

    @property
    def path(self) -> Path:
        return Path(self.base_location)


def _default_session():
    import requests

    return requests.Session()


def _http_get(source: FeedSource, url: str, session=None, params=None, headers=None):
    source.limiter.acquire()
    session = session or _default_session()
    try:
        return session.get(url, params=params, headers=headers, timeout=60)
    except Exception as exc:  # requests raises a family of transport errors
        raise TransportError(f"GET {url} failed: {exc}") from exc


# --------------------------------------------------------------------- EPSS

def epss_filename(day: _dt.date) -> str:
    return f"epss_scores-{day.isoformat()}.csv.gz"


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data.decode("utf-8-sig")


def _parse_header_comment(line: str) -> dict:
    meta = {}
    for part in line.lstrip("#").split(","):
        key, sep, value = part.partition(":")
        if sep:
            meta[key.strip()] = value.strip()
    return meta


def parse_epss_csv(data: bytes | str, expected_date: _dt.date | None = None) -> EpssSnapshot:
    """Parse one EPSS daily file (gzip or plain text).

    Row numbers in errors count the ``cve,epss,percentile`` header as row 1;
    the leading ``#model_version`` comment is not counted.
    """
    text = _decode(data)
    lines = text.splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = _parse_header_comment(lines[0])
        lines = lines[1:]
    reader = csv.reader(lines)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise ParseError("missing header row", row=1) from None
    if "cve" not in header or "epss" not in header:
        raise ParseError(f"unexpected header {header}", row=1)
    i_cve, i_epss = header.index("cve"), header.index("epss")
    i_pct = header.index("percentile") if "percentile" in header else None

    score_date = expected_date
    if "score_date" in meta:
        header_date = parse_score_date(meta["score_date"])
        if expected_date is not None and header_date != expected_date:
            raise ParseError(f"file is dated {header_date}, expected {expected_date}")
        score_date = header_date
    if score_date is None:
        raise ParseError("score date unknown: no header comment and no expected date")

    scores = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            cve = parse_cve_id(row[i_cve])
            score = float(row[i_epss])
            if i_pct is not None and i_pct < len(row) and row[i_pct].strip():
                float(row[i_pct])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed row {row!r}: {exc}", row=row_no) from None
        if math.isnan(score) or not 0.0 <= score <= 1.0:
            raise ParseError(f"score {row[i_epss]!r} outside [0, 1]", row=row_no)
        if cve in scores:
            raise ParseError(f"duplicate entry for {cve}", row=row_no)
        scores[cve] = score
    return EpssSnapshot(score_date, meta.get("model_version", "unknown"), scores)


def serialize_epss_csv(snapshot: EpssSnapshot) -> bytes:
    """Render a snapshot in the upstream gzip CSV layout (byte-deterministic)."""
    ordered = sorted(snapshot.scores.items())
    values = sorted(snapshot.scores.values())
    n = len(values)
    buf = io.StringIO()
    buf.write(f"#model_version:{snapshot.model_version},"
              f"score_date:{snapshot.score_date.isoformat()}T00:00:00+0000\n")
    buf.write("cve,epss,percentile\n")
    for cve, score in ordered:
        pct = bisect_right(values, score) / n
        buf.write(f"{cve},{score!r},{pct:.5f}\n")
    return gzip.compress(buf.getvalue().encode("utf-8"), mtime=0)


def fetch_epss_raw(source: FeedSource, day: _dt.date, session=None) -> bytes:
    """Return the original file bytes for ``day`` or raise :class:`NotPublished`."""
    if day < EPSS_FIRST_DATE:
        raise ValueError(f"EPSS has no scores before {EPSS_FIRST_DATE}")
    name = epss_filename(day)
    if source.kind is FeedKind.LOCAL_DIRECTORY:
        path = source.path / name
        if not path.exists():
            plain = path.with_suffix("")
            if not plain.exists():
                raise NotPublished(day)
            path = plain
        return path.read_bytes()
    url = source.base_location.rstrip("/") + "/" + name
    resp = _http_get(source, url, session)
    if resp.status_code in (403, 404):
        # The EPSS bucket answers 403 for keys that do not exist.
        raise NotPublished(day)
    if resp.status_code == 429:
        raise RateLimited(f"EPSS throttled request for {day}")
    if resp.status_code != 200:
        raise TransportError(f"GET {url} returned HTTP {resp.status_code}")
    return resp.content


def fetch_epss_snapshot(source: FeedSource, day: _dt.date, session=None) -> EpssSnapshot:
    return parse_epss_csv(fetch_epss_raw(source, day, session), expected_date=day)


# ---------------------------------------------------------------------- NVD

def extract_weaknesses(cve_record: dict, primary_only: bool = False) -> frozenset:
    """Collect CWE ids from one NVD ``cve`` object's weakness descriptions.

    Values that are neither ``CWE-N`` nor a special designator are ignored.
    """
    found = set()
    for weakness in cve_record.get("weaknesses") or ():
        if primary_only and weakness.get("type") != "Primary":
            continue
        for desc in weakness.get("description") or ():
            value = desc.get("value", "")
            try:
                found.add(parse_cwe_id(value))
            except ParseError:
                log.debug("ignoring weakness value %r", value)
    return frozenset(found)


def _parse_nvd_page(payload: dict, primary_only: bool) -> list:
    vulns = payload.get("vulnerabilities")
    if not isinstance(vulns, list):
        raise SchemaError("NVD response has no 'vulnerabilities' list")
    batch = []
    for i, item in enumerate(vulns):
        record = item.get("cve") if isinstance(item, dict) else None
        if not isinstance(record, dict) or "id" not in record:
            raise SchemaError(f"vulnerability #{i} lacks cve.id")
        try:
            cve = parse_cve_id(record["id"])
        except ParseError as exc:
            raise SchemaError(str(exc)) from exc
        cwes = extract_weaknesses(record, primary_only)
        if cwes:
            batch.append((cve, cwes))
    return batch


def _load_local_nvd(path: Path) -> list:
    files = [path] if path.is_file() else sorted(
        p for p in path.iterdir() if p.name.endswith((".json", ".json.gz"))
    )
    vulns: list = []
    for p in files:
        raw = p.read_bytes()
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{p.name}: invalid JSON ({exc})", reason="corrupt") from exc
        page = doc.get("vulnerabilities")
        if not isinstance(page, list):
            raise SchemaError(f"{p.name}: no 'vulnerabilities' list")
        vulns.extend(page)
    return vulns


def fetch_nvd_mappings(source: FeedSource, resume_token: int | None = None, *,
                       results_per_page: int = 2000, primary_only: bool = False,
                       session=None) -> tuple:
    """Fetch one page of CVE -> CWE assignments.

    Returns ``(batch, next_token)`` where ``batch`` is a list of
    ``(CveId, frozenset[CweId])`` and ``next_token`` is ``None`` after the
    last page. CVEs without any usable weakness value are left out.
    """
    start = resume_token or 0
    if source.kind is FeedKind.LOCAL_DIRECTORY:
        vulns = _load_local_nvd(source.path)
        page = {"vulnerabilities": vulns[start:start + results_per_page]}
        total = len(vulns)
        returned = len(page["vulnerabilities"])
    else:
        headers = {"apiKey": source.api_key} if source.api_key else None
        params = {"startIndex": start, "resultsPerPage": results_per_page}
        resp = _http_get(source, source.base_location, session, params=params, headers=headers)
        if resp.status_code in (403, 429, 503):
            retry = float(resp.headers.get("Retry-After", 6) or 6)
            raise RateLimited(f"NVD returned HTTP {resp.status_code}", retry_after=retry)
        if resp.status_code != 200:
            raise TransportError(f"NVD returned HTTP {resp.status_code}")
        try:
            page = resp.json()
        except ValueError as exc:
            raise SchemaError(f"NVD response is not JSON: {exc}", reason="corrupt") from exc
        if "totalResults" not in page:
            raise SchemaError("NVD response lacks totalResults")
        total = int(page["totalResults"])
        returned = len(page.get("vulnerabilities") or ())
    batch = _parse_nvd_page(page, primary_only)
    nxt = start + returned
    return batch, (nxt if returned and nxt < total else None)


def iter_nvd_mappings(source: FeedSource, *, results_per_page: int = 2000,
                      primary_only: bool = False, session=None, max_retries: int = 5,
                      sleep: Callable[[float], None] = time.sleep) -> Iterator[list]:
    """Yield successive pages, retrying throttled requests."""
    token = None
    while True:
        for attempt in range(max_retries + 1):
            try:
                batch, token = fetch_nvd_mappings(
                    source, token, results_per_page=results_per_page,
                    primary_only=primary_only, session=session)
                break
            except RateLimited as exc:
                if attempt == max_retries:
                    raise
                log.warning("NVD throttled, retrying in %.0fs", exc.retry_after)
                sleep(exc.retry_after)
        yield batch
        if token is None:
            return


def build_index(batches: Iterable[Iterable], retrieval_date: _dt.date | None = None) -> CveCweIndex:
    """Merge pages into one index; a later page replaces an earlier assignment."""
    merged = {}
    for batch in batches:
        for cve, cwes in batch:
            merged[cve] = frozenset(cwes)
    return CveCweIndex(merged, retrieval_date or _dt.date.today())


# ------------------------------------------------------------------ catalog

def parse_catalog_table(text: str, label: str | None = None) -> CweCatalog:
    """Parse ``cwe_id<TAB>parent_id_or_ROOT`` rows.

    ``#`` lines are comments; when ``label`` is omitted the first comment
    becomes the snapshot label. A child may appear on several rows to list
    more than one parent.
    """
    nodes: set = set()
    edges: dict = {}
    seen_rows: set = set()
    comments = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line.lstrip("# ").strip())
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CatalogError(f"line {line_no}: expected 2 tab-separated fields")
        try:
            child = parse_cwe_id(parts[0])
            parent = None if parts[1].strip().upper() == "ROOT" else parse_cwe_id(parts[1])
        except ParseError as exc:
            raise CatalogError(f"line {line_no}: {exc}") from exc
        if (child, parent) in seen_rows:
            raise CatalogError(f"line {line_no}: duplicate row for {child}")
        seen_rows.add((child, parent))
        nodes.add(child)
        if parent is not None:
            edges.setdefault(parent, set()).add(child)
    orphans = sorted(p for p in edges if p not in nodes)
    if orphans:
        raise CatalogError(f"parent(s) without a row: {', '.join(map(str, orphans))}")
    if label is None:
        label = comments[0] if comments else ""
    return CweCatalog(frozenset(nodes | set(SPECIAL_DESIGNATORS)), edges, label)


def format_catalog_table(catalog: CweCatalog) -> str:
    lines = [f"# {catalog.snapshot_label}".rstrip()]
    for cwe in catalog:
        if cwe.is_special:
            continue
        parents = sorted(catalog.parents.get(cwe, ()))
        if not parents:
            lines.append(f"{cwe.value}\tROOT")
        for parent in parents:
            lines.append(f"{cwe.value}\t{parent.value}")
    return "\n".join(lines) + "\n"


def load_bundled_catalog() -> CweCatalog:
    text = resources.files("pecwe").joinpath("data/view1003.tsv").read_text("utf-8")
    return parse_catalog_table(text, BUNDLED_CATALOG_LABEL)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_catalog_xml(data: bytes, view_id: str = "1003") -> CweCatalog:
    """Extract the members of ``view_id`` and their view-scoped ChildOf edges."""
    if data[:2] == b"PK":
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            names = [n for n in zf.namelist() if n.endswith(".xml")]
            if not names:
                raise CatalogError("zip archive holds no XML file")
            data = zf.read(names[0])
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise CatalogError(f"invalid catalog XML: {exc}") from exc

    members: set = set()
    view_found = False
    weakness_ids: set = set()
    child_of: list = []
    for el in root.iter():
        tag = _local(el.tag)
        if tag == "View" and el.get("ID") == view_id:
            view_found = True
            for m in el.iter():
                if _local(m.tag) == "Has_Member" and m.get("View_ID", view_id) == view_id:
                    members.add(parse_cwe_id(m.get("CWE_ID", "")))
        elif tag == "Weakness":
            wid = parse_cwe_id(el.get("ID", ""))
            weakness_ids.add(wid)
            for rel in el.iter():
                if (_local(rel.tag) == "Related_Weakness" and rel.get("Nature") == "ChildOf"
                        and rel.get("View_ID") == view_id):
                    child_of.append((wid, parse_cwe_id(rel.get("CWE_ID", ""))))
    if not view_found:
        raise CatalogError(f"view {view_id} not present in catalog XML")
    if weakness_ids:
        missing = sorted(members - weakness_ids)
        if missing:
            raise CatalogError(f"view member(s) without a weakness entry: {', '.join(map(str, missing))}")
    edges: dict = {}
    for child, parent in child_of:
        if child not in members:
            continue
        if parent not in members:
            raise CatalogError(f"{child} is ChildOf {parent}, which is not a view member")
        edges.setdefault(parent, set()).add(child)
    version = root.get("Version")
    label = f"View-{view_id}" + (f" from CWE {version}" if version else "")
    return CweCatalog(frozenset(members | set(SPECIAL_DESIGNATORS)), edges, label)


def load_view1003(source: FeedSource | None = None, session=None) -> CweCatalog:
    """Load the catalog from the bundled table (``source=None``), a local file
    or directory (table or XML), or the live MITRE download."""
    if source is None:
        return load_bundled_catalog()
    if source.kind is FeedKind.LIVE_HTTP:
        resp = _http_get(source, source.base_location, session)
        if resp.status_code != 200:
            raise TransportError(f"catalog download returned HTTP {resp.status_code}")
        return parse_catalog_xml(resp.content)
    path = source.path
    if path.is_dir():
        candidates = [path / "view1003.tsv"] + sorted(path.glob("cwec*.xml*"))
        existing = [p for p in candidates if p.exists()]
        if not existing:
            raise CatalogError(f"no catalog table or XML found in {path}")
        path = existing[0]
    if path.suffix == ".tsv":
        return parse_catalog_table(path.read_text("utf-8"))
    return parse_catalog_xml(path.read_bytes())
