"""Flat-file cache for EPSS snapshots, the CVE->CWE index and the catalog.

Layout under the cache root::

    manifest.tsv              YYYY-MM-DD<TAB>sha256 of each cached EPSS file
    epss/epss_scores-*.csv.gz original upstream bytes
    epss/unpublished.txt      dates the feed reported as not published
    nvd/index.json.gz         versioned CVE->CWE index document
    catalog/view1003.tsv      catalog table used by computations

Every file is written to a temporary name and renamed into place, and the
manifest is only updated after the data file is in place, so an interrupted
write never leaves a manifest entry pointing at a partial file. Writers
serialize on an advisory lock; readers take no lock.
"""

from __future__ import annotations

import contextlib
import datetime as _dt
import fcntl
import gzip
import hashlib
import json
import os
import threading
from pathlib import Path

from .errors import ChecksumError, ConflictError, ParseError, SchemaError
from .ingest import epss_filename, format_catalog_table, parse_catalog_table, parse_epss_csv, serialize_epss_csv
from .model import CveCweIndex, CweCatalog, EpssSnapshot, parse_cve_id, parse_cwe_id, parse_score_date

CACHE_ENV_VAR = "PECWE_CACHE_DIR"
INDEX_FORMAT = "pecwe-cve-cwe-index"
INDEX_FORMAT_VERSION = 1


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            tmp.unlink()
        raise


class Cache:
    def __init__(self, root):
        self.root = Path(root)
        self._thread_lock = threading.RLock()

    @classmethod
    def from_env(cls, default=None) -> "Cache":
        root = os.environ.get(CACHE_ENV_VAR) or default
        if not root:
            raise ValueError(f"no cache directory given and {CACHE_ENV_VAR} is unset")
        return cls(root)

    @property
    def epss_dir(self) -> Path:
        return self.root / "epss"

    @property
    def nvd_dir(self) -> Path:
        return self.root / "nvd"

    @property
    def catalog_dir(self) -> Path:
        return self.root / "catalog"

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.tsv"

    @property
    def index_path(self) -> Path:
        return self.nvd_dir / "index.json.gz"

    @property
    def catalog_path(self) -> Path:
        return self.catalog_dir / "view1003.tsv"

    @property
    def unpublished_path(self) -> Path:
        return self.epss_dir / "unpublished.txt"

    @contextlib.contextmanager
    def _write_lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        with self._thread_lock, open(self.root / ".lock", "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    # ------------------------------------------------------------ manifest

    def manifest(self) -> dict:
        if not self.manifest_path.exists():
            return {}
        entries = {}
        for line_no, line in enumerate(self.manifest_path.read_text("utf-8").splitlines(), 1):
            if not line.strip():
                continue
            day, sep, digest = line.partition("\t")
            try:
                if not sep or len(digest) != 64:
                    raise ParseError("bad entry")
                entries[parse_score_date(day)] = digest
            except ParseError:
                raise SchemaError(f"manifest line {line_no} is malformed: {line!r}",
                                  reason="corrupt") from None
        return entries

    def _write_manifest(self, entries: dict) -> None:
        body = "".join(f"{d.isoformat()}\t{h}\n" for d, h in sorted(entries.items()))
        _atomic_write(self.manifest_path, body.encode("utf-8"))

    # ---------------------------------------------------------------- EPSS

    def snapshot_path(self, day: _dt.date) -> Path:
        return self.epss_dir / epss_filename(day)

    def put_epss_bytes(self, day: _dt.date, raw: bytes) -> bool:
        """Cache original file bytes for ``day``.

        Returns ``False`` when identical bytes are already cached. Raises
        :class:`ConflictError` if different bytes are cached for that date.
        """
        parse_epss_csv(raw, expected_date=day)
        digest = _sha256(raw)
        with self._write_lock():
            entries = self.manifest()
            known = entries.get(day)
            path = self.snapshot_path(day)
            if known is not None:
                if known != digest:
                    raise ConflictError(f"{day} is already cached with a different checksum")
                if path.exists() and _sha256(path.read_bytes()) == digest:
                    return False
            _atomic_write(path, raw)
            entries[day] = digest
            self._write_manifest(entries)
        return True

    def put_snapshot(self, snapshot: EpssSnapshot) -> bool:
        return self.put_epss_bytes(snapshot.score_date, serialize_epss_csv(snapshot))

    def get_epss_bytes(self, day: _dt.date) -> bytes | None:
        digest = self.manifest().get(day)
        if digest is None:
            return None
        try:
            raw = self.snapshot_path(day).read_bytes()
        except FileNotFoundError:
            raise ChecksumError(f"manifest lists {day} but its file is missing") from None
        if _sha256(raw) != digest:
            raise ChecksumError(f"checksum mismatch for cached snapshot {day}")
        return raw

    def get_snapshot(self, day: _dt.date) -> EpssSnapshot | None:
        raw = self.get_epss_bytes(day)
        return None if raw is None else parse_epss_csv(raw, expected_date=day)

    def has_snapshot(self, day: _dt.date) -> bool:
        return day in self.manifest()

    def list_available_dates(self, start: _dt.date, end: _dt.date) -> list:
        if start > end:
            raise ValueError("range start is after range end")
        return sorted(d for d in self.manifest() if start <= d <= end)

    def unpublished_dates(self) -> set:
        if not self.unpublished_path.exists():
            return set()
        text = self.unpublished_path.read_text("utf-8")
        return {parse_score_date(line) for line in text.splitlines() if line.strip()}

    def mark_unpublished(self, day: _dt.date) -> None:
        with self._write_lock():
            days = self.unpublished_dates() | {day}
            body = "".join(f"{d.isoformat()}\n" for d in sorted(days))
            _atomic_write(self.unpublished_path, body.encode("utf-8"))

    # --------------------------------------------------------------- index

    def persist_index(self, index: CveCweIndex) -> None:
        doc = {
            "format": INDEX_FORMAT,
            "format_version": INDEX_FORMAT_VERSION,
            "retrieval_date": index.retrieval_date.isoformat(),
            "assignments": {
                str(cve): [str(c) for c in sorted(cwes)]
                for cve, cwes in sorted(index.assignments.items())
            },
        }
        payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with self._write_lock():
            _atomic_write(self.index_path, gzip.compress(payload, mtime=0))

    def load_index(self) -> CveCweIndex:
        path = self.index_path
        if not path.exists():
            raise SchemaError(f"no CVE->CWE index at {path}; run the nvd ingest first",
                              reason="missing")
        try:
            doc = json.loads(gzip.decompress(path.read_bytes()))
        except (OSError, EOFError, ValueError) as exc:
            raise SchemaError(f"index file {path} is corrupt: {exc}", reason="corrupt") from exc
        if not isinstance(doc, dict) or doc.get("format") != INDEX_FORMAT \
                or not isinstance(doc.get("format_version"), int):
            raise SchemaError(f"index file {path} is corrupt: unrecognized header", reason="corrupt")
        version = doc["format_version"]
        if version != INDEX_FORMAT_VERSION:
            raise SchemaError(
                f"index format version {version} is not supported "
                f"(this build reads version {INDEX_FORMAT_VERSION})", reason="version")
        try:
            assignments = {
                parse_cve_id(cve): frozenset(parse_cwe_id(c) for c in cwes)
                for cve, cwes in doc["assignments"].items()
            }
            return CveCweIndex(assignments, parse_score_date(doc["retrieval_date"]))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise SchemaError(f"index file {path} is corrupt: {exc}", reason="corrupt") from exc

    # ------------------------------------------------------------- catalog

    def put_catalog(self, catalog: CweCatalog) -> None:
        with self._write_lock():
            _atomic_write(self.catalog_path, format_catalog_table(catalog).encode("utf-8"))

    def load_catalog(self) -> CweCatalog | None:
        if not self.catalog_path.exists():
            return None
        return parse_catalog_table(self.catalog_path.read_text("utf-8"))
