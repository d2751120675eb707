"""``pecwe`` command line: ingest feeds into the cache and produce reports.

Configuration precedence is command-line flag, then environment variable,
then ``--config`` file (``key = value`` lines), then built-in default.

Exit codes: 0 success, 1 feed or infrastructure failure, 2 usage or
precondition error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analytics import RoundingPolicy, era_boundaries, frequency_correlation, summarize
from .errors import (
    ChecksumError,
    ConflictError,
    DegenerateInput,
    EmptySeries,
    EraGap,
    MissingData,
    NotPublished,
    ParseError,
    PecweError,
    RateLimited,
    SchemaError,
    TooShort,
    TransportError,
    UnknownCwe,
)
from .ingest import (
    EPSS_BASE_URL,
    NVD_BASE_URL,
    FeedSource,
    build_index,
    fetch_epss_raw,
    iter_nvd_mappings,
    load_bundled_catalog,
    load_view1003,
)
from .metric import cve_closure, pecwe_series_many, weekly_schedule
from .model import RangeClass, default_eras, era_for, parse_cwe_id, parse_score_date
from .patterns import PatternParams, detect_patterns
from .analytics import split_by_era
from .report import Table, render_csv, render_json, svg_chart
from .store import CACHE_ENV_VAR, INDEX_FORMAT_VERSION, Cache

log = logging.getLogger("pecwe")

API_KEY_ENV_VAR = "PECWE_NVD_API_KEY"
WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

DEFAULTS = {
    "cache_dir": str(Path.home() / ".cache" / "pecwe"),
    "epss_source": EPSS_BASE_URL,
    "nvd_source": NVD_BASE_URL,
    "catalog_source": "bundled",
    "nvd_api_key": "",
    "from": "2021-04-14",
    "to": "2024-03-06",
    "anchor_weekday": "wednesday",
    "round": "2",
    "threshold": "0.1",
    "abrupt_span": "2",
    "min_step_span": "5",
    "monotone_fraction": "0.8",
    "min_stable_span": "3",
    "format": "csv",
    "workers": "1",
    "primary_only": "false",
}
ENV_KEYS = {"cache_dir": CACHE_ENV_VAR, "nvd_api_key": API_KEY_ENV_VAR}
# Keys echoed into JSON report metadata; locations and secrets stay out so
# reports are identical across machines.
META_KEYS = ("from", "to", "anchor_weekday", "round", "threshold", "abrupt_span",
             "min_step_span", "monotone_fraction", "min_stable_span")


class UsageError(PecweError):
    pass


@dataclass(frozen=True)
class RunConfig:
    cache_dir: Path
    epss_source: str
    nvd_source: str
    catalog_source: str
    nvd_api_key: str
    date_from: _dt.date
    date_to: _dt.date
    anchor_weekday: int
    rounding: RoundingPolicy
    threshold: float
    pattern_params: PatternParams
    output_format: str
    workers: int
    primary_only: bool
    raw: dict
    origin: dict

    def meta(self) -> dict:
        return {k: self.raw[k] for k in META_KEYS}


def read_config_file(path) -> dict:
    values = {}
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{line_no}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{line_no}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(flags: dict, env=None) -> RunConfig:
    env = os.environ if env is None else env
    file_values = read_config_file(flags["config"]) if flags.get("config") else {}
    raw, origin = {}, {}
    for key, default in DEFAULTS.items():
        if flags.get(key) is not None:
            raw[key], origin[key] = str(flags[key]), "flag"
        elif key in ENV_KEYS and env.get(ENV_KEYS[key]):
            raw[key], origin[key] = env[ENV_KEYS[key]], "env"
        elif key in file_values:
            raw[key], origin[key] = file_values[key], "file"
        else:
            raw[key], origin[key] = default, "default"
    try:
        weekday = raw["anchor_weekday"].lower()
        if weekday not in WEEKDAYS:
            raise ValueError(f"unknown weekday {raw['anchor_weekday']!r}")
        fmt = raw["format"].lower()
        if fmt not in ("csv", "json", "svg"):
            raise ValueError(f"unknown format {raw['format']!r}")
        cfg = RunConfig(
            cache_dir=Path(raw["cache_dir"]).expanduser(),
            epss_source=raw["epss_source"],
            nvd_source=raw["nvd_source"],
            catalog_source=raw["catalog_source"],
            nvd_api_key=raw["nvd_api_key"],
            date_from=parse_score_date(raw["from"]),
            date_to=parse_score_date(raw["to"]),
            anchor_weekday=WEEKDAYS.index(weekday),
            rounding=RoundingPolicy(int(raw["round"])),
            threshold=float(raw["threshold"]),
            pattern_params=PatternParams(int(raw["abrupt_span"]), int(raw["min_step_span"]),
                                         float(raw["monotone_fraction"]), int(raw["min_stable_span"])),
            output_format=fmt,
            workers=int(raw["workers"]),
            primary_only=raw["primary_only"].lower() in ("1", "true", "yes", "on"),
            raw=raw,
            origin=origin,
        )
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    if cfg.date_from > cfg.date_to:
        raise UsageError(f"--from {cfg.date_from} is after --to {cfg.date_to}")
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    if not cfg.threshold > 0:
        raise UsageError("--threshold must be positive")
    return cfg


def format_config(cfg: RunConfig) -> str:
    lines = []
    for key in DEFAULTS:
        value = cfg.raw[key]
        if key == "nvd_api_key" and value:
            value = "****"
        lines.append(f"{key} = {value}  # {cfg.origin[key]}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ inputs

class Inputs:
    """Catalog, index and snapshot access for report commands."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.cache = Cache(cfg.cache_dir)
        catalog = self.cache.load_catalog()
        if catalog is None:
            if cfg.catalog_source != "bundled":
                raise MissingData("no catalog in cache; run `pecwe ingest catalog` first")
            catalog = load_bundled_catalog()
        self.catalog = catalog
        try:
            self.index = self.cache.load_index()
        except SchemaError as exc:
            if exc.reason == "missing":
                raise MissingData("no CVE->CWE index in cache; run `pecwe ingest nvd` first") from exc
            raise
        self.schedule = weekly_schedule(cfg.date_from, cfg.date_to, cfg.anchor_weekday)
        available = set(self.cache.list_available_dates(cfg.date_from, cfg.date_to))
        unpublished = self.cache.unpublished_dates()
        missing = [d for d in self.schedule if d not in available and d not in unpublished]
        if missing:
            shown = ", ".join(d.isoformat() for d in missing[:5])
            more = f" and {len(missing) - 5} more" if len(missing) > 5 else ""
            raise MissingData(
                f"EPSS snapshots not cached for {shown}{more}; run "
                f"`pecwe ingest epss --from {cfg.date_from} --to {cfg.date_to} --weekly`")

    def select(self, cwe_args, all_flag=False) -> list:
        if all_flag or not cwe_args:
            return list(self.catalog)
        chosen = []
        for text in cwe_args:
            try:
                cwe = parse_cwe_id(text)
            except ParseError as exc:
                raise UsageError(str(exc)) from exc
            if cwe not in self.catalog:
                raise UnknownCwe(cwe)
            if cwe not in chosen:
                chosen.append(cwe)
        return sorted(chosen)

    def series(self, cwes) -> tuple:
        closures = [cve_closure(self.catalog, self.index, c) for c in cwes]
        label = f"weekly {WEEKDAYS[self.cfg.anchor_weekday]}"
        series = pecwe_series_many(closures, self.schedule, self.cache.get_snapshot,
                                   label, self.cfg.workers)
        return closures, series

    def summaries(self, cwes) -> list:
        closures, series = self.series(cwes)
        out = []
        for closure in closures:
            s = series[closure.cwe]
            if len(s) == 0:
                raise EmptySeries(f"{closure.cwe}: no snapshots in range")
            out.append(summarize(s, len(closure), self.cfg.rounding))
        return out


def _meta(cfg: RunConfig, command: str, inputs: Inputs | None = None) -> dict:
    meta = {"tool": "pecwe", "version": __version__, "command": command, "config": cfg.meta()}
    if inputs is not None:
        meta["catalog"] = inputs.catalog.snapshot_label
        meta["index_format_version"] = INDEX_FORMAT_VERSION
    return meta


def _render(cfg: RunConfig, table: Table, meta: dict) -> str:
    if cfg.output_format == "json":
        return render_json(table, meta)
    if cfg.output_format == "svg":
        raise UsageError(f"svg output is only available for plotdata, not {meta['command']}")
    return render_csv(table, cfg.rounding)


# ---------------------------------------------------------------- commands

def _source(location, api_key=None) -> FeedSource:
    try:
        return FeedSource.from_location(location, api_key)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_ingest(cfg: RunConfig, args, out) -> int:
    cache = Cache(cfg.cache_dir)
    if args.subfeed == "catalog":
        if cfg.catalog_source == "bundled":
            catalog = load_bundled_catalog()
        else:
            catalog = load_view1003(_source(cfg.catalog_source))
        cache.put_catalog(catalog)
        out.write(f"catalog: {len(catalog)} nodes ({catalog.snapshot_label})\n")
        return 0
    if args.subfeed == "nvd":
        source = _source(cfg.nvd_source, cfg.nvd_api_key or None)
        pages = 0

        def counted():
            nonlocal pages
            for batch in iter_nvd_mappings(source, primary_only=cfg.primary_only):
                pages += 1
                log.info("nvd page %d: %d mappings", pages, len(batch))
                yield batch

        index = build_index(counted())
        cache.persist_index(index)
        out.write(f"nvd: {len(index)} CVEs indexed from {pages} page(s)\n")
        return 0
    return _ingest_epss(cfg, args, cache, out)


def _ingest_epss(cfg: RunConfig, args, cache: Cache, out) -> int:
    if args.weekly:
        days = weekly_schedule(cfg.date_from, cfg.date_to, cfg.anchor_weekday)
    else:
        span = (cfg.date_to - cfg.date_from).days
        days = [cfg.date_from + _dt.timedelta(days=i) for i in range(span + 1)]
    source = _source(cfg.epss_source)
    unpublished = cache.unpublished_dates()
    counts = {"fetched": 0, "skipped": 0, "not published": 0, "failed": 0}

    def needs_fetch(day):
        if day in unpublished:
            return False
        try:
            return cache.get_epss_bytes(day) is None
        except ChecksumError:
            log.warning("%s: cached copy failed verification, refetching", day)
            return True

    def fetch(day):
        try:
            return day, fetch_epss_raw(source, day), None
        except (NotPublished, ValueError, TransportError, RateLimited, OSError) as exc:
            return day, None, exc

    todo = []
    for day in days:
        if needs_fetch(day):
            todo.append(day)
        else:
            counts["not published" if day in unpublished else "skipped"] += 1
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(fetch, todo))
    for day, raw, exc in results:
        if isinstance(exc, NotPublished):
            cache.mark_unpublished(day)
            log.warning("%s: not published by the feed", day)
            counts["not published"] += 1
            continue
        if exc is None:
            try:
                cache.put_epss_bytes(day, raw)
                counts["fetched"] += 1
                continue
            except (ParseError, ConflictError, OSError) as err:
                exc = err
        log.error("%s: %s", day, exc)
        counts["failed"] += 1
    out.write("epss: " + ", ".join(f"{n} {k}" for k, n in counts.items()) + "\n")
    return 1 if counts["failed"] else 0


def cmd_compute(cfg: RunConfig, args, out) -> int:
    inputs = Inputs(cfg)
    cwes = inputs.select(args.cwe, args.all)
    _, series = inputs.series(cwes)
    rows = [{"cwe": str(cwe), "date": d, "pecwe": v} for cwe in cwes for d, v in series[cwe].points]
    table = Table(["cwe", "date", "pecwe"], rows, frozenset({"pecwe"}))
    out.write(_render(cfg, table, _meta(cfg, "compute", inputs)))
    return 0


CLASS_ORDER = (RangeClass.EXPLOITED, RangeClass.HIGH, RangeClass.VARIABLE, RangeClass.LOW)


def cmd_classify(cfg: RunConfig, args, out) -> int:
    inputs = Inputs(cfg)
    summaries = inputs.summaries(inputs.select(args.cwe, args.all))
    rows = [{"cwe": str(s.cwe), "mean": s.mean_pecwe, "min": s.min, "max": s.max,
             "n_points": s.n_points, "cve_count": s.cve_count, "range_class": s.range_class}
            for s in summaries]
    total = len(summaries)
    hist = []
    for cls in CLASS_ORDER:
        n = sum(1 for s in summaries if s.range_class is cls)
        hist.append({"range_class": cls, "count": n, "percent": 100.0 * n / total})
    table = Table(["cwe", "mean", "min", "max", "n_points", "cve_count", "range_class"], rows,
                  frozenset({"mean", "min", "max"}),
                  [("histogram", Table(["range_class", "count", "percent"], hist, frozenset({"percent"})))])
    out.write(_render(cfg, table, _meta(cfg, "classify", inputs)))
    return 0


def cmd_patterns(cfg: RunConfig, args, out) -> int:
    inputs = Inputs(cfg)
    cwes = inputs.select(args.cwe, args.all)
    _, series = inputs.series(cwes)
    rows = []
    for cwe in cwes:
        s = series[cwe]
        events = []
        for era, sub in split_by_era(s):
            for seg in detect_patterns(sub, cfg.threshold, cfg.pattern_params):
                events.append((seg.start, 1, {"cwe": str(cwe), "era": era.label, "kind": seg.kind.value,
                                              "start": seg.start, "end": seg.end, "delta": seg.delta}))
        for b in era_boundaries(s):
            events.append((b.day, 0, {"cwe": str(cwe), "era": f"v{b.from_version}->v{b.to_version}",
                                      "kind": "EraBoundary", "start": b.day, "end": b.day,
                                      "delta": b.delta}))
        events.sort(key=lambda e: (e[0], e[1]))
        rows.extend(e[2] for e in events)
    table = Table(["cwe", "era", "kind", "start", "end", "delta"], rows, frozenset({"delta"}))
    out.write(_render(cfg, table, _meta(cfg, "patterns", inputs)))
    return 0


def cmd_correlate(cfg: RunConfig, args, out) -> int:
    inputs = Inputs(cfg)
    summaries = inputs.summaries(inputs.select(args.cwe, args.all))
    rho = frequency_correlation(summaries)
    rows = [{"cwe": str(s.cwe), "cve_count": s.cve_count, "mean_pecwe": s.mean_pecwe} for s in summaries]
    stats = [{"statistic": "spearman_rho", "value": rho},
             {"statistic": "n", "value": len(summaries)}]
    table = Table(["cwe", "cve_count", "mean_pecwe"], rows, frozenset({"mean_pecwe"}),
                  [("summary", Table(["statistic", "value"], stats, frozenset({"value"})))])
    out.write(_render(cfg, table, _meta(cfg, "correlate", inputs)))
    return 0


def cmd_plotdata(cfg: RunConfig, args, out) -> int:
    inputs = Inputs(cfg)
    meta = _meta(cfg, f"plotdata {args.kind}", inputs)
    if args.kind == "distribution":
        summaries = inputs.summaries(inputs.select(args.cwe, args.all))
        ordered = sorted(summaries, key=lambda s: (s.mean_pecwe, s.cwe))
        rows = [{"rank": i, "cwe": str(s.cwe), "mean_pecwe": s.mean_pecwe}
                for i, s in enumerate(ordered, 1)]
        table = Table(["rank", "cwe", "mean_pecwe"], rows, frozenset({"mean_pecwe"}))
        if cfg.output_format == "svg":
            out.write(svg_chart("Mean weekly probability per weakness",
                                [(r["rank"], r["mean_pecwe"]) for r in rows],
                                x_label="weakness (ordered by mean)", y_label="mean probability"))
            return 0
    elif args.kind == "scatter":
        closures, series = inputs.series(inputs.select(args.cwe, args.all))
        rows = []
        for closure in closures:
            n = len(closure)
            for d, v in series[closure.cwe].points:
                row = {"cwe": str(closure.cwe), "date": d, "cve_count": n, "pecwe": v}
                if args.log_x:
                    row["log10_cve_count"] = math.log10(n) if n > 0 else None
                rows.append(row)
        columns = ["cwe", "date", "cve_count", "pecwe"] + (["log10_cve_count"] if args.log_x else [])
        table = Table(columns, rows, frozenset({"pecwe", "log10_cve_count"}))
        if cfg.output_format == "svg":
            key = "log10_cve_count" if args.log_x else "cve_count"
            pts = [(r[key], r["pecwe"]) for r in rows if r.get(key) is not None]
            out.write(svg_chart("Weekly probability against number of CVEs", pts, mode="scatter",
                                x_label="log10(number of CVEs)" if args.log_x else "number of CVEs",
                                y_label="probability"))
            return 0
    else:
        cwes = inputs.select(args.cwe, args.all)
        if len(cwes) != 1 or args.all:
            raise UsageError("plotdata series needs exactly one --cwe")
        _, series = inputs.series(cwes)
        s = series[cwes[0]]
        rows = []
        for d, v in s.points:
            era = era_for(d)
            rows.append({"date": d, "pecwe": v, "era": era.label if era else None, "marker": None})
        for era in default_eras()[1:]:
            if cfg.date_from <= era.start <= cfg.date_to:
                rows.append({"date": era.start, "pecwe": None, "era": era.label,
                             "marker": f"epss {era.label} release"})
        rows.sort(key=lambda r: (r["date"], r["marker"] is None))
        table = Table(["date", "pecwe", "era", "marker"], rows, frozenset({"pecwe"}))
        if cfg.output_format == "svg":
            pts = [(d.toordinal(), v) for d, v in s.points]
            markers = []
            for r in rows:
                if r["marker"]:
                    after = [v for d, v in s.points if d >= r["date"]] or [v for _, v in s.points[-1:]] or [0.0]
                    markers.append((r["date"].toordinal(), after[0], r["marker"]))
            out.write(svg_chart(f"{cwes[0]} weekly probability", pts, markers=markers,
                                x_label="date", y_label="probability",
                                x_tick_format=lambda x: _dt.date.fromordinal(int(round(x))).isoformat()))
            return 0
    if cfg.output_format == "json":
        out.write(render_json(table, meta))
    else:
        out.write(render_csv(table, cfg.rounding))
    return 0


# ------------------------------------------------------------------ parser

def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("configuration")
    S = argparse.SUPPRESS
    g.add_argument("--config", default=S, help="key = value configuration file")
    g.add_argument("--cache-dir", dest="cache_dir", default=S)
    g.add_argument("--from", dest="from", default=S, metavar="YYYY-MM-DD")
    g.add_argument("--to", dest="to", default=S, metavar="YYYY-MM-DD")
    g.add_argument("--format", default=S, choices=["csv", "json", "svg"])
    g.add_argument("--round", default=S, type=int, metavar="DECIMALS")
    g.add_argument("--threshold", default=S, type=float)
    g.add_argument("--workers", default=S, type=int)
    g.add_argument("--anchor-weekday", dest="anchor_weekday", default=S)
    g.add_argument("--epss-source", dest="epss_source", default=S, help="URL or local directory")
    g.add_argument("--nvd-source", dest="nvd_source", default=S, help="URL or local directory/file")
    g.add_argument("--catalog-source", dest="catalog_source", default=S,
                   help="'bundled', URL, or local table/XML path")
    g.add_argument("--abrupt-span", dest="abrupt_span", default=S, type=int)
    g.add_argument("--min-step-span", dest="min_step_span", default=S, type=int)
    g.add_argument("--monotone-fraction", dest="monotone_fraction", default=S, type=float)
    g.add_argument("--min-stable-span", dest="min_stable_span", default=S, type=int)
    g.add_argument("--show-config", dest="show_config", action="store_true", default=S,
                   help="print the resolved configuration and exit")
    g.add_argument("-o", "--output", default=S, help="write the report here instead of stdout")
    g.add_argument("-v", "--verbose", action="store_true", default=S)


def _selection(parser) -> None:
    parser.add_argument("--cwe", action="append", default=[], help="weakness to include (repeatable)")
    parser.add_argument("--all", action="store_true", help="every catalog member (the default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pecwe", description=__doc__.splitlines()[0])
    _common(parser)
    parser.add_argument("--version", action="version", version=f"pecwe {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="populate the cache from a feed")
    p.add_argument("subfeed", choices=["epss", "nvd", "catalog"])
    p.add_argument("--weekly", action="store_true", help="only the anchor weekday (epss)")
    p.add_argument("--primary-only", dest="primary_only", action="store_const", const="true",
                   default=argparse.SUPPRESS, help="ignore Secondary NVD weakness entries")
    _common(p)
    p.set_defaults(handler=cmd_ingest)

    for name, handler, help_text in (
        ("compute", cmd_compute, "weekly probability per weakness"),
        ("classify", cmd_classify, "summary statistics and range classes"),
        ("patterns", cmd_patterns, "temporal pattern segments per EPSS era"),
        ("correlate", cmd_correlate, "rank correlation of CVE count and mean probability"),
    ):
        p = sub.add_parser(name, help=help_text)
        _selection(p)
        _common(p)
        p.set_defaults(handler=handler)

    p = sub.add_parser("plotdata", help="data (or SVG) behind the distribution, scatter and series charts")
    p.add_argument("kind", choices=["distribution", "scatter", "series"])
    p.add_argument("--log-x", dest="log_x", action="store_true", help="add log10 of the CVE count (scatter)")
    _selection(p)
    _common(p)
    p.set_defaults(handler=cmd_plotdata)
    return parser


USAGE_ERRORS = (UsageError, UnknownCwe, MissingData, DegenerateInput, TooShort, EmptySeries, EraGap)
FEED_ERRORS = (PecweError, OSError)


def main(argv=None, stdout=None, env=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(args)
    logging.basicConfig(level=logging.INFO if flags.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(flags, env)
        if flags.get("show_config"):
            stdout.write(format_config(cfg))
            return 0
        if not flags.get("command"):
            parser.print_usage(sys.stderr)
            return 2
        if flags.get("output"):
            with open(flags["output"], "w", encoding="utf-8", newline="") as fh:
                return args.handler(cfg, args, fh)
        return args.handler(cfg, args, stdout)
    except USAGE_ERRORS as exc:
        print(f"pecwe: error: {exc}", file=sys.stderr)
        return 2
    except FEED_ERRORS as exc:
        print(f"pecwe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
