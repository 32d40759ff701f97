"""Scan-report ingestion and vendor detection-string parsing."""
from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .exceptions import DuplicateSampleId, ReportParseError, SchemeError, UnparsableLabel

DEFAULT_VENDORS = ("Kaspersky", "ESET-NOD32", "Microsoft", "McAfee")


@dataclass(frozen=True)
class VendorLabels:
    sample_id: str
    detections: dict
    first_seen_year: int | None = None


@dataclass(frozen=True)
class LabelScheme:
    vendor: str
    rules: tuple                 # ((compiled pattern, group), ...)
    strip_prefixes: tuple = ()

    def __post_init__(self):
        if not self.rules:
            raise SchemeError(f"scheme {self.vendor!r} has no extraction rules")


def _offset_to_line(doc: str, pos: int) -> tuple[int, int]:
    line = doc.count("\n", 0, pos) + 1
    col = pos - (doc.rfind("\n", 0, pos) + 1) + 1
    return line, col


def load_reports(document: str, vendors=DEFAULT_VENDORS) -> list[VendorLabels]:
    """Parse a JSON array of scan reports.

    Each element looks like ``{"sha256": ..., "scans": {vendor: {"detected":
    bool, "result": str | null}}}`` with an optional ``first_seen_year``.
    Undetected and null results are dropped, as are vendors outside
    ``vendors`` (pass ``None`` to keep every vendor).
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ReportParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(data, list):
        raise ReportParseError("report document must be a JSON array", 1, 1)

    allowed = None if vendors is None else set(vendors)
    reports, seen = [], set()
    for n, obj in enumerate(data):
        if not isinstance(obj, dict) or not isinstance(obj.get("sha256"), str) or not obj["sha256"]:
            raise ReportParseError(f"report #{n} lacks a non-empty 'sha256' string")
        scans = obj.get("scans", {})
        if not isinstance(scans, dict):
            raise ReportParseError(f"report #{n}: 'scans' must be an object")
        sample_id = obj["sha256"].lower()
        if sample_id in seen:
            raise DuplicateSampleId(sample_id)
        seen.add(sample_id)
        detections = {}
        for vendor, scan in scans.items():
            if allowed is not None and vendor not in allowed:
                continue
            if not isinstance(scan, dict):
                raise ReportParseError(f"report #{n}: scan entry for {vendor!r} must be an object")
            result = scan.get("result")
            if scan.get("detected") and isinstance(result, str) and result.strip():
                detections[vendor] = result.strip()
        year = obj.get("first_seen_year")
        if year is not None and not isinstance(year, int):
            raise ReportParseError(f"report #{n}: 'first_seen_year' must be an integer")
        reports.append(VendorLabels(sample_id, detections, year))
    return reports


def load_reports_file(path, vendors=DEFAULT_VENDORS) -> list[VendorLabels]:
    return load_reports(Path(path).read_text(encoding="utf-8"), vendors)


def _parse_lines(value: str) -> list[str]:
    return [ln.strip() for ln in value.splitlines() if ln.strip()]


def parse_schemes(text: str) -> dict[str, LabelScheme]:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise SchemeError(str(exc)) from None
    schemes = {}
    for vendor in parser.sections():
        section = parser[vendor]
        rules = []
        for line in _parse_lines(section.get("rules", "")):
            group, _, pattern = line.partition(" ")
            try:
                rules.append((re.compile(pattern.strip(), re.IGNORECASE), int(group)))
            except (re.error, ValueError) as exc:
                raise SchemeError(f"[{vendor}] bad rule {line!r}: {exc}") from None
        prefixes = tuple(_parse_lines(section.get("strip_prefixes", "")))
        schemes[vendor] = LabelScheme(vendor, tuple(rules), prefixes)
    return schemes


def load_schemes(path=None) -> dict[str, LabelScheme]:
    """Rule tables from an INI file; the packaged defaults when ``path`` is None."""
    if path is None:
        text = resources.files("pfmalware.schemes").joinpath("default.ini").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_schemes(text)


def get_scheme(vendor: str, path=None) -> LabelScheme:
    schemes = load_schemes(path)
    for name, scheme in schemes.items():
        if name.lower() == vendor.lower():
            return scheme
    raise SchemeError(f"unknown scheme {vendor!r}; available: {', '.join(schemes)}")


def extract_family(scheme: LabelScheme, detection: str) -> str:
    """Family component of a detection string, in title case."""
    text = detection.strip()
    if not text:
        raise UnparsableLabel("empty detection string")
    lowered = text.lower()
    for prefix in scheme.strip_prefixes:
        if lowered.startswith(prefix.lower()):
            text = text[len(prefix):].lstrip()
            lowered = text.lower()
    for pattern, group in scheme.rules:
        m = pattern.search(text)
        if m and m.group(group) and m.group(group).strip():
            return m.group(group).strip().title()
    raise UnparsableLabel(f"{scheme.vendor}: cannot extract a family from {detection!r}")


@dataclass
class GroundTruth:
    families: dict = field(default_factory=dict)      # sample_id -> family
    dropped: dict = field(default_factory=dict)       # sample_id -> reason
    years: dict = field(default_factory=dict)         # sample_id -> first-seen year

    def summary(self) -> str:
        reasons = {}
        for reason in self.dropped.values():
            key = reason.split(":")[0]
            reasons[key] = reasons.get(key, 0) + 1
        parts = [f"{len(self.families)} labeled", f"{len(self.dropped)} dropped"]
        parts += [f"{k}={v}" for k, v in sorted(reasons.items())]
        return ", ".join(parts)


def build_ground_truth(reports, scheme: LabelScheme) -> GroundTruth:
    """Family per sample under one vendor scheme; unparsable or missing
    detections are dropped and recorded, never guessed."""
    truth = GroundTruth()
    for rep in reports:
        if rep.first_seen_year is not None:
            truth.years[rep.sample_id] = rep.first_seen_year
        detection = rep.detections.get(scheme.vendor)
        if detection is None:
            truth.dropped[rep.sample_id] = "undetected"
            continue
        try:
            truth.families[rep.sample_id] = extract_family(scheme, detection)
        except UnparsableLabel:
            truth.dropped[rep.sample_id] = f"unparsable: {detection}"
    return truth
