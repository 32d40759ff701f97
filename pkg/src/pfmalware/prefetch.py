"""Windows Prefetch (SCCA) parsing.

Only the header fields and the filename-strings section are decoded; metrics,
trace chains and volume information are skipped (volumes are counted).
Compressed Windows 10 files (``MAM`` signature) are recognized and rejected.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    InvalidArtifact,
    MalformedString,
    TooShort,
    TruncatedSection,
    UnknownSignature,
    UnsupportedCompressed,
    UnsupportedVersion,
)

SUPPORTED_VERSIONS = (17, 23, 26)
KNOWN_VERSIONS = (17, 23, 26, 30)

FILE_INFO_OFFSET = 0x54
NAME_OFFSET = 0x10
NAME_BYTES = 60
MAX_NAME_UNITS = NAME_BYTES // 2 - 1


@dataclass(frozen=True)
class _Layout:
    header_size: int         # header + file information block
    last_run_offset: int
    last_run_slots: int      # v26 keeps the eight most recent run times
    run_count_offset: int
    version_tag: int         # u32 at 0x08


# Per-version file information offsets. The first nine u32 fields of the
# file information block (metrics .. volumes size) are shared by all versions.
LAYOUTS = {
    17: _Layout(0x98, 0x78, 1, 0x90, 0x0F),
    23: _Layout(0xF0, 0x80, 1, 0x98, 0x11),
    26: _Layout(0x134, 0x80, 8, 0xD0, 0x11),
}


@dataclass(frozen=True)
class FormatInfo:
    version: int
    compressed: bool
    file_size: int


@dataclass(frozen=True)
class PrefetchArtifact:
    executable_name: str
    prefetch_hash: int
    run_count: int
    last_run_time: int
    volume_count: int
    loaded_files: tuple[str, ...]


def _u32(raw, offset):
    return struct.unpack_from("<I", raw, offset)[0]


def detect_format(raw: bytes) -> FormatInfo:
    raw = bytes(raw)
    if len(raw) < 8:
        raise TooShort(f"need at least 8 bytes, got {len(raw)}")
    if raw[:3] == b"MAM":
        # MAM header: signature, u32 uncompressed size
        return FormatInfo(30, True, _u32(raw, 4))
    if raw[4:8] != b"SCCA":
        raise UnknownSignature(f"no SCCA or MAM signature (got {raw[4:8]!r})")
    version = _u32(raw, 0)
    if version not in KNOWN_VERSIONS:
        raise UnsupportedVersion(f"unknown Prefetch format version {version}")
    size = _u32(raw, 0x0C) if len(raw) >= 0x10 else len(raw)
    return FormatInfo(version, False, size)


def _decode_utf16(buf: bytes) -> str:
    # damaged code units become U+FFFD; decoding continues
    return buf.decode("utf-16-le", errors="replace")


def _split_strings(section: bytes) -> list[str]:
    if len(section) % 2:
        raise MalformedString(f"filename-strings section has odd length {len(section)}")
    if not section:
        return []
    units = np.frombuffer(section, dtype="<u2")
    if units[-1] != 0:
        raise MalformedString("filename-strings section is not NUL-terminated")
    names, start = [], 0
    for pos in np.flatnonzero(units == 0).tolist():
        if pos > start:
            names.append(_decode_utf16(section[2 * start:2 * pos]))
        start = pos + 1
    return names


def parse_prefetch(raw: bytes) -> PrefetchArtifact:
    raw = bytes(raw)
    info = detect_format(raw)
    if info.compressed:
        raise UnsupportedCompressed("compressed (MAM) Prefetch files are not supported")
    if info.version not in LAYOUTS:
        raise UnsupportedVersion(f"Prefetch version {info.version} is not supported")
    layout = LAYOUTS[info.version]
    if len(raw) < layout.header_size:
        raise TruncatedSection(
            f"version {info.version} header needs {layout.header_size} bytes, file has {len(raw)}")

    name_units = raw[NAME_OFFSET:NAME_OFFSET + NAME_BYTES]
    nul = 0
    while nul < NAME_BYTES and name_units[nul:nul + 2] != b"\0\0":
        nul += 2
    executable_name = _decode_utf16(name_units[:nul])

    strings_offset = _u32(raw, FILE_INFO_OFFSET + 0x10)
    strings_size = _u32(raw, FILE_INFO_OFFSET + 0x14)
    if strings_offset + strings_size > len(raw):
        raise TruncatedSection(
            f"filename strings [{strings_offset:#x}, +{strings_size:#x}) exceed file size {len(raw):#x}")
    loaded = _split_strings(raw[strings_offset:strings_offset + strings_size])

    return PrefetchArtifact(
        executable_name=executable_name,
        prefetch_hash=_u32(raw, 0x4C),
        run_count=_u32(raw, layout.run_count_offset),
        last_run_time=struct.unpack_from("<Q", raw, layout.last_run_offset)[0],
        volume_count=_u32(raw, FILE_INFO_OFFSET + 0x1C),
        loaded_files=tuple(loaded),
    )


def _check_artifact(artifact: PrefetchArtifact):
    name = artifact.executable_name
    if "\0" in name:
        raise InvalidArtifact("executable name contains NUL")
    if len(name.encode("utf-16-le")) // 2 > MAX_NAME_UNITS:
        raise InvalidArtifact(f"executable name longer than {MAX_NAME_UNITS} UTF-16 code units")
    for path in artifact.loaded_files:
        if not path or "\0" in path:
            raise InvalidArtifact(f"loaded file entries must be non-empty and NUL-free: {path!r}")
    for field, bits in (("prefetch_hash", 32), ("run_count", 32), ("last_run_time", 64),
                        ("volume_count", 32)):
        value = getattr(artifact, field)
        if not 0 <= value < 2**bits:
            raise InvalidArtifact(f"{field}={value} does not fit in {bits} unsigned bits")


def emit_fixture(artifact: PrefetchArtifact, version: int = 23) -> bytes:
    """Serialize ``artifact`` as an uncompressed Prefetch file.

    The inverse of :func:`parse_prefetch`: metrics, trace-chain and volume
    sections are empty; only the volume count is recorded.
    """
    if version not in LAYOUTS:
        raise UnsupportedVersion(f"cannot emit Prefetch version {version}")
    _check_artifact(artifact)
    layout = LAYOUTS[version]

    strings = b"".join(p.encode("utf-16-le", errors="surrogatepass") + b"\0\0"
                       for p in artifact.loaded_files)
    strings_offset = layout.header_size
    volumes_offset = strings_offset + len(strings)
    total = volumes_offset

    header = bytearray(layout.header_size)
    struct.pack_into("<I4sII", header, 0, version, b"SCCA", layout.version_tag, total)
    name = artifact.executable_name.encode("utf-16-le", errors="surrogatepass")
    header[NAME_OFFSET:NAME_OFFSET + len(name)] = name
    struct.pack_into("<I", header, 0x4C, artifact.prefetch_hash)
    struct.pack_into(
        "<9I", header, FILE_INFO_OFFSET,
        layout.header_size, 0,              # metrics
        layout.header_size, 0,              # trace chains
        strings_offset, len(strings),
        volumes_offset, artifact.volume_count, 0,
    )
    struct.pack_into("<Q", header, layout.last_run_offset, artifact.last_run_time)
    struct.pack_into("<I", header, layout.run_count_offset, artifact.run_count)
    return bytes(header) + strings


_VOLUME_PREFIX = re.compile(r"^\\(?:VOLUME\{[^}]*\}|DEVICE\\HARDDISKVOLUME\d+)", re.IGNORECASE)


def normalize_path(path: str) -> str:
    """Uppercase a device path and strip its volume prefix."""
    path = path.strip().upper()
    while True:
        stripped = _VOLUME_PREFIX.sub("", path, count=1)
        if stripped == path:
            return path
        path = stripped


def extract_token_sequence(artifact_or_paths) -> tuple[str, ...]:
    """Normalized loaded-file tokens, in on-disk order, duplicates kept."""
    paths = getattr(artifact_or_paths, "loaded_files", artifact_or_paths)
    tokens = (normalize_path(p) for p in paths)
    return tuple(t for t in tokens if t)


def parse_listing(text: str) -> tuple[str, ...]:
    """Token sequence from a plain-text listing: one path per line, blank
    lines and ``#`` comments skipped."""
    lines = (line.strip() for line in text.splitlines())
    return extract_token_sequence([ln for ln in lines if ln and not ln.startswith("#")])


def listing_text(tokens) -> str:
    return "".join(f"{t}\n" for t in tokens)


def read_sequence(path) -> tuple[str, ...]:
    """Token sequence from a ``.pf`` file, or from a listing for any other suffix."""
    from pathlib import Path

    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".pf":
        return extract_token_sequence(parse_prefetch(data))
    return parse_listing(data.decode("utf-8"))
