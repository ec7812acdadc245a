"""On-disk formats for annotations, detections, tracks, and manifests.

Everything is whitespace-separated text with a one-line versioned header
(``icevision-kit/v1 <kind>``).  Readers are strict: malformed input is
rejected with the file and line number, never repaired.  Writers are
atomic (temp file + rename) and byte-deterministic, and every writer's
output re-reads to the value that was written.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .core import (
    BoundingBox,
    ClassDistribution,
    Detection,
    FrameAnnotations,
    GroundTruthSign,
)
from .frames import BayerPattern, GrayImage, gray_from_cfa, read_pnm
from .taxonomy import ClassCode, MalformedCode
from .tracking import Source, Track, TrackEntry, TrackState

FORMAT_VERSION = "icevision-kit/v1"

_KINDS = ("annotations", "detections", "tracks", "manifest", "score")


class DatastoreError(ValueError):
    """File-level ingestion failure; message carries file and line."""

    def __init__(self, path, lineno: int | None, message: str):
        location = str(path) if lineno is None else f"{path}:{lineno}"
        super().__init__(f"{location}: {message}")
        self.path = str(path)
        self.lineno = lineno


class MalformedRecord(DatastoreError):
    pass


class InvalidDistribution(DatastoreError):
    pass


def _format_real(value: float) -> str:
    return f"{value:.6f}"


def _parse_real(token: str, path, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedRecord(path, lineno, f"{what} is not a number: {token!r}") from None
    return value


def _parse_frame(token: str, path, lineno: int) -> int:
    if not token.isdigit():
        raise MalformedRecord(path, lineno, f"frame index is not a non-negative integer: {token!r}")
    return int(token)


def _parse_box(tokens: list[str], path, lineno: int) -> BoundingBox:
    coords = [_parse_real(t, path, lineno, "box coordinate") for t in tokens]
    try:
        return BoundingBox(*coords)
    except ValueError as exc:
        raise MalformedRecord(path, lineno, f"bad box: {exc}") from None


def _parse_flag(token: str, path, lineno: int) -> bool:
    if token == "true":
        return True
    if token == "false":
        return False
    raise MalformedRecord(path, lineno, f"expected true/false, got {token!r}")


def _parse_opt_flag(token: str, path, lineno: int) -> bool | None:
    return None if token == "-" else _parse_flag(token, path, lineno)


def _parse_code(token: str, path, lineno: int) -> ClassCode:
    try:
        return ClassCode.parse(token)
    except MalformedCode as exc:
        raise MalformedRecord(path, lineno, f"bad class code: {exc}") from None


def _parse_distribution(token: str, path, lineno: int) -> ClassDistribution:
    dist: dict[ClassCode, float] = {}
    if ":" not in token:
        return {_parse_code(token, path, lineno): 1.0}
    for pair in token.split(","):
        code_s, sep, prob_s = pair.partition(":")
        if not sep:
            raise MalformedRecord(path, lineno, f"distribution entry missing ':': {pair!r}")
        code = _parse_code(code_s, path, lineno)
        prob = _parse_real(prob_s, path, lineno, "probability")
        if code in dist:
            raise InvalidDistribution(path, lineno, f"repeated code {code} in distribution")
        dist[code] = prob
    return dist


def _format_distribution(dist: ClassDistribution) -> str:
    items = sorted(dist.items(), key=lambda item: item[0].segments)
    return ",".join(f"{code}:{_format_real(prob)}" for code, prob in items)


def _opt_text(token: str) -> str | None:
    return None if token == "-" else token


def _text_or_dash(value: str | None) -> str:
    return "-" if value is None else value


def _flag_text(value: bool) -> str:
    return "true" if value else "false"


def _open_records(path, kind: str) -> Iterator[tuple[int, list[str]]]:
    """Generator over (lineno, fields) of a record file after validating
    its ``icevision-kit/v1 <kind>`` header."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise MalformedRecord(path, 1, "empty file, expected header")
        header = first.split()
        if len(header) != 2 or header[0] != FORMAT_VERSION or header[1] != kind:
            raise MalformedRecord(
                path, 1, f"expected header '{FORMAT_VERSION} {kind}', got {first.strip()!r}"
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def atomic_write_text(path, text: str) -> None:
    """Write text so readers never observe a half-written file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


_atomic_write = atomic_write_text


# --------------------------------------------------------------------------
# Annotations


def read_annotations(path, *, permissive: bool = False) -> list[FrameAnnotations]:
    """Load ground truth; only frames present in the file are annotated.

    Record: ``frame code x_min y_min x_max y_max data temporary`` with
    data ``-`` when absent.  A line holding just a frame number marks an
    annotated-but-empty frame.  With ``permissive=True``, records whose
    class code does not parse are skipped instead of fatal.
    """
    signs: dict[int, list[GroundTruthSign]] = {}
    seen: set[tuple[int, tuple[float, float, float, float], tuple[int, ...]]] = set()
    for lineno, fields in _open_records(path, "annotations"):
        if len(fields) == 1:
            frame = _parse_frame(fields[0], path, lineno)
            signs.setdefault(frame, [])
            continue
        if len(fields) != 8:
            raise MalformedRecord(
                path, lineno, f"annotation record needs 1 or 8 fields, got {len(fields)}"
            )
        frame = _parse_frame(fields[0], path, lineno)
        try:
            code = _parse_code(fields[1], path, lineno)
        except MalformedRecord:
            if permissive:
                signs.setdefault(frame, [])
                continue
            raise
        box = _parse_box(fields[2:6], path, lineno)
        key = (frame, (box.x_min, box.y_min, box.x_max, box.y_max), code.segments)
        if key in seen:
            raise MalformedRecord(path, lineno, f"duplicate annotation for frame {frame}, {code}")
        seen.add(key)
        signs.setdefault(frame, []).append(
            GroundTruthSign(
                frame_index=frame,
                box=box,
                code=code,
                associated_data=_opt_text(fields[6]),
                temporary=_parse_flag(fields[7], path, lineno),
            )
        )
    return [
        FrameAnnotations(frame_index=frame, signs=tuple(signs[frame]), annotated=True)
        for frame in sorted(signs)
    ]


def write_annotations(annotations: list[FrameAnnotations], path) -> None:
    lines = [f"{FORMAT_VERSION} annotations\n"]
    for ann in sorted(annotations, key=lambda a: a.frame_index):
        if not ann.annotated:
            continue
        if not ann.signs:
            lines.append(f"{ann.frame_index}\n")
        for sign in ann.signs:
            lines.append(
                " ".join(
                    (
                        str(ann.frame_index),
                        str(sign.code),
                        _format_real(sign.box.x_min),
                        _format_real(sign.box.y_min),
                        _format_real(sign.box.x_max),
                        _format_real(sign.box.y_max),
                        _text_or_dash(sign.associated_data),
                        _flag_text(sign.temporary),
                    )
                )
                + "\n"
            )
    _atomic_write(path, "".join(lines))


# --------------------------------------------------------------------------
# Detections


def _validated_detection(
    frame: int,
    dist: ClassDistribution,
    box: BoundingBox,
    data: str | None,
    temporary: bool | None,
    path,
    lineno: int,
) -> Detection:
    try:
        return Detection(
            frame_index=frame,
            box=box,
            class_distribution=dist,
            associated_data=data,
            temporary=temporary,
        )
    except ValueError as exc:
        raise InvalidDistribution(path, lineno, str(exc)) from None


def read_detections(path) -> dict[int, list[Detection]]:
    """Load detector output grouped by frame.

    Record: ``frame dist x_min y_min x_max y_max [data] [temporary]``
    where dist is ``code:prob[,code:prob...]`` or a bare code meaning
    probability 1.
    """
    out: dict[int, list[Detection]] = {}
    seen: set[tuple] = set()
    for lineno, fields in _open_records(path, "detections"):
        if len(fields) not in (6, 7, 8):
            raise MalformedRecord(
                path, lineno, f"detection record needs 6-8 fields, got {len(fields)}"
            )
        frame = _parse_frame(fields[0], path, lineno)
        dist = _parse_distribution(fields[1], path, lineno)
        box = _parse_box(fields[2:6], path, lineno)
        data = _opt_text(fields[6]) if len(fields) >= 7 else None
        temporary = _parse_opt_flag(fields[7], path, lineno) if len(fields) == 8 else None
        key = (
            frame,
            (box.x_min, box.y_min, box.x_max, box.y_max),
            tuple(sorted((c.segments, p) for c, p in dist.items())),
            data,
            temporary,
        )
        if key in seen:
            raise MalformedRecord(path, lineno, f"duplicate detection record on frame {frame}")
        seen.add(key)
        out.setdefault(frame, []).append(
            _validated_detection(frame, dist, box, data, temporary, path, lineno)
        )
    return out


def write_detections(detections: dict[int, list[Detection]], path) -> None:
    lines = [f"{FORMAT_VERSION} detections\n"]
    for frame in sorted(detections):
        for det in detections[frame]:
            fields = [
                str(frame),
                _format_distribution(det.class_distribution),
                _format_real(det.box.x_min),
                _format_real(det.box.y_min),
                _format_real(det.box.x_max),
                _format_real(det.box.y_max),
            ]
            if det.associated_data is not None or det.temporary is not None:
                fields.append(_text_or_dash(det.associated_data))
            if det.temporary is not None:
                fields.append(_flag_text(det.temporary))
            lines.append(" ".join(fields) + "\n")
    _atomic_write(path, "".join(lines))


# --------------------------------------------------------------------------
# Tracks


_SOURCE_TEXT = {Source.DETECTED: "detected", Source.INTERPOLATED: "interpolated"}
_TEXT_SOURCE = {v: k for k, v in _SOURCE_TEXT.items()}


def _entry_flags(entry: TrackEntry) -> str:
    flags = []
    if entry.ncc_degenerate:
        flags.append("ncc_degenerate")
    if entry.template_clipped:
        flags.append("template_clipped")
    return ",".join(flags) if flags else "-"


def read_tracks(path) -> list[Track]:
    """Load tracks; every track arrives in the finished state.

    Record: ``track_id frame source x_min y_min x_max y_max dist data
    temporary flags`` (11 fields); flags is a comma list over
    {ncc_degenerate, template_clipped} or ``-``.
    """
    entries: dict[int, list[TrackEntry]] = {}
    for lineno, fields in _open_records(path, "tracks"):
        if len(fields) != 11:
            raise MalformedRecord(path, lineno, f"track record needs 11 fields, got {len(fields)}")
        if not fields[0].isdigit():
            raise MalformedRecord(path, lineno, f"track id is not a non-negative integer: {fields[0]!r}")
        track_id = int(fields[0])
        frame = _parse_frame(fields[1], path, lineno)
        if fields[2] not in _TEXT_SOURCE:
            raise MalformedRecord(path, lineno, f"unknown source {fields[2]!r}")
        box = _parse_box(fields[3:7], path, lineno)
        dist = _parse_distribution(fields[7], path, lineno)
        flags_field = fields[10]
        flags = set() if flags_field == "-" else set(flags_field.split(","))
        unknown = flags - {"ncc_degenerate", "template_clipped"}
        if unknown:
            raise MalformedRecord(path, lineno, f"unknown flags {sorted(unknown)}")
        entry = TrackEntry(
            frame_index=frame,
            box=box,
            class_distribution=dist,
            source=_TEXT_SOURCE[fields[2]],
            associated_data=_opt_text(fields[8]),
            temporary=_parse_opt_flag(fields[9], path, lineno),
            ncc_degenerate="ncc_degenerate" in flags,
            template_clipped="template_clipped" in flags,
        )
        entries.setdefault(track_id, []).append(entry)
    tracks = []
    for track_id in sorted(entries):
        try:
            tracks.append(
                Track(id=track_id, entries=entries[track_id], state=TrackState.FINISHED)
            )
        except ValueError as exc:
            raise MalformedRecord(path, None, str(exc)) from None
    return tracks


def write_tracks(tracks: list[Track], path) -> None:
    lines = [f"{FORMAT_VERSION} tracks\n"]
    for track in sorted(tracks, key=lambda t: t.id):
        for entry in track.entries:
            lines.append(
                " ".join(
                    (
                        str(track.id),
                        str(entry.frame_index),
                        _SOURCE_TEXT[entry.source],
                        _format_real(entry.box.x_min),
                        _format_real(entry.box.y_min),
                        _format_real(entry.box.x_max),
                        _format_real(entry.box.y_max),
                        _format_distribution(entry.class_distribution),
                        _text_or_dash(entry.associated_data),
                        "-" if entry.temporary is None else _flag_text(entry.temporary),
                        _entry_flags(entry),
                    )
                )
                + "\n"
            )
    _atomic_write(path, "".join(lines))


# --------------------------------------------------------------------------
# Sequence manifests


@dataclass(frozen=True)
class SequenceManifest:
    """Binds a sequence's frame indices to image files on disk."""

    sequence_id: str
    frames: tuple[tuple[int, str], ...]
    annotation_paths: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple((int(i), str(p)) for i, p in self.frames))
        object.__setattr__(self, "annotation_paths", tuple(self.annotation_paths))
        if not self.sequence_id:
            raise ValueError("sequence id must be non-empty")
        last = None
        for index, frame_path in self.frames:
            if last is not None and index <= last:
                raise ValueError(f"frame indices not strictly increasing at {index}")
            if not frame_path:
                raise ValueError(f"empty path for frame {index}")
            last = index
        if any(not p for p in self.annotation_paths):
            raise ValueError("empty annotation path")


def read_manifest(path) -> SequenceManifest:
    """Parse ``frame_index<TAB>path`` lines plus ``# sequence:`` and
    ``# annotation:`` directives."""
    sequence_id = None
    frames: list[tuple[int, str]] = []
    annotation_paths: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        header = first.split()
        if len(header) != 2 or header[0] != FORMAT_VERSION or header[1] != "manifest":
            raise MalformedRecord(
                path, 1, f"expected header '{FORMAT_VERSION} manifest', got {first.strip()!r}"
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("sequence:"):
                    sequence_id = body.partition(":")[2].strip()
                elif body.startswith("annotation:"):
                    annotation_paths.append(body.partition(":")[2].strip())
                continue
            index_s, sep, frame_path = line.partition("\t")
            if not sep:
                raise MalformedRecord(path, lineno, "expected frame_index<TAB>path")
            index = _parse_frame(index_s.strip(), path, lineno)
            frames.append((index, frame_path.strip()))
    if sequence_id is None:
        raise MalformedRecord(path, None, "missing '# sequence: <id>' directive")
    try:
        return SequenceManifest(
            sequence_id=sequence_id,
            frames=tuple(frames),
            annotation_paths=tuple(annotation_paths),
        )
    except ValueError as exc:
        raise MalformedRecord(path, None, str(exc)) from None


def write_manifest(manifest: SequenceManifest, path) -> None:
    lines = [f"{FORMAT_VERSION} manifest\n", f"# sequence: {manifest.sequence_id}\n"]
    for ann_path in manifest.annotation_paths:
        lines.append(f"# annotation: {ann_path}\n")
    for index, frame_path in manifest.frames:
        lines.append(f"{index}\t{frame_path}\n")
    _atomic_write(path, "".join(lines))


class ManifestFrameSource:
    """Lazy frame loader indexed by frame number, for NCC interpolation.

    Decodes each PGM on first access and keeps a bounded cache.  Bayer
    inputs (``pattern`` given) are demosaiced and reduced to grayscale.
    """

    def __init__(
        self,
        manifest: SequenceManifest,
        root: str | os.PathLike = ".",
        pattern: BayerPattern | None = None,
        cache_size: int = 8,
    ):
        self._paths = {index: frame_path for index, frame_path in manifest.frames}
        self._root = Path(root)
        self._pattern = pattern
        self._cache_size = max(1, cache_size)
        self._cache: dict[int, GrayImage] = {}

    def __contains__(self, frame_index: int) -> bool:
        return frame_index in self._paths

    def __getitem__(self, frame_index: int) -> GrayImage:
        if frame_index in self._cache:
            return self._cache[frame_index]
        if frame_index not in self._paths:
            raise KeyError(frame_index)
        data = (self._root / self._paths[frame_index]).read_bytes()
        image = read_pnm(data, self._pattern)
        gray = gray_from_cfa(image) if self._pattern is not None else image
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[frame_index] = gray
        return gray
