"""Raw-frame ingestion and the image primitives the pipelines need.

Covers binary PGM (P5) decoding of the camera's Bayer mosaics, bilinear
demosaicing to RGB, histogram equalization for under-exposed night
frames, row cropping, and normalized cross-correlation for position
matching between keyframes.  All operations are pure; images wrap numpy
arrays of unsigned integers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_VARIANCE_EPS = 1e-12


class PnmError(ValueError):
    """Base error for PNM decoding problems."""


class UnsupportedFormat(PnmError):
    pass


class TruncatedPayload(PnmError):
    pass


class DegenerateCorrelation(ValueError):
    """Raised when NCC is undefined (zero variance input)."""


class BayerPattern(enum.Enum):
    """Layout of the 2x2 color-filter tile, reading order."""

    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"


def _check_samples(samples: np.ndarray, max_value: int, channels: int | None) -> None:
    expected_ndim = 2 if channels is None else 3
    if samples.ndim != expected_ndim:
        raise ValueError(f"expected {expected_ndim}-d sample array, got shape {samples.shape}")
    if channels is not None and samples.shape[2] != channels:
        raise ValueError(f"expected {channels} channels, got shape {samples.shape}")
    if not np.issubdtype(samples.dtype, np.integer):
        raise ValueError(f"samples must be integers, got dtype {samples.dtype}")
    if not 0 < max_value <= 65535:
        raise ValueError(f"max_value must be in 1..65535, got {max_value}")
    if samples.size and (samples.min() < 0 or samples.max() > max_value):
        raise ValueError(f"sample values outside [0, {max_value}]")


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image, row-major."""

    samples: np.ndarray
    max_value: int = 255

    def __post_init__(self) -> None:
        _check_samples(self.samples, self.max_value, channels=None)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class CfaImage:
    """Undemosaiced sensor readout; the pattern is sidecar metadata."""

    samples: np.ndarray
    pattern: BayerPattern = BayerPattern.RGGB
    max_value: int = 255

    def __post_init__(self) -> None:
        _check_samples(self.samples, self.max_value, channels=None)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class RgbImage:
    """Interleaved three-channel image, row-major."""

    samples: np.ndarray
    max_value: int = 255

    def __post_init__(self) -> None:
        _check_samples(self.samples, self.max_value, channels=3)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


# --------------------------------------------------------------------------
# PNM decoding / encoding


def _pnm_tokens(data: bytes):
    """Yield header tokens, honoring PNM whitespace and '#' comments.

    Returns (token, next_offset) so the caller can locate the payload.
    """
    pos = 0
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c in b" \t\r\n\v\f":
            pos += 1
            continue
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1] not in b" \t\r\n\v\f#":
            pos += 1
        yield data[start:pos].decode("ascii", "replace"), pos
    return


def read_pnm(data: bytes, pattern: BayerPattern | None = None) -> GrayImage | CfaImage:
    """Decode a binary PGM (P5) byte string.

    Samples are 1 byte each for max_value < 256, otherwise 2 bytes
    big-endian.  Pass ``pattern`` to tag the result as a Bayer mosaic;
    the PNM header itself cannot express the CFA layout.
    """
    tokens = _pnm_tokens(data)
    try:
        magic, _ = next(tokens)
    except StopIteration:
        raise UnsupportedFormat("empty input") from None
    if magic != "P5":
        raise UnsupportedFormat(f"expected binary PGM magic 'P5', got {magic!r}")
    try:
        (width_s, _), (height_s, _), (maxval_s, header_end) = next(tokens), next(tokens), next(tokens)
    except StopIteration:
        raise PnmError("incomplete PGM header") from None
    try:
        width, height, max_value = int(width_s), int(height_s), int(maxval_s)
    except ValueError:
        raise PnmError(f"non-numeric PGM header field in {(width_s, height_s, maxval_s)}") from None
    if width <= 0 or height <= 0:
        raise PnmError(f"bad PGM dimensions {width}x{height}")
    if not 0 < max_value <= 65535:
        raise PnmError(f"PGM max value {max_value} outside 1..65535")

    # exactly one whitespace byte separates the header from the payload
    payload = data[header_end + 1 :]
    dtype = np.dtype(">u2") if max_value > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(payload) < need:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, need {need}")
    samples = np.frombuffer(payload[:need], dtype=dtype).reshape(height, width)
    samples = samples.astype(np.uint16 if max_value > 255 else np.uint8)
    if pattern is None:
        return GrayImage(samples=samples, max_value=max_value)
    return CfaImage(samples=samples, pattern=pattern, max_value=max_value)


def write_pnm(image: GrayImage | CfaImage) -> bytes:
    """Encode as binary PGM; inverse of :func:`read_pnm`."""
    header = f"P5\n{image.width} {image.height}\n{image.max_value}\n".encode("ascii")
    dtype = np.dtype(">u2") if image.max_value > 255 else np.dtype("u1")
    return header + image.samples.astype(dtype).tobytes()


def write_ppm(image: RgbImage) -> bytes:
    """Encode as binary PPM (P6), interleaved RGB."""
    header = f"P6\n{image.width} {image.height}\n{image.max_value}\n".encode("ascii")
    dtype = np.dtype(">u2") if image.max_value > 255 else np.dtype("u1")
    return header + image.samples.astype(dtype).tobytes()


# --------------------------------------------------------------------------
# Demosaicing and intensity transforms


def _round_half_up(values: np.ndarray, max_value: int) -> np.ndarray:
    out = np.floor(values + 0.5)
    np.clip(out, 0, max_value, out=out)
    return out.astype(np.uint16 if max_value > 255 else np.uint8)


def _pattern_grid(pattern: BayerPattern) -> dict[str, list[tuple[int, int]]]:
    chars = pattern.value  # 2x2 tile in reading order
    grid: dict[str, list[tuple[int, int]]] = {"R": [], "G": [], "B": []}
    for idx, ch in enumerate(chars):
        grid[ch].append((idx // 2, idx % 2))
    return grid


def demosaic_bilinear(cfa: CfaImage) -> RgbImage:
    """Reconstruct RGB by averaging each pixel's nearest same-channel
    neighbors (the classic 2- and 4-tap bilinear demosaic).

    Borders clamp neighbor coordinates to the image edge, so border
    pixels mix color sites exactly as replicate padding dictates.
    Channel values are rounded half-up.
    """
    h, w = cfa.samples.shape
    x = cfa.samples.astype(np.float64)
    p = np.pad(x, 1, mode="edge")
    grid = _pattern_grid(cfa.pattern)
    out = np.empty((h, w, 3), dtype=np.float64)

    def phase(arr: np.ndarray, i: int, j: int, dy: int, dx: int) -> np.ndarray:
        # neighbor (dy, dx) of every output pixel at phase (i, j); arr is the
        # edge-padded plane, so index (r+1+dy, c+1+dx)
        return arr[1 + i + dy : 1 + h + dy : 2, 1 + j + dx : 1 + w + dx : 2]

    for channel, name in enumerate("RGB"):
        sites = grid[name]
        site_set = set(sites)
        plane = np.empty((h, w), dtype=np.float64)
        for i in (0, 1):
            for j in (0, 1):
                if i >= h or j >= w:
                    continue
                target = plane[i::2, j::2]
                if (i, j) in site_set:
                    target[...] = x[i::2, j::2]
                elif name == "G":
                    target[...] = (
                        phase(p, i, j, -1, 0) + phase(p, i, j, 1, 0)
                        + phase(p, i, j, 0, -1) + phase(p, i, j, 0, 1)
                    ) / 4.0
                else:
                    (si, sj) = sites[0]
                    if i == si:  # same row parity: horizontal neighbors
                        target[...] = (phase(p, i, j, 0, -1) + phase(p, i, j, 0, 1)) / 2.0
                    elif j == sj:  # same column parity: vertical neighbors
                        target[...] = (phase(p, i, j, -1, 0) + phase(p, i, j, 1, 0)) / 2.0
                    else:  # diagonal sites
                        target[...] = (
                            phase(p, i, j, -1, -1) + phase(p, i, j, -1, 1)
                            + phase(p, i, j, 1, -1) + phase(p, i, j, 1, 1)
                        ) / 4.0
        out[:, :, channel] = plane

    return RgbImage(samples=_round_half_up(out, cfa.max_value), max_value=cfa.max_value)


def equalize_histogram(image: GrayImage) -> GrayImage:
    """CDF remap contrast boost: out = ceil((cdf(v) - cdf_min) / (N - cdf_min) * max_value).

    The ceiling is taken exactly in integer arithmetic.  Rounding the remap
    to nearest instead can merge the second-lowest occupied level into
    output level 0, which shifts cdf_min on a second pass; the ceiling
    keeps level 0's preimage at exactly the minimum value, so applying the
    filter twice equals applying it once, for every image.  A constant
    image has a degenerate CDF (0/0) and is returned unchanged.
    """
    counts = np.bincount(image.samples.ravel(), minlength=image.max_value + 1)
    cdf = np.cumsum(counts)
    n = image.samples.size
    nonzero = cdf[cdf > 0]
    cdf_min = int(nonzero[0]) if nonzero.size else 0
    if cdf_min >= n:
        return image
    diff = np.maximum(cdf.astype(np.int64) - cdf_min, 0)
    lut = -((-diff * image.max_value) // (n - cdf_min))
    lut = lut.astype(np.uint16 if image.max_value > 255 else np.uint8)
    return GrayImage(samples=lut[image.samples], max_value=image.max_value)


def equalize_rgb(image: RgbImage) -> RgbImage:
    """Histogram-equalize each channel independently."""
    channels = [
        equalize_histogram(
            GrayImage(samples=image.samples[:, :, c], max_value=image.max_value)
        ).samples
        for c in range(3)
    ]
    return RgbImage(samples=np.stack(channels, axis=2), max_value=image.max_value)


def crop_rows(image, keep_top: int):
    """Keep only the top ``keep_top`` rows (the sky-and-signs band)."""
    if not 0 < keep_top <= image.height:
        raise ValueError(f"keep_top must be in 1..{image.height}, got {keep_top}")
    if isinstance(image, RgbImage):
        return RgbImage(samples=image.samples[:keep_top], max_value=image.max_value)
    if isinstance(image, CfaImage):
        return CfaImage(
            samples=image.samples[:keep_top], pattern=image.pattern, max_value=image.max_value
        )
    return GrayImage(samples=image.samples[:keep_top], max_value=image.max_value)


def crop(image: GrayImage, x0: int, y0: int, x1: int, y1: int) -> GrayImage:
    """Sub-image [x0, x1) x [y0, y1); bounds must lie inside the frame."""
    if not (0 <= x0 < x1 <= image.width and 0 <= y0 < y1 <= image.height):
        raise ValueError(f"crop rect ({x0},{y0},{x1},{y1}) outside {image.width}x{image.height}")
    return GrayImage(samples=image.samples[y0:y1, x0:x1], max_value=image.max_value)


def luma(image: RgbImage) -> GrayImage:
    """Green-weighted luma (0.299 R + 0.587 G + 0.114 B), rounded half-up."""
    rw, gw, bw = LUMA_WEIGHTS
    values = (
        rw * image.samples[:, :, 0]
        + gw * image.samples[:, :, 1]
        + bw * image.samples[:, :, 2]
    )
    return GrayImage(samples=_round_half_up(values, image.max_value), max_value=image.max_value)


def gray_from_cfa(cfa: CfaImage) -> GrayImage:
    """Grayscale straight from the mosaic: the interpolated green plane."""
    rgb = demosaic_bilinear(cfa)
    return GrayImage(samples=rgb.samples[:, :, 1].copy(), max_value=cfa.max_value)


# --------------------------------------------------------------------------
# Normalized cross-correlation


def ncc(template: GrayImage, window: GrayImage) -> float:
    """Zero-mean normalized cross-correlation of two same-size patches.

    Integer samples are promoted to reals first.  Raises
    :class:`DegenerateCorrelation` when either patch has zero variance.
    """
    if template.samples.shape != window.samples.shape:
        raise ValueError(
            f"patch shapes differ: {template.samples.shape} vs {window.samples.shape}"
        )
    if template.samples.size < 2:
        raise ValueError("patches need at least 2 pixels")
    t = template.samples.astype(np.float64)
    w = window.samples.astype(np.float64)
    t -= t.mean()
    w -= w.mean()
    denom = np.sqrt(np.sum(t * t) * np.sum(w * w))
    if denom <= _VARIANCE_EPS:
        raise DegenerateCorrelation("zero variance patch")
    return float(np.sum(t * w) / denom)


@dataclass(frozen=True)
class NccMatch:
    """Best template placement inside a search window.

    ``degenerate`` means every placement (or the template itself) had zero
    variance; the offsets then fall back to the tie-break preference and
    the score is -inf.
    """

    offset_x: int
    offset_y: int
    score: float
    degenerate: bool = False


def ncc_scores(template: GrayImage, search: GrayImage) -> np.ndarray:
    """NCC of the template at every placement inside the search window.

    Returns an array of shape (search_h - t_h + 1, search_w - t_w + 1)
    with -inf at degenerate (zero variance) placements.
    """
    t = template.samples.astype(np.float64)
    s = search.samples.astype(np.float64)
    th, tw = t.shape
    sh, sw = s.shape
    if th > sh or tw > sw:
        raise ValueError(f"template {tw}x{th} larger than search window {sw}x{sh}")
    tz = t - t.mean()
    t_energy = float(np.sum(tz * tz))
    windows = np.lib.stride_tricks.sliding_window_view(s, (th, tw))
    w_sum = windows.sum(axis=(2, 3))
    w_sq = np.einsum("ijkl,ijkl->ij", windows, windows)
    w_var = w_sq - w_sum * w_sum / (th * tw)
    np.maximum(w_var, 0.0, out=w_var)
    numer = np.einsum("ijkl,kl->ij", windows, tz)
    denom_sq = t_energy * w_var
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = numer / np.sqrt(denom_sq)
    np.clip(scores, -1.0, 1.0, out=scores)
    scores[denom_sq <= _VARIANCE_EPS] = -np.inf
    return scores


def ncc_match(
    template: GrayImage,
    search: GrayImage,
    *,
    preferred_offset: tuple[float, float] | None = None,
) -> NccMatch:
    """Find the highest-NCC placement of the template in the search window.

    Ties are broken by smallest Euclidean distance to ``preferred_offset``
    (the window center when not given), then row-major.  An all-degenerate
    surface yields a flagged result at the preferred offset rather than an
    error.
    """
    scores = ncc_scores(template, search)
    oh, ow = scores.shape
    if preferred_offset is None:
        preferred_offset = ((ow - 1) / 2.0, (oh - 1) / 2.0)
    px, py = preferred_offset

    best = scores.max()
    if best == -np.inf:
        ox = min(max(int(round(px)), 0), ow - 1)
        oy = min(max(int(round(py)), 0), oh - 1)
        return NccMatch(offset_x=ox, offset_y=oy, score=float("-inf"), degenerate=True)
    ys, xs = np.nonzero(scores == best)
    dist = (xs - px) ** 2 + (ys - py) ** 2
    order = np.lexsort((xs, ys, dist))
    pick = order[0]
    return NccMatch(offset_x=int(xs[pick]), offset_y=int(ys[pick]), score=float(best))


def search_area(box_a, box_b, margin: float = 20.0):
    """Axis-aligned hull of two boxes grown by ``margin`` pixels per side.

    Not clipped here; clip to frame bounds at the point of use.
    """
    from .core import BoundingBox

    return BoundingBox(
        min(box_a.x_min, box_b.x_min) - margin,
        min(box_a.y_min, box_b.y_min) - margin,
        max(box_a.x_max, box_b.x_max) + margin,
        max(box_a.y_max, box_b.y_max) + margin,
    )


# --------------------------------------------------------------------------
# Sidecar configuration for raw sequences


@dataclass(frozen=True)
class SidecarConfig:
    """Per-sequence conversion settings the PNM header cannot carry."""

    pattern: BayerPattern = BayerPattern.RGGB
    equalize: bool = False
    crop_keep: int | None = None


def parse_sidecar(text: str) -> SidecarConfig:
    """Parse key=value sidecar text (keys: pattern, equalize, crop_keep)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"sidecar line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    unknown = set(values) - {"pattern", "equalize", "crop_keep"}
    if unknown:
        raise ValueError(f"unknown sidecar keys: {sorted(unknown)}")
    pattern = BayerPattern(values.get("pattern", "RGGB").upper())
    equalize = values.get("equalize", "false").lower() in ("1", "true", "yes", "on")
    crop_keep = int(values["crop_keep"]) if "crop_keep" in values else None
    return SidecarConfig(pattern=pattern, equalize=equalize, crop_keep=crop_keep)
