"""Grayscale images, blur operators, and the deblurring problem builder.

Blurring is modelled as a dense linear map at desk scale (at most 64x64
pixels), assembled row by row from a normalized convolution kernel under a
zero or replicate boundary rule. Images travel as PGM files (ASCII P2 or
binary P5, Netpbm conventions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import BilevelProblem, LeastSquaresInstance, least_squares_problem

#: Dense-operator scale limit (pixel count) for blur_matrix.
MAX_DENSE_PIXELS = 4096

BOUNDARIES = ("zero", "replicate")


@dataclass(frozen=True)
class GrayImage:
    """Grayscale raster with row-major pixels scaled to [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float, copy=True)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixels shape {px.shape} != (height, width) "
                             f"({self.height}, {self.width})")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    def flatten(self) -> np.ndarray:
        return self.pixels.ravel().copy()


def image_from_vector(v, width: int, height: int) -> GrayImage:
    """Clamp a flat solver iterate into [0, 1] and shape it as an image."""
    px = np.clip(np.asarray(v, dtype=float).reshape(height, width), 0.0, 1.0)
    return GrayImage(width=width, height=height, pixels=px)


@dataclass(frozen=True)
class BlurKernel:
    """Odd-sized square tap grid, nonnegative, normalized to unit sum."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float, copy=True)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ValueError("kernel taps must form a square grid")
        if taps.shape[0] % 2 == 0:
            raise ValueError("kernel size must be odd")
        if np.any(taps < 0):
            raise ValueError("kernel taps must be nonnegative")
        if abs(float(taps.sum()) - 1.0) > 1e-12:
            raise ValueError(f"kernel taps sum to {taps.sum()!r}, expected 1")
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)

    @property
    def size(self) -> int:
        return self.taps.shape[0]


def make_kernel(taps) -> BlurKernel:
    """Normalize a nonnegative tap grid to unit sum and wrap it."""
    taps = np.array(taps, dtype=float)
    total = float(taps.sum())
    if total <= 0:
        raise ValueError("kernel taps must have positive sum")
    return BlurKernel(taps=taps / total)


def gaussian_kernel(size: int = 5, sigma: float = 1.0) -> BlurKernel:
    """Sampled isotropic Gaussian, normalized. The stock mild blur."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    ax = np.arange(size, dtype=float) - size // 2
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    return make_kernel(np.outer(g, g))


def load_kernel(path) -> BlurKernel:
    """Kernel from a text grid file (one row per line); normalized on load."""
    return make_kernel(np.loadtxt(path, dtype=float, ndmin=2))


def _check_boundary(boundary: str):
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")


def blur_matrix(kernel: BlurKernel, width: int, height: int,
                boundary: str = "replicate") -> np.ndarray:
    """Dense n x n matrix of the 2-d correlation with the kernel taps.

    Row y*width + x holds the weights producing blurred pixel (y, x). Under
    the replicate rule out-of-range taps clamp to the nearest edge pixel
    (row sums stay 1); under the zero rule they are dropped (border row sums
    fall below 1). Applying the matrix to a flattened image matches
    apply_blur.
    """
    _check_boundary(boundary)
    n = width * height
    if n > MAX_DENSE_PIXELS:
        raise ValueError(f"{width}x{height} exceeds the dense scale "
                         f"({MAX_DENSE_PIXELS} pixels)")
    half = kernel.size // 2
    taps = kernel.taps
    M = np.zeros((n, n))
    for y in range(height):
        for x in range(width):
            row = y * width + x
            for dy in range(-half, half + 1):
                yy = y + dy
                for dx in range(-half, half + 1):
                    xx = x + dx
                    if boundary == "zero":
                        if not (0 <= yy < height and 0 <= xx < width):
                            continue
                        src = yy * width + xx
                    else:
                        src = (min(max(yy, 0), height - 1) * width
                               + min(max(xx, 0), width - 1))
                    M[row, src] += taps[dy + half, dx + half]
    return M


def apply_blur(kernel: BlurKernel, image: GrayImage,
               boundary: str = "replicate") -> GrayImage:
    """Direct 2-d correlation of the image with the kernel taps."""
    _check_boundary(boundary)
    half = kernel.size // 2
    mode = "constant" if boundary == "zero" else "edge"
    padded = np.pad(image.pixels, half, mode=mode)
    out = np.zeros_like(image.pixels)
    h, w = image.height, image.width
    for dy in range(kernel.size):
        for dx in range(kernel.size):
            out += kernel.taps[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return GrayImage(width=w, height=h, pixels=np.clip(out, 0.0, 1.0))


# --------------------------------------------------------------------------
# PGM input/output (Netpbm P2 ASCII and P5 binary, maxval up to 65535).


class PgmParseError(ValueError):
    """Malformed or truncated PGM data; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PgmParseError("unexpected end of header", pos)
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, pos = _next_token(data, pos)
    try:
        value = int(token)
    except ValueError:
        raise PgmParseError(f"invalid {what} {token!r}", pos - len(token)) from None
    return value, pos


def read_pgm(path) -> GrayImage:
    """Read a P2 or P5 PGM file, scaling samples to [0, 1] by maxval."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _next_token(data, 0)
    if magic not in (b"P2", b"P5"):
        raise PgmParseError(f"not a PGM file (magic {magic!r})", 0)
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PgmParseError(f"bad dimensions {width}x{height}", pos)
    if not (1 <= maxval <= 65535):
        raise PgmParseError(f"maxval {maxval} out of range [1, 65535]", pos)
    count = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        bytes_per = 1 if maxval < 256 else 2
        expected = count * bytes_per
        payload = data[pos:pos + expected]
        if len(payload) != expected:
            raise PgmParseError(f"expected {expected} payload bytes, "
                                f"found {len(payload)}", pos)
        dtype = np.uint8 if bytes_per == 1 else ">u2"
        values = np.frombuffer(payload, dtype=dtype).astype(float)
    else:
        values = np.empty(count)
        for i in range(count):
            sample, pos = _header_int(data, pos, "sample")
            values[i] = sample
    if values.min() < 0 or values.max() > maxval:
        raise PgmParseError(f"sample outside [0, {maxval}]", pos)
    pixels = (values / maxval).reshape(height, width)
    return GrayImage(width=width, height=height, pixels=pixels)


def write_pgm(image: GrayImage, path, maxval: int = 255, binary: bool = True):
    """Write a PGM file, quantizing pixels to round(p * maxval).

    Writing and re-reading an 8-bit-quantized image reproduces the file
    byte for byte.
    """
    if not (1 <= maxval <= 65535):
        raise ValueError("maxval must lie in [1, 65535]")
    samples = np.rint(np.clip(image.pixels, 0.0, 1.0) * maxval).astype(np.int64)
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            dtype = np.uint8 if maxval < 256 else ">u2"
            fh.write(samples.astype(dtype).tobytes())
        else:
            lines = [" ".join(str(v) for v in row) for row in samples]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


# --------------------------------------------------------------------------


def make_deblur_instance(blurred: GrayImage, kernel: BlurKernel,
                         boundary: str = "replicate", num_blocks: int = 1,
                         noise_sigma: float = 0.0, noise_seed: int = 0,
                         ) -> tuple[LeastSquaresInstance, BilevelProblem]:
    """Deblurring as a bilevel problem: min ||x||^2 over argmin ||Ax - b||^2.

    A is the dense blur matrix, b the flattened blurred image (plus optional
    additive Gaussian noise), X = R^n split into num_blocks contiguous
    blocks. Iterates are unconstrained; clamping to [0, 1] happens only when
    an image is written.
    """
    b = blurred.flatten()
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if noise_sigma > 0:
        b = b + noise_sigma * np.random.default_rng(noise_seed).standard_normal(b.size)
    A = blur_matrix(kernel, blurred.width, blurred.height, boundary)
    inst = LeastSquaresInstance(A=A, b=b)
    problem = least_squares_problem(inst, num_blocks=num_blocks)
    return inst, problem
