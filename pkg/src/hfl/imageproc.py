"""Floor-plan image preprocessing and augmentation.

Images are numpy arrays: 8-bit grayscale rasters are ``uint8`` arrays of
shape (height, width); normalized network inputs are float64 arrays with
values in [0, 1]. All operations are pure -- randomness comes in only
through an explicit ``numpy.random.Generator``.
"""

import math

import numpy as np

from .errors import DegenerateImage, PgmFormatError

BG_THRESHOLD = 250


def crop_to_content(img, bg_threshold=BG_THRESHOLD):
    """Crop to the tight bounding box of pixels darker than bg_threshold.

    Raises DegenerateImage when no pixel qualifies as content.
    """
    mask = np.asarray(img) < bg_threshold
    if not mask.any():
        raise DegenerateImage("image has no pixels darker than the background threshold")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return np.ascontiguousarray(img[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1])


def _bilinear_sample(img, src_y, src_x, fill=0.0):
    """Sample img at fractional coordinates; out-of-bounds reads give fill."""
    h, w = img.shape
    vals = img.astype(np.float64)
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = src_y - y0
    fx = src_x - x0

    def at(yy, xx):
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.full(yy.shape, float(fill))
        out[inside] = vals[yy[inside], xx[inside]]
        return out

    v00 = at(y0, x0)
    v01 = at(y0, x0 + 1)
    v10 = at(y0 + 1, x0)
    v11 = at(y0 + 1, x0 + 1)
    top = v00 * (1 - fx) + v01 * fx
    bot = v10 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bot * fy


def _resize_bilinear(img, new_h, new_w):
    h, w = img.shape
    sy = h / new_h
    sx = w / new_w
    src_y = (np.arange(new_h)[:, None] + 0.5) * sy - 0.5
    src_x = (np.arange(new_w)[None, :] + 0.5) * sx - 0.5
    src_y = np.clip(src_y, 0, h - 1)
    src_x = np.clip(src_x, 0, w - 1)
    yy = np.broadcast_to(src_y, (new_h, new_w))
    xx = np.broadcast_to(src_x, (new_h, new_w))
    out = _bilinear_sample(img, yy, xx)
    if np.issubdtype(img.dtype, np.integer):
        return np.clip(np.rint(out), 0, 255).astype(img.dtype)
    return out


def letterbox_resize(img, side):
    """Aspect-preserving resize onto a side x side canvas, pure-black fill.

    The content is scaled by a single factor so the longer edge becomes
    ``side`` pixels, centered, and every remaining pixel is exactly 0.
    """
    if side < 1:
        raise ValueError("side must be >= 1")
    h, w = img.shape
    scale = side / max(h, w)
    new_h = max(1, int(round(h * scale)))
    new_w = max(1, int(round(w * scale)))
    content = _resize_bilinear(img, new_h, new_w)
    out = np.zeros((side, side), dtype=img.dtype)
    oy = (side - new_h) // 2
    ox = (side - new_w) // 2
    out[oy:oy + new_h, ox:ox + new_w] = content
    return out


def minmax_normalize(img):
    """Map min pixel to 0.0 and max to 1.0; a constant image maps to zeros."""
    vals = np.asarray(img, dtype=np.float64)
    lo = vals.min()
    hi = vals.max()
    if hi == lo:
        return np.zeros_like(vals)
    return (vals - lo) / (hi - lo)


def mirror(img):
    """Horizontal flip. Applying it twice returns the original bit-exactly."""
    return np.ascontiguousarray(img[:, ::-1])


def _quarter_turn(img):
    # one lossless quarter turn: transpose then horizontal flip
    return np.ascontiguousarray(img.T[:, ::-1])


def rotate(img, angle):
    """Rotate about the image center, black fill.

    Exact multiples of pi/2 on square images take a lossless index
    permutation (one quarter turn = transpose then horizontal flip);
    any other angle uses bilinear sampling.
    """
    quarters = angle / (math.pi / 2)
    k = int(round(quarters))
    if abs(quarters - k) < 1e-12:
        if img.shape[0] == img.shape[1]:
            out = img
            for _ in range(k % 4):
                out = _quarter_turn(out)
            return np.ascontiguousarray(out)
        if k % 2 == 0:
            out = img
            if k % 4 == 2:
                out = np.ascontiguousarray(img[::-1, ::-1])
            return np.ascontiguousarray(out)
        # non-square quarter turns fall through to the resampling path so
        # the canvas shape is preserved
    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    c = math.cos(angle)
    s = math.sin(angle)
    y = np.arange(h)[:, None] - cy
    x = np.arange(w)[None, :] - cx
    src_x = c * x + s * y + cx
    src_y = -s * x + c * y + cy
    out = _bilinear_sample(img, np.broadcast_to(src_y, (h, w)), np.broadcast_to(src_x, (h, w)))
    if np.issubdtype(img.dtype, np.integer):
        return np.clip(np.rint(out), 0, 255).astype(img.dtype)
    return out


def augment(img, rng, p_mirror=0.5, max_angle=math.pi):
    """Online augmentation: maybe mirror, then rotate by a uniform angle."""
    if not 0.0 <= p_mirror <= 1.0:
        raise ValueError("p_mirror must be in [0, 1]")
    if max_angle < 0:
        raise ValueError("max_angle must be >= 0")
    out = img
    if p_mirror > 0 and rng.random() < p_mirror:
        out = mirror(out)
    if max_angle > 0:
        angle = rng.uniform(-max_angle, max_angle)
        out = rotate(out, angle)
    return out


def write_pgm(path, img):
    """Write a binary (P5) 8-bit PGM."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path):
    """Read a binary (P5) 8-bit PGM, tolerating '#' comments in the header."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise PgmFormatError("not a binary PGM (expected magic 'P5')", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise PgmFormatError("truncated PGM header", offset=pos)
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise PgmFormatError("unterminated header comment", offset=pos)
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise PgmFormatError(f"unexpected header byte {ch!r}", offset=pos)
    w, h, maxval = fields
    if maxval != 255:
        raise PgmFormatError(f"unsupported maxval {maxval} (only 8-bit supported)", offset=pos)
    pos += 1  # single whitespace byte after maxval
    payload = data[pos:pos + w * h]
    if len(payload) < w * h:
        raise PgmFormatError("truncated PGM payload", offset=pos + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
