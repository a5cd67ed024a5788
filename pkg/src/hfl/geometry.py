"""Procedural floor-plan geometry: synthesis, layout quality, rasterization.

Units are meters; the coordinate system has x to the right and y downward
(matching raster rows). A geometry is a rectangular footprint tiled by
axis-aligned rooms, optionally carved by a corridor strip, with doors as
wall gaps and windows as double-stroke wall segments.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryInfeasible

MIN_ROOM_AREA = 2.5  # m^2; below this the footprint cannot be tiled


@dataclass
class GeometryParams:
    room_range: tuple = (1, 6)
    corridor_p: float = 0.45
    window_density: float = 0.25   # expected windows per meter of exterior wall
    elongation_range: tuple = (1.0, 2.2)
    balcony_p: float = 0.3
    min_slice: float = 1.2         # narrowest acceptable room slice (m)


@dataclass
class FloorPlanGeometry:
    footprint: list                # rectangle vertices [(x, y), ...]
    rooms: list                    # (x0, y0, x1, y1) per room
    corridor: dict | None          # {"points": [(x,y),(x,y)], "width": w}
    doors: list                    # ((x0,y0),(x1,y1)) wall-gap segments
    windows: list                  # ((x0,y0),(x1,y1)) wall segments
    balcony: tuple | None = None   # (x0, y0, x1, y1)

    @property
    def width(self):
        xs = [p[0] for p in self.footprint]
        return max(xs) - min(xs)

    @property
    def height(self):
        ys = [p[1] for p in self.footprint]
        return max(ys) - min(ys)

    @property
    def area(self):
        return self.width * self.height

    def room_area_total(self):
        return sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in self.rooms)

    def corridor_length(self):
        if self.corridor is None:
            return 0.0
        pts = self.corridor["points"]
        return sum(math.dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))


@dataclass
class LayoutQuality:
    q: float
    window_score: float
    corridor_score: float
    elongation_score: float
    open_living_score: float


@dataclass
class QualityWeights:
    """Component weights; direction signs live inside the component scores
    (corridor and elongation scores already decrease as those features
    worsen), so all weights are positive magnitudes."""
    windows: float = 0.35
    corridor: float = 0.30
    elongation: float = 0.20
    open_living: float = 0.15


def _band_slices(x0, x1, y0, y1, count, rng, min_slice):
    """Split a horizontal band into `count` vertical room slices."""
    w = x1 - x0
    for _ in range(12):
        if count == 1:
            return [(x0, y0, x1, y1)]
        cuts = np.sort(rng.uniform(0.12, 0.88, size=count - 1)) * w
        edges = np.concatenate([[0.0], cuts, [w]])
        if np.diff(edges).min() >= min_slice:
            break
    else:
        edges = np.linspace(0.0, w, count + 1)
    return [(x0 + edges[i], y0, x0 + edges[i + 1], y1) for i in range(count)]


def _guillotine(rect, count, rng, min_slice):
    """Recursive guillotine partition of a rectangle into `count` rooms."""
    x0, y0, x1, y1 = rect
    if count == 1:
        return [rect]
    n_a = count // 2
    n_b = count - n_a
    frac = rng.uniform(0.35, 0.65) * n_a / (count / 2.0)
    frac = min(max(frac, 0.2), 0.8)
    if (x1 - x0) >= (y1 - y0):
        xm = x0 + (x1 - x0) * frac
        if min(xm - x0, x1 - xm) < min_slice:
            xm = (x0 + x1) / 2.0
        a = (x0, y0, xm, y1)
        b = (xm, y0, x1, y1)
    else:
        ym = y0 + (y1 - y0) * frac
        if min(ym - y0, y1 - ym) < min_slice:
            ym = (y0 + y1) / 2.0
        a = (x0, y0, x1, ym)
        b = (x0, ym, x1, y1)
    return _guillotine(a, n_a, rng, min_slice) + _guillotine(b, n_b, rng, min_slice)


def _exterior_edges(room, W, H, eps=1e-9):
    """Segments of the room boundary that lie on the footprint boundary."""
    x0, y0, x1, y1 = room
    edges = []
    if y0 <= eps:
        edges.append(((x0, 0.0), (x1, 0.0)))
    if y1 >= H - eps:
        edges.append(((x0, H), (x1, H)))
    if x0 <= eps:
        edges.append(((0.0, y0), (0.0, y1)))
    if x1 >= W - eps:
        edges.append(((W, y0), (W, y1)))
    return edges


def synth_geometry(rng, area, rooms, params=None):
    """Generate a floor plan for the given area (m^2) and room count.

    Deterministic given the generator state. Raises GeometryInfeasible when
    the rooms cannot tile the footprint under the parameters.
    """
    params = params or GeometryParams()
    if area <= 0:
        raise ValueError("area must be positive")
    if rooms < 1:
        raise ValueError("rooms must be >= 1")
    if area / rooms < MIN_ROOM_AREA:
        raise GeometryInfeasible(
            f"{rooms} rooms cannot tile {area:.1f} m^2 (min room area {MIN_ROOM_AREA} m^2)")

    elo, ehi = params.elongation_range
    e = rng.uniform(elo, ehi)
    W = math.sqrt(area * e)

    corridor = None
    room_rects = []
    use_corridor = rooms >= 2 and rng.random() < params.corridor_p
    if use_corridor:
        cw = rng.uniform(0.9, 1.3)
        H = (area + cw * W) / W
        band = H - cw
        ht = rng.uniform(0.35, 0.65) * band
        yc = ht
        corridor = {"points": [(0.0, yc + cw / 2.0), (W, yc + cw / 2.0)], "width": cw}
        n_top = max(1, min(rooms - 1, round(rooms * ht / band)))
        n_bot = rooms - n_top
        room_rects = _band_slices(0.0, W, 0.0, yc, n_top, rng, params.min_slice)
        room_rects += _band_slices(0.0, W, yc + cw, H, n_bot, rng, params.min_slice)
    else:
        H = area / W
        room_rects = _guillotine((0.0, 0.0, W, H), rooms, rng, params.min_slice)

    # doors: one per room, on the corridor edge when present, else on an
    # internal edge (midpoint gap)
    doors = []
    door_w = 0.8
    for x0, y0, x1, y1 in room_rects:
        mx = (x0 + x1) / 2.0
        if corridor is not None:
            yc = corridor["points"][0][1] - corridor["width"] / 2.0
            y_wall = yc if abs(y1 - yc) < 1e-9 else (yc + corridor["width"]
                                                     if abs(y0 - (yc + corridor["width"])) < 1e-9
                                                     else None)
            if y_wall is not None:
                lo = max(x0, mx - door_w / 2.0)
                doors.append(((lo, y_wall), (min(x1, lo + door_w), y_wall)))
                continue
        # interior wall: prefer the right edge unless it is exterior
        if x1 < W - 1e-9:
            my = (y0 + y1) / 2.0
            doors.append(((x1, max(y0, my - door_w / 2.0)),
                          (x1, min(y1, my + door_w / 2.0))))
        elif x0 > 1e-9:
            my = (y0 + y1) / 2.0
            doors.append(((x0, max(y0, my - door_w / 2.0)),
                          (x0, min(y1, my + door_w / 2.0))))

    # windows on exterior walls, one per ~1.5 m slot with the configured density
    windows = []
    win_len = 0.8
    slot = 1.5
    p_slot = min(1.0, max(0.0, params.window_density * slot))
    for room in room_rects:
        for (ax, ay), (bx, by) in _exterior_edges(room, W, H):
            length = math.dist((ax, ay), (bx, by))
            n_slots = int(length // slot)
            for s in range(n_slots):
                if rng.random() < p_slot:
                    t0 = (s + 0.5) * slot - win_len / 2.0
                    if bx > ax:  # horizontal edge
                        windows.append(((ax + t0, ay), (ax + t0 + win_len, ay)))
                    else:        # vertical edge
                        windows.append(((ax, ay + t0), (ax, ay + t0 + win_len)))

    balcony = None
    if rng.random() < params.balcony_p:
        bw = min(2.4, W * 0.4)
        bx0 = rng.uniform(0.0, W - bw)
        balcony = (bx0, H, bx0 + bw, H + 1.2)

    footprint = [(0.0, 0.0), (W, 0.0), (W, H), (0.0, H)]
    return FloorPlanGeometry(footprint, room_rects, corridor, doors, windows, balcony)


def layout_quality(geometry, weights=None):
    """Score a floor plan in [-1, 1] from four bounded components.

    Strictly increasing in window count and strictly decreasing in corridor
    length ratio, all else fixed.
    """
    weights = weights or QualityWeights()
    area = geometry.area
    perimeter = 2.0 * (geometry.width + geometry.height)

    ref_windows = 0.25 * perimeter
    window_score = math.tanh((len(geometry.windows) - ref_windows) / (0.6 * ref_windows))

    ratio = geometry.corridor_length() / math.sqrt(area) if area > 0 else 0.0
    corridor_score = -math.tanh(1.8 * (ratio - 0.55))

    aspects = []
    for x0, y0, x1, y1 in geometry.rooms:
        w = x1 - x0
        h = y1 - y0
        if min(w, h) > 0:
            aspects.append(max(w / h, h / w))
    mean_aspect = sum(aspects) / len(aspects) if aspects else 1.0
    elongation_score = -math.tanh(1.5 * (mean_aspect - 1.8))

    total = geometry.room_area_total()
    largest = max(((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in geometry.rooms),
                  default=0.0)
    open_frac = largest / total if total > 0 else 0.0
    # baseline at the even split 1/n so the score reflects how dominant the
    # main room is relative to the layout, not just how many rooms there are
    even_frac = 1.0 / len(geometry.rooms) if geometry.rooms else 1.0
    open_living_score = math.tanh(6.0 * (open_frac - even_frac - 0.1))

    q = (weights.windows * window_score
         + weights.corridor * corridor_score
         + weights.elongation * elongation_score
         + weights.open_living * open_living_score)
    q = min(1.0, max(-1.0, q))
    return LayoutQuality(q, window_score, corridor_score, elongation_score,
                         open_living_score)


# ---------------------------------------------------------------------------
# rasterization

WALL = 0          # stroke intensity
BG = 255          # background
WALL_PX = 2       # stroke thickness in pixels
MARGIN_PX = 3


class _Raster:
    def __init__(self, size, minx, miny, scale):
        self.img = np.full((size, size), BG, dtype=np.uint8)
        self.minx = minx
        self.miny = miny
        self.scale = scale
        self.size = size

    def px(self, x, y):
        col = int(round((x - self.minx) * self.scale)) + MARGIN_PX
        row = int(round((y - self.miny) * self.scale)) + MARGIN_PX
        return row, col

    def hline(self, x0, x1, y, value=WALL, thick=WALL_PX):
        r, c0 = self.px(x0, y)
        _, c1 = self.px(x1, y)
        self.img[max(0, r):r + thick, max(0, c0):c1 + thick] = value

    def vline(self, x, y0, y1, value=WALL, thick=WALL_PX):
        r0, c = self.px(x, y0)
        r1, _ = self.px(x, y1)
        self.img[max(0, r0):r1 + thick, max(0, c):c + thick] = value

    def rect(self, x0, y0, x1, y1, thick=WALL_PX):
        self.hline(x0, x1, y0, thick=thick)
        self.hline(x0, x1, y1, thick=thick)
        self.vline(x0, y0, y1, thick=thick)
        self.vline(x1, y0, y1, thick=thick)


def rasterize(geometry, size):
    """Render a geometry to a size x size grayscale image.

    White background, dark wall strokes, door gaps, double-stroke windows.
    Pure and deterministic.
    """
    if size < 16:
        raise ValueError("raster size must be >= 16")
    if not geometry.footprint:
        return np.full((size, size), BG, dtype=np.uint8)
    xs = [p[0] for p in geometry.footprint]
    ys = [p[1] for p in geometry.footprint]
    minx, maxx = min(xs), max(xs)
    miny, maxy = min(ys), max(ys)
    if geometry.balcony is not None:
        bx0, by0, bx1, by1 = geometry.balcony
        minx, maxx = min(minx, bx0), max(maxx, bx1)
        miny, maxy = min(miny, by0), max(maxy, by1)
    extent = max(maxx - minx, maxy - miny, 1e-9)
    scale = (size - 1 - 2 * MARGIN_PX - WALL_PX) / extent
    r = _Raster(size, minx, miny, scale)

    for room in geometry.rooms:
        r.rect(*room)
    if geometry.corridor is not None:
        (ax, ay), (bx, by) = geometry.corridor["points"]
        half = geometry.corridor["width"] / 2.0
        if abs(ay - by) < 1e-9:  # horizontal corridor
            r.hline(ax, bx, ay - half)
            r.hline(ax, bx, ay + half)
        else:
            r.vline(ax - half, ay, by)
            r.vline(ax + half, ay, by)
    if geometry.balcony is not None:
        r.rect(*geometry.balcony, thick=1)

    # door gaps: clear the wall stroke across its thickness
    for (ax, ay), (bx, by) in geometry.doors:
        if abs(ay - by) < 1e-9:
            r.hline(ax, bx, ay, value=BG, thick=WALL_PX)
        else:
            r.vline(ax, ay, by, value=BG, thick=WALL_PX)

    # windows: clear a band through the wall, then draw two 1-px strokes
    for (ax, ay), (bx, by) in geometry.windows:
        if abs(ay - by) < 1e-9:  # on a horizontal wall
            row, c0 = r.px(ax, ay)
            _, c1 = r.px(bx, by)
            r.img[max(0, row - 1):row + 3, max(0, c0):c1 + 1] = BG
            r.img[max(0, row - 1), max(0, c0):c1 + 1] = WALL
            r.img[min(size - 1, row + 2), max(0, c0):c1 + 1] = WALL
        else:
            r0, col = r.px(ax, ay)
            r1, _ = r.px(bx, by)
            r.img[max(0, r0):r1 + 1, max(0, col - 1):col + 3] = BG
            r.img[max(0, r0):r1 + 1, max(0, col - 1)] = WALL
            r.img[max(0, r0):r1 + 1, min(size - 1, col + 2)] = WALL

    return r.img
