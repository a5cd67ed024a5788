"""Dataset directory layout: listings.csv, plans/<id>.pgm, optional truth.csv.

Floats are serialized with 9 significant digits. The rpms column is written
for external consumers but re-derived as rent/area on read so the exact
accounting identity (rpms * area == rent) survives the round trip.
"""

import csv
import os

from .errors import SchemaMismatch
from .imageproc import read_pgm, write_pgm
from .market import ListingRecord


def _fmt(x):
    return f"{x:.9g}"


def _header(n_controls):
    return (["id", "area", "rooms", "floor", "top_floor", "city_distance",
             "year_built", "district"]
            + [f"ctrl_{j:02d}" for j in range(n_controls)]
            + ["rent", "rpms"])


def write_dataset(path, listings, images, truth=None):
    """Write listings.csv and plans/<id>.pgm (plus truth.csv when given).

    `images` maps listing id -> grayscale raster; `truth` maps id ->
    (q, residual_truth).
    """
    os.makedirs(path, exist_ok=True)
    plans = os.path.join(path, "plans")
    os.makedirs(plans, exist_ok=True)
    n_controls = len(listings[0].controls) if listings else 30
    with open(os.path.join(path, "listings.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(n_controls))
        for rec in listings:
            w.writerow([rec.id, _fmt(rec.area), rec.rooms, rec.floor,
                        rec.top_floor, _fmt(rec.city_distance), rec.year_built,
                        rec.district]
                       + list(rec.controls)
                       + [_fmt(rec.rent), _fmt(rec.rpms)])
    for rec in listings:
        write_pgm(os.path.join(plans, f"{rec.id}.pgm"), images[rec.id])
    if truth is not None:
        with open(os.path.join(path, "truth.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "q", "residual_truth"])
            for rec in listings:
                q, resid = truth[rec.id]
                w.writerow([rec.id, _fmt(q), _fmt(resid)])


def read_dataset(path):
    """Read a dataset directory back; returns (listings, images, truth|None)."""
    listings_path = os.path.join(path, "listings.csv")
    if not os.path.isfile(listings_path):
        raise SchemaMismatch(f"missing listings.csv in {path}")
    with open(listings_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaMismatch("listings.csv is empty (no header)")
        ctrl_cols = [h for h in header if h.startswith("ctrl_")]
        expected = _header(len(ctrl_cols))
        if header != expected:
            unknown = [h for h in header if h not in expected]
            if unknown:
                raise SchemaMismatch(f"unknown columns in listings.csv: {unknown}")
            raise SchemaMismatch(f"listings.csv header mismatch: {header}")
        listings = []
        for row in reader:
            if len(row) != len(header):
                raise SchemaMismatch(f"row length {len(row)} != header length {len(header)}")
            rid = int(row[0])
            area = float(row[1])
            rent = float(row[-2])
            rpms_csv = float(row[-1])
            rpms = rent / area
            if rpms_csv > 0 and abs(rpms_csv - rpms) > 1e-6 * rpms_csv:
                raise SchemaMismatch(
                    f"rpms column inconsistent with rent/area for id {rid}")
            listings.append(ListingRecord(
                id=rid, area=area, rooms=int(row[2]), floor=int(row[3]),
                top_floor=int(row[4]), city_distance=float(row[5]),
                year_built=int(row[6]), district=int(row[7]),
                controls=[int(v) for v in row[8:8 + len(ctrl_cols)]],
                rent=rent, rpms=rpms))
    plans = os.path.join(path, "plans")
    images = {}
    for rec in listings:
        img_path = os.path.join(plans, f"{rec.id}.pgm")
        if not os.path.isfile(img_path):
            raise SchemaMismatch(f"missing floor plan image for listing id {rec.id}")
        images[rec.id] = read_pgm(img_path)
    truth = None
    truth_path = os.path.join(path, "truth.csv")
    if os.path.isfile(truth_path):
        truth = {}
        with open(truth_path, newline="") as fh:
            reader = csv.reader(fh)
            theader = next(reader)
            if theader != ["id", "q", "residual_truth"]:
                raise SchemaMismatch(f"truth.csv header mismatch: {theader}")
            for row in reader:
                truth[int(row[0])] = (float(row[1]), float(row[2]))
    return listings, images, truth
