"""On-disk formats: embedding tables, templates, patches.

Binary files share one framing: 4-byte magic, little-endian uint32 header
length, UTF-8 JSON header, then raw little-endian array bytes in the order
listed in the header.
"""

import csv
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .baselines.circular_grid import CircularGridTemplate
from .baselines.iris import IrisTemplate
from .records import AcquisitionId
from .segmentation import SquarePatch

EMBEDDING_MAGIC = b"LEMB"
TEMPLATE_MAGIC = b"LTPL"
ID_COLUMNS = ["log_id", "end", "acq_index", "dataset_tag"]


def _write_blob(path, magic, header, arrays):
    header = dict(header)
    header["arrays"] = [{"dtype": a.dtype.str, "shape": list(a.shape)} for a in arrays]
    raw = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())


def _read_blob(path, magic):
    with open(path, "rb") as fh:
        if fh.read(4) != magic:
            raise ValueError(f"{path} is not a {magic.decode()} file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        arrays = []
        for desc in header["arrays"]:
            dt = np.dtype(desc["dtype"])
            count = int(np.prod(desc["shape"]))
            arrays.append(np.frombuffer(fh.read(count * dt.itemsize), dtype=dt).reshape(desc["shape"]).copy())
    return header, arrays


def write_embeddings_csv(ids, embeddings, path):
    emb = np.asarray(embeddings, dtype=np.float32)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ID_COLUMNS + [f"e{k}" for k in range(emb.shape[1])])
        for a, row in zip(ids, emb):
            w.writerow([a.log_id, a.end, a.acq_index, a.dataset_tag] + [repr(float(v)) for v in row])


def read_embeddings_csv(path):
    ids, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            ids.append(AcquisitionId(rec[3], rec[0], rec[1], int(rec[2])))
            rows.append([float(v) for v in rec[4:]])
    return ids, np.asarray(rows, dtype=np.float32)


def write_embeddings_bin(ids, embeddings, path):
    emb = np.asarray(embeddings, dtype="<f4")
    header = {"columns": ID_COLUMNS, "ids": [[a.log_id, a.end, a.acq_index, a.dataset_tag] for a in ids],
              "dim": int(emb.shape[1])}
    _write_blob(path, EMBEDDING_MAGIC, header, [emb])


def read_embeddings_bin(path):
    header, (emb,) = _read_blob(path, EMBEDDING_MAGIC)
    ids = [AcquisitionId(tag, log, end, int(acq)) for log, end, acq, tag in header["ids"]]
    return ids, emb


def write_template(template, path, acq_id=None):
    header = {"id": str(acq_id) if acq_id is not None else "", "config_hash": template.config_hash}
    if isinstance(template, IrisTemplate):
        header.update(kind="iris", geometry=list(template.code.shape))
        arrays = [template.code.astype("u1"), template.valid.astype("u1")]
    else:
        header.update(kind="circular-grid", geometry=list(template.descriptors.shape),
                      band_radii=list(template.band_radii))
        arrays = [template.descriptors.astype("<f8"), template.valid.astype("u1")]
    _write_blob(path, TEMPLATE_MAGIC, header, arrays)


def read_template(path):
    header, arrays = _read_blob(path, TEMPLATE_MAGIC)
    if header["kind"] == "iris":
        t = IrisTemplate(arrays[0], arrays[1].astype(bool), header["config_hash"])
    else:
        t = CircularGridTemplate(arrays[0], arrays[1].astype(bool), header["band_radii"], header["config_hash"])
    acq = AcquisitionId.parse(header["id"]) if header["id"] else None
    return t, acq


def patch_stem(acq_id):
    return f"{acq_id.log_id}_{acq_id.end}_{acq_id.acq_index}"


def save_patch(patch, directory, acq_id):
    directory = Path(directory)
    stem = patch_stem(acq_id)
    Image.fromarray(patch.pixels).save(directory / f"{stem}.patch.png")
    Image.fromarray(patch.mask * 255).save(directory / f"{stem}.patch.mask.png")
    return f"{stem}.patch.png"


def load_patch(directory, acq_id):
    directory = Path(directory)
    stem = patch_stem(acq_id)
    pixels = np.asarray(Image.open(directory / f"{stem}.patch.png").convert("RGB"))
    mask = (np.asarray(Image.open(directory / f"{stem}.patch.mask.png")) > 127).astype(np.uint8)
    return SquarePatch(pixels=pixels, mask=mask, source_id=str(acq_id))


def save_mask(mask, path):
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)
