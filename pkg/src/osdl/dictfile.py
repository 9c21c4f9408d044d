"""Binary dictionary files: sparse A plus the metadata that rebuilds Phi.

Layout (little-endian):
    magic   4s   "TRNL"
    version u16  (1)
    flags   u16  bit 0: separable two-dimensional base
    n_side  u32  1-D signal length (patch side in 2-D mode)
    ncols1d u32  columns of the 1-D base dictionary
    m       u32  number of learned atoms
    k       u32  atom sparsity
    family  u16  0 haar, 1 daubechies, 2 symlet
    order   u16
    levels  u16
    pad     u16
    payload: column pointers (m+1) u64, row indices u32, values f64
    crc32 of payload, u32

The base dictionary is not stored; it is a pure function of the header
fields and is rebuilt on load, so files stay small and the base is
always bit-reproducible.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError
from .sparsedict import ExplicitBase, SeparableBase, SparseDictionary
from .wavelets import cropped_dictionary, wavelet_filters

__all__ = ["save_dictionary", "load_dictionary", "read_header"]

MAGIC = b"TRNL"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIHHHH")
_FAMILY_IDS = {"haar": 0, "daubechies": 1, "symlet": 2}
_FAMILY_NAMES = {v: k for k, v in _FAMILY_IDS.items()}


def _payload_bytes(sd: SparseDictionary) -> bytes:
    m = sd.natoms
    colptr = np.zeros(m + 1, dtype="<u8")
    colptr[1:] = np.cumsum([ix.size for ix in sd.col_idx])
    rows = (np.concatenate(sd.col_idx).astype("<u4") if m else
            np.zeros(0, dtype="<u4"))
    vals = (np.concatenate(sd.col_val).astype("<f8") if m else
            np.zeros(0, dtype="<f8"))
    return colptr.tobytes() + rows.tobytes() + vals.tobytes()


def save_dictionary(path: str, sd: SparseDictionary, n_side: int,
                    family: str, order: int, levels: int) -> None:
    """Serialize the sparse matrix A with base-reconstruction metadata."""
    separable = isinstance(sd.base, SeparableBase)
    ncols1d = sd.base.ncols1d if separable else sd.base.natoms
    if family not in _FAMILY_IDS:
        raise FormatError(f"family {family!r} is not serializable")
    header = _HEADER.pack(MAGIC, VERSION, 1 if separable else 0,
                          n_side, ncols1d, sd.natoms, sd.atom_sparsity,
                          _FAMILY_IDS[family], order, levels, 0)
    payload = _payload_bytes(sd)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def read_header(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError("file too short for a dictionary header")
    (magic, version, flags, n_side, ncols1d, m, k,
     family_id, order, levels, _pad) = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError("bad magic; not a dictionary file")
    if version != VERSION:
        raise FormatError(f"unsupported dictionary file version {version}")
    if family_id not in _FAMILY_NAMES:
        raise FormatError(f"unknown wavelet family id {family_id}")
    return {
        "version": version,
        "separable": bool(flags & 1),
        "n_side": n_side,
        "ncols1d": ncols1d,
        "m": m,
        "k": k,
        "family": _FAMILY_NAMES[family_id],
        "order": order,
        "levels": levels,
    }


def load_dictionary(path: str) -> tuple[SparseDictionary, dict]:
    """Rebuild the dictionary: Phi from metadata, A from the payload."""
    head = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        body = fh.read()
    if len(body) < 4:
        raise FormatError("missing payload checksum")
    payload, crc_raw = body[:-4], body[-4:]
    (crc_stored,) = struct.unpack("<I", crc_raw)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise FormatError("payload checksum mismatch")

    m = head["m"]
    ptr_bytes = 8 * (m + 1)
    colptr = np.frombuffer(payload[:ptr_bytes], dtype="<u8").astype(np.int64)
    if colptr[0] != 0 or np.any(np.diff(colptr) < 0):
        raise FormatError("column pointers must start at 0 and be monotone")
    nnz = int(colptr[-1])
    idx_bytes = 4 * nnz
    expect = ptr_bytes + idx_bytes + 8 * nnz
    if len(payload) != expect:
        raise FormatError("payload size inconsistent with column pointers")
    rows = np.frombuffer(payload[ptr_bytes:ptr_bytes + idx_bytes],
                         dtype="<u4").astype(np.int64)
    vals = np.frombuffer(payload[ptr_bytes + idx_bytes:], dtype="<f8")

    filt = wavelet_filters(head["family"], max(head["order"], 1))
    crop = cropped_dictionary(filt, head["n_side"], head["levels"])
    if crop.natoms != head["ncols1d"]:
        raise FormatError("rebuilt base does not match the stored column count")
    base = SeparableBase(crop) if head["separable"] else ExplicitBase(crop.atoms)

    col_idx, col_val = [], []
    for j in range(m):
        lo, hi = colptr[j], colptr[j + 1]
        if hi - lo > head["k"]:
            raise FormatError(f"column {j} exceeds the stored atom sparsity")
        ij = rows[lo:hi]
        if np.any(ij >= base.natoms):
            raise FormatError(f"row index out of range in column {j}")
        col_idx.append(ij)
        col_val.append(vals[lo:hi].copy())
    return SparseDictionary(base, col_idx, col_val, head["k"]), head
