"""Binary checkpoint files.

Layout: magic "PEARCKPT", u32 format version, then one record per array:
u32 name length, UTF-8 name, u32 rank, rank u64 extents, float32 payload.
All integers and floats little-endian.  Optimizer state travels in the
same file under names prefixed "opt/".
"""

import struct

import numpy as np

MAGIC = b"PEARCKPT"
VERSION = 1


def save_checkpoint(path, arrays: dict):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, arr in arrays.items():
            data = np.asarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            f.write(data.tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = len(MAGIC) + 4
    out = {}
    try:
        while pos < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            if pos + 4 * count > len(blob):
                raise struct.error("payload past end of file")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
            out[name] = arr.reshape(shape).copy()
    except struct.error as err:
        raise ValueError(f"{path}: trailing or truncated record data ({err})") from None
    return out
