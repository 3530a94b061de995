"""Structured-grid binary field output.

Layout, all little-endian:

    magic  5 bytes  "WGED1"
    ndim   uint32   number of grid axes
    dims   ndim x uint64
    bbox   ndim x (float64 lo, float64 hi)
    ncomp  uint32   components per grid point
    cplx   uint8    1 when the payload is complex
    data   row-major float64, shape dims + (ncomp,); complex values are
           interleaved (re, im) pairs

so the payload is exactly prod(dims) * ncomp * (2 if cplx else 1) * 8 bytes.
A plain-text sidecar at <path>.txt names the components; the binary alone
round-trips bit-identically."""

import struct
from dataclasses import dataclass

import numpy as np

__all__ = ["FieldDump", "write_field_dump", "read_field_dump"]

_MAGIC = b"WGED1"


@dataclass(frozen=True)
class FieldDump:
    data: np.ndarray      # shape dims + (ncomp,)
    bbox: tuple           # ((lo, hi), ...) one pair per grid axis
    names: tuple          # one label per component

    def __post_init__(self):
        data = np.asarray(self.data)
        if np.iscomplexobj(data):
            data = data.astype("<c16")
        else:
            data = data.astype("<f8")
        bbox = tuple((float(lo), float(hi)) for lo, hi in self.bbox)
        names = tuple(str(n) for n in self.names)
        if data.ndim != len(bbox) + 1:
            raise ValueError("data must have one axis per bbox entry "
                             "plus a trailing component axis")
        if data.shape[-1] != len(names):
            raise ValueError("need one component name per trailing entry")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "bbox", bbox)
        object.__setattr__(self, "names", names)

    @property
    def is_complex(self):
        return self.data.dtype.kind == "c"


def write_field_dump(path, dump):
    path = str(path)
    d = dump.data
    ndim = d.ndim - 1
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", ndim))
        f.write(struct.pack("<%dQ" % ndim, *d.shape[:-1]))
        for lo, hi in dump.bbox:
            f.write(struct.pack("<2d", lo, hi))
        f.write(struct.pack("<I", d.shape[-1]))
        f.write(struct.pack("<B", 1 if dump.is_complex else 0))
        f.write(np.ascontiguousarray(d).tobytes())
    with open(path + ".txt", "w") as f:
        f.write("field dump %s\n" % _MAGIC.decode())
        f.write("dims: %s\n" % " ".join(str(n) for n in d.shape[:-1]))
        f.write("bbox: %s\n" % "  ".join("%r %r" % b for b in dump.bbox))
        f.write("complex: %s\n" % ("yes" if dump.is_complex else "no"))
        f.write("components: %s\n" % " ".join(dump.names))


def _read_exact(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError("truncated field dump")
    return buf


def read_field_dump(path):
    path = str(path)
    with open(path, "rb") as f:
        if _read_exact(f, 5) != _MAGIC:
            raise ValueError("not a WGED1 field dump")
        (ndim,) = struct.unpack("<I", _read_exact(f, 4))
        dims = struct.unpack("<%dQ" % ndim, _read_exact(f, 8 * ndim))
        bbox = tuple(struct.unpack("<2d", _read_exact(f, 16))
                     for _ in range(ndim))
        (ncomp,) = struct.unpack("<I", _read_exact(f, 4))
        (cplx,) = struct.unpack("<B", _read_exact(f, 1))
        count = int(np.prod(dims)) * ncomp
        dtype = np.dtype("<c16") if cplx else np.dtype("<f8")
        data = np.frombuffer(_read_exact(f, count * dtype.itemsize),
                             dtype=dtype).reshape(dims + (ncomp,))
        if f.read(1):
            raise ValueError("trailing bytes after field dump payload")
    names = tuple("c%d" % i for i in range(ncomp))
    try:
        with open(path + ".txt") as f:
            for line in f:
                if line.startswith("components:"):
                    names = tuple(line.split(":", 1)[1].split())
    except OSError:
        pass
    if len(names) != ncomp:
        names = tuple("c%d" % i for i in range(ncomp))
    return FieldDump(data=data, bbox=bbox, names=names)
