"""Binary containers and preview images. Layouts are described in docs/FORMATS.md.

FieldGrid has a fixed 64-byte header followed by interleaved (re, im) float64
values. Every other object uses the generic container: a 64-byte header, a
UTF-8 JSON block (object fields plus an array table) and the raw arrays in
table order. All numbers are little-endian.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .biphoton import AxisModes, DoubleGaussianState, SchmidtDecomposition
from .correlator import CorrelationMap
from .detector import FrameStack
from .errors import InputError
from .field import FieldGrid, PhaseMask
from .medium import DiffuserScreen, Geometry, TransmissionMatrix

FIELD_MAGIC = b"SPFIELD1"
FIELD_HEADER = struct.Struct("<8sQQdQd16x")
CONTAINER_HEADER = struct.Struct("<8sIIQ40x")
VERSION = 1
DOMAINS = ("position", "frequency")

MAGICS = {
    "mask": b"SPMASK01",
    "screen": b"SPSCRN01",
    "tm": b"SPTMAT01",
    "frames": b"SPFRAM01",
    "map": b"SPCMAP01",
    "state": b"SPSTAT01",
    "decomposition": b"SPSCHM01",
}


# ---------------------------------------------------------------- FieldGrid
def save_field(path, f: FieldGrid) -> None:
    ny, nx = f.shape
    header = FIELD_HEADER.pack(FIELD_MAGIC, nx, ny, f.pitch, DOMAINS.index(f.domain), f.wavelength_nm)
    payload = np.ascontiguousarray(f.values, dtype="<c16").view("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_field(path) -> FieldGrid:
    data = Path(path).read_bytes()
    if len(data) < FIELD_HEADER.size:
        raise InputError(f"{path}: truncated field header")
    magic, nx, ny, pitch, domain, wavelength = FIELD_HEADER.unpack_from(data)
    if magic != FIELD_MAGIC:
        raise InputError(f"{path}: not a field container (magic {magic!r})")
    if domain >= len(DOMAINS):
        raise InputError(f"{path}: bad domain tag {domain}")
    body = data[FIELD_HEADER.size:]
    if len(body) != nx * ny * 16:
        raise InputError(f"{path}: payload of {len(body)} bytes for a {ny}x{nx} field")
    values = np.frombuffer(body, dtype="<f8").view("<c16").reshape(ny, nx).astype(np.complex128)
    return FieldGrid(values, pitch, DOMAINS[domain], wavelength)


# ---------------------------------------------------------------- generic container
def write_container(path, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    table = []
    blobs = []
    for name, arr in arrays.items():
        a = np.asarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape)})
        blobs.append(np.ascontiguousarray(a).tobytes())
    block = json.dumps({"meta": meta, "arrays": table}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CONTAINER_HEADER.pack(magic, VERSION, len(table), len(block)))
        fh.write(block)
        for b in blobs:
            fh.write(b)


def read_container(path, magic: bytes | None = None) -> tuple[bytes, dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < CONTAINER_HEADER.size:
        raise InputError(f"{path}: truncated header")
    got, version, n_arrays, meta_len = CONTAINER_HEADER.unpack_from(data)
    if magic is not None and got != magic:
        raise InputError(f"{path}: expected magic {magic!r}, found {got!r}")
    if version != VERSION:
        raise InputError(f"{path}: unsupported container version {version}")
    pos = CONTAINER_HEADER.size
    doc = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    arrays = {}
    for entry in doc["arrays"][:n_arrays]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if pos + nbytes > len(data):
            raise InputError(f"{path}: truncated payload for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(entry["shape"]).copy()
        pos += nbytes
    return got, doc["meta"], arrays


# ---------------------------------------------------------------- typed wrappers
def save_mask(path, m: PhaseMask) -> None:
    write_container(path, MAGICS["mask"], {"macropixel_size": m.macropixel_size}, {"phases": m.phases})


def load_mask(path) -> PhaseMask:
    _, meta, arr = read_container(path, MAGICS["mask"])
    return PhaseMask(arr["phases"], meta["macropixel_size"])


def save_screen(path, s: DiffuserScreen) -> None:
    meta = {"pitch_mm": s.pitch_mm, "correlation_length_mm": s.correlation_length_mm, "seed": s.seed}
    write_container(path, MAGICS["screen"], meta, {"phases": s.phases})


def load_screen(path) -> DiffuserScreen:
    _, meta, arr = read_container(path, MAGICS["screen"])
    return DiffuserScreen(arr["phases"], meta["pitch_mm"], meta["correlation_length_mm"], meta["seed"])


def save_tm(path, tm: TransmissionMatrix) -> None:
    meta = {"geometry": asdict(tm.geometry), "kind": tm.kind, "seed": tm.seed}
    write_container(path, MAGICS["tm"], meta, {"t": tm.t.astype(np.complex64)})


def load_tm(path) -> TransmissionMatrix:
    _, meta, arr = read_container(path, MAGICS["tm"])
    return TransmissionMatrix(arr["t"].astype(np.complex128), Geometry(**meta["geometry"]), meta["kind"], meta["seed"])


def save_frames(path, stack: FrameStack) -> None:
    meta = {"geometry": asdict(stack.geometry), "frames": len(stack), "metadata": stack.metadata}
    write_container(
        path,
        MAGICS["frames"],
        meta,
        {"signal_bits": np.packbits(stack.signal.ravel()), "idler_bits": np.packbits(stack.idler.ravel())},
    )


def load_frames(path) -> FrameStack:
    _, meta, arr = read_container(path, MAGICS["frames"])
    g = Geometry(**meta["geometry"])
    shape = (meta["frames"], g.grid, g.grid)
    count = int(np.prod(shape))
    sig = np.unpackbits(arr["signal_bits"], count=count).reshape(shape)
    idl = np.unpackbits(arr["idler_bits"], count=count).reshape(shape)
    return FrameStack(sig, idl, g, meta["metadata"])


def save_map(path, cmap: CorrelationMap) -> None:
    arrays = {"values": cmap.values}
    if cmap.stderr is not None:
        arrays["stderr"] = cmap.stderr
    meta = {"freq_pitch": cmap.freq_pitch, "frames_used": cmap.frames_used, "normalization": cmap.normalization}
    write_container(path, MAGICS["map"], meta, arrays)


def load_map(path) -> CorrelationMap:
    _, meta, arr = read_container(path, MAGICS["map"])
    return CorrelationMap(arr["values"], meta["freq_pitch"], meta["frames_used"], meta["normalization"], arr.get("stderr"))


def save_state(path, state: DoubleGaussianState) -> None:
    write_container(path, MAGICS["state"], asdict(state), {})


def load_state(path) -> DoubleGaussianState:
    _, meta, _ = read_container(path, MAGICS["state"])
    return DoubleGaussianState(tuple(meta["sigma_sum"]), tuple(meta["sigma_marginal"]), meta["wavelength_nm"])


def save_decomposition(path, dec: SchmidtDecomposition) -> None:
    arrays = {}
    for ax in ("x", "y"):
        modes = getattr(dec, ax)
        arrays[f"{ax}_spectrum"] = modes.spectrum
        arrays[f"{ax}_signal"] = modes.signal
        arrays[f"{ax}_idler"] = modes.idler
    meta = {"pitch_mm": dec.pitch_mm, "truncation": dec.truncation}
    write_container(path, MAGICS["decomposition"], meta, arrays)


def load_decomposition(path) -> SchmidtDecomposition:
    _, meta, arr = read_container(path, MAGICS["decomposition"])
    axes = [AxisModes(arr[f"{ax}_spectrum"], arr[f"{ax}_signal"], arr[f"{ax}_idler"]) for ax in ("x", "y")]
    return SchmidtDecomposition(axes[0], axes[1], meta["pitch_mm"], dict(meta["truncation"]))


# ---------------------------------------------------------------- previews
def write_preview(path, image: np.ndarray, wrap_phase: bool = False) -> None:
    """8-bit grayscale PNG; phases map [0, 2 pi) linearly, other data min-max."""
    from PIL import Image

    img = np.asarray(image, dtype=np.float64)
    if wrap_phase:
        scaled = np.mod(img, 2 * np.pi) / (2 * np.pi) * 255.0
    else:
        lo, hi = float(img.min()), float(img.max())
        scaled = (img - lo) / (hi - lo) * 255.0 if hi > lo else np.zeros_like(img)
    Image.fromarray(np.clip(np.round(scaled), 0, 255).astype(np.uint8), mode="L").save(path)
