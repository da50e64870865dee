"""
GRID binary files and their JSON sidecars.

Layout: magic "DBGR", u32 version (=1), u32 nx, u32 ny (=nx), f64 L, then
nx*ny (re, im) f64 pairs, all little-endian, row-major in the node order of
``ComplexGrid``.
"""

import json
import os
import struct
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.models.grids import ComplexGrid
from src.utils.errors import HeaderMismatchError, PreconditionError

MAGIC = b'DBGR'
VERSION = 1
HEADER = struct.Struct('<4sIIId')


def write_grid(path: str, grid: ComplexGrid, metadata: Optional[Dict[str, Any]] = None) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(HEADER.pack(MAGIC, VERSION, grid.nx, grid.nx, grid.L))
        f.write(np.ascontiguousarray(grid.samples, dtype='<c16').tobytes())
    if metadata is not None:
        write_sidecar(path, metadata)
    return path


def read_grid_header(path: str) -> Tuple[int, float]:
    try:
        with open(path, 'rb') as f:
            raw = f.read(HEADER.size)
    except OSError as exc:
        raise PreconditionError(f"Could not read grid file {path}: {exc}")
    if len(raw) != HEADER.size:
        raise PreconditionError(f"{path} is too short to be a GRID file")
    magic, version, nx, ny, L = HEADER.unpack(raw)
    if magic != MAGIC:
        raise PreconditionError(f"{path} is not a GRID file (magic {magic!r})")
    if version != VERSION:
        raise PreconditionError(f"{path} has unsupported GRID version {version}")
    if nx != ny:
        raise PreconditionError(f"{path} is not square ({nx}x{ny})")
    return nx, L


def read_grid(path: str) -> ComplexGrid:
    nx, L = read_grid_header(path)
    with open(path, 'rb') as f:
        f.seek(HEADER.size)
        payload = f.read()
    expected = nx * nx * 16
    if len(payload) != expected:
        raise PreconditionError(f"{path} holds {len(payload)} sample bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype='<c16').reshape(nx, nx)
    return ComplexGrid(nx, L, samples)


def sidecar_path(path: str) -> str:
    return f"{path}.meta.json"


def write_sidecar(path: str, metadata: Dict[str, Any]) -> str:
    target = sidecar_path(path)
    with open(target, 'w') as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
    return target


def read_sidecar(path: str) -> Dict[str, Any]:
    target = sidecar_path(path)
    if not os.path.exists(target):
        return {}
    with open(target, 'r') as f:
        return json.load(f)


def check_same_layout(path_a: str, path_b: str) -> Tuple[int, float]:
    header_a = read_grid_header(path_a)
    header_b = read_grid_header(path_b)
    if header_a != header_b:
        raise HeaderMismatchError(
            f"grid headers differ: {path_a} is nx={header_a[0]}, L={header_a[1]:g}; "
            f"{path_b} is nx={header_b[0]}, L={header_b[1]:g}",
            a=list(header_a), b=list(header_b),
        )
    return header_a
