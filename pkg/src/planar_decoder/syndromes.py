"""Reading and writing shot data in the "01" and "b8" formats.

"01": one ASCII line per shot, detector bits followed by observable bits.
"b8": each shot is ``ceil(n / 8)`` bytes, bit ``k`` stored in byte ``k // 8`` at
position ``k % 8`` (least significant first). Observables go in a separate file.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .dem import SyndromeBatch

FORMATS = ("01", "b8")


def bytes_per_shot(bits: int) -> int:
    return (bits + 7) // 8


def pack_b8(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=bool)
    if bits.shape[1] == 0:
        return b""
    return np.packbits(bits, axis=1, bitorder="little").tobytes()


def unpack_b8(data: bytes, bits: int) -> np.ndarray:
    width = bytes_per_shot(bits)
    if width == 0:
        return np.zeros((0, 0), dtype=bool)
    if len(data) % width:
        raise ValueError(f"b8 payload of {len(data)} bytes is not a multiple of {width}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, width)
    return np.unpackbits(raw, axis=1, count=bits, bitorder="little").astype(bool)


def format_01(bits: np.ndarray) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return "\n" * bits.shape[0]
    chars = (bits + ord("0")).astype(np.uint8)
    return "".join(row.tobytes().decode("ascii") + "\n" for row in chars)


def parse_01(text: str, width: int) -> np.ndarray:
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [r for r in rows if r or width == 0]
    out = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        if len(r) != width or set(r) - {"0", "1"}:
            raise ValueError(f"shot {i}: expected {width} characters of 0/1, got {r!r}")
        out[i] = np.frombuffer(r.encode("ascii"), dtype=np.uint8) == ord("1")
    return out


def write_batch(
    batch: SyndromeBatch,
    path: str | os.PathLike,
    fmt: str = "01",
    observables_path: str | os.PathLike | None = None,
) -> None:
    path = Path(path)
    if fmt == "01":
        bits = batch.detectors
        if batch.observables is not None:
            bits = np.hstack([bits, batch.observables])
        path.write_text(format_01(bits))
    elif fmt == "b8":
        path.write_bytes(pack_b8(batch.detectors))
        if batch.observables is not None and observables_path is not None:
            Path(observables_path).write_bytes(pack_b8(batch.observables))
    else:
        raise ValueError(f"unknown syndrome format {fmt!r}")


def read_batch(
    path: str | os.PathLike,
    detector_count: int,
    observable_count: int = 0,
    fmt: str = "01",
    observables_path: str | os.PathLike | None = None,
) -> SyndromeBatch:
    path = Path(path)
    if fmt == "01":
        bits = parse_01(path.read_text(), detector_count + observable_count)
        obs = bits[:, detector_count:] if observable_count else None
        return SyndromeBatch(bits[:, :detector_count], obs)
    if fmt == "b8":
        det = unpack_b8(path.read_bytes(), detector_count)
        obs = None
        if observables_path is not None:
            obs = unpack_b8(Path(observables_path).read_bytes(), observable_count)
            if obs.shape[0] != det.shape[0]:
                raise ValueError("detector and observable files disagree on shot count")
        return SyndromeBatch(det, obs)
    raise ValueError(f"unknown syndrome format {fmt!r}")


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    chunks = []
    while n:
        b = fh.read(n)
        if not b:
            break
        chunks.append(b)
        n -= len(b)
    return b"".join(chunks)


def iter_b8_chunks(
    path: str | os.PathLike,
    detector_count: int,
    chunk_shots: int = 4096,
    observables_path: str | os.PathLike | None = None,
    observable_count: int = 0,
) -> Iterator[SyndromeBatch]:
    """Stream a b8 file without loading every shot at once."""
    dw = bytes_per_shot(detector_count)
    ow = bytes_per_shot(observable_count)
    if dw == 0:
        raise ValueError("streaming b8 needs at least one detector per shot")
    obs_fh = open(observables_path, "rb") if observables_path is not None else None
    try:
        with open(path, "rb") as fh:
            while True:
                raw = _read_exact(fh, dw * chunk_shots)
                if not raw:
                    break
                det = unpack_b8(raw, detector_count)
                obs = None
                if obs_fh is not None:
                    obs = unpack_b8(_read_exact(obs_fh, ow * det.shape[0]), observable_count)
                    if obs.shape[0] != det.shape[0]:
                        raise ValueError("observable file ended before detector file")
                yield SyndromeBatch(det, obs)
    finally:
        if obs_fh is not None:
            obs_fh.close()
