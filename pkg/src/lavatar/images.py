"""Image output: 8-bit PNG plus raw little-endian f32 dumps for exact tests."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img)).save(buf, format="PNG")
    return buf.getvalue()


def write_png(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(png_bytes(img))


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def raw_f32_bytes(img: np.ndarray) -> bytes:
    return np.ascontiguousarray(img, dtype="<f4").tobytes()


def write_raw_f32(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(raw_f32_bytes(img))


def read_raw_f32(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    return data.reshape(shape).astype(np.float64)
