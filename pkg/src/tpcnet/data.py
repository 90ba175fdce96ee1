"""Paired low/normal-light PNG datasets and 8-bit image I/O."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class DatasetError(ValueError):
    pass


def list_pngs(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix.lower() == ".png")


def read_png(path) -> np.ndarray:
    """Decode an 8-bit PNG into a ``(3, H, W)`` float32 array in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot decode {path}: {exc}") from exc
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def quantize(img) -> np.ndarray:
    """Round-half-up to 8 bits after clamping to [0, 1]."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_png(path, img) -> None:
    """Write a ``(3, H, W)`` array in [0, 1] as an 8-bit RGB PNG."""
    import io

    hwc = quantize(img).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(hwc), mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    pairs: tuple[tuple[Path, Path], ...]

    def __len__(self):
        return len(self.pairs)

    def load(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(read_png(lo), read_png(hi)) for lo, hi in self.pairs]


def load_pairs(root) -> DatasetIndex:
    """Index ``root/low/*.png`` against ``root/high/*.png`` by filename."""
    root = Path(root)
    low_dir, high_dir = root / "low", root / "high"
    for d in (low_dir, high_dir):
        if not d.is_dir():
            raise DatasetError(f"missing directory {d}")
    low = {p.name: p for p in list_pngs(low_dir)}
    high = {p.name: p for p in list_pngs(high_dir)}
    for name in sorted(set(low) - set(high)):
        raise DatasetError(f"unmatched filename {name} in {low_dir} has no counterpart in {high_dir}")
    for name in sorted(set(high) - set(low)):
        raise DatasetError(f"unmatched filename {name} in {high_dir} has no counterpart in {low_dir}")
    names = sorted(low)
    if not names:
        raise DatasetError(f"no PNG pairs under {root}")
    lo0, hi0 = read_png(low[names[0]]), read_png(high[names[0]])
    if lo0.shape != hi0.shape:
        raise DatasetError(f"{names[0]}: low {lo0.shape} and high {hi0.shape} differ in size")
    return DatasetIndex(root=root, pairs=tuple((low[n], high[n]) for n in names))
