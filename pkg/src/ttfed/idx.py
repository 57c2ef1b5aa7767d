import struct
from dataclasses import dataclass

import numpy as np


class IdxFormatError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass
class LabeledDataset:
    images: np.ndarray  # (count, 784) float64 in [0, 1]
    labels: np.ndarray  # (count,) int64 in 0..9

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise IdxFormatError("count-mismatch", f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels")

    @property
    def count(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[indices], self.labels[indices])


class IdxFile:
    """Big-endian IDX container: magic, dimension sizes, raw unsigned bytes."""
    IMAGES_MAGIC: int = 0x00000803
    LABELS_MAGIC: int = 0x00000801
    NUM_CLASSES: int = 10

    @staticmethod
    def read_header(raw: bytes, magic: int, ndim: int, name: str):
        header_size = 4 * (1 + ndim)
        if len(raw) < header_size:
            raise IdxFormatError("truncated", f"{name}: header needs {header_size} bytes, got {len(raw)}")
        found, *dims = struct.unpack(">I" + "I" * ndim, raw[:header_size])
        if found != magic:
            raise IdxFormatError("bad-magic", f"{name}: expected {magic:#010x}, got {found:#010x}")
        return dims, header_size

    @staticmethod
    def parse_images(raw: bytes, name: str = "images") -> np.ndarray:
        (count, rows, cols), offset = IdxFile.read_header(raw, IdxFile.IMAGES_MAGIC, 3, name)
        size = count * rows * cols
        if len(raw) - offset < size:
            raise IdxFormatError("truncated", f"{name}: payload needs {size} bytes, got {len(raw) - offset}")
        if size == 0:
            return np.zeros((count, rows * cols), dtype=np.float64)
        pixels = np.frombuffer(raw, dtype=np.uint8, count=size, offset=offset)
        return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    @staticmethod
    def parse_labels(raw: bytes, name: str = "labels") -> np.ndarray:
        (count,), offset = IdxFile.read_header(raw, IdxFile.LABELS_MAGIC, 1, name)
        if len(raw) - offset < count:
            raise IdxFormatError("truncated", f"{name}: payload needs {count} bytes, got {len(raw) - offset}")
        if count == 0:
            return np.zeros(0, dtype=np.int64)
        labels = np.frombuffer(raw, dtype=np.uint8, count=count, offset=offset).astype(np.int64)
        if labels.max() >= IdxFile.NUM_CLASSES:
            raise IdxFormatError("bad-label", f"{name}: label {labels.max()} outside 0..9")
        return labels

    @staticmethod
    def build_images(images: np.ndarray, rows: int = 28, cols: int = 28) -> bytes:
        pixels = np.clip(np.rint(np.asarray(images, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
        header = struct.pack(">IIII", IdxFile.IMAGES_MAGIC, pixels.shape[0], rows, cols)
        return header + pixels.tobytes()

    @staticmethod
    def build_labels(labels: np.ndarray) -> bytes:
        values = np.asarray(labels, dtype=np.uint8)
        return struct.pack(">II", IdxFile.LABELS_MAGIC, values.shape[0]) + values.tobytes()


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    with open(images_path, "rb") as f:
        raw_images = f.read()
    with open(labels_path, "rb") as f:
        raw_labels = f.read()

    # compare header counts before touching payloads
    (n_images, _, _), _ = IdxFile.read_header(raw_images, IdxFile.IMAGES_MAGIC, 3, images_path)
    (n_labels,), _ = IdxFile.read_header(raw_labels, IdxFile.LABELS_MAGIC, 1, labels_path)
    if n_images != n_labels:
        raise IdxFormatError("count-mismatch", f"{n_images} images vs {n_labels} labels")

    return LabeledDataset(IdxFile.parse_images(raw_images, images_path),
                          IdxFile.parse_labels(raw_labels, labels_path))


def dump_images(path: str, images: np.ndarray, rows: int = 28, cols: int = 28) -> None:
    with open(path, "wb") as f:
        f.write(IdxFile.build_images(images, rows, cols))


def dump_labels(path: str, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(IdxFile.build_labels(labels))
