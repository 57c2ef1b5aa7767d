import struct

import numpy as np
import pytest

from ttfed.idx import IdxFile, IdxFormatError, LabeledDataset, load_idx


def _images(count, rows=28, cols=28, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(count, rows * cols)) / 255.0


def test_load_written_files(write_idx):
    images = _images(7)
    labels = np.array([0, 1, 2, 3, 9, 8, 7])
    data = load_idx(*write_idx(images, labels))
    assert data.count == 7
    assert data.images.shape == (7, 784)
    assert data.images.dtype == np.float64
    assert data.images.min() >= 0.0 and data.images.max() <= 1.0
    np.testing.assert_allclose(data.images, images, atol=1e-12)
    np.testing.assert_array_equal(data.labels, labels)


def test_big_endian_header():
    raw = IdxFile.build_labels(np.array([4, 2]))
    assert raw[:8] == bytes([0, 0, 8, 1, 0, 0, 0, 2])
    assert raw[8:] == bytes([4, 2])


def test_pixel_scaling():
    header = struct.pack(">IIII", IdxFile.IMAGES_MAGIC, 1, 1, 3)
    pixels = IdxFile.parse_images(header + bytes([0, 255, 51]))
    np.testing.assert_allclose(pixels, [[0.0, 1.0, 0.2]])


def test_bad_magic():
    raw = struct.pack(">II", 0x00000803, 1) + bytes([1])
    with pytest.raises(IdxFormatError) as err:
        IdxFile.parse_labels(raw)
    assert err.value.kind == "bad-magic"


def test_truncated_payload():
    raw = IdxFile.build_images(_images(2))[:-10]
    with pytest.raises(IdxFormatError) as err:
        IdxFile.parse_images(raw)
    assert err.value.kind == "truncated"


def test_truncated_header():
    with pytest.raises(IdxFormatError) as err:
        IdxFile.parse_labels(b"\x00\x00\x08")
    assert err.value.kind == "truncated"


def test_count_mismatch(write_idx, tmp_path):
    img_path, _ = write_idx(_images(3), np.array([1, 2, 3]), prefix="a")
    _, lbl_path = write_idx(_images(2), np.array([1, 2]), prefix="b")
    with pytest.raises(IdxFormatError) as err:
        load_idx(img_path, lbl_path)
    assert err.value.kind == "count-mismatch"


def test_label_out_of_range():
    raw = struct.pack(">II", IdxFile.LABELS_MAGIC, 2) + bytes([3, 12])
    with pytest.raises(IdxFormatError) as err:
        IdxFile.parse_labels(raw)
    assert err.value.kind == "bad-label"


def test_empty_files(write_idx):
    data = load_idx(*write_idx(np.zeros((0, 784)), np.zeros(0, dtype=np.int64)))
    assert data.count == 0
    assert data.images.shape == (0, 784)


def test_subset_keeps_pairs():
    data = LabeledDataset(np.arange(12, dtype=np.float64).reshape(4, 3), np.array([0, 1, 2, 3]))
    sub = data.subset([3, 1])
    np.testing.assert_array_equal(sub.labels, [3, 1])
    np.testing.assert_array_equal(sub.images[0], [9.0, 10.0, 11.0])
