"""Regenerates the natural-image fixtures under crates/core/tests/data.

Every source is a scikit-image sample image released into the public domain
or under CC0.
"""
import os

import numpy as np
from PIL import Image
import skimage.data as data

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data")

TRAIN = ["brick", "grass", "gravel", "hubble_deep_field", "immunohistochemistry",
         "retina", "coins", "text", "cell"]
HELD_OUT = ["astronaut", "chelsea", "coffee", "rocket", "camera"]


def rgb(name):
    img = getattr(data, name)()
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    img = img[..., :3]
    if img.dtype != np.uint8:
        img = (255 * (img.astype(np.float64) / img.max())).round().astype(np.uint8)
    return img


def crops(img, size, count, rng):
    h, w = img.shape[:2]
    for _ in range(count):
        y = rng.integers(0, h - size + 1)
        x = rng.integers(0, w - size + 1)
        yield img[y:y + size, x:x + size]


def main():
    rng = np.random.default_rng(2024)
    train_dir = os.path.join(OUT, "train")
    eval_dir = os.path.join(OUT, "heldout")
    os.makedirs(train_dir, exist_ok=True)
    os.makedirs(eval_dir, exist_ok=True)
    for name in TRAIN:
        for i, c in enumerate(crops(rgb(name), 96, 4, rng)):
            Image.fromarray(c).save(os.path.join(train_dir, f"{name}_{i}.png"), optimize=True)
    for name in HELD_OUT:
        img = rgb(name)
        h, w = img.shape[:2]
        y, x = (h - 192) // 2, (w - 192) // 2
        Image.fromarray(img[y:y + 192, x:x + 192]).save(
            os.path.join(eval_dir, f"{name}.png"), optimize=True)


if __name__ == "__main__":
    main()
