#!/usr/bin/env python3
"""Write the grayscale PGM images used by the tests (scikit-image samples).

train/: images for desk-scale mixture training.
test/:  held-out 256x256 crops for denoising and likelihood checks.
"""
import argparse
import pathlib

import numpy as np
import skimage.data as data
from skimage.color import rgb2gray
from skimage.transform import rescale

TRAIN = ["astronaut", "coffee", "rocket", "brick", "grass", "gravel", "coins", "immunohistochemistry"]
TEST = ["camera", "moon", "chelsea", "clock", "cell", "text"]


def gray(name):
    img = getattr(data, name)()
    if img.ndim == 3:
        img = rgb2gray(img[..., :3]) * 255.0
    img = img.astype(np.float64)
    if max(img.shape) > 512:
        img = rescale(img, 512.0 / max(img.shape), anti_aliasing=True, preserve_range=True)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def center_crop(img, edge):
    h, w = img.shape
    e = min(edge, h, w)
    y, x = (h - e) // 2, (w - e) // 2
    return img[y:y + e, x:x + e]


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img).tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(parents=True, exist_ok=True)
    for name in TRAIN:
        write_pgm(out / "train" / f"{name}.pgm", gray(name))
    for name in TEST:
        write_pgm(out / "test" / f"{name}.pgm", center_crop(gray(name), 256))


if __name__ == "__main__":
    main()
