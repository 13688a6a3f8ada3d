#!/usr/bin/env python3
"""Builds the grayscale PGM test corpus under tests/data/.

Natural photographs from scikit-image's bundled samples are converted to
gray (mean across channels), cut into patches, and written as binary 8-bit
PGM. Two corpora come out of it:

  tests/data/images/     patch pool for the noise/PSNR and resampling checks
  tests/data/bsds_mini/  a small train/val/test split (disjoint photos) laid
                         out like a pre-converted BSDS500 directory

The images/ pool is filtered so that the expected PSNR of a noisy copy
(sigma = 25/255, clamped to [0,1]) stays close to the unclamped analytic
value; heavily saturated patches would bias it upward.
"""

import math
import os
import sys

import numpy as np
from scipy.stats import norm
import skimage.data as data

ROOT = os.path.join(os.path.dirname(__file__), "..", "tests", "data")
SIGMA = 25.0 / 255.0


def to_gray(img):
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def quantize(img):
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, img8):
    h, w = img8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img8.tobytes())


def expected_noisy_psnr(img8):
    """Expected PSNR of img + clamped N(0, sigma^2) noise, per pixel value."""
    values = img8.astype(np.float64) / 255.0
    hist = np.bincount(img8.reshape(-1), minlength=256).astype(np.float64)
    hist /= hist.sum()
    p = np.arange(256) / 255.0
    a = (0.0 - p) / SIGMA  # lower clamp in sigma units
    b = (1.0 - p) / SIGMA
    phi_a, phi_b = norm.pdf(a), norm.pdf(b)
    cdf_a, cdf_b = norm.cdf(a), norm.cdf(b)
    middle = SIGMA**2 * ((cdf_b - cdf_a) - (b * phi_b - a * phi_a))
    low = (p**2) * cdf_a
    high = ((1.0 - p) ** 2) * (1.0 - cdf_b)
    mse = float(np.sum(hist * (middle + low + high)))
    del values
    return 10.0 * math.log10(1.0 / mse)


def quadrants(img):
    h, w = img.shape
    return [img[: h // 2, : w // 2], img[: h // 2, w // 2 :],
            img[h // 2 :, : w // 2], img[h // 2 :, w // 2 :]]


def halves(img, axis):
    h, w = img.shape
    if axis == 0:
        return [img[: h // 2, :], img[h // 2 :, :]]
    return [img[:, : w // 2], img[:, w // 2 :]]


def strips(img, n):
    w = img.shape[1]
    return [img[:, i * w // n : (i + 1) * w // n] for i in range(n)]


def main():
    gray = {
        "astronaut": to_gray(data.astronaut()),
        "camera": to_gray(data.camera()),
        "cat": to_gray(data.cat()),
        "clock": to_gray(data.clock()),
        "coffee": to_gray(data.coffee()),
        "coins": to_gray(data.coins()),
        "ihc": to_gray(data.immunohistochemistry()),
        "moon": to_gray(data.moon()),
        "page": to_gray(data.page()),
        "rocket": to_gray(data.rocket()),
        "text": to_gray(data.text()),
        "brick": to_gray(data.brick()),
        "grass": to_gray(data.grass()),
        "gravel": to_gray(data.gravel()),
    }

    pool = {}
    for i, q in enumerate(quadrants(gray["astronaut"])):
        pool[f"astronaut_q{i}"] = q
    for i, q in enumerate(quadrants(gray["camera"])):
        pool[f"camera_q{i}"] = q
    for i, q in enumerate(quadrants(gray["ihc"])):
        pool[f"ihc_q{i}"] = q
    for i, q in enumerate(quadrants(gray["brick"])):
        pool[f"brick_q{i}"] = q
    for i, q in enumerate(quadrants(gray["grass"])):
        pool[f"grass_q{i}"] = q
    for i, q in enumerate(quadrants(gray["gravel"])):
        pool[f"gravel_q{i}"] = q
    for i, h in enumerate(halves(gray["cat"], 1)):
        pool[f"cat_h{i}"] = h
    for i, h in enumerate(halves(gray["clock"], 1)):
        pool[f"clock_h{i}"] = h
    for i, s in enumerate(strips(gray["coffee"], 3)):
        pool[f"coffee_s{i}"] = s
    for i, h in enumerate(halves(gray["coins"], 1)):
        pool[f"coins_h{i}"] = h
    for i, s in enumerate(strips(gray["rocket"], 3)):
        pool[f"rocket_s{i}"] = s
    for i, h in enumerate(halves(gray["text"], 1)):
        pool[f"text_h{i}"] = h
    for i, h in enumerate(halves(gray["page"], 1)):
        pool[f"page_h{i}"] = h
    pool["moon_center"] = gray["moon"][64:448, 64:448]

    quantized = {name: quantize(img) for name, img in pool.items()}
    psnrs = {name: expected_noisy_psnr(img8) for name, img8 in quantized.items()}

    target = 20.0 * math.log10(255.0 / 25.0)
    print(f"analytic unclamped PSNR: {target:.4f}")
    for name in sorted(psnrs, key=lambda n: abs(psnrs[n] - target)):
        h, w = quantized[name].shape
        print(f"  {name:16s} {h}x{w}  expected {psnrs[name]:.4f}")

    # images/: the least clamp-biased patches whose mean stays near target.
    ordered = sorted(psnrs, key=lambda n: abs(psnrs[n] - target))
    chosen = []
    for name in ordered:
        h, w = quantized[name].shape
        if h < 160 or w < 160:
            continue
        candidate = chosen + [name]
        mean = sum(psnrs[c] for c in candidate) / len(candidate)
        if len(candidate) <= 20 or abs(mean - target) < 0.04:
            chosen.append(name)
        if len(chosen) == 24:
            break
    mean = sum(psnrs[c] for c in chosen) / len(chosen)
    print(f"images/: {len(chosen)} patches, expected mean {mean:.4f}")
    assert len(chosen) >= 20 and abs(mean - target) < 0.05

    images_dir = os.path.join(ROOT, "images")
    os.makedirs(images_dir, exist_ok=True)
    for name in sorted(chosen):
        write_pgm(os.path.join(images_dir, f"{name}.pgm"), quantized[name])

    # bsds_mini/: photo-disjoint split.
    split = {
        "train": ["astronaut_q0", "astronaut_q3", "camera_q0", "camera_q2",
                  "coffee_s0", "coffee_s2", "brick_q0", "brick_q3",
                  "grass_q0", "grass_q3", "gravel_q0", "gravel_q3"],
        "val": ["cat_h0", "cat_h1", "clock_h0", "clock_h1"],
        "test": ["coins_h0", "coins_h1", "ihc_q0", "ihc_q3",
                 "rocket_s0", "rocket_s2"],
    }
    for part, names in split.items():
        part_dir = os.path.join(ROOT, "bsds_mini", part)
        os.makedirs(part_dir, exist_ok=True)
        for name in names:
            img8 = quantized[name]
            assert img8.shape[0] >= 150 and img8.shape[1] >= 150, (name, img8.shape)
            write_pgm(os.path.join(part_dir, f"{name}.pgm"), img8)
        print(f"bsds_mini/{part}: {len(names)} images")


if __name__ == "__main__":
    sys.exit(main())
