"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Animate camera-structured noise for every category
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Each frame is the previous one warped along the camera path and blended
with fresh noise, so the grain drifts the way the camera moves. Writes one
gif per motion category into the output directory.

Usage:

    python example_camera_noise.py -lam 0.9 -size 12x96x96x4
"""
import argparse
from pathlib import Path

from tqdm import tqdm

from dcdm.camera import MotionCategory, default_speed, template_from_category
from dcdm.noise import BlendConfig, WarpMode, generate_camera_noise
from dcdm.preview import save_noise_preview


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "-size", metavar="TxHxWxC", type=str, default="12x96x96x4",
        help="shape of the noise volume"
    )
    parser.add_argument("-lam", type=float, default=0.9, help="temporal correlation")
    parser.add_argument(
        "-warp", type=str, default="nearest", help="nearest or bilinear"
    )
    parser.add_argument("-seed", type=int, default=0, help="random seed")
    parser.add_argument("-out", type=str, default="noise_gifs", help="output directory")
    args = parser.parse_args()

    T, H, W, C = [int(x) for x in args.size.split("x")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = BlendConfig(args.lam, WarpMode.parse(args.warp))

    for category in tqdm(list(MotionCategory), desc="categories"):
        template = template_from_category(category, default_speed(category), T, dims=(H, W))
        noise = generate_camera_noise(template, (T, H, W, C), cfg, args.seed)
        save_noise_preview(noise.grid, out / "{}.gif".format(category.value), scale=3)

    print("gifs saved to {}".format(out))


if __name__ == "__main__":
    main()
