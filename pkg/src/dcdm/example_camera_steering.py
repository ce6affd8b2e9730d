"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Steer a toy video denoiser with camera-structured noise
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Trains the small denoiser on moving sinusoids, then samples it twice per
seed: once from plain gaussian noise and once from noise that pans left.
The mean per-frame shift of the sampled videos shows how much of the
camera motion the initial noise alone carries into the output.

Usage:

    python example_camera_steering.py -steps 2000 -videos 20
"""
import argparse

import numpy as np
from tqdm import tqdm

from dcdm.camera import MotionCategory, default_speed, template_from_category
from dcdm.diffusion import DiffusionSchedule
from dcdm.evaluation import estimate_displacement, mean_displacement, motion_agreement
from dcdm.noise import BlendConfig, generate_camera_noise
from dcdm.sampler import ddim_sample
from dcdm.training import ToyDatasetConfig, prompt_embedding, train_toy


def sample_motion(params, cfg, category, videos, inject, lam, sub_steps):
    T, H, W, _ = cfg.shape
    template = template_from_category(category, default_speed(category), T, dims=(H, W))
    _, embedding = prompt_embedding(category, cfg.text_dim)
    schedule = DiffusionSchedule()
    shifts, agree = [], []
    for i in tqdm(range(videos), desc="{} {}".format(category.value, "camera" if inject else "plain")):
        seed = 1000 + i
        noise = generate_camera_noise(template, cfg.shape, BlendConfig(lam), seed) if inject else None
        video = ddim_sample(
            params, schedule, noise, embedding, cfg.layout(), sub_steps, seed=seed, shape=cfg.shape
        )
        ds = estimate_displacement(video)
        shifts.append(mean_displacement(ds))
        agree.append(motion_agreement(ds, category))
    return np.mean(shifts, axis=0), np.mean(agree)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("-steps", type=int, default=2000, help="training steps")
    parser.add_argument("-lr", type=float, default=0.05, help="learning rate")
    parser.add_argument("-videos", type=int, default=20, help="videos sampled per setting")
    parser.add_argument("-lam", type=float, default=0.9, help="temporal correlation")
    parser.add_argument("-sub_steps", type=int, default=20, help="DDIM updates")
    args = parser.parse_args()

    cfg = ToyDatasetConfig()
    params, log = train_toy(cfg, args.steps, args.lr, seed=0, progress=True)
    print("final loss {:.4f}".format(log.window_mean(max(0, args.steps - 100), args.steps)))

    for inject in (False, True):
        (dx, dy), agreement = sample_motion(
            params, cfg, MotionCategory.LEFT, args.videos, inject, args.lam, args.sub_steps
        )
        print(
            "{:>6} noise: mean shift ({:+.3f}, {:+.3f}), agreement with 'left' {:.2f}".format(
                "camera" if inject else "plain", dx, dy, agreement
            )
        )


if __name__ == "__main__":
    main()
