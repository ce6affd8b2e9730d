from . import utils
from .attention import (
    ShotLayout,
    SummaryPolicy,
    build_pattern_mask,
    count_attention_pairs,
    masked_dense_oracle,
    sparse_shot_attention,
    windowed_cross_attention,
)
from .camera import (
    CameraIntrinsics,
    CameraPose,
    MotionCategory,
    PlaneAssumption,
    build_warp_field,
    template_from_category,
    template_from_poses,
)
from .denoiser import DenoiserConfig, DenoiserParams, denoiser_forward, training_loss
from .diffusion import DiffusionSchedule, forward_noise
from .evaluation import estimate_displacement, motion_agreement
from .fileio import load_checkpoint, load_grid, save_checkpoint, save_grid
from .homography import Homography
from .noise import BlendConfig, WarpMode, generate_camera_noise, inject_initial_noise
from .prompts import classify_camera_motion, embed_text, extend_prompt
from .sampler import create_sampler, ddim_sample
from .tensor import LatentGrid, RngStream, gaussian_grid
from .training import ToyDatasetConfig, make_toy_dataset, train_toy
