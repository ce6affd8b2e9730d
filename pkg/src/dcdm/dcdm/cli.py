"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Command line interface of ``dcdm``
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Example usage:

    python -m dcdm classify "pan left across the skyline"
    python -m dcdm gen-noise --template templates/left.json --shape 8x32x32x4 -o left.dcdn
    python -m dcdm attn-check --trials 200
    python -m dcdm attn-bench -o bench.csv
    python -m dcdm train-toy --steps 2000 -o toy.dcdp
    python -m dcdm sample --checkpoint toy.dcdp --prompt "the camera pans left" -o video.dcdn
    python -m dcdm eval-motion video.dcdn --category left

Every command accepts --config (a .json/.yaml run config) and --seed.
Flags override the config file. Errors are reported on stderr as a single
line "error: <category>: <detail>", the exit code is 1 for invalid input,
2 for runtime failures and 3 when the LLM endpoint cannot be reached.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import fileio, utils
from .attention import ShotLayout, SummaryPolicy
from .benchmark import bench_rows, plot_ratios, run_oracle_suite, write_csv
from .camera import MotionCategory, default_speed, template_from_category
from .config import RunConfig, load_run_config
from .diffusion import DiffusionSchedule
from .errors import DcdmError, InternalError, LayoutError, ShapeError, ValidationError
from .evaluation import estimate_displacement, mean_displacement, motion_agreement
from .noise import BlendConfig, WarpMode, generate_camera_noise
from .preview import load_reference_image, save_noise_preview
from .prompts import (
    ShotPromptList,
    classify_camera_motion,
    classify_camera_motion_llm,
    embed_text,
    extend_prompt,
)
from .sampler import ddim_sample
from .training import ToyDatasetConfig, train_toy


logger = logging.getLogger("dcdm")

ORACLE_TOLERANCE = 1e-5
DENSE_TOLERANCE = 1e-6


class ArgumentParser(argparse.ArgumentParser):

    """Report usage errors as `ValidationError` instead of exiting."""

    def error(self, message):
        raise ValidationError(message)


def _common():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="run config file (.json, .yaml)")
    parent.add_argument("--seed", type=int, help="master random seed")
    verbosity = parent.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    return parent


def _llm_flags(parser):
    parser.add_argument("--endpoint", help="chat-completion base URL, overrides DCDM_LLM_ENDPOINT")
    parser.add_argument("--model", help="model name, overrides DCDM_LLM_MODEL")
    parser.add_argument("--timeout", type=float, help="request timeout in seconds")


def _template_flags(parser):
    parser.add_argument("--template", help="camera template JSON file")
    parser.add_argument("--category", help="motion category, used when no template is given")
    parser.add_argument("--speed", type=float, help="pixels (pans) or scale rate (zooms) per frame")
    parser.add_argument("--lambda", dest="lam", type=float, help="noise blend factor in [0, 1]")
    parser.add_argument("--warp-mode", help="nearest or bilinear")
    parser.add_argument("--shape", help="latent shape TxHxWxC, e.g. 8x16x16x4")


def build_parser():
    common = _common()
    parser = ArgumentParser(prog="dcdm", description=__doc__.split("\n\n")[0].strip("~\n "))
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("extend-prompt", parents=[common], help="extend a prompt")
    p.add_argument("prompt")
    _llm_flags(p)

    p = sub.add_parser("classify", parents=[common], help="classify the camera motion of a prompt")
    p.add_argument("prompt")
    p.add_argument("--llm", action="store_true", help="ask the configured endpoint")
    _llm_flags(p)

    p = sub.add_parser("gen-noise", parents=[common], help="write camera-structured noise")
    _template_flags(p)
    p.add_argument("-o", "--output", required=True, help="output .dcdn file")
    p.add_argument("--gif", help="also write an animated GIF preview")

    p = sub.add_parser("attn-check", parents=[common], help="sparse attention vs the dense oracle")
    p.add_argument("--trials", type=int, default=200)

    p = sub.add_parser("attn-bench", parents=[common], help="attention pair counts and timings")
    p.add_argument("-o", "--output", required=True, help="output CSV file")
    p.add_argument("--shots", default="1,2,4,8", help="comma separated shot counts")
    p.add_argument("--shot-len", default="64", help="comma separated shot lengths in tokens")
    p.add_argument("--summary", help="comma separated summary sizes, default 0,4")
    p.add_argument("--tokens-per-frame", type=int, default=None)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--plot", help="also plot the pair ratios to this image file")

    p = sub.add_parser("train-toy", parents=[common], help="train the toy denoiser")
    p.add_argument("--shape", help="video shape TxHxWxC")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--samples", type=int, default=64, help="toy dataset size")
    p.add_argument("--shots", type=int, default=2)
    p.add_argument("-o", "--output", required=True, help="output checkpoint (.dcdp)")
    p.add_argument("--log", help="write the loss log to this file instead of stdout")

    p = sub.add_parser("sample", parents=[common], help="sample a video latent")
    p.add_argument("--checkpoint", required=True, help="trained .dcdp checkpoint")
    p.add_argument("--prompt", help="prompt shared by all shots")
    p.add_argument("--shot-prompts", help="file with one prompt per shot")
    p.add_argument("--shots", type=_positive_int, help="number of shots")
    p.add_argument("--sub-steps", type=_positive_int)
    p.add_argument("--count", type=_positive_int, help="number of videos, written as <stem>_<i>.dcdn")
    p.add_argument("--no-inject", action="store_true", help="start from plain gaussian noise")
    p.add_argument("--reference-image", help="reference image recorded in the metadata")
    p.add_argument("-o", "--output", required=True, help="output .dcdn file")
    _template_flags(p)
    _llm_flags(p)

    p = sub.add_parser("eval-motion", parents=[common], help="estimate per-frame displacements")
    p.add_argument("input", help="a .dcdn video latent")
    p.add_argument("--category", help="expected motion, defaults to the one in <input>.json")

    return parser


def configure_logging(args):
    level = logging.WARNING
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("dcdm").setLevel(level)


def _progress(args):
    return not args.quiet and sys.stderr.isatty()


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, got {!r}".format(text))
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1, got {}".format(value))
    return value


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError("expected comma separated integers, got {!r}".format(text))


def _write_sidecar(output, record):
    with open(str(output) + ".json", "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)


def _run_config(args):
    cfg = load_run_config(args.config) if args.config else RunConfig()
    overrides = {"seed": args.seed}
    for name in ("lam", "warp_mode"):
        overrides[name] = getattr(args, name, None)
    if getattr(args, "shape", None):
        overrides["shape"] = utils.parse_shape(args.shape)
    if getattr(args, "template", None):
        overrides["template"] = args.template
    return cfg.merged(**overrides)


def _endpoint(args, cfg):
    return cfg.llm_endpoint(base_url=args.endpoint, model=args.model, timeout=args.timeout)


def _template(args, cfg, shape, fallback=MotionCategory.STATIC):
    """The template given by --category, else the config/--template, else `fallback`."""
    T, H, W, _ = shape
    if args.category:
        category = MotionCategory.parse(args.category)
    elif cfg.template is not None:
        return cfg.camera_template((H, W), T)
    else:
        category = fallback
    speed = default_speed(category) if args.speed is None else args.speed
    return template_from_category(category, speed, T, dims=(H, W))


def cmd_extend_prompt(args, cfg):
    ext = extend_prompt(args.prompt, _endpoint(args, cfg))
    print(ext.text)
    if ext.warning:
        logger.warning(ext.warning)
    return 0


def cmd_classify(args, cfg):
    if args.llm:
        endpoint = _endpoint(args, cfg)
        if endpoint is None:
            raise ValidationError("--llm needs an endpoint (--endpoint or DCDM_LLM_ENDPOINT)")
        category, _, _ = classify_camera_motion_llm(args.prompt, endpoint)
    else:
        category = classify_camera_motion(args.prompt)
    print(category.value)
    return 0


def cmd_gen_noise(args, cfg):
    template = _template(args, cfg, cfg.shape)
    blend = BlendConfig(cfg.lam, WarpMode.parse(cfg.warp_mode))
    noise = generate_camera_noise(template, cfg.shape, blend, cfg.seed)
    fileio.save_grid(noise.grid, args.output)
    _write_sidecar(args.output, {"command": "gen-noise", "shape": list(cfg.shape), **noise.provenance})
    if args.gif:
        save_noise_preview(noise.grid, args.gif)
    logger.info("wrote %s", args.output)
    return 0


def cmd_attn_check(args, cfg):
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    report = run_oracle_suite(args.trials, cfg.seed, progress=_progress(args))
    print("trials: {}".format(report.trials))
    print("max |delta| vs masked dense oracle: {:.3e}".format(report.max_delta))
    print("max |delta| single shot vs dense: {:.3e}".format(report.max_dense_delta))
    if report.counter_mismatches:
        raise InternalError("{} pair count mismatches".format(report.counter_mismatches))
    if report.max_delta > ORACLE_TOLERANCE or report.max_dense_delta > DENSE_TOLERANCE:
        raise InternalError("sparse attention disagrees with the oracle")
    return 0


def cmd_attn_bench(args, cfg):
    shots = _int_list(args.shots)
    lengths = _int_list(args.shot_len)
    if args.summary:
        summaries = _int_list(args.summary)
    elif "S" in cfg.attention:
        summaries = [int(cfg.attention["S"])]
    else:
        summaries = [0, 4]
    tpf = args.tokens_per_frame or cfg.section("attention", "tokens_per_frame") or max(summaries + [1])
    rows = bench_rows(shots, lengths, summaries, tpf, repeats=args.repeats, seed=cfg.seed)
    write_csv(rows, args.output)
    if args.plot:
        plot_ratios(rows, args.plot)
    for row in rows:
        print("N_s={N_s} L_shot={L_shot} S={S} ratio={ratio}".format(**row))
    return 0


def cmd_train_toy(args, cfg):
    data = ToyDatasetConfig(
        shape=cfg.shape, sample_count=args.samples, seed=cfg.seed, shots=args.shots
    )
    steps = args.steps if args.steps is not None else int(cfg.section("train", "steps", 2000))
    lr = args.lr if args.lr is not None else float(cfg.section("train", "lr", 0.05))
    params, log = train_toy(data, steps, lr, cfg.seed, progress=_progress(args))
    fileio.save_checkpoint(params, args.output)
    text = "".join(line + "\n" for line in log.lines())
    if args.log:
        Path(args.log).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _shot_prompts(args, cfg, shots):
    if args.shot_prompts:
        prompts = ShotPromptList.from_file(args.shot_prompts)
    elif args.prompt:
        prompts = ShotPromptList.from_texts([args.prompt] * shots)
    elif cfg.prompts:
        prompts = ShotPromptList.from_texts(cfg.prompts)
    else:
        raise ValidationError("sample needs --prompt, --shot-prompts or 'prompts' in the config")
    if len(prompts) != shots:
        raise LayoutError("{} shot prompts for {} shots".format(len(prompts), shots))
    return prompts


def cmd_sample(args, cfg):
    params = fileio.load_checkpoint(args.checkpoint)
    T, H, W, C = cfg.shape
    if C != params.config.channels:
        raise ShapeError(
            "shape has {} channels, the checkpoint expects {}".format(C, params.config.channels)
        )
    shots = args.shots if args.shots is not None else int(cfg.section("sample", "shots", 1))
    layout = ShotLayout.even(T, shots, H * W)
    policy = SummaryPolicy(cfg.section("attention", "S", params.config.summary_tokens))

    prompts = _shot_prompts(args, cfg, shots)
    endpoint = _endpoint(args, cfg)
    extended = [extend_prompt(p, endpoint) for p in prompts]
    c_text = [embed_text(e, params.config.text_dim) for e in extended]

    template = _template(args, cfg, cfg.shape, fallback=classify_camera_motion(prompts.prompts[0]))
    blend = BlendConfig(cfg.lam, WarpMode.parse(cfg.warp_mode))
    sub_steps = args.sub_steps if args.sub_steps is not None else int(cfg.section("sample", "sub_steps", 20))
    count = args.count if args.count is not None else int(cfg.section("sample", "count", 1))
    if count < 1:
        raise ValidationError("count must be >= 1, got {}".format(count))
    reference = args.reference_image or cfg.reference_image
    schedule = DiffusionSchedule()

    out = Path(args.output)
    for i in range(count):
        seed = cfg.seed + i
        noise = None if args.no_inject else generate_camera_noise(template, cfg.shape, blend, seed)
        video = ddim_sample(
            params, schedule, noise, c_text, layout, sub_steps,
            seed=seed, shape=cfg.shape, policy=policy, progress=_progress(args),
        )
        path = out if count == 1 else out.with_name("{}_{:03d}{}".format(out.stem, i, out.suffix))
        fileio.save_grid(video, path)
        record = {
            "command": "sample",
            "seed": seed,
            "injected": noise is not None,
            "sub_steps": sub_steps,
            "shape": list(cfg.shape),
            "template": template.summary(),
            "lambda": blend.lam,
            "warp_mode": blend.warp_mode.value,
            "prompts": [
                {"text": e.original.text, "extended": e.text, "source": e.source.value}
                for e in extended
            ],
            "reference_image": load_reference_image(reference).to_dict() if reference else None,
        }
        _write_sidecar(path, record)
        logger.info("wrote %s", path)
    return 0


def cmd_eval_motion(args, cfg):
    video = fileio.load_grid(args.input)
    category = args.category
    sidecar = Path(args.input + ".json")
    if category is None and sidecar.exists():
        category = json.loads(sidecar.read_text()).get("template", {}).get("category")
    category = MotionCategory.parse(category or "static")

    shifts = estimate_displacement(video)
    for t, d in enumerate(shifts, start=1):
        print("{} {} {}{}".format(t, d.dx, d.dy, "" if d.confident else " low-confidence"))
    mx, my = mean_displacement(shifts)
    print("mean {:.3f} {:.3f}".format(mx, my))
    print("agreement {} {:.3f}".format(category.value, motion_agreement(shifts, category)))
    return 0


COMMANDS = {
    "extend-prompt": cmd_extend_prompt,
    "classify": cmd_classify,
    "gen-noise": cmd_gen_noise,
    "attn-check": cmd_attn_check,
    "attn-bench": cmd_attn_bench,
    "train-toy": cmd_train_toy,
    "sample": cmd_sample,
    "eval-motion": cmd_eval_motion,
}


def main(argv=None):
    """Run one command, return the process exit code.
    """
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args)
        cfg = _run_config(args)
        return COMMANDS[args.command](args, cfg)
    except SystemExit as e:
        # --help
        return e.code or 0
    except DcdmError as e:
        print("error: {}: {}".format(e.category, e), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print("error: io: {}".format(e), file=sys.stderr)
        return 1
