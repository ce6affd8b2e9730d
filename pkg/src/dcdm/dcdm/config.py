"""
Run configuration files.

A run config is a JSON or YAML tree, all keys optional:

    seed: 0
    lambda: 0.9
    warp_mode: nearest            # or bilinear
    template: templates/left.json # or an inline template object
    shape: {T: 8, H: 16, W: 16, C: 4}   # or "8x16x16x4"
    llm: {endpoint: ..., model: ..., timeout: ..., api_key_env: ...}
    attention: {S: 4, tokens_per_frame: 64}
    train: {steps: 2000, lr: 0.05}
    sample: {sub_steps: 20, count: 1, shots: 2}
    reference_image: ref.png
    prompts: [one prompt per shot]

Relative paths are resolved against the directory of the config file and
must exist when the file is read. Values from the file are overridden by
DCDM_LLM_* environment variables and then by command line flags.
"""
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from . import llm, utils
from .camera import load_template, parse_template
from .errors import ConfigError


logger = logging.getLogger(__name__)


SECTIONS = {
    "llm": {"endpoint", "model", "timeout", "api_key_env"},
    "attention": {"S", "tokens_per_frame"},
    "train": {"steps", "lr"},
    "sample": {"sub_steps", "count", "shots"},
}
TOP_LEVEL = {
    "seed", "lambda", "warp_mode", "template", "shape", "reference_image", "prompts",
} | set(SECTIONS)


@dataclass(frozen=True)
class RunConfig:

    seed: int = 0
    lam: float = 0.9
    warp_mode: str = "nearest"
    template: object = None
    shape: tuple = (8, 16, 16, 4)
    llm: dict = field(default_factory=dict)
    attention: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    sample: dict = field(default_factory=dict)
    reference_image: str = None
    prompts: tuple = ()

    def merged(self, **overrides):
        """A copy with every override that is not None applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def section(self, name, key, default=None):
        return getattr(self, name).get(key, default)

    def llm_endpoint(self, environ=None, **flags):
        """
        The endpoint config after layering file < environment < flags, or
        None for offline mode.
        """
        environ = os.environ if environ is None else environ
        values = {}
        if "endpoint" in self.llm:
            values["base_url"] = self.llm["endpoint"]
        for key in ("model", "timeout", "api_key_env"):
            if key in self.llm:
                values[key] = self.llm[key]
        if environ.get(llm.ENV_ENDPOINT):
            values["base_url"] = environ[llm.ENV_ENDPOINT]
        if environ.get(llm.ENV_MODEL):
            values["model"] = environ[llm.ENV_MODEL]
        values.update({k: v for k, v in flags.items() if v is not None})
        if not values.get("base_url"):
            return None
        if "timeout" in values:
            values["timeout"] = float(values["timeout"])
        return llm.LlmEndpointConfig(**values)

    def camera_template(self, dims, frames):
        """Build the configured template for (H, W) images and `frames` frames."""
        if self.template is None:
            raise ConfigError("no camera template configured")
        if isinstance(self.template, dict):
            return parse_template(self.template, dims, frames)
        return load_template(self.template, dims, frames)


def _parse_shape(value):
    if isinstance(value, str):
        return utils.parse_shape(value)
    if isinstance(value, dict):
        unknown = set(value) - {"T", "H", "W", "C"}
        if unknown:
            raise ConfigError("unknown shape keys: {}".format(", ".join(sorted(unknown))))
        try:
            return tuple(int(value[k]) for k in "THWC")
        except KeyError as e:
            raise ConfigError("shape is missing {}".format(e))
    if isinstance(value, (list, tuple)) and len(value) == 4:
        return tuple(int(x) for x in value)
    raise ConfigError("cannot read a shape from {!r}".format(value))


def _existing(path, base):
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError("referenced file does not exist: {}".format(p))
    return str(p)


def parse_run_config(data, base_dir="."):
    """Validate a parsed config tree and turn it into a `RunConfig`.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("a run config must be a mapping")
    unknown = set(data) - TOP_LEVEL
    if unknown:
        raise ConfigError("unknown config keys: {}".format(", ".join(sorted(unknown))))
    for name, keys in SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError("{!r} must be a mapping".format(name))
        bad = set(section) - keys
        if bad:
            raise ConfigError("unknown {} keys: {}".format(name, ", ".join(sorted(bad))))

    base = Path(base_dir)
    values = {name: dict(data.get(name, {})) for name in SECTIONS}
    if "seed" in data:
        values["seed"] = int(data["seed"])
    if "lambda" in data:
        values["lam"] = float(data["lambda"])
    if "warp_mode" in data:
        values["warp_mode"] = str(data["warp_mode"])
    if "shape" in data:
        values["shape"] = _parse_shape(data["shape"])
    if "template" in data:
        tpl = data["template"]
        values["template"] = dict(tpl) if isinstance(tpl, dict) else _existing(tpl, base)
    if "reference_image" in data:
        values["reference_image"] = _existing(data["reference_image"], base)
    if "prompts" in data:
        prompts = data["prompts"]
        if not isinstance(prompts, list) or not all(isinstance(p, str) for p in prompts):
            raise ConfigError("'prompts' must be a list of strings")
        values["prompts"] = tuple(prompts)
    return RunConfig(**values)


def load_run_config(path):
    """Read a run config from a .json, .yaml or .yml file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file does not exist: {}".format(path))
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        elif path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            raise ConfigError("unsupported config format {!r}".format(path.suffix))
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigError("{}: {}".format(path, e))
    logger.debug("loaded run config %s", path)
    return parse_run_config(data, path.parent)
