"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Prompt extension, camera-motion rules and text vectors
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

A user prompt is extended either by a chat-completion endpoint (see llm.py)
or, offline, by a fixed template that restates the prompt under labelled
section headers. The camera motion is read off the prompt with a fixed
phrase table, and the extended prompt is turned into a deterministic unit
vector by a seeded random projection of its character 3-grams.
"""
import hashlib
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import llm, utils
from .camera import MotionCategory
from .errors import LayoutError, ValidationError


logger = logging.getLogger(__name__)

RESOURCES = Path(__file__).parent / "resources"
EXTEND_INSTRUCTION = "extend_prompt_v1.txt"
CLASSIFY_INSTRUCTION = "classify_motion_v1.txt"
OFFLINE_SECTIONS = "offline_sections_v1.txt"

SECTION_HEADERS = ("Subjects:", "Attributes:", "Scene:", "Actions:")

MAX_PROMPT_BYTES = 8192
MOTION_LABEL = re.compile(r"\b(zoom[ _-]?in|zoom[ _-]?out|left|right|upward|downward|static)\b")
DEFAULT_EMBED_DIM = 64


# matched in this order, the first hit wins
MOTION_RULES = (
    (MotionCategory.ZOOM_IN, ("zoom in", "zooms in", "push in")),
    (MotionCategory.ZOOM_OUT, ("zoom out", "zooms out", "pull back")),
    (MotionCategory.LEFT, ("pan left", "pans left", "moves left", "leftward")),
    (MotionCategory.RIGHT, ("pan right", "pans right", "moves right", "rightward")),
    (MotionCategory.UPWARD, ("tilt up", "tilts up", "moves up", "upward", "crane up")),
    (MotionCategory.DOWNWARD, ("tilt down", "tilts down", "moves down", "downward")),
)


def load_resource(name):
    return (RESOURCES / name).read_text(encoding="utf-8")


class PromptSource(Enum):

    ENDPOINT = "endpoint"
    OFFLINE = "offline_fallback"


@dataclass(frozen=True)
class Prompt:

    text: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValidationError("prompt is empty")
        nbytes = len(self.text.encode("utf-8"))
        if nbytes > MAX_PROMPT_BYTES:
            raise ValidationError(
                "prompt has {} bytes, at most {} are allowed".format(nbytes, MAX_PROMPT_BYTES)
            )


@dataclass(frozen=True)
class ExtendedPrompt:

    text: str
    source: PromptSource
    original: Prompt
    warning: str = None

    def __post_init__(self):
        if self.source is PromptSource.OFFLINE and self.original.text not in self.text:
            raise ValidationError("an offline extension must contain the original prompt")


@dataclass(frozen=True)
class TextEmbedding:

    vector: np.ndarray = field(repr=False)
    source_hash: str = ""

    @property
    def dim(self):
        return self.vector.shape[0]


@dataclass(frozen=True)
class ShotPromptList:

    prompts: tuple

    def __len__(self):
        return len(self.prompts)

    def __iter__(self):
        return iter(self.prompts)

    @classmethod
    def from_texts(cls, texts):
        return cls(tuple(Prompt(t) for t in texts))

    @classmethod
    def from_file(cls, path):
        """One prompt per non-empty line.
        """
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_texts([line.strip() for line in f if line.strip()])

    def check_layout(self, layout):
        if len(self.prompts) != layout.num_shots:
            raise LayoutError(
                "{} shot prompts for a layout with {} shots".format(len(self.prompts), layout.num_shots)
            )


def offline_extension(p):
    """The deterministic template expansion: the prompt, then one labelled
    section per header, each restating the prompt.
    """
    sections = load_resource(OFFLINE_SECTIONS).strip().format(prompt=p.text)
    return "{}\n\n{}".format(p.text, sections)


def extend_prompt(p, cfg=None):
    """
    Extend a prompt with the configured endpoint, or offline when `cfg` is None.

    :param p: a `Prompt` (or a string, validated here).
    :param cfg: an `llm.LlmEndpointConfig` or None.
    """
    if not isinstance(p, Prompt):
        p = Prompt(p)
    if cfg is None:
        return ExtendedPrompt(offline_extension(p), PromptSource.OFFLINE, p)

    reply = llm.chat_completion(cfg, load_resource(EXTEND_INSTRUCTION), p.text)
    if not reply:
        warning = "endpoint returned an empty reply, used the offline template"
        logger.warning(warning)
        return ExtendedPrompt(offline_extension(p), PromptSource.OFFLINE, p, warning)
    return ExtendedPrompt(reply, PromptSource.ENDPOINT, p)


def classify_camera_motion(p):
    """Match the lowercased prompt against `MOTION_RULES`, default static.
    """
    if not isinstance(p, Prompt):
        p = Prompt(p)
    text = p.text.lower()
    for category, phrases in MOTION_RULES:
        if any(phrase in text for phrase in phrases):
            return category
    return MotionCategory.STATIC


def classify_camera_motion_llm(p, cfg):
    """
    Ask the endpoint for a motion label. Returns (category, source, warning);
    an empty or unparseable reply falls back to the phrase table.
    """
    if not isinstance(p, Prompt):
        p = Prompt(p)
    reply = llm.chat_completion(cfg, load_resource(CLASSIFY_INSTRUCTION), p.text)
    found = MOTION_LABEL.search(reply.lower())
    if found is None:
        warning = "could not parse a motion label from {!r}, used the phrase table".format(reply)
        logger.warning(warning)
        return classify_camera_motion(p), PromptSource.OFFLINE, warning
    label = re.sub(r"^zoom[ _-]?", "zoom_", found.group(1))
    return MotionCategory.parse(label), PromptSource.ENDPOINT, None


def trigrams(text):
    """Character 3-grams of every whitespace token, padded with '#'.
    """
    grams = []
    for token in text.lower().split():
        padded = "#{}#".format(token)
        grams.extend(padded[i : i + 3] for i in range(max(len(padded) - 2, 1)))
    return grams


@lru_cache(maxsize=65536)
def _projection(gram, dim):
    """The fixed pseudo-random projection vector of one 3-gram.
    """
    rng = np.random.Generator(np.random.Philox(key=utils.digest_int("trigram", gram, dim)))
    return rng.standard_normal(dim)


def embed_text(p, dim=DEFAULT_EMBED_DIM):
    """
    Return the unit-norm `TextEmbedding` of an extended prompt (or plain text).
    Identical text always gives the identical vector.
    """
    if dim < 8:
        raise ValidationError("embedding dim must be >= 8, got {}".format(dim))
    text = p.text if hasattr(p, "text") else str(p)

    acc = np.zeros(dim)
    grams = trigrams(text) or [text]
    for g in grams:
        acc += _projection(g, dim)
    norm = np.linalg.norm(acc)
    if utils.iszero(norm):
        acc = _projection(text, dim)
        norm = np.linalg.norm(acc)

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return TextEmbedding((acc / norm).astype(np.float32), digest)
