"""
A minimal blocking client for OpenAI-compatible chat-completion endpoints.

    POST {base}/v1/chat/completions
    {"model": ..., "messages": [{"role": "system", ...}, {"role": "user", ...}],
     "temperature": 0}

The reply is expected to look like {"choices": [{"message": {"content": ...}}]}.
The API key is read from the environment variable named in the config and
sent as a bearer token.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass

import requests

from .errors import ConfigError, TransportError


logger = logging.getLogger(__name__)


ENV_ENDPOINT = "DCDM_LLM_ENDPOINT"
ENV_MODEL = "DCDM_LLM_MODEL"
ENV_API_KEY = "DCDM_LLM_API_KEY"

DEFAULT_MODEL = "qwen3"
DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class LlmEndpointConfig:

    base_url: str
    model: str = DEFAULT_MODEL
    timeout: float = DEFAULT_TIMEOUT
    api_key_env: str = ENV_API_KEY

    def __post_init__(self):
        if not self.timeout > 0:
            raise ConfigError("timeout must be positive, got {}".format(self.timeout))
        if not self.base_url:
            raise ConfigError("the endpoint base URL is empty")

    @property
    def url(self):
        return self.base_url.rstrip("/") + "/v1/chat/completions"

    def api_key(self):
        return os.environ.get(self.api_key_env)


def _post(url, payload, headers, timeout):
    resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    # the body is read here so the deadline covers the whole transfer
    resp.content
    return resp


def chat_completion(cfg, system, user):
    """
    Send one system + user message pair, return the reply content
    (possibly empty). Raises `TransportError` on timeouts, connection
    failures and HTTP status >= 400.

    `cfg.timeout` bounds the whole call, a server that trickles its reply
    is abandoned once the deadline passes.
    """
    payload = {
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": 0,
    }
    headers = {"Content-Type": "application/json"}
    key = cfg.api_key()
    if key:
        headers["Authorization"] = "Bearer {}".format(key)

    logger.debug("POST %s (model %s)", cfg.url, cfg.model)
    pool = ThreadPoolExecutor(max_workers=1)
    try:
        future = pool.submit(_post, cfg.url, payload, headers, cfg.timeout)
        resp = future.result(timeout=cfg.timeout)
    except (requests.Timeout, FutureTimeout):
        raise TransportError("timed out after {}s: {}".format(cfg.timeout, cfg.url))
    except requests.RequestException as e:
        raise TransportError("request to {} failed: {}".format(cfg.url, e))
    finally:
        pool.shutdown(wait=False)

    if resp.status_code >= 400:
        raise TransportError(
            "HTTP {} from {}".format(resp.status_code, cfg.url), status=resp.status_code
        )
    try:
        data = resp.json()
        content = data["choices"][0]["message"].get("content") or ""
    except (ValueError, KeyError, IndexError, TypeError, AttributeError) as e:
        raise TransportError(
            "malformed chat-completion reply: {}".format(e), status=resp.status_code
        )
    return content.strip()
