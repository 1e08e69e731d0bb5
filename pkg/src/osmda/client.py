"""OpenAI-compatible chat completions client with retry and backoff.

Used by the relabeler (text), the caption orchestrator (two images), and
the benchmark harness (one image, plus logprobs for the judge).
"""

from __future__ import annotations

import base64
import time
from dataclasses import dataclass, field

import requests


class EndpointError(RuntimeError):
    """Endpoint unreachable or persistently failing."""


class TransportError(EndpointError):
    """Malformed response payload from the endpoint."""


@dataclass
class ChatResponse:
    text: str
    # token -> logprob at the final generated position, when requested
    final_top_logprobs: dict[str, float] = field(default_factory=dict)


def image_part(png_bytes: bytes) -> dict:
    b64 = base64.b64encode(png_bytes).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


@dataclass
class ChatClient:
    endpoint: str
    model: str = "default"
    session: requests.Session | None = None
    timeout_s: float = 120.0
    max_attempts: int = 3
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.session is None:
            self.session = requests.Session()

    def complete(
        self,
        content: list[dict] | str,
        temperature: float = 0.0,
        max_tokens: int = 128,
        logprobs: bool = False,
        top_logprobs: int = 20,
    ) -> ChatResponse:
        if isinstance(content, str):
            content = [text_part(content)]
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        if logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = top_logprobs
        body = self._post(payload)
        return self._parse(body, logprobs)

    def _post(self, payload) -> dict:
        last_err = None
        for attempt in range(self.max_attempts):
            try:
                resp = self.session.post(
                    self.endpoint, json=payload, timeout=self.timeout_s
                )
                if resp.status_code == 200:
                    return resp.json()
                last_err = f"status {resp.status_code}"
                if resp.status_code not in (429,) and resp.status_code < 500:
                    raise EndpointError(f"endpoint rejected request: {last_err}")
            except requests.RequestException as e:
                last_err = str(e)
            except ValueError as e:
                raise TransportError(f"malformed endpoint JSON: {e}") from e
            if attempt < self.max_attempts - 1:
                time.sleep(self.backoff_s * (2**attempt))
        raise EndpointError(f"exhausted {self.max_attempts} attempts: {last_err}")

    @staticmethod
    def _parse(body: dict, want_logprobs: bool) -> ChatResponse:
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise TransportError(f"malformed endpoint JSON: {e}") from e
        top: dict[str, float] = {}
        if want_logprobs:
            try:
                positions = choice["logprobs"]["content"]
                final = positions[-1]
                for entry in final["top_logprobs"]:
                    top[entry["token"]] = float(entry["logprob"])
            except (KeyError, IndexError, TypeError) as e:
                raise TransportError(f"missing logprobs in response: {e}") from e
        return ChatResponse(text=text if text is not None else "", final_top_logprobs=top)
