"""HTTP guidance oracle and its wire codec.

The generation loop never runs a diffusion model itself; a remote service
owning one answers POST /guidance. Request: a JSON body with the query
header and base64 raw little-endian f32 planes (the noisy image, optional
condition map, the injected noise). Reply: the positive- and
negative-prompt noise predictions as the same kind of planes; the client
combines them with the guidance scale.
"""

from __future__ import annotations

import base64

import numpy as np
import requests

from .distillation import GuidanceOracle
from .objectives import GuidanceRequest, cfg_combine


class RemoteOracleError(RuntimeError):
    pass


def encode_plane(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def decode_plane(text: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    expect = int(np.prod(shape)) * 4
    if len(raw) != expect:
        raise RemoteOracleError(f"plane has {len(raw)} bytes, expected {expect}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def guidance_payload(req: GuidanceRequest, request_id: str, prompt_text: str | None,
                     negative_prompt_id: str | None) -> dict:
    h, w, c = req.image.shape
    return {
        "requestId": request_id,
        "promptId": req.prompt_id,
        "promptText": prompt_text,
        "negativePromptId": negative_prompt_id,
        "t": req.t,
        "width": w,
        "height": h,
        "channels": c,
        "noising": req.noising,
        "kind": req.kind,
        "layer": req.layer,
        "planes": {
            "i_t": encode_plane(req.noisy_image()),
            "condition": (encode_plane(req.condition_image)
                          if req.condition_image is not None else None),
            "eps": encode_plane(req.noise),
        },
    }


class RemoteOracle(GuidanceOracle):
    """Forwards guidance queries to an HTTP endpoint and applies CFG."""

    needs_condition = True
    deterministic = False

    def __init__(self, endpoint: str, prompt_table: dict[str, str] | None = None,
                 guidance_scale: float = 7.5, negative_prompt_id: str | None = None,
                 timeout: float = 60.0, retries: int = 2, health_check: bool = True):
        self.endpoint = endpoint.rstrip("/")
        self.prompt_table = dict(prompt_table or {})
        self.guidance_scale = float(guidance_scale)
        self.negative_prompt_id = negative_prompt_id
        self.timeout = timeout
        self.retries = retries
        self._counter = 0
        if health_check:
            try:
                resp = requests.get(f"{self.endpoint}/health", timeout=self.timeout)
                resp.raise_for_status()
            except Exception as exc:
                raise RemoteOracleError(f"guidance endpoint {self.endpoint} unreachable: {exc}")

    def __call__(self, req: GuidanceRequest) -> np.ndarray:
        self._counter += 1
        request_id = f"req-{self._counter:06d}"
        payload = guidance_payload(req, request_id,
                                   self.prompt_table.get(req.prompt_id),
                                   self.negative_prompt_id)
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(f"{self.endpoint}/guidance", json=payload,
                                     timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
                break
            except Exception as exc:  # transport or HTTP error; retry
                last_error = exc
        else:
            raise RemoteOracleError(f"[{request_id}] transport failure: {last_error}")

        if body.get("requestId") != request_id:
            raise RemoteOracleError(
                f"[{request_id}] reply for wrong request {body.get('requestId')!r}")
        planes = body.get("planes", {})
        try:
            eps_pos = decode_plane(planes["eps_pos"], req.image.shape)
            eps_neg = decode_plane(planes["eps_neg"], req.image.shape)
        except (KeyError, RemoteOracleError) as exc:
            raise RemoteOracleError(f"[{request_id}] malformed reply: {exc}")
        return cfg_combine(eps_pos, eps_neg, self.guidance_scale)


def make_remote_oracle(endpoint: str, prompt_table: dict[str, str] | None = None,
                       guidance_scale: float = 7.5,
                       negative_prompt_id: str | None = None, **kwargs) -> RemoteOracle:
    return RemoteOracle(endpoint, prompt_table, guidance_scale, negative_prompt_id, **kwargs)
