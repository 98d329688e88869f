import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from lavatar.objectives import GuidanceRequest, cfg_combine, sds_pixel_gradient
from lavatar.remote import (RemoteOracle, RemoteOracleError, decode_plane, encode_plane,
                            make_remote_oracle)


class MockGuidanceHandler(BaseHTTPRequestHandler):
    """Implements the wire protocol; behavior set via server.mode."""

    def log_message(self, *args):
        pass

    def do_GET(self):
        if self.path == "/health":
            self._reply({"status": "ok"})
        else:
            self.send_error(404)

    def do_POST(self):
        if self.path != "/guidance":
            self.send_error(404)
            return
        length = int(self.headers["Content-Length"])
        msg = json.loads(self.rfile.read(length))
        shape = (msg["height"], msg["width"], msg["channels"])
        eps = decode_plane(msg["planes"]["eps"], shape)
        self.server.requests.append(msg)
        mode = self.server.mode
        if mode == "echo":
            pos = neg = eps
        elif mode == "split":
            pos = np.full(shape, 0.2)
            neg = np.full(shape, 0.1)
        elif mode == "bad-shape":
            pos = neg = np.zeros((2, 2, 3))
        else:
            raise AssertionError(mode)
        self._reply({"requestId": msg["requestId"],
                     "planes": {"eps_pos": encode_plane(pos), "eps_neg": encode_plane(neg)}})

    def _reply(self, obj):
        body = json.dumps(obj).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def mock_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), MockGuidanceHandler)
    server.mode = "echo"
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def make_request(rng, size=6):
    return GuidanceRequest(image=rng.uniform(size=(size, size, 3)),
                           noise=rng.standard_normal((size, size, 3)),
                           prompt_id="body", t=0.4)


def test_plane_codec_round_trip(rng):
    arr = rng.normal(size=(5, 4, 3))
    back = decode_plane(encode_plane(arr), (5, 4, 3))
    assert np.array_equal(back, arr.astype(np.float32).astype(np.float64))


def test_echo_server_gives_zero_sds_gradient(mock_server, rng):
    server, url = mock_server
    oracle = make_remote_oracle(url, {"body": "a person"}, guidance_scale=7.5,
                                negative_prompt_id="neg")
    req = make_request(rng)
    grad = sds_pixel_gradient(oracle, req)
    # f32 wire round-trip of eps costs a few 1e-8
    assert np.abs(grad).max() <= 1e-6
    sent = server.requests[-1]
    assert sent["promptId"] == "body"
    assert sent["promptText"] == "a person"
    assert sent["negativePromptId"] == "neg"
    assert sent["noising"] == "additive"
    # the noisy image plane is image + eps
    shape = (6, 6, 3)
    i_t = decode_plane(sent["planes"]["i_t"], shape)
    eps = decode_plane(sent["planes"]["eps"], shape)
    assert np.abs((i_t - eps) - req.image).max() <= 1e-6


def test_equal_branches_make_scale_irrelevant(mock_server, rng):
    _, url = mock_server
    req = make_request(rng)
    outs = [make_remote_oracle(url, guidance_scale=w)(req) for w in (0.0, 3.0, 12.5)]
    for other in outs[1:]:
        assert np.abs(other - outs[0]).max() <= 1e-9


def test_constant_server_matches_cfg_combine_hand_computation(mock_server, rng):
    server, url = mock_server
    server.mode = "split"
    oracle = make_remote_oracle(url, guidance_scale=7.5)
    out = oracle(make_request(rng))
    expected = cfg_combine(np.full((6, 6, 3), np.float32(0.2), dtype=np.float64),
                           np.full((6, 6, 3), np.float32(0.1), dtype=np.float64), 7.5)
    assert np.abs(out - expected).max() <= 1e-6


def test_dimension_mismatch_surfaces_request_id(mock_server, rng):
    server, url = mock_server
    server.mode = "bad-shape"
    oracle = make_remote_oracle(url)
    with pytest.raises(RemoteOracleError, match="req-00000[0-9]"):
        oracle(make_request(rng))


def test_unreachable_endpoint_fails_health_check():
    with pytest.raises(RemoteOracleError, match="unreachable"):
        RemoteOracle("http://127.0.0.1:9", timeout=0.2, retries=0)


def test_condition_plane_forwarded(mock_server, rng):
    server, url = mock_server
    oracle = make_remote_oracle(url)
    req = GuidanceRequest(image=rng.uniform(size=(6, 6, 3)),
                          noise=rng.standard_normal((6, 6, 3)),
                          prompt_id="body", t=0.4,
                          condition_image=rng.uniform(size=(6, 6, 3)))
    oracle(req)
    assert server.requests[-1]["planes"]["condition"] is not None
