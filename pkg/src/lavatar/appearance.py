"""Albedo field and shading.

The albedo of a surface point is a small fully-connected network over a
sinusoidal positional encoding of the point's canonical (rest-frame)
position, squashed to (0,1). Shading is a single point light plus ambient
term applied to the albedo; both forward and vector-Jacobian products are
implemented directly so the renderer can backpropagate without an autodiff
framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def positional_encode(x: np.ndarray, num_bands: int) -> np.ndarray:
    """[x, sin(2^k pi x), cos(2^k pi x)] for k < num_bands; dim 3 + 6*num_bands.

    Inputs are assumed pre-normalized to [-1, 1].
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    feats = [x]
    for k in range(num_bands):
        arg = (2.0 ** k) * np.pi * x
        feats.append(np.sin(arg))
        feats.append(np.cos(arg))
    out = np.concatenate(feats, axis=-1)
    return out


def positional_encode_vjp(x: np.ndarray, num_bands: int, d_out: np.ndarray) -> np.ndarray:
    """Pull a gradient on the encoding back to the (normalized) input."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d_out = np.atleast_2d(d_out)
    d_x = d_out[:, :3].copy()
    col = 3
    for k in range(num_bands):
        w = (2.0 ** k) * np.pi
        arg = w * x
        d_x += d_out[:, col:col + 3] * w * np.cos(arg)
        col += 3
        d_x -= d_out[:, col:col + 3] * w * np.sin(arg)
        col += 3
    return d_x


@dataclass
class AlbedoField:
    """Positional-encoding + MLP color field with logistic output.

    `params` is the flat parameter vector (row-major W then b per layer).
    `center`/`half_extent` normalize raw query points into [-1, 1]^3.
    """

    num_bands: int
    layer_sizes: list[int]
    params: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    half_extent: float = 1.0

    @staticmethod
    def create(num_bands: int = 6, hidden: tuple[int, ...] = (64, 64, 64),
               seed: int = 0, center=(0.0, 0.0, 0.0), half_extent: float = 1.0,
               final_zero: bool = True) -> "AlbedoField":
        """Random hidden layers, zero final layer (constant 0.5 output)."""
        sizes = [3 + 6 * num_bands, *hidden, 3]
        rng = np.random.default_rng(seed)
        chunks = []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            last = i == len(sizes) - 2
            if last and final_zero:
                w = np.zeros((fan_in, fan_out))
            else:
                a = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-a, a, size=(fan_in, fan_out))
            chunks.append(w.reshape(-1))
            chunks.append(np.zeros(fan_out))
        return AlbedoField(num_bands=num_bands, layer_sizes=sizes,
                           params=np.concatenate(chunks),
                           center=np.asarray(center, dtype=np.float64),
                           half_extent=float(half_extent))

    @staticmethod
    def for_points(points: np.ndarray, num_bands: int = 6,
                   hidden: tuple[int, ...] = (64, 64, 64), seed: int = 0,
                   margin: float = 1.25, final_zero: bool = True) -> "AlbedoField":
        """Create a field whose normalization box covers the given points."""
        points = np.asarray(points, dtype=np.float64)
        lo, hi = points.min(axis=0), points.max(axis=0)
        center = 0.5 * (lo + hi)
        half = float(0.5 * (hi - lo).max() * margin)
        return AlbedoField.create(num_bands=num_bands, hidden=hidden, seed=seed,
                                  center=center, half_extent=max(half, 1e-6),
                                  final_zero=final_zero)

    @staticmethod
    def param_count(num_bands: int, hidden: tuple[int, ...] = (64, 64, 64)) -> int:
        sizes = [3 + 6 * num_bands, *hidden, 3]
        return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))

    def _layers(self):
        mats, offset = [], 0
        for i in range(len(self.layer_sizes) - 1):
            fi, fo = self.layer_sizes[i], self.layer_sizes[i + 1]
            w = self.params[offset:offset + fi * fo].reshape(fi, fo)
            offset += fi * fo
            b = self.params[offset:offset + fo]
            offset += fo
            mats.append((w, b))
        if offset != self.params.size:
            raise ValueError(f"parameter vector length {self.params.size}, expected {offset}")
        return mats

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.center) / self.half_extent

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Albedo in (0,1)^3 at raw canonical positions x: (N,3) -> (N,3)."""
        rho, _ = self.evaluate_with_cache(x)
        return rho

    def evaluate_with_cache(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        xn = self.normalize(x)
        h = positional_encode(xn, self.num_bands)
        layers = self._layers()
        acts = [h]
        for i, (w, b) in enumerate(layers):
            z = acts[-1] @ w + b
            h = 1.0 / (1.0 + np.exp(-z)) if i == len(layers) - 1 else np.tanh(z)
            acts.append(h)
        return acts[-1], (x, xn, acts)

    def vjp(self, cache, d_rho: np.ndarray):
        """Gradients of sum(d_rho * rho) w.r.t. (params, raw x)."""
        x, xn, acts = cache
        layers = self._layers()
        d_params = np.zeros_like(self.params)
        out = acts[-1]
        g = np.atleast_2d(d_rho) * out * (1.0 - out)  # logistic
        offset = self.params.size
        for i in range(len(layers) - 1, -1, -1):
            w, b = layers[i]
            fi, fo = w.shape
            offset -= fo
            d_params[offset:offset + fo] = g.sum(axis=0)
            offset -= fi * fo
            d_params[offset:offset + fi * fo] = (acts[i].T @ g).reshape(-1)
            g = g @ w.T
            if i > 0:
                g = g * (1.0 - acts[i] ** 2)  # tanh
        d_xn = positional_encode_vjp(xn, self.num_bands, g)
        return d_params, d_xn / self.half_extent


# ---------------------------------------------------------------------------
# Shading
# ---------------------------------------------------------------------------

@dataclass
class ShadingConfig:
    light_position: np.ndarray   # point light, meters
    diffuse: np.ndarray          # RGB intensity >= 0
    ambient: np.ndarray          # RGB intensity >= 0

    def __post_init__(self):
        self.light_position = np.asarray(self.light_position, dtype=np.float64)
        self.diffuse = np.asarray(self.diffuse, dtype=np.float64)
        self.ambient = np.asarray(self.ambient, dtype=np.float64)
        if (self.diffuse < 0).any() or (self.ambient < 0).any():
            raise ValueError("light intensities must be non-negative")
        if not (np.isfinite(self.diffuse).all() and np.isfinite(self.ambient).all()
                and np.isfinite(self.light_position).all()):
            raise ValueError("shading config must be finite")

    @staticmethod
    def ambient_only(level: float = 1.0) -> "ShadingConfig":
        return ShadingConfig(np.zeros(3), np.zeros(3), np.full(3, float(level)))


def shade(rho: np.ndarray, normal: np.ndarray, point: np.ndarray,
          cfg: ShadingConfig) -> np.ndarray:
    """c = rho * (ambient + max(0, n_l . n) * diffuse), unclamped.

    `normal` must be unit length; `point` must not coincide with the light.
    """
    rho = np.asarray(rho, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    point = np.asarray(point, dtype=np.float64)
    nn = np.linalg.norm(normal, axis=-1)
    if np.abs(nn - 1.0).max() > 1e-6:
        raise ValueError(f"normals must be unit length (max deviation {np.abs(nn - 1).max():.2e})")
    to_light = cfg.light_position - point
    dist = np.linalg.norm(to_light, axis=-1, keepdims=True)
    if (dist == 0).any():
        raise ValueError("surface point coincides with the light position")
    n_l = to_light / dist
    lam = np.maximum(0.0, np.sum(n_l * normal, axis=-1))[..., None]
    return rho * (cfg.ambient + lam * cfg.diffuse)


def shade_vjp(rho, normal, point, cfg: ShadingConfig, d_c):
    """VJP of shade; returns (d_rho, d_normal, d_point, d_light_pos, d_diffuse, d_ambient).

    The max(0, .) gate passes no gradient on the dark side; the normal is
    treated as the (already unit) input, matching the forward contract.
    """
    rho = np.asarray(rho, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    point = np.asarray(point, dtype=np.float64)
    d_c = np.asarray(d_c, dtype=np.float64)
    to_light = cfg.light_position - point
    dist = np.linalg.norm(to_light, axis=-1, keepdims=True)
    n_l = to_light / dist
    dot = np.sum(n_l * normal, axis=-1)
    lam = np.maximum(0.0, dot)[..., None]

    d_rho = d_c * (cfg.ambient + lam * cfg.diffuse)
    d_lam = np.sum(d_c * rho * cfg.diffuse, axis=-1)
    d_dot = np.where(dot > 0, d_lam, 0.0)[..., None]
    d_nl = d_dot * normal
    d_normal = d_dot * n_l
    # n_l = u/|u|: pullback through the normalization
    d_u = (d_nl - n_l * np.sum(d_nl * n_l, axis=-1, keepdims=True)) / dist
    d_light_pos = d_u.reshape(-1, 3).sum(axis=0)
    d_point = -d_u
    lead = d_c.reshape(-1, 3)
    rl = (rho * np.ones_like(d_c)).reshape(-1, 3)
    d_ambient = (lead * rl).sum(axis=0)
    d_diffuse = (lead * rl * lam.reshape(-1, 1)).sum(axis=0)
    return d_rho, d_normal, d_point, d_light_pos, d_diffuse, d_ambient


def sample_light(rng: np.random.Generator, camera) -> ShadingConfig:
    """Point light on the camera-facing hemisphere around the view target.

    Radius is uniform in [2.0, 3.5] meters; the diffuse intensity is a grey
    level in [0.4, 0.9] and ambient = 1 - 0.6 * diffuse, keeping unclamped
    shading of a unit albedo below 1.36.
    """
    axis = np.asarray(camera.position, dtype=np.float64) - np.asarray(camera.target, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    while True:
        d = rng.normal(size=3)
        n = np.linalg.norm(d)
        if n > 1e-9:
            d = d / n
            break
    if np.dot(d, axis) < 0:
        d = -d
    radius = rng.uniform(2.0, 3.5)
    pos = np.asarray(camera.target, dtype=np.float64) + radius * d
    grey = rng.uniform(0.4, 0.9)
    return ShadingConfig(light_position=pos, diffuse=np.full(3, grey),
                         ambient=np.full(3, 1.0 - 0.6 * grey))
