"""Distillation losses and regularizers.

The pixel-space distillation gradient is (predicted noise - injected noise);
parameter gradients come from pushing it through the renderer's backward
pass. Regularizers: albedo perturbation-consistency, uniform graph-Laplacian
smoothness on vertex positions, and a Frobenius penalty on offsets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .appearance import AlbedoField


@dataclass
class GuidanceRequest:
    """One guidance query: a rendered image plus noise and conditioning info."""

    image: np.ndarray                    # (H, W, 3)
    noise: np.ndarray                    # (H, W, 3) standard normal
    prompt_id: str
    t: float                             # diffusion time in (0, 1)
    condition_image: np.ndarray | None = None
    noising: str = "additive"            # "additive" | "ddpm"
    azimuth_deg: float | None = None     # camera hints for view-bucketed oracles
    elevation_deg: float | None = None
    kind: str = "rgb"                    # "rgb" | "normal"
    layer: str = "body"                  # "body" | "clothes" | "clothed"

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"t must be in (0,1), got {self.t}")
        if not np.isfinite(self.image).all():
            raise ValueError("guidance image must be finite")
        if self.noise.shape != self.image.shape:
            raise ValueError("noise shape must match image shape")

    def noisy_image(self) -> np.ndarray:
        if self.noising == "additive":
            return self.image + self.noise
        if self.noising == "ddpm":
            alpha_bar = np.cos(0.5 * np.pi * self.t) ** 2
            return np.sqrt(alpha_bar) * self.image + np.sqrt(1.0 - alpha_bar) * self.noise
        raise ValueError(f"unknown noising mode {self.noising!r}")


def sds_pixel_gradient(oracle, req: GuidanceRequest) -> np.ndarray:
    """Pixel gradient (eps_hat - eps) from the guidance oracle."""
    try:
        eps_hat = oracle(req)
    except Exception as exc:
        raise RuntimeError(
            f"guidance oracle failed for prompt {req.prompt_id!r} at t={req.t:.3f}") from exc
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps_hat.shape != req.image.shape:
        raise ValueError(f"oracle returned shape {eps_hat.shape}, expected {req.image.shape}")
    return eps_hat - req.noise


def cfg_combine(eps_pos: np.ndarray, eps_neg: np.ndarray, omega: float) -> np.ndarray:
    """Guidance combination with a negative branch: (1+w)*pos - w*neg."""
    eps_pos = np.asarray(eps_pos, dtype=np.float64)
    eps_neg = np.asarray(eps_neg, dtype=np.float64)
    if eps_pos.shape != eps_neg.shape:
        raise ValueError(f"shape mismatch {eps_pos.shape} vs {eps_neg.shape}")
    if omega < 0:
        raise ValueError("guidance scale must be >= 0")
    return (1.0 + omega) * eps_pos - omega * eps_neg


def albedo_smoothness_loss(field: AlbedoField, probes: np.ndarray, sigma: float,
                           rng: np.random.Generator):
    """Mean per-probe 2-norm of the albedo change under a gaussian nudge.

    Returns (loss, gradient w.r.t. field parameters). The perturbations are
    drawn from the supplied generator, so the loss is deterministic given
    the rng state.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    delta = rng.normal(0.0, sigma, size=probes.shape)
    rho_a, cache_a = field.evaluate_with_cache(probes)
    rho_b, cache_b = field.evaluate_with_cache(probes + delta)
    diff = rho_a - rho_b
    norms = np.linalg.norm(diff, axis=1)
    loss = float(norms.mean())
    scale = np.where(norms > 0, 1.0 / (len(probes) * np.maximum(norms, 1e-300)), 0.0)
    g = diff * scale[:, None]
    d_params = field.vjp(cache_a, g)[0] + field.vjp(cache_b, -g)[0]
    return loss, d_params


def build_adjacency(faces: np.ndarray, vertex_count: int) -> sp.csr_matrix:
    """Symmetric 0/1 vertex adjacency from mesh edges."""
    faces = np.asarray(faces, dtype=np.int64)
    i = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2],
                        faces[:, 1], faces[:, 2], faces[:, 0]])
    j = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0],
                        faces[:, 0], faces[:, 1], faces[:, 2]])
    a = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(vertex_count, vertex_count))
    a = a.tocsr()
    a.data[:] = 1.0  # collapse duplicate edge entries
    return a


def laplacian_operator(adjacency: sp.csr_matrix, warn_isolated: bool = True) -> sp.csr_matrix:
    """delta = mean of neighbors - self; rows of isolated vertices are zero."""
    deg = np.asarray(adjacency.sum(axis=1)).ravel()
    isolated = deg == 0
    if isolated.any() and warn_isolated:
        warnings.warn(f"{int(isolated.sum())} isolated vertices contribute no smoothness",
                      stacklevel=2)
    inv = np.where(isolated, 0.0, 1.0 / np.maximum(deg, 1.0))
    dinv = sp.diags(inv)
    eye_mask = sp.diags((~isolated).astype(np.float64))
    return (dinv @ adjacency - eye_mask).tocsr()


def laplacian_loss(positions: np.ndarray, adjacency: sp.csr_matrix):
    """Mean squared neighborhood-mean deviation and its analytic gradient."""
    positions = np.asarray(positions, dtype=np.float64)
    V = positions.shape[0]
    lap = laplacian_operator(adjacency)
    delta = lap @ positions
    loss = float((delta ** 2).sum() / V)
    grad = (2.0 / V) * (lap.T @ delta)
    return loss, grad


def offset_loss(offsets: np.ndarray):
    """Frobenius norm of the offset field; gradient is O/|O| (0 at 0)."""
    offsets = np.asarray(offsets, dtype=np.float64)
    norm = float(np.sqrt((offsets ** 2).sum()))
    if norm == 0.0:
        return 0.0, np.zeros_like(offsets)
    return norm, offsets / norm


def geometry_loss(positions: np.ndarray, offsets: np.ndarray, adjacency: sp.csr_matrix,
                  weight_smooth: float = 1.0, weight_offset: float = 1.0):
    """Combined smoothness + offset regularizer: L_geo and its two gradients."""
    l_s, g_s = laplacian_loss(positions, adjacency)
    l_o, g_o = offset_loss(offsets)
    total = weight_smooth * l_s + weight_offset * l_o
    return total, weight_smooth * g_s, weight_offset * g_o
