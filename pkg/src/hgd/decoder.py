"""Holistically guided decoding.

The decoder replaces stepwise upsampling with a linear reconstruction from a
small set of holistic codewords:

1. three encoder taps (strides 8/16/32) are each compressed by a 1x1
   convolution and fused into two mixed maps, m32 at the coarsest grid for
   the code branch and m8 at the finest grid for the guidance branch;
2. the code branch computes a bases map B and a weighting map whose
   per-channel spatial softmax turns every codeword into a convex
   combination of bases vectors (so each codeword coordinate stays inside
   the per-coordinate range of B);
3. the guidance branch predicts, at the fine grid, one linear coefficient
   per codeword, optionally after adding the global average bases vector to
   the guidance map (the "transfer" path);
4. the output concatenates the reconstructed map with the guidance map.

All branches are pure affine 1x1 convolutions; there is no normalization or
activation inside the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .params import ConvParams, conv1x1_params
from .tensor import ConfigError, Tensor

_KNOWN_SCALES = (8, 16, 32)


@dataclass(frozen=True)
class HgdConfig:
    n_codewords: int
    codeword_dim: int
    compressed_channels: int
    guidance_channels: int
    transfer_enabled: bool = True
    fused_scales: tuple = (8, 16, 32)

    def __post_init__(self):
        for name in ("n_codewords", "codeword_dim", "compressed_channels", "guidance_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        scales = tuple(self.fused_scales)
        object.__setattr__(self, "fused_scales", scales)
        if not scales:
            raise ConfigError("fused_scales must name at least one input scale")
        if any(s not in _KNOWN_SCALES for s in scales) or len(set(scales)) != len(scales) \
                or tuple(sorted(scales)) != scales:
            raise ConfigError(
                f"fused_scales must be an ascending subset of {_KNOWN_SCALES}, got {scales}")


@dataclass
class Codewords:
    """Matrix of codeword column vectors, codeword_dim x n_codewords."""
    matrix: Tensor


@dataclass
class HgdParams:
    config: HgdConfig
    compress8: ConvParams
    compress16: ConvParams
    compress32: ConvParams
    bases: ConvParams
    weighting: ConvParams
    guidance: ConvParams
    assembly: ConvParams

    def named_parameters(self):
        for name in ("compress8", "compress16", "compress32", "bases",
                     "weighting", "guidance", "assembly"):
            yield from getattr(self, name).named(name)


def init_hgd_params(in_channels, config: HgdConfig, rng, dtype=np.float64) -> HgdParams:
    """Build all decoder kernels for encoder taps with the given channel counts."""
    c8, c16, c32 = in_channels
    if config.transfer_enabled and config.guidance_channels != config.codeword_dim:
        raise ConfigError(
            "transfer needs guidance_channels == codeword_dim "
            f"(got {config.guidance_channels} vs {config.codeword_dim})")
    code_in = len(config.fused_scales) * config.compressed_channels
    fine_in = 3 * config.compressed_channels
    return HgdParams(
        config=config,
        compress8=conv1x1_params(c8, config.compressed_channels, rng, dtype),
        compress16=conv1x1_params(c16, config.compressed_channels, rng, dtype),
        compress32=conv1x1_params(c32, config.compressed_channels, rng, dtype),
        bases=conv1x1_params(code_in, config.codeword_dim, rng, dtype),
        weighting=conv1x1_params(code_in, config.n_codewords, rng, dtype),
        guidance=conv1x1_params(fine_in, config.guidance_channels, rng, dtype),
        assembly=conv1x1_params(config.guidance_channels, config.n_codewords, rng, dtype),
    )


def _conv(x: Tensor, p: ConvParams) -> Tensor:
    return ops.conv1x1(x, p.weight, p.bias)


# --------------------------------------------------------------- the math

def codewords_from(bases: Tensor, weights: Tensor) -> Codewords:
    """Codeword i = sum over positions of weights_i(p,q) * bases(p,q)."""
    dim, h, w = bases.dims
    n = weights.dims[0]
    if weights.dims[1:] != (h, w):
        raise ConfigError(f"weighting grid {weights.dims[1:]} != bases grid {(h, w)}")
    bases_mat = ops.reshape(bases, (dim, h * w))
    weights_mat = ops.reshape(weights, (n, h * w))
    return Codewords(matrix=ops.matmul(bases_mat, ops.transpose(weights_mat)))


def assemble_from(coeffs: Tensor, codewords: Codewords) -> Tensor:
    """Per-pixel linear combination: out(x,y) = sum_i coeffs_i(x,y) * codeword_i."""
    n, h, w = coeffs.dims
    dim = codewords.matrix.dims[0]
    coeffs_mat = ops.reshape(coeffs, (n, h * w))
    return ops.reshape(ops.matmul(codewords.matrix, coeffs_mat), (dim, h, w))


# ----------------------------------------------------------- the pipeline

def fuse_multiscale(e8: Tensor, e16: Tensor, e32: Tensor, params: HgdParams):
    """Compress each tap and fuse into (m8 at the fine grid, m32 at the coarse grid)."""
    cfg = params.config
    h8, w8 = e8.dims[1:]
    h16, w16 = e16.dims[1:]
    h32, w32 = e32.dims[1:]
    if (h8, w8) != (2 * h16, 2 * w16) or (h16, w16) != (2 * h32, 2 * w32):
        raise ConfigError(
            f"tap grids must be in exact 1:2:4 ratio, got {e8.dims[1:]}, "
            f"{e16.dims[1:]}, {e32.dims[1:]}")
    c8 = _conv(e8, params.compress8)
    c16 = _conv(e16, params.compress16)
    c32 = _conv(e32, params.compress32)

    m8 = ops.concat_channels([
        c8,
        ops.bilinear_resize(c16, h8, w8),
        ops.bilinear_resize(c32, h8, w8),
    ])
    coarse = {
        8: lambda: ops.bilinear_resize(c8, h32, w32),
        16: lambda: ops.bilinear_resize(c16, h32, w32),
        32: lambda: c32,
    }
    m32 = ops.concat_channels([coarse[s]() for s in cfg.fused_scales])
    return m8, m32


def generate_codewords(m32: Tensor, params: HgdParams):
    """Bases map, softmax weighting map, and the codeword matrix from m32."""
    bases = _conv(m32, params.bases)
    weights = ops.softmax_spatial(_conv(m32, params.weighting))
    return codewords_from(bases, weights), bases, weights


def build_guidance(m8: Tensor, bases: Tensor, params: HgdParams, transfer_enabled: bool):
    """Guidance map G, and its fused form (G plus the mean bases vector) if enabled."""
    g = _conv(m8, params.guidance)
    if not transfer_enabled:
        return g, g
    if g.dims[0] != bases.dims[0]:
        raise ConfigError(
            f"transfer needs guidance channels == bases channels, got {g.dims[0]} "
            f"vs {bases.dims[0]}")
    return g, ops.broadcast_add_channel(g, ops.global_avg_spatial(bases))


def assemble(g_fused: Tensor, codewords: Codewords, params: HgdParams) -> Tensor:
    """Predict per-codeword coefficients from the guidance and reconstruct."""
    return assemble_from(_conv(g_fused, params.assembly), codewords)


@dataclass
class HgdTrace:
    """All intermediates of one decoder forward pass."""
    fused: Tensor            # final concatenated output
    assembled: Tensor        # reconstructed map
    guidance: Tensor         # G
    guidance_fused: Tensor   # G plus mean bases vector (or G itself)
    coeffs: Tensor           # per-pixel codeword coefficients
    codewords: Codewords
    bases: Tensor
    weights: Tensor          # softmax weighting maps
    m8: Tensor
    m32: Tensor


def hgd_forward_full(e8, e16, e32, params: HgdParams, config: HgdConfig | None = None) -> HgdTrace:
    cfg = config if config is not None else params.config
    m8, m32 = fuse_multiscale(e8, e16, e32, params)
    codewords, bases, weights = generate_codewords(m32, params)
    guidance, guidance_fused = build_guidance(m8, bases, params, cfg.transfer_enabled)
    coeffs = _conv(guidance_fused, params.assembly)
    assembled = assemble_from(coeffs, codewords)
    fused = ops.concat_channels([assembled, guidance])
    return HgdTrace(fused=fused, assembled=assembled, guidance=guidance,
                    guidance_fused=guidance_fused, coeffs=coeffs, codewords=codewords,
                    bases=bases, weights=weights, m8=m8, m32=m32)


def hgd_forward(e8, e16, e32, params: HgdParams, config: HgdConfig | None = None) -> Tensor:
    return hgd_forward_full(e8, e16, e32, params, config).fused
