"""Pyramid decoder with shared holistic codewords.

Works on a five-level feature pyramid with a constant channel width and a
2x spatial step between levels. One codeword set is computed from a fused
coarse map and re-assembled at three intermediate scales, each with its
own guidance and assembly branch; the outermost levels are produced by
resampling their neighbors, and everything is merged back residually, so
the decoder refines the pyramid rather than replacing it.

The level fusion weights are learned scalars passed through a ReLU, so
the effective combination is non-negative but otherwise unconstrained.
An optional mode rescales each activated weight vector to a fixed sum;
it is off by default. The decoder can be applied repeatedly; with shared
parameters the stack size does not change the parameter count.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .decoder import Codewords, ConfigError, assemble_from, codewords_from
from .params import ConvParams, conv1x1_params
from .tensor import Tensor

_LEVEL_NAMES = ("p3", "p4", "p5", "p6", "p7")


@dataclass
class Pyramid:
    """Five feature maps, finest first, each half the size of the previous."""

    p3: Tensor
    p4: Tensor
    p5: Tensor
    p6: Tensor
    p7: Tensor

    def __post_init__(self):
        maps = self.levels()
        channels = maps[0].dims[0]
        for name, level in zip(_LEVEL_NAMES, maps):
            if len(level.dims) != 3:
                raise ConfigError(f"{name} must be rank 3, got dims {level.dims}")
            if level.dims[0] != channels:
                raise ConfigError(
                    f"pyramid channels differ: {name} has {level.dims[0]}, p3 has {channels}")
        for (na, a), (nb, b) in zip(zip(_LEVEL_NAMES, maps), list(zip(_LEVEL_NAMES, maps))[1:]):
            eh, ew = (a.dims[1] + 1) // 2, (a.dims[2] + 1) // 2
            if b.dims[1:] != (eh, ew):
                raise ConfigError(
                    f"{nb} must be {na} halved to ({eh},{ew}), got {b.dims[1:]}")

    def levels(self):
        return (self.p3, self.p4, self.p5, self.p6, self.p7)

    @property
    def channels(self) -> int:
        return self.p3.dims[0]


@dataclass
class FusionCoeffs:
    """Learned per-level fusion scalars: 5 for the codeword map, 3 per scale."""

    a: Tensor
    r: Tensor
    s: Tensor
    t: Tensor

    def named(self, prefix: str):
        yield f"{prefix}.a", self.a
        yield f"{prefix}.r", self.r
        yield f"{prefix}.s", self.s
        yield f"{prefix}.t", self.t


def init_fusion_coeffs(dtype=np.float64) -> FusionCoeffs:
    def ones(k):
        return Tensor(np.ones(k, dtype=dtype), requires_grad=True)

    return FusionCoeffs(a=ones(5), r=ones(3), s=ones(3), t=ones(3))


@dataclass(frozen=True)
class FpnConfig:
    n_codewords: int = 128
    codeword_dim: int = 512
    k_recurrence: int = 4
    share_params: bool = True
    output_channels: int = 256
    normalized_fusion: bool = False

    def __post_init__(self):
        if self.k_recurrence < 1:
            raise ConfigError(f"k_recurrence must be >= 1, got {self.k_recurrence}")
        for field in ("n_codewords", "codeword_dim", "output_channels"):
            if getattr(self, field) < 1:
                raise ConfigError(f"{field} must be positive, got {getattr(self, field)}")


def tiny_fpn_config() -> FpnConfig:
    return FpnConfig(n_codewords=4, codeword_dim=8, k_recurrence=2,
                     share_params=True, output_channels=8)


@dataclass
class ScaleBranch:
    """Assembly head for one pyramid scale."""

    guidance: ConvParams
    assembly: ConvParams
    project: ConvParams

    def named(self, prefix: str):
        yield from self.guidance.named(f"{prefix}.guidance")
        yield from self.assembly.named(f"{prefix}.assembly")
        yield from self.project.named(f"{prefix}.project")


@dataclass
class FpnParams:
    config: FpnConfig
    coeffs: FusionCoeffs
    bases: ConvParams
    weighting: ConvParams
    scale4: ScaleBranch
    scale5: ScaleBranch
    scale6: ScaleBranch

    def named_parameters(self):
        yield from self.coeffs.named("coeffs")
        yield from self.bases.named("bases")
        yield from self.weighting.named("weighting")
        yield from self.scale4.named("scale4")
        yield from self.scale5.named("scale5")
        yield from self.scale6.named("scale6")

    def branches(self):
        return (self.scale4, self.scale5, self.scale6)


def init_fpn_params(config: FpnConfig, rng, dtype=np.float64) -> FpnParams:
    ch = config.output_channels

    def branch():
        return ScaleBranch(
            guidance=conv1x1_params(ch, ch, rng, dtype),
            assembly=conv1x1_params(ch, config.n_codewords, rng, dtype),
            project=conv1x1_params(config.codeword_dim + ch, ch, rng, dtype))

    return FpnParams(
        config=config,
        coeffs=init_fusion_coeffs(dtype),
        bases=conv1x1_params(ch, config.codeword_dim, rng, dtype),
        weighting=conv1x1_params(ch, config.n_codewords, rng, dtype),
        scale4=branch(), scale5=branch(), scale6=branch())


def init_fpn_stack(config: FpnConfig, rng, dtype=np.float64):
    """Independent parameter records for an unshared stack of k stages."""
    return tuple(init_fpn_params(config, rng, dtype)
                 for _ in range(config.k_recurrence))


def stack_named_parameters(stack):
    for i, params in enumerate(stack):
        for name, tensor in params.named_parameters():
            yield f"stage{i}.{name}", tensor


# ------------------------------------------------------------------ fusion

def activate_coeffs(raw: FusionCoeffs, normalized: bool = False) -> FusionCoeffs:
    """ReLU the raw fusion scalars; optionally rescale each vector's sum
    back to its length (5 or 3). The default applies no rescaling."""

    def act(v: Tensor) -> Tensor:
        out = ops.relu(v)
        if normalized:
            out = ops.scale_to_sum(out, float(v.dims[0]))
        return out

    return FusionCoeffs(a=act(raw.a), r=act(raw.r), s=act(raw.s), t=act(raw.t))


def _down(x: Tensor, target: Tensor) -> Tensor:
    return ops.maxpool2x2(x, target.dims[1], target.dims[2])


def _up(x: Tensor, target: Tensor) -> Tensor:
    return ops.nearest_resize(x, target.dims[1], target.dims[2])


def fuse_code_map(pyramid: Pyramid, a: Tensor) -> Tensor:
    """Weighted sum of all five levels on the second-coarsest grid.

    Coefficient order: up(p7), p6, down(p5), down^2(p4), down^3(p3).
    `a` is expected to be non-negative already (see activate_coeffs).
    """
    p3, p4, p5, p6, p7 = pyramid.levels()
    d5 = _down(p5, p6)
    d4 = _down(_down(p4, p5), p6)
    d3 = _down(_down(_down(p3, p4), p5), p6)
    return ops.weighted_sum(a, [_up(p7, p6), p6, d5, d4, d3])


def fuse_scale_maps(pyramid: Pyramid, r: Tensor, s: Tensor, t: Tensor):
    """Per-scale three-level fusions (coarser neighbor up, self, finer down)."""
    p3, p4, p5, p6, p7 = pyramid.levels()
    m4 = ops.weighted_sum(r, [_up(p5, p4), p4, _down(p3, p4)])
    m5 = ops.weighted_sum(s, [_up(p6, p5), p5, _down(p4, p5)])
    m6 = ops.weighted_sum(t, [_up(p7, p6), p6, _down(p5, p6)])
    return m4, m5, m6


# ------------------------------------------------------------------ decode

@dataclass
class FpnTrace:
    m_code: Tensor
    basis_map: Tensor
    attention: Tensor
    codewords: Codewords
    fused: dict
    guidance: dict
    refined: dict
    out: Pyramid


def _conv(x: Tensor, p: ConvParams) -> Tensor:
    return ops.conv1x1(x, p.weight, p.bias)


def fpn_decode_once_full(pyramid: Pyramid, params: FpnParams,
                         config: FpnConfig | None = None):
    """One refinement pass; returns the new pyramid plus intermediates."""
    if config is None:
        config = params.config
    if pyramid.channels != config.output_channels:
        raise ConfigError(
            f"residual add needs pyramid channels == output_channels: "
            f"{pyramid.channels} != {config.output_channels}")

    coeffs = activate_coeffs(params.coeffs, config.normalized_fusion)
    m_code = fuse_code_map(pyramid, coeffs.a)
    basis_map = _conv(m_code, params.bases)
    attention = ops.softmax_spatial(_conv(m_code, params.weighting))
    codewords = codewords_from(basis_map, attention)

    m4, m5, m6 = fuse_scale_maps(pyramid, coeffs.r, coeffs.s, coeffs.t)
    fused = {4: m4, 5: m5, 6: m6}
    guidance = {}
    refined = {}
    for level, branch in zip((4, 5, 6), params.branches()):
        g = _conv(fused[level], branch.guidance)
        assembled = assemble_from(_conv(g, branch.assembly), codewords)
        refined[level] = _conv(ops.concat_channels([assembled, g]), branch.project)
        guidance[level] = g
    refined[3] = _up(refined[4], pyramid.p3)
    refined[7] = _down(refined[6], pyramid.p7)

    out = Pyramid(*[ops.add(level, refined[idx])
                    for idx, level in zip(range(3, 8), pyramid.levels())])
    return out, FpnTrace(m_code=m_code, basis_map=basis_map, attention=attention,
                         codewords=codewords, fused=fused, guidance=guidance,
                         refined=refined, out=out)


def fpn_decode_once(pyramid: Pyramid, params: FpnParams,
                    config: FpnConfig | None = None) -> Pyramid:
    out, _ = fpn_decode_once_full(pyramid, params, config)
    return out


def fpn_decode(pyramid: Pyramid, params, config: FpnConfig | None = None) -> Pyramid:
    """Apply the decoder k times.

    With share_params, `params` is a single record reused by every stage;
    otherwise it must be a sequence of exactly k records.
    """
    if config is None:
        config = params.config if isinstance(params, FpnParams) else params[0].config

    if config.share_params:
        if not isinstance(params, FpnParams):
            raise ConfigError("share_params=True expects a single parameter record")
        stages = [params] * config.k_recurrence
    else:
        if isinstance(params, FpnParams):
            raise ConfigError(
                "share_params=False expects one parameter record per stage")
        stages = list(params)
        if len(stages) != config.k_recurrence:
            raise ConfigError(
                f"expected {config.k_recurrence} stage records, got {len(stages)}")

    out = pyramid
    for stage_params in stages:
        out = fpn_decode_once(out, stage_params, config)
    return out
