"""Analytic multiply-accumulate and parameter counts for whole networks.

Counts are produced from layer descriptions alone, no tensors are ever
allocated. Conventions, documented once here and repeated in reports:

- one multiply-accumulate (MAC) is counted as one FLOP;
- convolutions dominate: resizes, pooling, activations, concatenation,
  and elementwise arithmetic are counted as zero MACs;
- a convolution with kernel k, c_in -> c_out on an h x w output grid
  costs k^2*c_in*c_out*h*w MACs and k^2*c_in*c_out + c_out parameters
  (bias included); dilation changes the output grid a variant runs at,
  never the parameter count;
- the codeword assembly matmul costs c_in*c_out*h*w MACs and owns no
  parameters; learned fusion scalars are a zero-MAC layer kind with an
  explicit parameter count;
- fully connected layers are 1x1 convolutions on a 1x1 grid, with the
  row count (e.g. detection proposals) folded into the grid height.

Detection-scale figures assume an 800x1333 input padded up to 896x1408
(multiples of the coarsest stride); that assumption is loose, so only
relative quantities (per-stage increments, ratios) should be read
tightly from those rows.
"""

from dataclasses import dataclass, field

from .tensor import ConfigError

CONVENTION_NOTE = ("1 MAC = 1 FLOP; resize/pool/activation/elementwise = 0 MACs; "
                   "conv params = k^2*c_in*c_out + c_out; dilation never changes params")

_KINDS = ("conv", "pool", "resize", "assembly", "elementwise", "coeffs")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    kernel: int = 1
    c_in: int = 0
    c_out: int = 0
    out_h: int = 0
    out_w: int = 0
    param_count: int = 0   # used by the "coeffs" kind only
    tied: bool = False     # weights reused from an earlier layer: no new params


@dataclass(frozen=True)
class ArchSpec:
    name: str
    input_hw: tuple
    layers: tuple
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CostReport:
    name: str
    rows: tuple            # (layer name, macs, params)
    total_macs: int
    total_params: int
    note: str = CONVENTION_NOTE


def count_layer(spec: LayerSpec):
    """MACs and parameters of one layer under the documented convention."""
    if spec.kind == "conv":
        weights = spec.kernel * spec.kernel * spec.c_in * spec.c_out
        macs = weights * spec.out_h * spec.out_w
        params = 0 if spec.tied else weights + spec.c_out
        return macs, params
    if spec.kind == "assembly":
        return spec.c_in * spec.c_out * spec.out_h * spec.out_w, 0
    if spec.kind in ("pool", "resize", "elementwise"):
        return 0, 0
    if spec.kind == "coeffs":
        return 0, 0 if spec.tied else spec.param_count
    raise ValueError(f"unsupported layer kind: {spec.kind!r}")


def emit_report(arch: ArchSpec) -> CostReport:
    rows = []
    total_macs = 0
    total_params = 0
    for layer in arch.layers:
        macs, params = count_layer(layer)
        rows.append((layer.name, macs, params))
        total_macs += macs
        total_params += params
    return CostReport(name=arch.name, rows=tuple(rows),
                      total_macs=total_macs, total_params=total_params)


def report_csv(report: CostReport) -> str:
    lines = ["layer,macs,params"]
    lines.extend(f"{name},{macs},{params}" for name, macs, params in report.rows)
    lines.append(f"total,{report.total_macs},{report.total_params}")
    return "\n".join(lines) + "\n"


def report_text(report: CostReport) -> str:
    width = max([len("total")] + [len(name) for name, _, _ in report.rows])
    lines = [report.name]
    header = f"{'layer'.ljust(width)}  {'macs':>16}  {'params':>12}"
    lines.append(header)
    lines.append("-" * len(header))
    for name, macs, params in report.rows:
        lines.append(f"{name.ljust(width)}  {macs:>16,}  {params:>12,}")
    lines.append("-" * len(header))
    lines.append(f"{'total'.ljust(width)}  {report.total_macs:>16,}  {report.total_params:>12,}")
    lines.append(f"note: {report.note}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- backbones

_RESNET_BLOCKS = {50: (3, 4, 6, 3), 101: (3, 4, 23, 3)}


def _bottleneck(rows, prefix, c_in, mid, c_out, in_hw, out_hw, project):
    rows.append(LayerSpec(f"{prefix}.reduce", "conv", 1, c_in, mid, *in_hw))
    rows.append(LayerSpec(f"{prefix}.conv3x3", "conv", 3, mid, mid, *out_hw))
    rows.append(LayerSpec(f"{prefix}.expand", "conv", 1, mid, c_out, *out_hw))
    if project:
        rows.append(LayerSpec(f"{prefix}.shortcut", "conv", 1, c_in, c_out, *out_hw))
    rows.append(LayerSpec(f"{prefix}.add", "elementwise"))


def _resnet_rows(depth, input_hw, dilated_last_two, prefix="backbone"):
    """Bottleneck-stage backbone; returns (rows, tap grids by output stride)."""
    if depth not in _RESNET_BLOCKS:
        raise ConfigError(f"unsupported resnet depth {depth}")
    h, w = input_hw
    if h % 32 or w % 32:
        raise ConfigError(f"input dims must be divisible by 32, got {input_hw}")
    blocks = _RESNET_BLOCKS[depth]

    rows = [LayerSpec(f"{prefix}.conv1", "conv", 7, 3, 64, h // 2, w // 2),
            LayerSpec(f"{prefix}.maxpool", "pool", out_h=h // 4, out_w=w // 4)]

    if dilated_last_two:
        strides = (4, 8, 8, 8)      # last two stages hold at stride 8
    else:
        strides = (4, 8, 16, 32)
    in_strides = (4, 4, strides[1], strides[2])

    grids = {}
    c_in = 64
    for idx, (count, stride, in_stride) in enumerate(zip(blocks, strides, in_strides)):
        stage = idx + 2
        mid = 64 * 2 ** idx
        c_out = 256 * 2 ** idx
        out_hw = (h // stride, w // stride)
        first_in_hw = (h // in_stride, w // in_stride)
        for b in range(count):
            name = f"{prefix}.stage{stage}.block{b:02d}"
            if b == 0:
                _bottleneck(rows, name, c_in, mid, c_out, first_in_hw, out_hw, True)
            else:
                _bottleneck(rows, name, c_out, mid, c_out, out_hw, out_hw, False)
        c_in = c_out
        grids[stage] = out_hw
    return rows, grids


def resnet_spec(depth, input_hw=(512, 512), dilated_last_two=False,
                include_head=True, num_classes=60) -> ArchSpec:
    """Bottleneck backbone, optionally with the plain two-conv dense head.

    The headed variant is what the reference GFLOP totals describe; the
    bare backbone is exposed separately for transparency.
    """
    rows, grids = _resnet_rows(depth, input_hw, dilated_last_two)
    variant = "dilated" if dilated_last_two else "standard"
    name = f"resnet{depth}-{variant}"
    if include_head:
        gh, gw = grids[5]
        rows += [LayerSpec("head.conv1", "conv", 3, 2048, 512, gh, gw),
                 LayerSpec("head.conv2", "conv", 3, 512, 512, gh, gw),
                 LayerSpec("head.classifier", "conv", 1, 512, num_classes, gh, gw),
                 LayerSpec("head.upsample", "resize", out_h=input_hw[0], out_w=input_hw[1])]
    else:
        name += "-backbone"
    return ArchSpec(name=name, input_hw=tuple(input_hw), layers=tuple(rows),
                    tags={"depth": depth, "dilated": dilated_last_two,
                          "head": include_head})


# ------------------------------------------------------------ segmentation

def efficientfcn_spec(n=256, c=1024, input_hw=(512, 512), num_classes=60,
                      refined=True) -> ArchSpec:
    """Codeword decoder on a standard stride-32 backbone.

    `refined` adds one 3x3 conv per compressed scale, the configuration
    the reference totals describe; the executable toy decoder in this
    package omits those convs, so cross-checks against it pass
    refined=False.
    """
    rows, grids = _resnet_rows(101, input_hw, False)
    g8, g16, g32 = grids[3], grids[4], grids[5]
    taps = {8: (512, g8), 16: (1024, g16), 32: (2048, g32)}
    comp = 512
    for os_, (ch, grid) in taps.items():
        rows.append(LayerSpec(f"decoder.compress{os_}", "conv", 1, ch, comp, *grid))
        if refined:
            rows.append(LayerSpec(f"decoder.refine{os_}", "conv", 3, comp, comp, *grid))
    fused = 3 * comp
    rows += [
        LayerSpec("decoder.resample_to_coarse", "resize", out_h=g32[0], out_w=g32[1]),
        LayerSpec("decoder.concat_coarse", "elementwise"),
        LayerSpec("decoder.bases", "conv", 1, fused, c, *g32),
        LayerSpec("decoder.weighting", "conv", 1, fused, n, *g32),
        LayerSpec("decoder.attention_softmax", "elementwise"),
        LayerSpec("decoder.codeword_matmul", "assembly", c_in=c, c_out=n,
                  out_h=g32[0], out_w=g32[1]),
        LayerSpec("decoder.resample_to_fine", "resize", out_h=g8[0], out_w=g8[1]),
        LayerSpec("decoder.concat_fine", "elementwise"),
        LayerSpec("decoder.guidance", "conv", 1, fused, c, *g8),
        LayerSpec("decoder.transfer_add", "elementwise"),
        LayerSpec("decoder.assembly_conv", "conv", 1, c, n, *g8),
        LayerSpec("decoder.assembly_matmul", "assembly", c_in=c, c_out=n,
                  out_h=g8[0], out_w=g8[1]),
        LayerSpec("decoder.concat_output", "elementwise"),
        LayerSpec("decoder.classifier", "conv", 1, 2 * c, num_classes, *g8),
        LayerSpec("decoder.upsample", "resize", out_h=input_hw[0], out_w=input_hw[1]),
    ]
    return ArchSpec(name=f"efficientfcn-n{n}", input_hw=tuple(input_hw),
                    layers=tuple(rows), tags={"n": n, "c": c, "refined": refined})


def unet_spec(input_hw=(512, 512), num_classes=60, deconv=False) -> ArchSpec:
    """Reference two-merge encoder-decoder on the same backbone (no
    tolerance is claimed for this reconstruction)."""
    rows, grids = _resnet_rows(101, input_hw, False)
    g16, g8 = grids[4], grids[3]
    if deconv:
        rows.append(LayerSpec("decoder.up1_deconv", "conv", 2, 2048, 1024, *g16))
        merged1 = 1024 + 1024
    else:
        rows.append(LayerSpec("decoder.up1", "resize", out_h=g16[0], out_w=g16[1]))
        merged1 = 2048 + 1024
    rows += [LayerSpec("decoder.concat1", "elementwise"),
             LayerSpec("decoder.merge1", "conv", 3, merged1, 1024, *g16)]
    if deconv:
        rows.append(LayerSpec("decoder.up2_deconv", "conv", 2, 1024, 512, *g8))
        merged2 = 512 + 512
    else:
        rows.append(LayerSpec("decoder.up2", "resize", out_h=g8[0], out_w=g8[1]))
        merged2 = 1024 + 512
    rows += [LayerSpec("decoder.concat2", "elementwise"),
             LayerSpec("decoder.merge2", "conv", 3, merged2, 512, *g8),
             LayerSpec("decoder.classifier", "conv", 1, 512, num_classes, *g8),
             LayerSpec("decoder.upsample", "resize", out_h=input_hw[0], out_w=input_hw[1])]
    kind = "deconv" if deconv else "bilinear"
    return ArchSpec(name=f"unet-{kind}", input_hw=tuple(input_hw),
                    layers=tuple(rows), tags={"deconv": deconv})


# --------------------------------------------------------------- detection

DETECTION_INPUT = (896, 1408)


def _pyramid_grids(input_hw):
    """Level grids at output strides 4..64, ceil division per halving."""
    h, w = input_hw
    grids = {}
    for level, stride in zip(range(3, 8), (4, 8, 16, 32, 64)):
        gh, gw = h, w
        s = stride
        while s > 1:
            gh, gw = (gh + 1) // 2, (gw + 1) // 2
            s //= 2
        grids[level] = (gh, gw)
    return grids


def fpn_baseline_spec(input_hw=DETECTION_INPUT, proposals=1000,
                      num_classes=81) -> ArchSpec:
    """Two-stage detector with a lateral pyramid (no tolerance claimed)."""
    rows, stage_grids = _resnet_rows(50, input_hw, False)
    grids = _pyramid_grids(input_hw)
    laterals = {3: 256, 4: 512, 5: 1024, 6: 2048}
    for level, c_in in laterals.items():
        rows.append(LayerSpec(f"neck.lateral_p{level}", "conv", 1, c_in, 256,
                              *grids[level]))
    for level in (3, 4, 5, 6):
        rows.append(LayerSpec(f"neck.smooth_p{level}", "conv", 3, 256, 256,
                              *grids[level]))
    rows.append(LayerSpec("neck.p7_pool", "pool", out_h=grids[7][0], out_w=grids[7][1]))
    for level in range(3, 8):
        rows.append(LayerSpec(f"rpn.conv_p{level}", "conv", 3, 256, 256,
                              *grids[level], tied=level > 3))
        rows.append(LayerSpec(f"rpn.head_p{level}", "conv", 1, 256, 18,
                              *grids[level], tied=level > 3))
    rows += [LayerSpec("roi.pool", "pool", out_h=7, out_w=7),
             LayerSpec("roi.fc1", "conv", 1, 256 * 7 * 7, 1024, proposals, 1),
             LayerSpec("roi.fc2", "conv", 1, 1024, 1024, proposals, 1),
             LayerSpec("roi.cls", "conv", 1, 1024, num_classes, proposals, 1),
             LayerSpec("roi.reg", "conv", 1, 1024, 4 * (num_classes - 1), proposals, 1)]
    return ArchSpec(name="fpn-baseline", input_hw=tuple(input_hw),
                    layers=tuple(rows), tags={"proposals": proposals})


def _decoder_stage_rows(stage, grids, channels, n, c, kernel, smoothing, tied):
    """One pyramid-decoder stage. `tied` marks parameters as reused."""
    p = f"stage{stage}"
    rows = [LayerSpec(f"{p}.fusion_coeffs", "coeffs", param_count=14, tied=tied)]
    code = grids[6]
    rows.append(LayerSpec(f"{p}.code_resample", "resize", out_h=code[0], out_w=code[1]))
    rows.append(LayerSpec(f"{p}.bases", "conv", kernel, channels, c, *code, tied=tied))
    rows.append(LayerSpec(f"{p}.weighting", "conv", kernel, channels, n, *code, tied=tied))
    rows.append(LayerSpec(f"{p}.codeword_matmul", "assembly", c_in=c, c_out=n,
                          out_h=code[0], out_w=code[1]))
    for level in (4, 5, 6):
        g = grids[level]
        q = f"{p}.scale{level}"
        rows.append(LayerSpec(f"{q}.fuse", "elementwise"))
        if smoothing:
            rows.append(LayerSpec(f"{q}.smooth", "conv", 3, channels, channels, *g,
                                  tied=tied))
        rows.append(LayerSpec(f"{q}.guidance", "conv", kernel, channels, channels, *g,
                              tied=tied))
        rows.append(LayerSpec(f"{q}.assembly_conv", "conv", kernel, channels, n, *g,
                              tied=tied))
        rows.append(LayerSpec(f"{q}.assembly_matmul", "assembly", c_in=c, c_out=n,
                              out_h=g[0], out_w=g[1]))
        rows.append(LayerSpec(f"{q}.project", "conv", kernel, c + channels, channels,
                              *g, tied=tied))
    rows.append(LayerSpec(f"{p}.p3_upsample", "resize", out_h=grids[3][0],
                          out_w=grids[3][1]))
    rows.append(LayerSpec(f"{p}.p7_pool", "pool", out_h=grids[7][0], out_w=grids[7][1]))
    rows.append(LayerSpec(f"{p}.residual_add", "elementwise"))
    return rows


def fpn_spec(variant, n=None, c=None, k=4, input_hw=None,
             share_params=True) -> ArchSpec:
    """Pyramid decoder cost specs.

    hgd-fpn: full-scale stages (3x3 convs plus one smoothing conv per
    fused scale map) on top of the baseline detector. hgd-fpn-toy:
    decoder stages alone, 1x1 convs and no smoothing, mirroring this
    package's executable pyramid decoder layer for layer so parameter
    totals can be compared exactly. Defaults per variant: full n=128,
    c=512, 256 pyramid channels; toy n=4, c=8, 8 channels.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if variant == "fpn-baseline":
        return fpn_baseline_spec(input_hw or DETECTION_INPUT)
    if variant == "hgd-fpn":
        n = 128 if n is None else n
        c = 512 if c is None else c
        input_hw = input_hw or DETECTION_INPUT
        base = fpn_baseline_spec(input_hw)
        grids = _pyramid_grids(input_hw)
        rows = list(base.layers)
        for stage in range(k):
            rows += _decoder_stage_rows(stage, grids, 256, n, c, kernel=3,
                                        smoothing=True,
                                        tied=share_params and stage > 0)
        return ArchSpec(name=f"hgd-fpn-k{k}", input_hw=tuple(input_hw),
                        layers=tuple(rows),
                        tags={"n": n, "c": c, "k": k, "share_params": share_params,
                              "detail": "full"})
    if variant == "hgd-fpn-toy":
        n = 4 if n is None else n
        c = 8 if c is None else c
        input_hw = input_hw or (16, 16)
        # toy pyramid levels run from the input size down, not from stride 4
        h, w = input_hw
        grids = {}
        for level in range(3, 8):
            grids[level] = (h, w)
            h, w = (h + 1) // 2, (w + 1) // 2
        rows = []
        for stage in range(k):
            rows += _decoder_stage_rows(stage, grids, 8, n, c, kernel=1,
                                        smoothing=False,
                                        tied=share_params and stage > 0)
        return ArchSpec(name=f"hgd-fpn-toy-k{k}", input_hw=tuple(input_hw),
                        layers=tuple(rows),
                        tags={"n": n, "c": c, "k": k, "share_params": share_params,
                              "detail": "toy"})
    raise ConfigError(f"unknown fpn variant {variant!r}")


# ------------------------------------------------------------- toy mirror

def toy_seg_spec(num_classes=5, input_hw=(64, 64)) -> ArchSpec:
    """Layer-for-layer mirror of the executable tiny segmentation stack,
    so its analytic parameter total can be checked against the real
    parameter records exactly."""
    h, w = input_hw
    if h % 32 or w % 32:
        raise ConfigError(f"input dims must be divisible by 32, got {input_hw}")
    chans = (8, 8, 16, 24, 32)
    rows = []
    c_in = 3
    gh, gw = h, w
    for i, c_out in enumerate(chans):
        gh, gw = gh // 2, gw // 2
        rows.append(LayerSpec(f"backbone.conv{i + 1}", "conv", 3, c_in, c_out, gh, gw))
        c_in = c_out
    g8 = (h // 8, w // 8)
    g16 = (h // 16, w // 16)
    g32 = (h // 32, w // 32)
    comp, n, c, guid = 16, 8, 32, 32
    for os_, ch, grid in ((8, 16, g8), (16, 24, g16), (32, 32, g32)):
        rows.append(LayerSpec(f"decoder.compress{os_}", "conv", 1, ch, comp, *grid))
    fused = 3 * comp
    rows += [
        LayerSpec("decoder.bases", "conv", 1, fused, c, *g32),
        LayerSpec("decoder.weighting", "conv", 1, fused, n, *g32),
        LayerSpec("decoder.codeword_matmul", "assembly", c_in=c, c_out=n,
                  out_h=g32[0], out_w=g32[1]),
        LayerSpec("decoder.guidance", "conv", 1, fused, guid, *g8),
        LayerSpec("decoder.assembly_conv", "conv", 1, guid, n, *g8),
        LayerSpec("decoder.assembly_matmul", "assembly", c_in=c, c_out=n,
                  out_h=g8[0], out_w=g8[1]),
        LayerSpec("decoder.classifier", "conv", 1, c + guid, num_classes, *g8),
        LayerSpec("decoder.upsample", "resize", out_h=h, out_w=w),
    ]
    return ArchSpec(name="toy-seg", input_hw=tuple(input_hw), layers=tuple(rows),
                    tags={"n": n, "c": c})
