"""Command-line entry point.

Subcommands:

  gradcheck   finite-difference verification of every parameter group of
              the tiny segmentation net and the tiny pyramid decoder
  cost        analytic MAC/parameter table for a named architecture, CSV
  demo-seg    train the synthetic segmentation task and dump artifacts
  demo-fpn    decode a random pyramid and dump artifacts
  dump        describe one HGDT tensor file

Exit codes: 0 success, 1 verification failure (or unreadable data),
2 usage/config error. The HGD_THREADS environment variable caps BLAS
thread pools (applied at package import, default 1 for determinism).

demo-seg and demo-fpn run a pinned tiny preset when no --config is
given; a config file switches to the settings it names. Weighting-map
PGMs are min-max normalized per map and upsampled to the rendering
resolution, one file per codeword.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import ops
from .config import (RunConfig, default_run_config, dtype_of, load_run_config,
                     to_fpn_config, to_hgd_config, to_train_config)
from .costmodel import (DETECTION_INPUT, efficientfcn_spec, emit_report,
                        fpn_spec, report_csv, resnet_spec, unet_spec)
from .decoder import hgd_forward_full
from .efficientfcn import (ToyBackboneConfig, backbone_forward, init_seg_params,
                           segment_forward, tiny_backbone_config, tiny_hgd_config,
                           tiny_train_config, train_segmenter)
from .fpn import (Pyramid, fpn_decode_once_full, init_fpn_params, init_fpn_stack,
                  tiny_fpn_config)
from .gradcheck import gradcheck
from .hgdt import load_tensor, save_checkpoint, save_pgm, save_tensor
from .ops import GradcheckError
from .synthdata import synth_dataset
from .tensor import ConfigError, Tensor

_LEVEL_STRIDES = (("p3", 4), ("p4", 8), ("p5", 16), ("p6", 32), ("p7", 64))


def _check_thread_cap():
    raw = os.environ.get("HGD_THREADS")
    if raw is None:
        return
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"HGD_THREADS must be an integer, got {raw!r}")
    if cap < 1:
        raise ConfigError(f"HGD_THREADS must be at least 1, got {cap}")


# ---------------------------------------------------------------- gradcheck

def _report_lines(section, reports):
    lines = [f"[{section}]"]
    for r in reports:
        status = "ok" if r.passed else "FAIL"
        lines.append(f"  {r.name:<42} max rel err {r.max_rel_err:10.3e}  {status}")
    return lines


def cmd_gradcheck(args) -> int:
    if args.config:
        run = load_run_config(args.config)
        if run.precision != "f64":
            print("gradcheck runs in f64 only; finite differences are meaningless "
                  "in f32. Set precision to \"f64\".", file=sys.stderr)
            return 2
    else:
        run = RunConfig(precision="f64")
    seed = run.seed

    rng = np.random.default_rng(seed)
    seg_params = init_seg_params(tiny_backbone_config(), tiny_hgd_config(), 5, rng)
    image = Tensor(rng.standard_normal((3, 32, 32)))
    labels = rng.integers(0, 5, size=(32, 32))

    def seg_loss():
        return ops.cross_entropy_logits(segment_forward(image, seg_params), labels)

    fpn_cfg = tiny_fpn_config()
    fpn_params = init_fpn_params(fpn_cfg, rng)
    levels = []
    h = w = 16
    for _ in range(5):
        # moderate magnitudes keep the central differences well conditioned
        levels.append(Tensor(0.5 * rng.standard_normal((fpn_cfg.output_channels, h, w))))
        h, w = (h + 1) // 2, (w + 1) // 2
    pyramid = Pyramid(*levels)

    count = sum(lvl.data.size for lvl in pyramid.levels())

    def fpn_loss():
        # mean rather than sum: keeps the loss O(1) so finite differences of
        # identically-zero gradients (softmax shift invariance) stay below
        # tolerance instead of surfacing float roundoff
        out, _ = fpn_decode_once_full(pyramid, fpn_params)
        total = None
        for lvl in out.levels():
            s = ops.sum_all(lvl)
            total = s if total is None else ops.add(total, s)
        return ops.scalar_scale(total, 1.0 / count)

    suites = [("segmentation-tiny", seg_loss, list(seg_params.named_parameters())),
              ("pyramid-tiny", fpn_loss, list(fpn_params.named_parameters()))]

    reports = []
    for i, (section, loss_fn, params) in enumerate(suites):
        section_reports = gradcheck(loss_fn, params, tol=1e-5, max_per_param=6,
                                    rng=np.random.default_rng(seed + 100 + i))
        for line in _report_lines(section, section_reports):
            print(line)
        reports.extend(section_reports)

    failed = [r for r in reports if not r.passed]
    if failed:
        worst = max(failed, key=lambda r: r.max_rel_err)
        print(f"FAILED: worst offender {worst.name} "
              f"(max rel err {worst.max_rel_err:.3e})", file=sys.stderr)
        return 1
    print(f"all {len(reports)} parameter groups passed at tol 1e-5")
    return 0


def _cmd_gradcheck_entry(args) -> int:
    if args.break_backward:
        with ops.broken_relu_gradient():
            return cmd_gradcheck(args)
    return cmd_gradcheck(args)


# --------------------------------------------------------------------- cost

_ARCHS = ("resnet101", "resnet101-dilated", "resnet101-backbone", "efficientfcn",
          "unet", "fpn-baseline", "hgd-fpn", "hgd-fpn-toy")


def _parse_input_hw(text, default):
    if text is None:
        return default
    parts = text.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--input expects SIZE or HxW, got {text!r}")
    if len(dims) == 1:
        return (dims[0], dims[0])
    if len(dims) == 2:
        return tuple(dims)
    raise ConfigError(f"--input expects SIZE or HxW, got {text!r}")


def cmd_cost(args) -> int:
    arch = args.arch
    k = 4 if args.k is None else args.k
    if arch == "resnet101":
        spec = resnet_spec(101, _parse_input_hw(args.input, (512, 512)))
    elif arch == "resnet101-dilated":
        spec = resnet_spec(101, _parse_input_hw(args.input, (512, 512)),
                           dilated_last_two=True)
    elif arch == "resnet101-backbone":
        spec = resnet_spec(101, _parse_input_hw(args.input, (512, 512)),
                           include_head=False)
    elif arch == "efficientfcn":
        spec = efficientfcn_spec(n=256 if args.n is None else args.n,
                                 c=1024 if args.c is None else args.c,
                                 input_hw=_parse_input_hw(args.input, (512, 512)))
    elif arch == "unet":
        spec = unet_spec(_parse_input_hw(args.input, (512, 512)))
    elif arch == "fpn-baseline":
        spec = fpn_spec("fpn-baseline",
                        input_hw=_parse_input_hw(args.input, DETECTION_INPUT))
    elif arch == "hgd-fpn":
        spec = fpn_spec("hgd-fpn", n=args.n, c=args.c, k=k,
                        input_hw=_parse_input_hw(args.input, DETECTION_INPUT))
    else:
        spec = fpn_spec("hgd-fpn-toy", n=args.n, c=args.c, k=k,
                        input_hw=_parse_input_hw(args.input, (16, 16)))
    sys.stdout.write(report_csv(emit_report(spec)))
    return 0


# -------------------------------------------------------------------- demos

def _dump_weighting_maps(out_dir: Path, weights: Tensor, render_h: int, render_w: int):
    """One min-max normalized PGM per codeword, upsampled for rendering."""
    rendered = ops.bilinear_resize(weights, render_h, render_w)
    n = rendered.dims[0]
    for i in range(n):
        save_pgm(out_dir / f"weighting_{i:02d}.pgm", rendered.data[i])
    return n


def cmd_demo_seg(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        run = load_run_config(args.config)
        dt = dtype_of(run)
        samples = synth_dataset(seed=run.seed, count=32, size=run.input_size,
                                num_classes=run.num_classes, dtype=dt)
        params = init_seg_params(ToyBackboneConfig(), to_hgd_config(run),
                                 run.num_classes, np.random.default_rng(run.seed + 1), dt)
        train_cfg = to_train_config(run)
        order = np.random.default_rng(run.seed + 2)
        num_classes = run.num_classes
    else:
        # pinned preset: 32 samples of the 5-class 64x64 task, tiny net, f64
        samples = synth_dataset(seed=2024, count=32, size=64, num_classes=5)
        params = init_seg_params(tiny_backbone_config(), tiny_hgd_config(), 5,
                                 np.random.default_rng(17))
        train_cfg = tiny_train_config()
        order = np.random.default_rng(3)
        num_classes = 5

    result = train_segmenter(samples, params, train_cfg, num_classes, order,
                             log_path=out / "train_log.csv", eval_every=25,
                             target_pixacc=0.99)

    summary = {"pixAcc": result.final_pixacc, "mIoU": result.final_miou,
               "steps": result.steps}
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True))

    e8, e16, e32 = backbone_forward(samples[0].image, params.backbone)
    trace = hgd_forward_full(e8, e16, e32, params.hgd)
    size = samples[0].image.dims[1]
    n = _dump_weighting_maps(out, trace.weights, size, size)

    save_checkpoint(out / "checkpoint", dict(params.named_parameters()),
                    meta=summary)

    print(f"pixAcc {result.final_pixacc:.6f}  mIoU {result.final_miou:.6f}  "
          f"steps {result.steps}")
    print(f"wrote train_log.csv, metrics.json, {n} weighting maps, and a "
          f"checkpoint under {out}")
    return 0


def cmd_demo_fpn(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        run = load_run_config(args.config)
        cfg = to_fpn_config(run)
        dt = dtype_of(run)
        base = run.input_size // 4
        seed = run.seed
    else:
        cfg = tiny_fpn_config()
        dt = np.float64
        base = 16
        seed = 0

    rng = np.random.default_rng(seed)
    levels = []
    h = w = base
    for _ in range(5):
        levels.append(Tensor(rng.standard_normal((cfg.output_channels, h, w)).astype(dt)))
        h, w = (h + 1) // 2, (w + 1) // 2
    pyramid = Pyramid(*levels)

    init_rng = np.random.default_rng(seed + 1)
    if cfg.share_params:
        stack = [init_fpn_params(cfg, init_rng, dt)] * cfg.k_recurrence
    else:
        stack = list(init_fpn_stack(cfg, init_rng, dt))

    current = pyramid
    trace = None
    for stage_params in stack:
        current, trace = fpn_decode_once_full(current, stage_params)

    entries = {}
    for (name, stride), tensor in zip(_LEVEL_STRIDES, current.levels()):
        save_tensor(out / f"{name}.hgdt", tensor)
        entries[name] = {"file": f"{name}.hgdt", "stride": stride,
                         "dims": list(tensor.dims)}
    manifest = {"levels": entries, "stages": cfg.k_recurrence,
                "share_params": cfg.share_params}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    render_h, render_w = current.p3.dims[1], current.p3.dims[2]
    n = _dump_weighting_maps(out, trace.attention, render_h, render_w)

    print(f"decoded {cfg.k_recurrence} stage(s); wrote 5 level tensors, "
          f"manifest.json, and {n} weighting maps under {out}")
    return 0


# --------------------------------------------------------------------- dump

def cmd_dump(args) -> int:
    arr = load_tensor(args.tensor)
    kind = "f32" if arr.dtype == np.float32 else "f64"
    dims = "x".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
    print(f"HGDT {kind} rank {arr.ndim} dims {dims}")
    print(f"min {arr.min():.6g}  max {arr.max():.6g}  mean {arr.mean():.6g}")
    if arr.size <= 16:
        print("values " + " ".join(f"{v:.6g}" for v in arr.ravel()))
    return 0


# --------------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--config", help="RunConfig JSON path (precision must be f64)")
    p.add_argument("--break-backward", action="store_true",
                   help="deliberately corrupt one backward rule to exercise "
                        "the failure path")
    p.set_defaults(func=_cmd_gradcheck_entry)

    p = sub.add_parser("cost", help="analytic MAC/parameter table as CSV")
    p.add_argument("arch", choices=_ARCHS)
    p.add_argument("--n", type=int, help="codeword count")
    p.add_argument("--c", type=int, help="codeword dimension")
    p.add_argument("--k", type=int, help="recurrence stages (pyramid variants)")
    p.add_argument("--input", help="input size: SIZE or HxW")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("demo-seg", help="train the synthetic segmentation task")
    p.add_argument("--config", help="RunConfig JSON path (omit for the tiny preset)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_demo_seg)

    p = sub.add_parser("demo-fpn", help="decode a random pyramid")
    p.add_argument("--config", help="RunConfig JSON path (omit for the tiny preset)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_demo_fpn)

    p = sub.add_parser("dump", help="describe one HGDT tensor file")
    p.add_argument("--tensor", required=True, help="path to a .hgdt file")
    p.set_defaults(func=cmd_dump)

    return parser


def main(argv=None) -> int:
    try:
        _check_thread_cap()
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:          # argparse: usage errors exit 2, --help 0
        code = exc.code
        return code if isinstance(code, int) else 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GradcheckError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
