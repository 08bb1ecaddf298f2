"""Command-line surface tying the modules into reproducible pipelines.

Subcommands: ``phantom generate``, ``mask generate``, ``recon klr``,
``recon cs``, ``dti fit``, ``metrics compare``, ``benchmark run``. Every
run prints a one-line JSON summary to stdout and writes artifacts only to
the paths it was given. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as kio
from .core import VolumeShape, ifft2_per_slice
from .cs import CsConfig, cs_reconstruct
from .dti import fit_tensor_volume
from .klr import KlrConfig, klr_reconstruct_volume
from .kpca import KernelParams
from .metrics import (
    BenchmarkConfig,
    benchmark,
    histogram_to_csv,
    map_error_histogram,
    nmse,
    psnr,
    reports_to_csv,
)
from .phantom import PhantomSpec, forward_kspace, generate_phantom
from .sampling import generate_vd_mask

__all__ = ["cli_main", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _emit(summary: dict) -> None:
    print(json.dumps(summary))


def build_parser() -> _Parser:
    parser = _Parser(prog="klrecon", description=__doc__)
    top = parser.add_subparsers(dest="group", required=True)

    phantom = top.add_parser("phantom", help="synthetic data").add_subparsers(
        dest="action", required=True
    )
    p = phantom.add_parser("generate", help="generate phantom volume and k-space")
    p.add_argument("--shape", default="64x64x4x24", help="NXxNYxNZxNDIRS")
    p.add_argument("--ndirs", type=int, default=None, help="override direction count")
    p.add_argument("--b", type=float, default=1000.0, help="b-value (s/mm^2)")
    p.add_argument("--noise", type=float, default=0.0, help="complex noise std relative to S0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-truth", default=None, help="image-domain volume path")
    p.add_argument("--output-kspace", default=None, help="k-space volume path")
    p.add_argument("--output-gtab", default=None, help="standalone gradient JSON path")

    mask = top.add_parser("mask", help="sampling masks").add_subparsers(
        dest="action", required=True
    )
    m = mask.add_parser("generate", help="variable-density k-space mask")
    m.add_argument("--shape", required=True, help="NXxNYxNZxNQ (nz ignored)")
    m.add_argument("--af", type=float, required=True, help="target acceleration factor")
    m.add_argument("--center-radius", type=float, default=0.08)
    m.add_argument("--decay", type=float, default=3.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--per-direction", action="store_true", help="independent mask per q")
    m.add_argument("--output", required=True)

    recon = top.add_parser("recon", help="reconstruction").add_subparsers(
        dest="action", required=True
    )
    rk = recon.add_parser("klr", help="kernel low-rank reconstruction")
    rk.add_argument("--input", required=True, help="undersampled k-space container")
    rk.add_argument("--mask", required=True)
    rk.add_argument("--rank", type=int, default=8)
    rk.add_argument("--degree", type=int, default=2)
    rk.add_argument("--offset", type=float, default=1.0)
    rk.add_argument("--ntrain", type=int, default=2000)
    rk.add_argument("--iters", type=int, default=100)
    rk.add_argument("--tol", type=float, default=1e-6)
    rk.add_argument("--seed", type=int, default=0)
    rk.add_argument("--output", required=True)

    rc = recon.add_parser("cs", help="wavelet + TV compressed sensing")
    rc.add_argument("--input", required=True)
    rc.add_argument("--mask", required=True)
    rc.add_argument("--lambda-w", type=float, default=0.0)
    rc.add_argument("--lambda-tv", type=float, default=0.0)
    rc.add_argument("--iters", type=int, default=200)
    rc.add_argument("--tol", type=float, default=1e-6)
    rc.add_argument("--output", required=True)

    dti = top.add_parser("dti", help="tensor maps").add_subparsers(
        dest="action", required=True
    )
    d = dti.add_parser("fit", help="log-linear tensor fit with FA/MD/color maps")
    d.add_argument("--input", required=True, help="image-domain volume container")
    d.add_argument("--output-fa", default=None)
    d.add_argument("--output-md", default=None)
    d.add_argument("--output-color", default=None)
    d.add_argument("--png-dir", default=None, help="also export per-slice PNGs here")

    met = top.add_parser("metrics", help="quality metrics").add_subparsers(
        dest="action", required=True
    )
    c = met.add_parser("compare", help="NMSE/PSNR between two volumes")
    c.add_argument("--reference", required=True)
    c.add_argument("--test", required=True)

    bench = top.add_parser("benchmark", help="method comparison grid").add_subparsers(
        dest="action", required=True
    )
    b = bench.add_parser("run", help="run the benchmark described by a JSON config")
    b.add_argument("--config", required=True, help="JSON experiment spec")
    b.add_argument("--output-dir", required=True)

    return parser


def _cmd_phantom_generate(args) -> dict:
    shape = VolumeShape.parse(args.shape)
    ndirs = args.ndirs if args.ndirs is not None else shape.nq
    spec = PhantomSpec(
        nx=shape.nx,
        ny=shape.ny,
        nz=shape.nz,
        n_directions=ndirs,
        b_value=args.b,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    truth, _ = generate_phantom(spec)
    outputs = {}
    if args.output_truth:
        kio.save_dwi(args.output_truth, truth)
        outputs["truth"] = args.output_truth
    if args.output_kspace:
        kio.save_kspace(args.output_kspace, forward_kspace(truth))
        outputs["kspace"] = args.output_kspace
    if args.output_gtab:
        doc = {
            "bvalues": [float(v) for v in truth.gtab.bvalues],
            "directions": [[float(c) for c in d] for d in truth.gtab.directions],
        }
        kio.atomic_write_text(args.output_gtab, json.dumps(doc))
        outputs["gtab"] = args.output_gtab
    return {
        "command": "phantom generate",
        "shape": list(truth.data.shape),
        "n_b0": spec.n_b0,
        "noise": spec.noise_sigma,
        "seed": spec.seed,
        "outputs": outputs,
    }


def _cmd_mask_generate(args) -> dict:
    shape = VolumeShape.parse(args.shape)
    mask = generate_vd_mask(
        shape,
        af_target=args.af,
        center_radius=args.center_radius,
        decay=args.decay,
        seed=args.seed,
        per_direction=args.per_direction,
    )
    kio.save_mask(args.output, mask)
    return {
        "command": "mask generate",
        "shape": list(mask.pattern.shape),
        "af_target": mask.af_target,
        "achieved_af": mask.achieved_af,
        "seed": args.seed,
        "outputs": {"mask": args.output},
    }


def _cmd_recon_klr(args) -> dict:
    kvol = kio.load_kspace(args.input)
    mask = kio.load_mask(args.mask)
    cfg = KlrConfig(
        n_train=args.ntrain,
        params=KernelParams(offset_b=args.offset, degree_c=args.degree),
        rank_r=args.rank,
        max_iters=args.iters,
        tol=args.tol,
        seed=args.seed,
    )
    recon = klr_reconstruct_volume(kvol, mask, cfg)
    kio.save_dwi(args.output, recon)
    return {
        "command": "recon klr",
        "shape": list(recon.data.shape),
        "rank": cfg.rank_r,
        "n_train": cfg.n_train,
        "iters": cfg.max_iters,
        "seed": cfg.seed,
        "outputs": {"volume": args.output},
    }


def _cmd_recon_cs(args) -> dict:
    kvol = kio.load_kspace(args.input)
    mask = kio.load_mask(args.mask)
    cfg = CsConfig(
        lambda_wavelet=args.lambda_w,
        lambda_tv=args.lambda_tv,
        max_iters=args.iters,
        tol=args.tol,
    )
    recon, info = cs_reconstruct(kvol, mask, cfg, return_info=True)
    kio.save_dwi(args.output, recon)
    return {
        "command": "recon cs",
        "shape": list(recon.data.shape),
        "lambda_w": cfg.lambda_wavelet,
        "lambda_tv": cfg.lambda_tv,
        "iterations": info.iterations,
        "final_objective": float(info.objectives[-1]),
        "outputs": {"volume": args.output},
    }


def _cmd_dti_fit(args) -> dict:
    dwi = kio.load_dwi(args.input)
    tmap = fit_tensor_volume(dwi)
    outputs = {}
    if args.output_fa:
        kio.write_container(args.output_fa, tmap.fa.astype(np.float32))
        outputs["fa"] = args.output_fa
    if args.output_md:
        kio.write_container(args.output_md, tmap.md.astype(np.float32))
        outputs["md"] = args.output_md
    if args.output_color:
        kio.write_container(args.output_color, tmap.rgb.astype(np.float32))
        outputs["color"] = args.output_color
    if args.png_dir:
        md_hi = float(tmap.md.max()) or 1.0
        for z in range(tmap.fa.shape[2]):
            kio.export_png(tmap.fa[:, :, z], os.path.join(args.png_dir, f"fa_z{z:03d}.png"), (0.0, 1.0))
            kio.export_png(tmap.md[:, :, z], os.path.join(args.png_dir, f"md_z{z:03d}.png"), (0.0, md_hi))
            kio.export_png(tmap.rgb[:, :, z], os.path.join(args.png_dir, f"color_z{z:03d}.png"), (0.0, 1.0))
        outputs["png_dir"] = args.png_dir
    fg = tmap.foreground
    return {
        "command": "dti fit",
        "foreground_voxels": int(fg.sum()),
        "fa_mean_foreground": float(tmap.fa[fg].mean()) if fg.any() else 0.0,
        "md_mean_foreground": float(tmap.md[fg].mean()) if fg.any() else 0.0,
        "outputs": outputs,
    }


def _cmd_metrics_compare(args) -> dict:
    reference = kio.load_dwi(args.reference)
    test = kio.load_dwi(args.test)
    return {
        "command": "metrics compare",
        "nmse": nmse(reference, test),
        "psnr_db": psnr(reference, test),
    }


def _cmd_benchmark_run(args) -> dict:
    with open(args.config, "r", encoding="utf-8") as handle:
        conf = json.load(handle)

    phantom_conf = conf.get("phantom", {})
    spec = PhantomSpec(
        nx=int(phantom_conf.get("nx", 64)),
        ny=int(phantom_conf.get("ny", 64)),
        nz=int(phantom_conf.get("nz", 4)),
        n_directions=int(phantom_conf.get("n_directions", 24)),
        b_value=float(phantom_conf.get("b_value", 1000.0)),
        noise_sigma=float(phantom_conf.get("noise_sigma", 0.0)),
        seed=int(phantom_conf.get("seed", 0)),
    )
    truth, _ = generate_phantom(spec)
    kspace = forward_kspace(truth)

    afs = [float(a) for a in conf.get("afs", [2, 4, 6, 8])]
    mask_seed = int(conf.get("mask_seed", 0))
    q_modes = tuple(conf.get("q_modes", ["full", "subset"]))
    methods = tuple(conf.get("methods", ["zero-fill", "cs", "klr"]))

    klr_conf = conf.get("klr", {})
    cs_conf = conf.get("cs", {})
    config = BenchmarkConfig(
        klr=KlrConfig(
            n_train=int(klr_conf.get("n_train", 1200)),
            params=KernelParams(
                offset_b=float(klr_conf.get("offset_b", 1.0)),
                degree_c=int(klr_conf.get("degree_c", 2)),
            ),
            rank_r=int(klr_conf.get("rank_r", 8)),
            max_iters=int(klr_conf.get("max_iters", 40)),
            tol=float(klr_conf.get("tol", 1e-5)),
            seed=int(klr_conf.get("seed", 0)),
        ),
        cs_lambda_w_grid=tuple(cs_conf.get("lambda_w_grid", [1e-3, 1e-2])),
        cs_lambda_tv_grid=tuple(cs_conf.get("lambda_tv_grid", [1e-3, 1e-2])),
        cs_max_iters=int(cs_conf.get("max_iters", 80)),
        cs_tol=float(cs_conf.get("tol", 1e-5)),
        q_fraction=float(conf.get("q_fraction", 0.5)),
        qsubset_seed=int(conf.get("qsubset_seed", 0)),
    )

    masks = [
        generate_vd_mask(
            truth.shape,
            af_target=af,
            center_radius=config.mask_center_radius,
            decay=config.mask_decay,
            seed=mask_seed,
        )
        for af in afs
    ]
    write_volumes = bool(conf.get("write_volumes", False))
    result = benchmark(
        truth, kspace, masks, q_modes=q_modes, methods=methods, config=config,
        return_volumes=write_volumes,
    )
    reports, volumes = result if write_volumes else (result, {})

    os.makedirs(args.output_dir, exist_ok=True)
    metrics_path = os.path.join(args.output_dir, "metrics.csv")
    kio.atomic_write_text(metrics_path, reports_to_csv(reports))
    for r in reports:
        tag = f"{r.method}_af{r.af:g}_{r.q_mode}"
        kio.atomic_write_text(
            os.path.join(args.output_dir, f"fa_err_{tag}.csv"),
            histogram_to_csv(r.fa_err_hist),
        )
        kio.atomic_write_text(
            os.path.join(args.output_dir, f"md_err_{tag}.csv"),
            histogram_to_csv(r.md_err_hist),
        )
    for (method, af, q_mode), volume in volumes.items():
        kio.save_dwi(
            os.path.join(args.output_dir, f"recon_{method}_af{af:g}_{q_mode}.vol"),
            volume,
        )
    return {
        "command": "benchmark run",
        "rows": len(reports),
        "outputs": {"metrics": metrics_path, "dir": args.output_dir},
    }


_DISPATCH = {
    ("phantom", "generate"): _cmd_phantom_generate,
    ("mask", "generate"): _cmd_mask_generate,
    ("recon", "klr"): _cmd_recon_klr,
    ("recon", "cs"): _cmd_recon_cs,
    ("dti", "fit"): _cmd_dti_fit,
    ("metrics", "compare"): _cmd_metrics_compare,
    ("benchmark", "run"): _cmd_benchmark_run,
}


def cli_main(argv=None) -> int:
    """Parse argv and run one subcommand; returns the process exit code."""
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    handler = _DISPATCH[(args.group, args.action)]
    try:
        summary = handler(args)
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(summary)
    return 0


def main() -> None:
    sys.exit(cli_main())
