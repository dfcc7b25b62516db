"""Command-line entry points: fit, render, export-svg, eval-rmse.

The DCFIT_THREADS environment variable caps the BLAS thread pools; it must
take effect before numpy loads, so heavy imports stay inside the command
functions.
"""
from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_env():
    n = os.environ.get("DCFIT_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _coerce(value, target):
    if isinstance(target, bool):
        return value.lower() in ("1", "true", "yes", "on")
    return type(target)(value)


def _build_config(args):
    from dataclasses import fields

    from .formats import read_config_file
    from .optimizer import LMConfig

    overrides = {}
    if args.config:
        overrides.update(read_config_file(args.config))
    for item in args.set or []:
        key, _, value = item.partition("=")
        if not value:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()

    profile = args.profile or overrides.pop("profile", "test")
    scene_path = args.scene or overrides.pop("scene", None)
    seed = args.seed if args.seed is not None else int(overrides.pop("seed", 0))
    out_dir = args.out or overrides.pop("out", None)
    oracle_sel = overrides.pop("oracle", "scene")
    snapshot = args.snapshot_interval
    if snapshot is None and "snapshot_interval" in overrides:
        snapshot = int(overrides.pop("snapshot_interval"))

    config = LMConfig().with_profile(profile)
    if args.steps is not None:
        overrides["max_steps"] = str(args.steps)
    known = {f.name: getattr(config, f.name) for f in fields(config)}
    for key, value in overrides.items():
        if key not in known:
            raise SystemExit(f"unknown config key {key!r}")
        setattr(config, key, _coerce(value, known[key]))
    return config, scene_path, seed, out_dir, profile, oracle_sel, snapshot


def cmd_fit(args):
    from pathlib import Path

    import numpy as np

    from .formats import document_from_state, read_scene_file, write_handle_file
    from .optimizer import build_systems, optimize
    from .target import build_oracle

    config, scene_path, seed, out_dir, profile, oracle_sel, snapshot = _build_config(args)
    if not scene_path or not out_dir:
        raise SystemExit("fit requires --scene and --out")
    scene = read_scene_file(scene_path)
    systems = build_systems(scene, config.h_max)
    oracle = build_oracle(scene, h_max=config.h_max, systems=systems,
                          exact=(oracle_sel == "exact"))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if snapshot is not None:
        snap_steps = set(range(snapshot, config.max_steps + 1, snapshot)) if snapshot else set()
    elif profile == "paper":
        snap_steps = {1, 25, 50, 100}
    else:
        snap_steps = set(range(5, config.max_steps + 1, 5))

    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w") as log:
        def on_metrics(record, state):
            log.write(json.dumps(record, sort_keys=True) + "\n")

        def on_snapshot(step, state):
            if step in snap_steps:
                doc = document_from_state(state, scene)
                write_handle_file(doc, out / f"handles_step_{step:04d}.handles")

        state, metrics = optimize(config, scene, oracle, seed=seed, systems=systems,
                                  metrics_cb=on_metrics, snapshot_cb=on_snapshot)
    doc = document_from_state(state, scene)
    write_handle_file(doc, out / "handles_final.handles")
    print(f"wrote {out / 'handles_final.handles'} "
          f"({state.handle_count()} handles, {len(metrics)} steps)")
    return 0


def cmd_render(args):
    from .formats import read_handle_file
    from .images import write_png
    from .rendering import render_document

    doc = read_handle_file(args.handles)
    img = render_document(doc, args.res, eps=args.eps)
    write_png(args.out, img)
    print(f"wrote {args.out}")
    return 0


def cmd_export_svg(args):
    from .formats import read_handle_file
    from .svgout import write_svg

    doc = read_handle_file(args.handles)
    write_svg(doc, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_eval_rmse(args):
    import numpy as np

    from .formats import read_handle_file, read_scene_file
    from .images import read_png_bytes, rmse, srgb_encode, tonemap_to_bytes
    from .rendering import grid_points, render_document
    from .target import build_oracle

    doc = read_handle_file(args.handles)
    own = render_document(doc, args.res, eps=args.eps)
    if args.ref.endswith(".png"):
        ref = read_png_bytes(args.ref)
        if ref.shape[:2] != (args.res, args.res):
            raise SystemExit(f"reference resolution {ref.shape[1]}x{ref.shape[0]} "
                             f"does not match --res {args.res}")
        value = rmse(tonemap_to_bytes(own) / 255.0, ref / 255.0)
    else:
        scene = read_scene_file(args.ref)
        oracle = build_oracle(scene)
        truth = oracle.true_value(grid_points(args.res)).reshape(args.res, args.res, 3)
        if args.space == "linear":
            value = rmse(own, truth)
        else:
            value = rmse(srgb_encode(np.clip(own, 0.0, 1.0)),
                         srgb_encode(np.clip(truth, 0.0, 1.0)))
    print(repr(value))
    return 0


def main(argv=None):
    _apply_thread_env()
    parser = argparse.ArgumentParser(prog="dcfit",
                                     description="diffusion-curve extraction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="optimize handles against a scene oracle")
    p.add_argument("--scene")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--profile", choices=("test", "paper"))
    p.add_argument("--steps", type=int)
    p.add_argument("--snapshot-interval", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="rasterize a handle file to PNG")
    p.add_argument("--handles", required=True)
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps", type=float, default=1e-2)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("export-svg", help="draw a handle file as SVG")
    p.add_argument("--handles", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_svg)

    p = sub.add_parser("eval-rmse", help="RMSE of a handle file against a reference")
    p.add_argument("--handles", required=True)
    p.add_argument("--ref", required=True, help="PNG file or scene file")
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--space", choices=("srgb", "linear"), default="srgb")
    p.set_defaults(func=cmd_eval_rmse)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
