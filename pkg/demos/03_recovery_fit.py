"""Recovery experiment: fit handles to noisy samples of a known target.

The target is the committed 5-handle configuration rendered through the
forward solver plus Gaussian noise (sigma 0.05). Optimization starts from
quasirandom handles with zero weights and runs a reduced-budget
Levenberg-Marquardt loop; the per-step log shows the loss, the damping
parameter, and the RMSE against the noise-free ground truth.

Expect a few minutes of runtime. For the full-budget experiment use the
CLI:

    dcfit fit --scene demos/scenes/recovery.scene --seed 11 \
        --out out_recovery --profile test

Run from the repository root:  python demos/03_recovery_fit.py
"""
import numpy as np

from dcfit import LMConfig, build_oracle, build_systems, optimize, write_png
from dcfit.formats import document_from_state, read_scene_file, write_handle_file
from dcfit.rendering import render_document
from dcfit.svgout import write_svg

scene = read_scene_file("demos/scenes/recovery.scene")
config = LMConfig(samples_per_step=8000, spp=16, max_steps=30, handle_count0=24,
                  h_max=1 / 256, eval_dtype="float32",
                  rmse_interval=5, rmse_resolution=256)
systems = build_systems(scene, config.h_max)
oracle = build_oracle(scene, h_max=config.h_max, systems=systems)


def show(m, state):
    tag = "accept" if m["accepted"] else "reject"
    rmse = f" rmse={m['rmse_linear']:.4f}" if m["rmse_linear"] else ""
    print(f"step {m['step']:3d} [{tag}] loss {m['loss_before']:.5f} -> "
          f"{m['loss_after']:.5f}  lambda {m['lambda']:.2e}{rmse}")


state, metrics = optimize(config, scene, oracle, seed=11, systems=systems,
                          metrics_cb=show)

doc = document_from_state(state, scene)
write_handle_file(doc, "demo03_recovered.handles")
write_png("demo03_recovered.png", render_document(doc, 256, eps=config.eps))
write_svg(doc, "demo03_recovered.svg")
print("wrote demo03_recovered.{handles,png,svg}")
