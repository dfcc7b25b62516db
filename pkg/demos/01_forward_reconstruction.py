"""Forward reconstruction: place a few handles by hand and render the image.

Builds one subdomain (the full frame), assembles and factorizes its
boundary system, solves for the boundary values induced by three handles,
and writes a PNG plus the handle layout as SVG.

Run from the repository root:  python demos/01_forward_reconstruction.py
"""
import numpy as np

from dcfit import (
    HandleSet,
    SubdomainBoundary,
    assemble_rhs,
    build_system,
    eval_solution,
    handle_side_colors,
    solve_boundary,
    write_png,
)
from dcfit.formats import HandleDocument, SubdomainEntry
from dcfit.rendering import render_document
from dcfit.svgout import write_svg

frame = SubdomainBoundary("frame", np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float))
eps = 0.01

# a warm arc, a cool bar, and a soft gradient source
handles = HandleSet(
    "frame",
    p0=np.array([[0.20, 0.35], [0.55, 0.70], [0.30, 0.55]]),
    p1=np.array([[0.60, 0.25], [0.85, 0.60], [0.45, 0.80]]),
    w_d=np.array([[0.45, 0.15, -0.10], [-0.20, -0.05, 0.35], [0.0, 0.0, 0.0]]),
    w_c=np.array([[0.6, 0.2, 0.0], [0.0, 0.3, -0.4], [0.0, 0.0, 0.0]]),
)
# zero net flux of w_c, channel by channel, so the Neumann problem is solvable
lengths = handles.lengths()
handles.w_c[2] = -(lengths[:2] @ handles.w_c[:2]) / lengths[2]

system = build_system(frame, h_max=1 / 256)
rhs = assemble_rhs(system.elements, handles, eps)
u_bar = solve_boundary(system, rhs)
system.mean_color = np.array([0.45, 0.45, 0.50])

probe = np.array([[0.4, 0.4], [0.7, 0.65]])
print("reconstruction at probe points:")
print(eval_solution(probe, system, u_bar, handles, eps))
c_plus, c_minus = handle_side_colors(0, system, u_bar, handles, eps)
print("first handle side colors:", c_plus, "|", c_minus)

doc = HandleDocument(
    subdomains=[SubdomainEntry(frame, 0.0, system.mean_color)],
    handle_sets={"frame": handles})
img = render_document(doc, 256, eps=eps)
write_png("demo01_render.png", img)
write_svg(doc, "demo01_handles.svg")
print("wrote demo01_render.png and demo01_handles.svg")
