"""dcfit: diffusion-curve vector images fitted directly to noisy point samples.

The forward solver reconstructs a piecewise-harmonic image from line-segment
handles carrying color and normal-derivative jumps; the differential solver
provides exact parameter Jacobians through the same factorized boundary
systems; a stochastic Levenberg-Marquardt loop fits handle geometry and
jumps to any point-sample oracle whose expectation is the target image.
"""

from .bem_diff import (
    PARAMS_PER_HANDLE,
    apply_params,
    assemble_drhs,
    eval_df,
    eval_jacobian,
    pack_params,
    solve_jacobian_boundary,
)
from .bem_forward import (
    Handle,
    HandleSet,
    SubdomainSystem,
    assemble_rhs,
    assemble_system,
    boundary_weights,
    build_system,
    eval_f,
    eval_solution,
    factorize,
    handle_quadrature,
    handle_side_colors,
    solve_boundary,
)
from .formats import (
    HandleDocument,
    SubdomainEntry,
    document_from_state,
    read_handle_file,
    read_scene_file,
    write_handle_file,
    write_scene_file,
)
from .geometry import (
    DEFAULT_H_MAX,
    SubdomainBoundary,
    discretize_boundary,
    gauss3,
    point_in_polygon,
    point_in_subdomain,
)
from .images import box_downsample, rmse, srgb_decode, srgb_encode, write_png
from .kernel import green, green_dn, kernel_grads
from .optimizer import (
    LMConfig,
    OptState,
    build_systems,
    init_handles,
    lm_solve_step,
    optimize,
    project_compatibility,
    prune_handles,
    reproject_wc,
    update_damping,
    update_mean_colors,
)
from .rendering import render_document
from .svgout import export_svg
from .target import (
    SceneOracle,
    SceneSpec,
    SceneSubdomain,
    Shading,
    build_oracle,
    domain_of,
    estimate_target,
)

__version__ = "0.1.0"
