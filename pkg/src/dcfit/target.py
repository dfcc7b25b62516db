"""Scene description and stochastic target oracles.

The target image is only available through point samples whose expectation
equals the true image in linear color space. Scenes are authored directly
as prioritized 2D polygons (smaller priority wins where subdomains
overlap), with one shading spec per subdomain:

  constant    fixed albedo plus optional Gaussian noise
  linear      affine color field plus Gaussian noise
  blob        Gaussian bump field plus Gaussian noise
  raster      bilinear lookup in a linear-space image plus Gaussian noise
  softshadow  albedo times a one-sample Bernoulli visibility estimate
              toward a disk light occluded by scene blockers
  dc          reconstruction of a stored handle file plus Gaussian noise
              (gives recovery experiments a known ground truth)

Every point of the unit square must belong to a subdomain after priority
resolution, so scenes carry a full-frame background polygon.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bem_forward import boundary_weights, build_system, eval_f
from .geometry import point_in_polygon


@dataclass
class Shading:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class SceneSubdomain:
    boundary: object  # SubdomainBoundary
    priority: float
    shading: Shading


@dataclass
class SceneSpec:
    subdomains: list            # sorted by (priority, insertion order)
    light: dict | None = None   # {"center": (2,), "radius": float}
    blockers: list = field(default_factory=list)  # [(p0, p1), ...]

    def __post_init__(self):
        order = sorted(range(len(self.subdomains)),
                       key=lambda i: (self.subdomains[i].priority, i))
        self.subdomains = [self.subdomains[i] for i in order]
        self._check_background()

    def _check_background(self):
        if not self.subdomains:
            raise ValueError("scene has no subdomains")
        bg = self.subdomains[-1].boundary
        g = np.linspace(0.0, 1.0, 9)
        gx, gy = np.meshgrid(g, g)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        if not np.all(point_in_polygon(pts, bg.vertices)):
            raise ValueError("lowest-priority subdomain must cover the full frame")

    def ids(self):
        return [s.boundary.id for s in self.subdomains]

    def domain_of(self, points):
        """Index of the first (highest-priority) subdomain containing each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(pts.shape[0], -1, dtype=int)
        for i, sub in enumerate(self.subdomains):
            undecided = out < 0
            if not np.any(undecided):
                break
            hit = point_in_polygon(pts[undecided], sub.boundary.vertices)
            idx = np.nonzero(undecided)[0][hit]
            out[idx] = i
        return out


def domain_of(x, scene):
    """Subdomain id owning the point x (scalar convenience wrapper)."""
    idx = scene.domain_of(np.asarray(x, dtype=float)[None, :])[0]
    return scene.subdomains[idx].boundary.id


def _segments_cross(p, q, a, b):
    """True where segment p-q properly crosses segment a-b (vectorized over p, q)."""
    px, py = p[:, 0], p[:, 1]
    qx, qy = q[:, 0], q[:, 1]
    ax, ay = a
    bx, by = b
    d1 = (qx - px) * (ay - py) - (qy - py) * (ax - px)
    d2 = (qx - px) * (by - py) - (qy - py) * (bx - px)
    d3 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d4 = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
    return (d1 * d2 < 0.0) & (d3 * d4 < 0.0)


def _circle_polygon_area(vertices, center, radius):
    """Exact area of the intersection of a disk with a convex polygon.

    Green's-theorem accumulation over the polygon edges: chord parts
    contribute triangle areas, parts outside the disk contribute arcs.
    """
    c = np.asarray(center, dtype=float)
    R = float(radius)
    v = np.asarray(vertices, dtype=float) - c[None, :]
    total = 0.0
    n = v.shape[0]
    for i in range(n):
        p = v[i]
        q = v[(i + 1) % n]
        d = q - p
        a = d @ d
        if a == 0.0:
            continue
        b = 2.0 * (p @ d)
        cc = p @ p - R * R
        disc = b * b - 4.0 * a * cc
        ts = []
        if disc > 0.0:
            sq = np.sqrt(disc)
            ts = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
            ts = [t for t in ts if 0.0 < t < 1.0]
        pieces = [0.0] + sorted(ts) + [1.0]
        for t0, t1 in zip(pieces[:-1], pieces[1:]):
            mid = p + 0.5 * (t0 + t1) * d
            x0 = p + t0 * d
            x1 = p + t1 * d
            if mid @ mid <= R * R:
                total += 0.5 * (x0[0] * x1[1] - x0[1] * x1[0])
            else:
                a0 = np.arctan2(x0[1], x0[0])
                a1 = np.arctan2(x1[1], x1[0])
                da = a1 - a0
                # take the arc consistent with the edge direction
                if da > np.pi:
                    da -= 2.0 * np.pi
                elif da < -np.pi:
                    da += 2.0 * np.pi
                total += 0.5 * R * R * da
    return abs(total)


def _shadow_wedge(x, a, b, extent=1e4):
    """Convex polygon bounding the set of points beyond segment a-b as seen from x.

    The true blocked region is an unbounded wedge; it is truncated at a
    distance far outside the unit-square scene, which is exact for any disk
    light inside the scene.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - x
    db = b - x
    if da[0] * db[1] - da[1] * db[0] < 0.0:
        a, b, da, db = b, a, db, da
    na = np.hypot(*da)
    nb = np.hypot(*db)
    if na == 0.0 or nb == 0.0:
        return None
    fa = a + da / na * extent
    fb = b + db / nb * extent
    return np.array([a, fa, fb, b])


class SceneOracle:
    """Point-sample oracle for a scene; expectation equals the true image.

    `weights_cache` arguments let a caller that already computed boundary
    double-layer integrals for the current point batch share them with the
    handle-file (dc) shadings, keyed by id(elements).
    """

    def __init__(self, scene, dc_data=None):
        self.scene = scene
        self.dc_data = dc_data or {}
        self.has_true_value = True

    # -- per-shading true fields ------------------------------------------

    def _true_group(self, sub, pts, weights_cache=None):
        sh = sub.shading
        p = sh.params
        if sh.kind == "constant":
            return np.broadcast_to(np.asarray(p["albedo"], dtype=float), (pts.shape[0], 3)).copy()
        if sh.kind == "linear":
            base = np.asarray(p["base"], dtype=float)
            gx = np.asarray(p["grad_x"], dtype=float)
            gy = np.asarray(p["grad_y"], dtype=float)
            return base[None, :] + pts[:, 0:1] * gx[None, :] + pts[:, 1:2] * gy[None, :]
        if sh.kind == "blob":
            base = np.asarray(p["base"], dtype=float)
            amp = np.asarray(p["amp"], dtype=float)
            c = np.asarray(p["center"], dtype=float)
            r = float(p["radius"])
            d2 = np.sum((pts - c[None, :]) ** 2, axis=1)
            return base[None, :] + np.exp(-d2 / (r * r))[:, None] * amp[None, :]
        if sh.kind == "raster":
            return _bilinear(p["image"], pts)
        if sh.kind == "softshadow":
            albedo = np.asarray(p["albedo"], dtype=float)
            vis = self._visibility_fraction(pts)
            return albedo[None, :] * vis[:, None]
        if sh.kind == "dc":
            return self._dc_true(p["key"], pts, weights_cache)
        raise ValueError(f"unknown shading kind {sh.kind!r}")

    def _dc_true(self, key, pts, weights_cache=None):
        data = self.dc_data[key]
        out = np.zeros((pts.shape[0], 3))
        dom = data["doc_scene"].domain_of(pts)
        for i, sub in enumerate(data["doc_scene"].subdomains):
            mask = dom == i
            if not np.any(mask):
                continue
            sys_i = data["systems"][sub.boundary.id]
            hs = data["handles"][sub.boundary.id]
            W = None
            if weights_cache is not None:
                W = weights_cache.get(id(sys_i.elements))
                if W is not None and W.shape[0] != int(np.sum(mask)):
                    W = None
            if W is None:
                W = boundary_weights(pts[mask], sys_i.elements)
            u = -(W @ data["u_bar"][sub.boundary.id])
            u += eval_f(pts[mask], hs, data["eps"], data["h_max"])
            u += data["b"][sub.boundary.id][None, :]
            out[mask] = u
        return out

    def _visibility_fraction(self, pts):
        """Exact visible fraction of the disk light, per point."""
        light = self.scene.light
        c = np.asarray(light["center"], dtype=float)
        R = float(light["radius"])
        disk_area = np.pi * R * R
        vis = np.ones(pts.shape[0])
        for (a, b) in self.scene.blockers:
            for j in range(pts.shape[0]):
                wedge = _shadow_wedge(pts[j], a, b)
                if wedge is None:
                    continue
                blocked = _circle_polygon_area(wedge, c, R)
                vis[j] -= blocked / disk_area
        return np.clip(vis, 0.0, 1.0)

    # -- sampling ----------------------------------------------------------

    def true_value(self, points, weights_cache=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((pts.shape[0], 3))
        dom = self.scene.domain_of(pts)
        for i, sub in enumerate(self.scene.subdomains):
            mask = dom == i
            if np.any(mask):
                out[mask] = self._true_group(sub, pts[mask], weights_cache)
        return out

    def sample_batch(self, points, rng, weights_cache=None):
        """One unbiased sample per point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((pts.shape[0], 3))
        dom = self.scene.domain_of(pts)
        for i, sub in enumerate(self.scene.subdomains):
            mask = dom == i
            if not np.any(mask):
                continue
            sh = sub.shading
            if sh.kind == "softshadow":
                out[mask] = self._sample_softshadow(sub, pts[mask], rng)
            else:
                vals = self._true_group(sub, pts[mask], weights_cache)
                sigma = float(sh.params.get("noise_sigma", 0.0))
                if sigma > 0.0:
                    vals = vals + sigma * rng.standard_normal(vals.shape)
                out[mask] = vals
        return out

    def _sample_softshadow(self, sub, pts, rng):
        light = self.scene.light
        c = np.asarray(light["center"], dtype=float)
        R = float(light["radius"])
        m = pts.shape[0]
        r = R * np.sqrt(rng.random(m))
        phi = 2.0 * np.pi * rng.random(m)
        q = c[None, :] + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        visible = np.ones(m, dtype=bool)
        for (a, b) in self.scene.blockers:
            visible &= ~_segments_cross(pts, q, tuple(a), tuple(b))
        albedo = np.asarray(sub.shading.params["albedo"], dtype=float)
        return visible[:, None] * albedo[None, :]

    def sample(self, x, rng):
        """Single stochastic RGB estimate at one point."""
        return self.sample_batch(np.asarray(x, dtype=float)[None, :], rng)[0]

    def estimate_batch(self, points, spp, rng, weights_cache=None):
        """Mean of spp samples per point, clamped to [0, 1] after averaging.

        Additive-noise shadings evaluate their true field once and average
        the spp noise draws around it; the Bernoulli soft-shadow estimate
        draws spp light samples per point.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((pts.shape[0], 3))
        dom = self.scene.domain_of(pts)
        for i, sub in enumerate(self.scene.subdomains):
            mask = dom == i
            if not np.any(mask):
                continue
            group = pts[mask]
            if sub.shading.kind == "softshadow":
                acc = np.zeros((group.shape[0], 3))
                for _ in range(spp):
                    acc += self._sample_softshadow(sub, group, rng)
                out[mask] = acc / spp
            else:
                vals = self._true_group(sub, group, weights_cache)
                sigma = float(sub.shading.params.get("noise_sigma", 0.0))
                if sigma > 0.0:
                    noise = rng.standard_normal((spp, group.shape[0], 3))
                    vals = vals + sigma * noise.mean(axis=0)
                out[mask] = vals
        np.clip(out, 0.0, 1.0, out=out)
        return out


def estimate_target(oracle, points, spp, rng, weights_cache=None):
    """Mean of spp samples per point, clamped to [0, 1] after averaging."""
    if spp < 1:
        raise ValueError("spp must be >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    batch = getattr(oracle, "estimate_batch", None)
    if batch is not None:
        return batch(pts, spp, rng, weights_cache)
    acc = np.zeros((pts.shape[0], 3))
    for _ in range(spp):
        acc += oracle.sample_batch(pts, rng, weights_cache)
    acc /= spp
    np.clip(acc, 0.0, 1.0, out=acc)
    return acc


def _bilinear(image, pts):
    """Bilinear lookup in a linear-space (H, W, 3) array over [0, 1]^2.

    x maps to columns, y to rows (row 0 at y = 0); edge clamped.
    """
    img = np.asarray(image, dtype=float)
    h, w = img.shape[0], img.shape[1]
    fx = np.clip(pts[:, 0] * w - 0.5, 0.0, w - 1.0)
    fy = np.clip(pts[:, 1] * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(fx).astype(int)
    y0 = np.floor(fy).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (fx - x0)[:, None]
    ty = (fy - y0)[:, None]
    top = img[y0, x0] * (1 - tx) + img[y0, x1] * tx
    bot = img[y1, x0] * (1 - tx) + img[y1, x1] * tx
    return top * (1 - ty) + bot * ty


def build_oracle(scene, h_max=None, systems=None, exact=False):
    """Construct the sample oracle of a scene.

    Handle-file (dc) shadings are pre-solved here. `systems` optionally
    shares the caller's factorized subdomain systems with matching ids.
    With exact=True all Gaussian noise sigmas are forced to zero (the
    softshadow Bernoulli sampler is inherently stochastic either way).
    """
    from .geometry import DEFAULT_H_MAX

    h_max = DEFAULT_H_MAX if h_max is None else h_max
    dc_data = {}
    for sub in scene.subdomains:
        sh = sub.shading
        if exact and "noise_sigma" in sh.params:
            sh.params["noise_sigma"] = 0.0
        if sh.kind != "dc":
            continue
        key = sub.boundary.id
        eps = float(sh.params.get("dc_eps", 1e-2))
        dc_data[key] = build_dc_data(sh.params["doc"], h_max, eps, systems=systems)
        sh.params["key"] = key
    return SceneOracle(scene, dc_data)


def build_dc_data(doc, h_max, eps, systems=None):
    """Precompute the reconstruction state of a handle document.

    The boundary solve of the stored handles happens once here; sampling
    afterwards only evaluates boundary integrals and the jump term. Pass
    `systems` to share already-factorized subdomain systems (the Galerkin
    matrix does not depend on the handles).
    """
    from .bem_forward import assemble_rhs, solve_boundary

    subs = [SceneSubdomain(entry.boundary, entry.priority, Shading("constant", {"albedo": (0, 0, 0)}))
            for entry in doc.subdomains]
    doc_scene = SceneSpec(subs)
    data = {"doc_scene": doc_scene, "systems": {}, "handles": {}, "u_bar": {},
            "b": {}, "eps": eps, "h_max": h_max}
    for entry in doc.subdomains:
        dom = entry.boundary.id
        sys_i = None if systems is None else systems.get(dom)
        if sys_i is None:
            sys_i = build_system(entry.boundary, h_max)
        hs = doc.handle_sets[dom]
        rhs = assemble_rhs(sys_i.elements, hs, eps, h_max)
        data["systems"][dom] = sys_i
        data["handles"][dom] = hs
        data["u_bar"][dom] = solve_boundary(sys_i, rhs)
        data["b"][dom] = np.asarray(entry.mean_color, dtype=float)
    return data
