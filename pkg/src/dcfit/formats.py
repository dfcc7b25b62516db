"""Structured-text file formats for scenes, handle sets, and run configs.

All artifacts share one line-oriented syntax: a header line

    !dcfit <kind> <version>

followed by repeated [section] blocks of `key = value` lines, where values
are whitespace-separated tokens (numbers use repr precision, so files
round-trip exactly). Unknown keys are rejected with a clear error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bem_forward import HandleSet
from .geometry import SubdomainBoundary
from .target import SceneSpec, SceneSubdomain, Shading

FORMAT_NAME = "dcfit"


class FormatError(ValueError):
    pass


def _fmt(values):
    arr = np.asarray(values, dtype=float).ravel()
    return " ".join(repr(float(v)) for v in arr)


def serialize_blocks(kind, version, sections):
    lines = [f"!{FORMAT_NAME} {kind} {version}"]
    for name, kv in sections:
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in kv.items():
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_blocks(text, expected_kind):
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("!"):
        raise FormatError("missing header line '!dcfit <kind> <version>'")
    head = lines[0][1:].split()
    if len(head) != 3 or head[0] != FORMAT_NAME:
        raise FormatError(f"bad header {lines[0]!r}")
    if head[1] != expected_kind:
        raise FormatError(f"expected a {expected_kind!r} file, found {head[1]!r}")
    version = int(head[2])
    sections = []
    current = None
    for ln in lines[1:]:
        if ln.startswith("[") and ln.endswith("]"):
            current = (ln[1:-1], {})
            sections.append(current)
        elif "=" in ln:
            if current is None:
                raise FormatError(f"key outside any section: {ln!r}")
            key, _, value = ln.partition("=")
            key = key.strip()
            if key in current[1]:
                raise FormatError(f"duplicate key {key!r} in [{current[0]}]")
            current[1][key] = value.strip()
        else:
            raise FormatError(f"unparseable line: {ln!r}")
    return version, sections


def _floats(text, n=None):
    vals = np.array([float(tok) for tok in text.split()], dtype=float)
    if n is not None and vals.shape[0] != n:
        raise FormatError(f"expected {n} numbers, found {vals.shape[0]}: {text!r}")
    return vals


def _check_keys(section, kv, allowed, required):
    unknown = set(kv) - set(allowed)
    if unknown:
        raise FormatError(f"unknown field(s) {sorted(unknown)} in [{section}]")
    missing = set(required) - set(kv)
    if missing:
        raise FormatError(f"missing field(s) {sorted(missing)} in [{section}]")


# ---------------------------------------------------------------------------
# handle files
# ---------------------------------------------------------------------------

@dataclass
class SubdomainEntry:
    boundary: SubdomainBoundary
    priority: float
    mean_color: np.ndarray


@dataclass
class HandleDocument:
    subdomains: list = field(default_factory=list)
    handle_sets: dict = field(default_factory=dict)


def write_handle_file(doc, path):
    sections = []
    for entry in doc.subdomains:
        sections.append(("subdomain", {
            "id": entry.boundary.id,
            "priority": repr(float(entry.priority)),
            "polygon": _fmt(entry.boundary.vertices),
            "mean_color": _fmt(entry.mean_color),
        }))
    for entry in doc.subdomains:
        hs = doc.handle_sets.get(entry.boundary.id)
        if hs is None:
            continue
        for k in range(hs.count):
            sections.append(("handle", {
                "owner": hs.owner,
                "p0": _fmt(hs.p0[k]),
                "p1": _fmt(hs.p1[k]),
                "w_d": _fmt(hs.w_d[k]),
                "w_c": _fmt(hs.w_c[k]),
            }))
    Path(path).write_text(serialize_blocks("handles", 1, sections))


def read_handle_file(path):
    version, sections = parse_blocks(Path(path).read_text(), "handles")
    if version != 1:
        raise FormatError(f"unsupported handles version {version}")
    doc = HandleDocument()
    raw_handles = {}
    for name, kv in sections:
        if name == "subdomain":
            _check_keys(name, kv, ("id", "priority", "polygon", "mean_color"),
                        ("id", "polygon", "mean_color"))
            poly = _floats(kv["polygon"]).reshape(-1, 2)
            entry = SubdomainEntry(
                boundary=SubdomainBoundary(kv["id"], poly),
                priority=float(kv.get("priority", 0.0)),
                mean_color=_floats(kv["mean_color"], 3),
            )
            doc.subdomains.append(entry)
            raw_handles[kv["id"]] = []
        elif name == "handle":
            _check_keys(name, kv, ("owner", "p0", "p1", "w_d", "w_c"),
                        ("owner", "p0", "p1", "w_d", "w_c"))
            owner = kv["owner"]
            if owner not in raw_handles:
                raise FormatError(f"handle owner {owner!r} has no [subdomain] entry")
            raw_handles[owner].append((_floats(kv["p0"], 2), _floats(kv["p1"], 2),
                                       _floats(kv["w_d"], 3), _floats(kv["w_c"], 3)))
        else:
            raise FormatError(f"unknown section [{name}] in handles file")
    for dom, rows in raw_handles.items():
        if rows:
            p0, p1, w_d, w_c = (np.array([r[i] for r in rows]) for i in range(4))
            doc.handle_sets[dom] = HandleSet(dom, p0, p1, w_d, w_c)
        else:
            doc.handle_sets[dom] = HandleSet.empty(dom)
    return doc


def document_from_state(state, scene):
    """HandleDocument snapshot of an optimization state."""
    doc = HandleDocument()
    for sub in scene.subdomains:
        dom = sub.boundary.id
        doc.subdomains.append(SubdomainEntry(
            boundary=sub.boundary,
            priority=sub.priority,
            mean_color=state.systems[dom].mean_color.copy(),
        ))
        doc.handle_sets[dom] = state.handles[dom].copy()
    return doc


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------

_SHADING_KEYS = {
    "constant": ("albedo",),
    "linear": ("base", "grad_x", "grad_y"),
    "blob": ("base", "amp", "center", "radius"),
    "raster": ("path",),
    "softshadow": ("albedo",),
    "dc": ("handles", "dc_eps"),
}


def read_scene_file(path):
    path = Path(path)
    version, sections = parse_blocks(path.read_text(), "scene")
    if version != 1:
        raise FormatError(f"unsupported scene version {version}")
    subdomains = []
    light = None
    blockers = []
    for name, kv in sections:
        if name == "subdomain":
            base_keys = ("id", "priority", "polygon", "shading", "noise_sigma")
            kind = kv.get("shading")
            if kind not in _SHADING_KEYS:
                raise FormatError(f"unknown shading {kind!r}")
            _check_keys(name, kv, base_keys + _SHADING_KEYS[kind],
                        ("id", "polygon", "shading"))
            params = {"noise_sigma": float(kv.get("noise_sigma", 0.0))}
            if kind in ("constant", "softshadow"):
                params["albedo"] = _floats(kv["albedo"], 3)
            elif kind == "linear":
                params["base"] = _floats(kv["base"], 3)
                params["grad_x"] = _floats(kv["grad_x"], 3)
                params["grad_y"] = _floats(kv["grad_y"], 3)
            elif kind == "blob":
                params["base"] = _floats(kv["base"], 3)
                params["amp"] = _floats(kv["amp"], 3)
                params["center"] = _floats(kv["center"], 2)
                params["radius"] = float(kv["radius"])
            elif kind == "raster":
                from .images import load_linear_image
                params["path"] = kv["path"]
                params["image"] = load_linear_image(path.parent / kv["path"])
            elif kind == "dc":
                params["handles_path"] = kv["handles"]
                params["doc"] = read_handle_file(path.parent / kv["handles"])
                params["dc_eps"] = float(kv.get("dc_eps", 1e-2))
            subdomains.append(SceneSubdomain(
                boundary=SubdomainBoundary(kv["id"], _floats(kv["polygon"]).reshape(-1, 2)),
                priority=float(kv.get("priority", 0.0)),
                shading=Shading(kind, params),
            ))
        elif name == "light":
            _check_keys(name, kv, ("center", "radius"), ("center", "radius"))
            light = {"center": _floats(kv["center"], 2), "radius": float(kv["radius"])}
        elif name == "blocker":
            _check_keys(name, kv, ("p0", "p1"), ("p0", "p1"))
            blockers.append((_floats(kv["p0"], 2), _floats(kv["p1"], 2)))
        else:
            raise FormatError(f"unknown section [{name}] in scene file")
    return SceneSpec(subdomains, light=light, blockers=blockers)


def write_scene_file(scene, path):
    sections = []
    for sub in scene.subdomains:
        kv = {
            "id": sub.boundary.id,
            "priority": repr(float(sub.priority)),
            "polygon": _fmt(sub.boundary.vertices),
            "shading": sub.shading.kind,
        }
        p = sub.shading.params
        if sub.shading.kind in ("constant", "softshadow"):
            kv["albedo"] = _fmt(p["albedo"])
        elif sub.shading.kind == "linear":
            kv["base"] = _fmt(p["base"])
            kv["grad_x"] = _fmt(p["grad_x"])
            kv["grad_y"] = _fmt(p["grad_y"])
        elif sub.shading.kind == "blob":
            kv["base"] = _fmt(p["base"])
            kv["amp"] = _fmt(p["amp"])
            kv["center"] = _fmt(p["center"])
            kv["radius"] = repr(float(p["radius"]))
        elif sub.shading.kind == "raster":
            kv["path"] = p["path"]
        elif sub.shading.kind == "dc":
            kv["handles"] = p["handles_path"]
            kv["dc_eps"] = repr(float(p.get("dc_eps", 1e-2)))
        if p.get("noise_sigma", 0.0):
            kv["noise_sigma"] = repr(float(p["noise_sigma"]))
        sections.append(("subdomain", kv))
    if scene.light is not None:
        sections.append(("light", {"center": _fmt(scene.light["center"]),
                                   "radius": repr(float(scene.light["radius"]))}))
    for a, b in scene.blockers:
        sections.append(("blocker", {"p0": _fmt(a), "p1": _fmt(b)}))
    Path(path).write_text(serialize_blocks("scene", 1, sections))


# ---------------------------------------------------------------------------
# run config files
# ---------------------------------------------------------------------------

def read_config_file(path):
    """Key-value overrides from a [fit] section, as a plain dict of strings."""
    version, sections = parse_blocks(Path(path).read_text(), "config")
    if version != 1:
        raise FormatError(f"unsupported config version {version}")
    out = {}
    for name, kv in sections:
        if name != "fit":
            raise FormatError(f"unknown section [{name}] in config file")
        out.update(kv)
    return out
