"""Scenario configuration: JSON schema, parsing, bundled scenarios.

A scenario bundles the moving domain, the initial mass, the solver
discretization and the Monte Carlo parameters.  Parsing is strict (unknown
keys or out-of-range values raise PreconditionError) and serialization is
canonical, so configurations round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import PreconditionError
from .montecarlo import McConfig
from .volterra import SolverConfig, SourceSpec

__all__ = ["Scenario", "load_scenario", "bundled_scenario_names"]

FORMAT_VERSION = "1"

_BOUNDARY_KEYS = {
    "circle": ("radius",),
    "ellipse": ("a", "b"),
    "smooth_star": ("radius", "eps", "k"),
    "flat_capsule": ("half_length", "height", "arc_radius", "blend", "concentration"),
}


def _require(mapping, keys, where):
    unknown = set(mapping) - set(keys) - {"kind"}
    if unknown:
        raise PreconditionError(f"unknown keys {sorted(unknown)} in {where}")


def _boundary_from_dict(d) -> geo.ReferenceBoundary:
    kind = d.get("kind")
    if kind not in _BOUNDARY_KEYS:
        raise PreconditionError(f"unknown boundary kind {kind!r}")
    _require(d, _BOUNDARY_KEYS[kind], "domain.boundary")
    if kind == "circle":
        return geo.circle(d["radius"])
    if kind == "ellipse":
        return geo.ellipse(d["a"], d["b"])
    if kind == "smooth_star":
        return geo.smooth_star(d["radius"], d["eps"], d["k"])
    return geo.flat_capsule(
        half_length=d.get("half_length", 10.0),
        height=d.get("height", 10.0),
        arc_radius=d.get("arc_radius"),
        blend=d.get("blend", float(np.pi / 8.0)),
        concentration=d.get("concentration", 0.9),
    )


def _boundary_to_dict(b: geo.ReferenceBoundary) -> dict:
    if b.kind == "circle":
        return {"kind": "circle", "radius": b.params[0]}
    if b.kind == "ellipse":
        return {"kind": "ellipse", "a": b.params[0], "b": b.params[1]}
    if b.kind == "smooth_star":
        return {"kind": "smooth_star", "radius": b.params[0], "eps": b.params[1],
                "k": b.params[2]}
    return {"kind": "flat_capsule", "half_length": b.params[0], "height": b.params[1],
            "arc_radius": b.params[2], "blend": b.params[3],
            "concentration": b.params[4]}


def _velocity_from_dict(d) -> geo.VelocityField:
    kind = d.get("kind")
    if kind == "zero":
        _require(d, (), "velocity")
        return geo.zero_field()
    if kind == "translation":
        _require(d, ("c",), "velocity")
        return geo.translation_field(d["c"])
    if kind == "rotation":
        _require(d, ("omega", "center"), "velocity")
        return geo.rotation_field(d["omega"], d.get("center", (0.0, 0.0)))
    if kind == "scaling":
        _require(d, ("alpha_coeffs", "center"), "velocity")
        return geo.scaling_field(d["alpha_coeffs"], d.get("center", (0.0, 0.0)))
    if kind == "composite":
        _require(d, ("parts",), "velocity")
        return geo.composite_field(*[_velocity_from_dict(p) for p in d["parts"]])
    raise PreconditionError(f"unknown velocity kind {kind!r}")


def _velocity_to_dict(v: geo.VelocityField) -> dict:
    if v.kind == "zero":
        return {"kind": "zero"}
    if v.kind == "translation":
        return {"kind": "translation", "c": list(v.translation)}
    if v.kind == "rotation":
        return {"kind": "rotation", "omega": v.omega, "center": list(v.center)}
    if v.kind == "scaling":
        return {"kind": "scaling", "alpha_coeffs": list(v.alpha_coeffs),
                "center": list(v.center)}
    return {"kind": "composite", "parts": [_velocity_to_dict(p) for p in v.parts]}


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario: domain + source + solver + Monte Carlo parameters."""

    name: str
    domain: geo.MovingDomain
    source: SourceSpec
    solver: SolverConfig
    mc: McConfig
    picard_seed: str = "march"
    flow_step: float = 1e-3

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            version = d.get("format_version", FORMAT_VERSION)
            if version != FORMAT_VERSION:
                raise PreconditionError(f"unsupported format_version {version!r}")
            _require(d, ("name", "format_version", "domain", "source", "solver", "mc"),
                     "scenario")
            dd = d["domain"]
            _require(dd, ("boundary", "marker", "velocity", "horizon", "flow_step"),
                     "domain")
            flow_step = float(dd.get("flow_step", 1e-3))
            domain = geo.MovingDomain(
                boundary=_boundary_from_dict(dd["boundary"]),
                marker=tuple(float(c) for c in dd["marker"]),
                flow=geo.FlowMap(_velocity_from_dict(dd["velocity"]), step_dt=flow_step),
                horizon=float(dd["horizon"]),
            )
            sd = d["source"]
            _require(sd, ("kind", "center", "radius"), "source")
            if sd["kind"] == "point":
                source = SourceSpec.point(sd["center"])
            elif sd["kind"] == "bump":
                source = SourceSpec(kind="bump",
                                    center=tuple(float(c) for c in sd["center"]),
                                    radius=float(sd["radius"]))
            else:
                raise PreconditionError(f"unknown source kind {sd.get('kind')!r}")
            sv = d["solver"]
            _require(sv, ("dt", "nodes", "gamma", "picard_tol", "picard_max_iters",
                          "window", "mode", "time_rule", "picard_seed"), "solver")
            solver = SolverConfig(
                dt=float(sv["dt"]), nodes=int(sv["nodes"]),
                gamma=float(sv.get("gamma", 0.49)),
                picard_tol=float(sv.get("picard_tol", 1e-10)),
                picard_max_iters=int(sv.get("picard_max_iters", 200)),
                window=None if sv.get("window") is None else float(sv["window"]),
                mode=sv.get("mode", "march"),
                time_rule=sv.get("time_rule", "rectangle"),
            )
            solver.steps(domain.horizon)  # dt must divide the horizon
            md = d["mc"]
            _require(md, ("paths", "step", "seed", "horizon", "bridge_correction",
                          "block_size"), "mc")
            mc = McConfig(
                paths=int(md["paths"]), step=float(md["step"]), seed=int(md["seed"]),
                horizon=float(md.get("horizon", domain.horizon)),
                bridge_correction=bool(md.get("bridge_correction", True)),
                block_size=int(md.get("block_size", 32768)),
            )
            source.validate_inside(domain)
            return cls(name=str(d["name"]), domain=domain, source=source,
                       solver=solver, mc=mc,
                       picard_seed=sv.get("picard_seed", "march"),
                       flow_step=flow_step)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, PreconditionError):
                raise
            raise PreconditionError(f"malformed scenario: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "format_version": FORMAT_VERSION,
            "domain": {
                "boundary": _boundary_to_dict(self.domain.boundary),
                "marker": list(self.domain.marker),
                "velocity": _velocity_to_dict(self.domain.flow.velocity),
                "horizon": self.domain.horizon,
                "flow_step": self.flow_step,
            },
            "source": {"kind": self.source.kind, "center": list(self.source.center),
                       "radius": self.source.radius},
            "solver": {
                "dt": self.solver.dt, "nodes": self.solver.nodes,
                "gamma": self.solver.gamma, "picard_tol": self.solver.picard_tol,
                "picard_max_iters": self.solver.picard_max_iters,
                "window": self.solver.window, "mode": self.solver.mode,
                "time_rule": self.solver.time_rule, "picard_seed": self.picard_seed,
            },
            "mc": {
                "paths": self.mc.paths, "step": self.mc.step, "seed": self.mc.seed,
                "horizon": self.mc.horizon,
                "bridge_correction": self.mc.bridge_correction,
                "block_size": self.mc.block_size,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def with_seed(self, seed: int) -> "Scenario":
        d = self.to_dict()
        d["mc"]["seed"] = int(seed)
        return Scenario.from_dict(d)


def bundled_scenario_names() -> list[str]:
    base = resources.files("fptdensity").joinpath("scenarios")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        text = p.read_text(encoding="utf-8")
    else:
        ref = resources.files("fptdensity").joinpath(f"scenarios/{name_or_path}.json")
        if not ref.is_file():
            raise PreconditionError(
                f"scenario {name_or_path!r} is neither a file nor one of "
                f"{bundled_scenario_names()}")
        text = ref.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PreconditionError(f"invalid scenario JSON: {exc}") from exc
    return Scenario.from_dict(data)
