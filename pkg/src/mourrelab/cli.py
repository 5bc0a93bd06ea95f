"""Command-line experiment runner.

Each recipe takes a resolved config tree, computes its cases on a small
worker pool and hands every artifact to a single collector, which writes
files, hashes them and emits ``manifest.json``.  ``mourrelab replay`` re-runs
a manifest and compares hashes.
"""
from __future__ import annotations

import copy
import csv
import difflib
import hashlib
import inspect
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np
import yaml

from . import __version__
from .commutator import (c11_double_difference, first_commutator_AN, growth_verdict,
                         ia_translation_commutator, iterated, lr_scan, nakamura_component,
                         second_commutator_AN, witness_sequence)
from .conjugate import (assemble_A, field_from_config, flow, generic_commutator,
                        multiplier_commutator, nakamura)
from .lap import mu_sweep
from .lattice import (Diagonal, Hamiltonian, form_norm, inner_window_basis, laplacian, make_grid,
                      translation, window_function)
from .mourre import mourre_constant, nakamura_window, window_inf
from .potentials import FAMILIES, potential_from_config, realize
from .records import SATISFIED, VIOLATED, format_number
from .scattering import box_time, reverse_trace, wave_operator_trace, wave_packet

OUT_DIR_ENV = "MOURRELAB_OUT_DIR"
DEFAULT_OUT_DIR = "mourrelab-runs"
GROWTH = "growth"
BOUNDED = "bounded"
COMPACT_DEFECT = "compact-defect"

# keys whose values are free-form parameter trees, checked against the
# family or field signature instead of the defaults
FREE_FORM = {"potential", "S", "expect"}


class ConfigError(click.UsageError):
    pass


# ----------------------------------------------------------------------------
# Serialization


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def table_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buf.getvalue()


class Collector:
    """Serializes all output writing and keeps the content hashes."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        if name in self.files:
            raise RuntimeError(f"artifact {name!r} written twice")
        self.files[name] = text

    def flush(self) -> list[dict]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        listing = []
        for name in sorted(self.files):
            data = self.files[name].encode("utf-8")
            (self.out_dir / name).write_bytes(data)
            listing.append({"file": name, "sha256": hashlib.sha256(data).hexdigest()})
        return listing


def pool_map(fn: Callable, items: list, workers: int) -> list:
    """Ordered map over sweep cases; results come back in input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ----------------------------------------------------------------------------
# Config plumbing


def _geom(lo: float, hi: float, count: int) -> list[float]:
    return [float(x) for x in np.geomspace(lo, hi, count)]


def _grid(cfg: dict):
    g = cfg["grid"]
    return make_grid(dim=g["dim"], n=g["n"], half_width=g["half_width"])


def _field(cfg: dict):
    u = cfg["u"]
    if isinstance(u, dict):
        params = {k: v for k, v in u.items() if k != "kind"}
        return field_from_config(u["kind"], **params)
    if u in ("nakamura", "sin"):
        return nakamura(cfg.get("a", 1.0))
    return field_from_config(u)


def _spec(tree: dict | None):
    if tree is None:
        return None
    params = {k: v for k, v in tree.items() if k not in ("family", "band")}
    if tree.get("family") in ("zero", "none"):
        return None
    return potential_from_config(tree["family"], **params)


def _potential_values(tree: dict | None, grid):
    spec = _spec(tree)
    if spec is None:
        return None
    return realize(spec, grid, band=tree.get("band")).values


def _check_family_params(path: str, tree):
    if tree is None:
        return
    if not isinstance(tree, dict) or "family" not in tree:
        raise ConfigError(f"{path} must be a mapping with a 'family' key")
    family = tree["family"]
    if family in ("zero", "none"):
        return
    if family not in FAMILIES:
        raise ConfigError(f"unknown potential family {family!r} at {path}"
                          + _suggest(family, list(FAMILIES)))
    allowed = set(inspect.signature(FAMILIES[family]).parameters) | {"family", "band"}
    for key in tree:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key} for family {family!r}"
                              + _suggest(key, sorted(allowed)))


def _suggest(word: str, choices) -> str:
    close = difflib.get_close_matches(str(word), [str(c) for c in choices], n=3, cutoff=0.5)
    return f"; did you mean {', '.join(repr(c) for c in close)}?" if close else ""


def merge(defaults: dict, override: dict, path: str = "") -> dict:
    """Deep-merge ``override`` into ``defaults``, rejecting unknown keys."""
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}" + _suggest(key, list(defaults)))
        if key in FREE_FORM:
            # parameters without a new family refine the current one
            keep = (isinstance(value, dict) and isinstance(out[key], dict)
                    and value.get("family", out[key].get("family")) == out[key].get("family"))
            out[key] = {**out[key], **copy.deepcopy(value)} if keep else copy.deepcopy(value)
        elif isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = merge(defaults[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_path(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {k!r} is not a mapping")
    node[keys[-1]] = value


# ----------------------------------------------------------------------------
# Recipes


@dataclass
class Outcome:
    verdicts: list[str]
    results: dict
    artifacts: dict[str, str] = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Recipe:
    name: str
    exercises: str
    defaults: dict
    run: Callable[[dict, int], Outcome]


COMMON = {"grid": {"n": 256, "half_width": 40.0, "dim": 1}, "seed": 0, "expect": None}


def _defaults(grid: dict | None = None, **extra) -> dict:
    out = copy.deepcopy(COMMON)
    if grid:
        out["grid"].update(grid)
    out.update(extra)
    return out


def run_window(cfg: dict, workers: int) -> Outcome:
    if cfg["u"] not in ("nakamura", "sin"):
        raise ValueError("the window recipe needs u = nakamura (the only field with a closed-form window)")
    grid = _grid(cfg)
    u = nakamura(cfg["a"])
    lo, top = nakamura_window(cfg["a"])
    left = cfg["left"] * top
    rows = [(left, f * top) for f in cfg["fractions"]]
    infs = pool_map(lambda iv: window_inf(u, iv, grid), rows, workers)
    interior = [v for (_, hi), v in zip(rows, infs) if hi < top]
    edge = [v for (_, hi), v in zip(rows, infs) if hi >= top]
    ok = all(v > 0 for v in interior) and all(v <= cfg["edge_tol"] for v in edge)
    text = table_csv(["left", "right", "window_inf"], [(a, b, v) for (a, b), v in zip(rows, infs)])
    lines = [f"window: ({lo:g}, {top:.5g})"] + [f"  [{a:.5g}, {b:.5g}]  inf = {v:.6g}"
                                               for (a, b), v in zip(rows, infs)]
    return Outcome([SATISFIED if ok else VIOLATED],
                   {"window": [lo, top], "rows": [{"interval": list(r), "window_inf": v}
                                                  for r, v in zip(rows, infs)]},
                   {"window.csv": text}, lines)


def run_flow_check(cfg: dict, workers: int) -> Outcome:
    if cfg["u"] not in ("nakamura", "sin"):
        raise ValueError("flow-check compares against the closed form of u = sin(a k)")
    a = float(cfg["a"])
    u = nakamura(a)
    taus = cfg["tau"] if isinstance(cfg["tau"], list) else [cfg["tau"]]
    m = cfg["margin"]
    xs = np.linspace(m, math.pi - m, cfg["points"]) / a

    def one(tau):
        tau = float(tau)
        # the fixed points 0 and pi/a ride along in the same integration
        both = flow(u, np.concatenate([xs, [0.0, math.pi / a]]), tau)
        phi, det = both.point[:-2], both.jacobian_det[:-2]
        t = np.tan(a * xs / 2.0)
        e = math.exp(a * tau)
        closed = 2.0 / a * np.arctan(e * t)
        jac = e / np.cos(a * xs / 2.0) ** 2 / (1.0 + (e * t) ** 2)
        half = flow(u, flow(u, xs, tau / 2.0).point, tau / 2.0).point
        fixed = both.point[-2:] - np.array([0.0, math.pi / a])
        return {"tau": tau, "phi": phi, "closed": closed, "jac": det,
                "jac_closed": jac, "deviation": float(np.max(np.abs(phi - closed))),
                "jacobian_deviation": float(np.max(np.abs(det - jac) / jac)),
                "group_defect": float(np.max(np.abs(half - phi))),
                "fixed_point_drift": float(np.max(np.abs(fixed)))}

    out = pool_map(one, taus, workers)
    rows = [(o["tau"], x, p, c, j, abs(p - c)) for o in out
            for x, p, c, j in zip(xs, o["phi"], o["closed"], o["jac"])]
    dev = max(o["deviation"] for o in out)
    grp = max(o["group_defect"] for o in out)
    fix = max(o["fixed_point_drift"] for o in out)
    ok = dev <= cfg["tol"] and grp <= cfg["group_tol"] and fix <= cfg["tol"]
    summary = [{k: o[k] for k in ("tau", "deviation", "jacobian_deviation", "group_defect",
                                  "fixed_point_drift")} for o in out]
    lines = [f"max closed-form deviation {dev:.3e}, group-law defect {grp:.3e}, "
             f"fixed-point drift {fix:.3e}"]
    return Outcome([SATISFIED if ok else VIOLATED],
                   {"per_tau": summary, "max_deviation": dev, "max_group_defect": grp,
                    "max_fixed_point_drift": fix},
                   {"flow.csv": table_csv(["tau", "x", "phi", "closed", "jacobian", "deviation"], rows)},
                   lines)


def run_commutator_check(cfg: dict, workers: int) -> Outcome:
    a = float(cfg["a"])
    grid = _grid(cfg)
    u = nakamura(a)
    basis = inner_window_basis(grid, band=cfg["band"])
    defect = generic_commutator(laplacian(grid), 1j * assemble_A(grid, u)) - multiplier_commutator(grid, u)
    ident = form_norm(defect, basis)

    ocfg = cfg["oracle"]
    og = make_grid(dim=1, n=ocfg["n"], half_width=ocfg["half_width"])
    obasis = inner_window_basis(og, radius=og.half_width / 2.0, sharp=True)
    A = nakamura_component(og, a)
    rng = np.random.default_rng(cfg["seed"])
    samples = [rng.standard_normal(og.shape) for _ in range(ocfg["count"])]

    def one(values):
        V = Diagonal(og, values)
        first = form_norm(generic_commutator(2j * A, V) - first_commutator_AN(V, a), obasis)
        second = form_norm(iterated(V, A, 2) - second_commutator_AN(V, a), obasis)
        return {"first": first, "second": second}

    per = pool_map(one, samples, workers)
    T = translation(og, a)
    trans = form_norm(generic_commutator(1j * A, T) - ia_translation_commutator(og, a, 0, 0), obasis)
    worst = max([ident, trans] + [max(p.values()) for p in per])
    ok = worst <= cfg["tol"]
    rows = [(i, p["first"], p["second"]) for i, p in enumerate(per)]
    lines = [f"multiplier identity defect {ident:.3e}",
             f"expansion oracle worst defect {max([trans] + [max(p.values()) for p in per]):.3e}"]
    return Outcome([SATISFIED if ok else VIOLATED],
                   {"multiplier_identity_defect": ident, "translation_identity_defect": trans,
                    "oracle": per, "basis_size": basis.shape[1]},
                   {"oracle.csv": table_csv(["sample", "first_defect", "second_defect"], rows)},
                   lines)


def _scan_window(cfg: dict, grid):
    w = cfg["window"]
    return window_function(grid, radius=w["radius_fraction"] * grid.half_width,
                           width=w["width_fraction"] * grid.half_width)


def run_regularity_scan(cfg: dict, workers: int) -> Outcome:
    grid = _grid(cfg)
    values = _potential_values(cfg["potential"], grid)
    if values is None:
        raise ValueError("regularity-scan needs a potential")
    V = Diagonal(grid, values)
    u = _field(cfg)
    window = _scan_window(cfg, grid)
    L = grid.half_width
    modes = ["lr", "c11"] if cfg["mode"] == "both" else [cfg["mode"]]
    for m in modes:
        if m not in ("lr", "c11"):
            raise ValueError(f"unknown mode {m!r}; use lr, c11 or both")
    rs = cfg["r_schedule"] or _geom(L / 40.0, L / 4.0, 10)
    taus = cfg["tau_schedule"] or _geom(0.01, 0.5, 8)

    def one(m):
        if m == "lr":
            return lr_scan(V, rs, "generic", u=u, norm_space=cfg["norm_space"], window=window)
        return c11_double_difference(V, u, taus, norm_space=cfg["norm_space"], pad=cfg["pad"],
                                     window=window)

    reports = pool_map(one, modes, workers)
    artifacts = {f"{m}.csv": r.profile.to_csv() for m, r in zip(modes, reports)}
    lines = [f"{m}: {r.verdict}" + (f" (slope {r.fit.slope:.3f})" if r.fit else "")
             for m, r in zip(modes, reports)]
    return Outcome([r.verdict for r in reports], {m: r.to_dict() for m, r in zip(modes, reports)},
                   artifacts, lines)


def run_lap_sweep(cfg: dict, workers: int) -> Outcome:
    grid = _grid(cfg)
    H = Hamiltonian(grid, _potential_values(cfg["potential"], grid))
    lams = cfg["lam"] if isinstance(cfg["lam"], list) else [cfg["lam"]]
    if H.potential is not None:
        H.eigensystem()  # fill the cache before the pool starts
    results = pool_map(lambda lam: mu_sweep(H, float(lam), s=cfg["s"], mu0=cfg["mu0"]), lams, workers)
    artifacts, lines = {}, []
    for i, (lam, r) in enumerate(zip(lams, results)):
        artifacts[f"sweep_{i}.csv"] = r.record.to_csv()
        lines.append(f"lambda = {lam}: {r.verdict} (floor {r.floor:.3g}, last value {r.record.values[-1]:.4g})")
    return Outcome([r.verdict for r in results],
                   {"sweeps": [{"lambda": lam, **r.to_dict()} for lam, r in zip(lams, results)]},
                   artifacts, lines)


def run_mourre_certificate(cfg: dict, workers: int) -> Outcome:
    grid = _grid(cfg)
    H = Hamiltonian(grid, _potential_values(cfg["potential"], grid))
    u = _field(cfg)
    cert = mourre_constant(H, u, cfg["interval"], tol=cfg["tol"])
    inf = window_inf(u, cfg["interval"], grid)
    gap = (cert.bottom - inf) / inf if inf else math.nan
    verdict = SATISFIED if cert.defect_count == 0 else COMPACT_DEFECT
    rows = [(i, v) for i, v in enumerate(cert.compression_spectrum)]
    lines = [f"window_inf {inf:.6g}, node infimum {cert.c0_multiplier:.6g}, bottom {cert.bottom:.6g}",
             f"defect_count {cert.defect_count}, eigenvalues in I: {len(cert.eigenvalues_of_H_in_I)}"]
    return Outcome([verdict], {"certificate": cert.to_dict(), "window_inf": inf,
                               "bottom": cert.bottom, "relative_gap": gap},
                   {"compression.csv": table_csv(["index", "eigenvalue"], rows)}, lines)


def _default_schedule(family: str, kind: str) -> list[float]:
    if family == "fourier_comb":
        return [2.0**p + (1 if kind == "delta" else 0) for p in range(1, 13)]
    if family == "exponential":
        return [10.0**p for p in (range(1, 10) if kind == "delta" else range(0, 6))]
    if family == "bump_sum":
        return [float(n) for n in range(2, 39, 4)]
    if family == "oscillating":
        return _geom(2.0, 21.0, 8)
    raise ValueError(f"no default witness schedule for {family!r}; set 'schedule'")


def run_witness(cfg: dict, workers: int) -> Outcome:
    spec = _spec(cfg["potential"])
    if spec is None:
        raise ValueError("witness needs a potential")
    schedule = cfg["schedule"] or _default_schedule(spec.family, cfg["kind"])
    grid = _grid(cfg) if spec.family not in ("fourier_comb", "exponential", "bump_sum") else None
    rec = witness_sequence(spec, cfg["kind"], schedule, grid=grid)
    mono, big, ratio = growth_verdict(rec, cfg["factor"])
    verdict = GROWTH if mono and big else BOUNDED
    lines = [f"{rec.axis_name} = {format_number(n)}: pairing {format_number(v)}"
             for n, v in zip(rec.axis_values, rec.values)]
    lines.append(f"growth x{ratio:.3g}, monotone {mono}")
    return Outcome([verdict], {"monotone": mono, "ratio": ratio, "record": rec.to_dict()},
                   {"witness.csv": rec.to_csv()}, lines)


def run_wave_op(cfg: dict, workers: int) -> Outcome:
    grid = _grid(cfg)
    S = _potential_values(cfg["S"], grid)
    if S is None:
        raise ValueError("wave-op needs a perturbation S")
    L = grid.half_width
    S = S * window_function(grid, radius=L, width=cfg["edge_width_fraction"] * L)
    H, K = Hamiltonian(grid), Hamiltonian(grid, S)
    pk = cfg["packet"]
    psi = wave_packet(grid, pk["centre"], pk["momentum"], pk["width"])
    horizon, info = box_time(grid, psi, pk["centre"])
    times = list(np.linspace(0.0, horizon, cfg["times"]))
    trace = wave_operator_trace(K, H, psi, times, horizon=horizon)
    back = reverse_trace(K, H, psi, times, horizon=horizon)
    drift = max(trace.norm_drift + back.norm_drift)
    lines = [f"horizon {horizon:.4g}, norm drift {drift:.2e}"]
    for name, tr in (("forward", trace), ("reverse", back)):
        line = f"{name}: {tr.verdict}"
        if tr.cook_fit:
            line += f" (Cook slope {tr.cook_fit.slope:.3f}, Cauchy slope {tr.cauchy_fit.slope:.3f})"
        lines.append(line)
    return Outcome([trace.verdict, back.verdict],
                   {"trace": trace.to_dict(), "reverse": back.to_dict(), "box": info,
                    "horizon": horizon, "max_norm_drift": drift},
                   {"trace.csv": trace.record().to_csv(), "reverse.csv": back.record().to_csv()}, lines)


RECIPES: dict[str, Recipe] = {r.name: r for r in [
    Recipe("window", "energy window on which 2k sin(ak) stays positive, and its infimum on subintervals",
           _defaults(u="nakamura", a=1.0, left=0.05, fractions=[0.25, 0.5, 0.75, 0.9, 0.99, 1.0],
                     edge_tol=1e-3, expect=SATISFIED), run_window),
    Recipe("flow-check", "RK4 flow of du/dtau = sin(a u) against 2/a arctan(e^(a tau) tan(a x/2))",
           _defaults(u="sin", a=1.0, tau=1.0, points=64, margin=0.05, tol=1e-8, group_tol=1e-7,
                     expect=SATISFIED), run_flow_check),
    Recipe("commutator-check", "[p^2, iA] = 2p sin(ap) and the finite-difference commutator expansions",
           _defaults(a=1.0, band=0.5, tol=1e-8, oracle={"n": 32, "half_width": 8.0, "count": 10},
                     expect=SATISFIED), run_commutator_check),
    Recipe("regularity-scan", "decay of the far-region commutator and the double-difference integrand",
           _defaults({"n": 2048, "half_width": 24.0},
                     potential={"family": "oscillating", "alpha": 2.0, "beta": 1.0}, u="arctan",
                     mode="both", norm_space="B1", r_schedule=None, tau_schedule=None, pad=2,
                     window={"radius_fraction": 0.75, "width_fraction": 0.025}), run_regularity_scan),
    Recipe("lap-sweep", "boundedness of the weighted resolvent as the imaginary shift goes to 0",
           _defaults({"n": 1024, "half_width": 160.0}, potential=None, lam=[1.0, 0.0], s=1.0, mu0=1.0),
           run_lap_sweep),
    Recipe("mourre-certificate", "positivity of the commutator compressed to a spectral window",
           _defaults({"n": 256, "half_width": 256.0}, potential=None, u="nakamura", a=1.0,
                     interval=[0.25, 0.64], tol=1e-8), run_mourre_certificate),
    Recipe("witness", "growth of pairings that rule out commutator bounds",
           _defaults(potential={"family": "fourier_comb"}, kind="dilation", schedule=None, factor=10.0,
                     expect=GROWTH), run_witness),
    Recipe("wave-op", "Cook and Cauchy traces of exp(itK) exp(-itH) and of the swapped pair on a box",
           _defaults({"n": 2048, "half_width": 200.0}, S={"family": "bracket", "power": 2.5},
                     packet={"centre": 0.0, "momentum": 1.5, "width": 0.15}, times=201,
                     edge_width_fraction=1.0 / 48.0), run_wave_op),
]}


def resolve(recipe: str, file_config: dict | None = None, overrides: dict | None = None) -> dict:
    if recipe not in RECIPES:
        raise ConfigError(f"unknown recipe {recipe!r}" + _suggest(recipe, list(RECIPES)))
    file_config = dict(file_config or {})
    named = file_config.pop("recipe", recipe)
    if named != recipe:
        raise ConfigError(f"config file is for recipe {named!r}, not {recipe!r}")
    cfg = merge(RECIPES[recipe].defaults, file_config)
    cfg = merge(cfg, overrides or {})
    for key in ("potential", "S"):
        if key in cfg:
            _check_family_params(key, cfg[key])
    return cfg


def _expectation_met(expect, verdicts: list[str]) -> bool:
    if isinstance(expect, list):
        if len(expect) != len(verdicts):
            raise ValueError(f"expect lists {len(expect)} verdicts for {len(verdicts)} cases")
        return all(e == v for e, v in zip(expect, verdicts))
    return all(v == expect for v in verdicts)


def execute(recipe: str, cfg: dict, out_dir: Path, workers: int = 1,
            echo: Callable[[str], None] = print) -> tuple[int, dict]:
    """Run a resolved config; returns (exit status, manifest)."""
    r = RECIPES[recipe]
    outcome = r.run(cfg, max(1, int(workers)))
    expect = cfg.get("expect")
    met = None if expect is None else _expectation_met(expect, outcome.verdicts)
    collector = Collector(out_dir)
    for name, text in outcome.artifacts.items():
        collector.add(name, text)
    collector.add("result.json", dump_json({
        "recipe": recipe, "exercises": r.exercises, "tool_version": __version__,
        "verdicts": outcome.verdicts, "expect": expect,
        "expectation": "none" if met is None else ("met" if met else "violated"),
        "results": outcome.results}))
    outputs = collector.flush()
    grid = _grid(cfg)
    manifest = {"recipe": recipe, "config": cfg, "tool_version": __version__,
                "grid": grid.signature(), "seed": cfg["seed"], "outputs": outputs,
                "environment": {"numpy": np.__version__, "scipy": _scipy_version(),
                                "python": sys.version.split()[0]},
                "replay": f"mourrelab replay {out_dir / 'manifest.json'}"}
    (out_dir / "manifest.json").write_bytes(dump_json(manifest).encode("utf-8"))
    for line in outcome.lines:
        echo(line)
    echo(f"verdict: {', '.join(outcome.verdicts)}"
         + ("" if met is None else f" (expected {expect}: {'met' if met else 'violated'})"))
    return (2 if met is False else 0), manifest


def _scipy_version() -> str:
    import scipy

    return scipy.__version__


# ----------------------------------------------------------------------------
# Click front end


def _default_out() -> str:
    return os.environ.get(OUT_DIR_ENV, DEFAULT_OUT_DIR)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


@click.group()
@click.version_option(__version__, prog_name="mourrelab")
def main():
    """Numerical checks of commutator methods for Schrödinger operators."""


@main.command("recipes")
def list_recipes():
    """List recipes and what each one checks."""
    for name, r in RECIPES.items():
        click.echo(f"{name:20s} {r.exercises}")


@main.command("show")
@click.argument("recipe")
def show(recipe):
    """Print the default config of RECIPE as YAML."""
    click.echo(yaml.safe_dump(resolve(recipe), sort_keys=True), nl=False)


@main.command("run")
@click.argument("recipe")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML config file.")
@click.option("--grid-n", type=int, help="Points per axis.")
@click.option("--grid-l", type=float, help="Box half-width L.")
@click.option("--dim", type=int, help="Spatial dimension.")
@click.option("--seed", type=int, help="Seed for random test states.")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker pool size.")
@click.option("--out-dir", type=click.Path(file_okay=False),
              help=f"Output directory (default ${OUT_DIR_ENV} or {DEFAULT_OUT_DIR}).")
@click.option("--expect", help="Expected verdict for every case.")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="Override a config entry, dotted keys allowed; VALUE is parsed as YAML.")
def run(recipe, config_path, grid_n, grid_l, dim, seed, workers, out_dir, expect, sets):
    """Run RECIPE and write CSV/JSON artifacts plus a manifest.

    Exit status is 0 when verdicts match the declared expectation, 2 when
    they do not and 1 on errors.
    """
    overrides: dict[str, Any] = {}
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        set_path(overrides, key.strip(), yaml.safe_load(raw))
    for key, value in (("grid.n", grid_n), ("grid.half_width", grid_l), ("grid.dim", dim),
                       ("seed", seed), ("expect", expect)):
        if value is not None:
            set_path(overrides, key, value)
    cfg = resolve(recipe, _load_config(config_path), overrides)
    target = Path(out_dir or _default_out()) / recipe
    status, _ = execute(recipe, cfg, target, workers, click.echo)
    sys.exit(status)


@main.command("replay")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False),
              help="Where to write the re-run (default: replay/ next to the manifest).")
@click.option("--workers", type=int, default=1, show_default=True)
def replay(manifest, out_dir, workers):
    """Re-run MANIFEST and compare output hashes (exit 2 on any mismatch)."""
    with open(manifest, encoding="utf-8") as fh:
        old = json.load(fh)
    target = Path(out_dir) if out_dir else Path(manifest).parent / "replay"
    cfg = resolve(old["recipe"], old["config"])
    _, new = execute(old["recipe"], cfg, target, workers, lambda s: None)
    before = {o["file"]: o["sha256"] for o in old["outputs"]}
    after = {o["file"]: o["sha256"] for o in new["outputs"]}
    diff = sorted(f for f in set(before) | set(after) if before.get(f) != after.get(f))
    if old.get("tool_version") != __version__:
        click.echo(f"note: manifest written by version {old.get('tool_version')}")
    if diff:
        click.echo("mismatch: " + ", ".join(diff))
        sys.exit(2)
    click.echo(f"identical: {len(after)} files")
    sys.exit(0)


def entry():
    """Console entry point: usage errors and failures both exit with 1."""
    try:
        main.main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entry()
