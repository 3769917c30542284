"""Batch runner: one experiment per invocation, INI config, plot-ready outputs.

Usage::

    ellipdist <experiment> [--config FILE] [--seed N] [--out DIR]

Experiments: distances, mattila, sharpness, stationary-phase, erdos, decay.
Each writes its CSV series, ``summary.json`` (fits and pass/fail flags
against the ``[thresholds]`` section), and ``manifest.json`` (the fully
resolved config plus SHA-256 of every output).  Nothing is written unless
the whole run succeeds.

Exit codes: 0 success, 1 a declared threshold failed, 2 invalid config,
3 a frequency beyond the measure's resolution, 4 a pair budget exceeded.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .convex_bodies import ConvexBody, Ellipse, ellipse_samples
from .distance_sets import check_pair_budget, distance_set, lattice_size, erdos_experiment, grid_count_bound_check, sharpness_experiment
from .errors import BudgetExceededError, ResolutionError
from .fourier import decay_envelope, fit_exponent, stationary_phase_residual, upper_envelope
from .mattila import averaged_mattila, dyadic_blocks, mattila_profile, psi_cutoff, resolved_blocks, t_grid
from .measures import DiscreteMeasure, FalconerConstruction, PointSet, cantor_dust, delone_set, integer_grid, point_mass
from .output import emit_plotdata, write_json, write_rows

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_RESOLUTION, EXIT_BUDGET = 0, 1, 2, 3, 4

_BODY = {"kind": "ellipse", "b1": "2", "b2": "1", "angle": "0", "radius": "1", "file": ""}
_SAMPLES = {"count": "16", "method": "halton"}

# every accepted key with its default; anything else in a config is an error
DEFAULTS: dict[str, dict[str, dict[str, str]]] = {
    "distances": {
        "points": {"kind": "grid", "q": "2", "R": "8", "jitter": "0.2", "file": ""},
        "body": {"a1_sq": "1", "a2_sq": "1", "m": "1", "n": "0", "a1": "", "a2": "", "phi": ""},
        "distances": {"mode": "exact", "tolerance": "", "include_zero": "false", "origin": "false"},
        "thresholds": {},
    },
    "mattila": {
        "measure": {"kind": "cantor", "ratio": "1/3", "depth": "5", "scale": "0.001", "file": ""},
        "samples": {"count": "64", "method": "halton"},
        "resolution": {"t_max": "64", "nodes_per_block": "64", "angle_nodes": "1024", "method": "pairs"},
        "thresholds": {"block_ratio_max": "1.0", "sum_rel_tol": "1e-4"},
    },
    "sharpness": {
        "construction": {"s": "0.8", "moduli": "2,4,16", "stage": "2"},
        "samples": dict(_SAMPLES),
        "distances": {"tolerance": ""},
        "thresholds": {"dimension_tol": "0.15"},
    },
    "stationary-phase": {
        "body": dict(_BODY),
        "direction": {"angle": "0"},
        "resolution": {"trho_min": "10", "trho_max": "200", "points": "4000", "nodes": "8192",
                       "amplitude": "support", "bins_per_octave": "4"},
        "thresholds": {"slope_max": "-1.4", "r2_min": "0.9"},
    },
    "erdos": {
        "points": {"kind": "perturbed-lattice", "jitter": "0.2"},
        "erdos": {"radii": "8,16,32,64"},
        "samples": {"count": "8", "method": "halton"},
        "distances": {"tolerance": ""},
        "thresholds": {"exponent_min": "1.9"},
    },
    "decay": {
        "body": dict(_BODY),
        "decay": {"directions": "16", "t_min": "4", "t_max": "256", "points": "2048", "nodes": "",
                  "bins_per_octave": "2"},
        "thresholds": {"slope_max": "-0.45"},
    },
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


# --------------------------------------------------------------------------
# Config


class Config:
    """Resolved ``section -> key -> string`` mapping with typed getters."""

    def __init__(self, command: str, path: str | None, seed: int | None):
        self.command = command
        base = DEFAULTS[command]
        self.values = {sec: dict(keys) for sec, keys in base.items()}
        self.values["run"] = {"seed": "0"}
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            try:
                with open(path, encoding="utf-8") as fh:
                    parser.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            for sec in parser.sections():
                if sec not in self.values:
                    raise ConfigError(f"unknown section [{sec}] for '{command}'")
                for key, val in parser.items(sec):
                    if sec != "thresholds" and key not in self.values[sec]:
                        raise ConfigError(f"unknown key '{key}' in [{sec}]")
                    if sec == "thresholds" and key not in self.values[sec]:
                        raise ConfigError(f"unknown threshold '{key}'")
                    self.values[sec][key] = val.strip()
        if seed is not None:
            self.values["run"]["seed"] = str(seed)

    def text(self, sec: str, key: str) -> str:
        return self.values[sec][key]

    def has(self, sec: str, key: str) -> bool:
        return self.values[sec][key] != ""

    def number(self, sec: str, key: str) -> float:
        raw = self.text(sec, key)
        try:
            return float(Fraction(raw)) if "/" in raw else float(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{sec}] {key} = {raw!r} is not a number") from exc

    def rational(self, sec: str, key: str) -> Fraction:
        raw = self.text(sec, key)
        try:
            return Fraction(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{sec}] {key} = {raw!r} is not a rational number") from exc

    def integer(self, sec: str, key: str) -> int:
        raw = self.text(sec, key)
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key} = {raw!r} is not an integer") from exc

    def flag(self, sec: str, key: str) -> bool:
        raw = self.text(sec, key).lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{sec}] {key} = {raw!r} is not a boolean")

    def numbers(self, sec: str, key: str) -> list[float]:
        try:
            return [float(Fraction(p.strip())) for p in self.text(sec, key).split(",") if p.strip()]
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{sec}] {key} must be a comma-separated list of numbers") from exc

    def integers(self, sec: str, key: str) -> list[int]:
        try:
            return [int(p.strip()) for p in self.text(sec, key).split(",") if p.strip()]
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key} must be a comma-separated list of integers") from exc

    @property
    def seed(self) -> int:
        return self.integer("run", "seed")

    def optional_number(self, sec: str, key: str) -> float | None:
        return self.number(sec, key) if self.has(sec, key) else None


def _positive(value, name: str):
    if not value > 0:
        raise ConfigError(f"{name} must be positive")
    return value


def _samples(cfg: Config) -> list[Ellipse]:
    count = cfg.integer("samples", "count")
    method = cfg.text("samples", "method")
    if count < 1:
        raise ConfigError("[samples] count must be at least 1")
    if method not in ("halton", "random"):
        raise ConfigError("[samples] method must be 'halton' or 'random'")
    return ellipse_samples(count, method, cfg.seed)


def _body(cfg: Config) -> ConvexBody:
    kind = cfg.text("body", "kind")
    if kind == "ellipse":
        K = ConvexBody.ellipse(_positive(cfg.number("body", "b1"), "b1"), _positive(cfg.number("body", "b2"), "b2"),
                               cfg.number("body", "angle"))
    elif kind == "circle":
        K = ConvexBody.circle(_positive(cfg.number("body", "radius"), "radius"))
    elif kind == "file":
        if not cfg.has("body", "file"):
            raise ConfigError("[body] kind = file needs a file")
        K = ConvexBody.read_csv(cfg.text("body", "file"))
    else:
        raise ConfigError(f"[body] kind must be ellipse, circle or file, got {kind!r}")
    K.validate()
    return K


# --------------------------------------------------------------------------
# Experiments.  Each returns (outputs, summary, passed) where outputs maps a
# file name to a writer taking the path; nothing touches the disk here.


def _fit_dict(fit) -> dict:
    return fit.to_dict()


def run_distances(cfg: Config):
    kind = cfg.text("points", "kind")
    if kind == "grid":
        q = cfg.integer("points", "q")
        if q < 1:
            raise ConfigError("[points] q must be at least 1")
        S = integer_grid(q)
    elif kind in ("lattice", "perturbed-lattice"):
        check_pair_budget(lattice_size(_positive(cfg.number("points", "R"), "R")))
        S = delone_set(_positive(cfg.number("points", "R"), "R"), kind, cfg.seed, cfg.number("points", "jitter")
                       if kind != "lattice" else 0.0)
    elif kind == "file":
        S = PointSet.read_csv(cfg.text("points", "file"))
    else:
        raise ConfigError(f"[points] kind must be grid, lattice, perturbed-lattice or file, got {kind!r}")
    mode = cfg.text("distances", "mode")
    if mode not in ("exact", "tolerant"):
        raise ConfigError("[distances] mode must be 'exact' or 'tolerant'")
    if any(cfg.has("body", k) for k in ("a1", "a2", "phi")):
        if mode == "exact":
            raise ConfigError("float a1/a2/phi need mode = tolerant; use a1_sq, a2_sq, m, n for exact counting")
        K = Ellipse(cfg.number("body", "a1"), cfg.number("body", "a2"), cfg.number("body", "phi"))
    else:
        K = Ellipse.pythagorean(cfg.rational("body", "a1_sq"), cfg.rational("body", "a2_sq"),
                                cfg.integer("body", "m"), cfg.integer("body", "n"))
    tol = cfg.optional_number("distances", "tolerance")
    origin = (0, 0) if cfg.flag("distances", "origin") else None
    res = distance_set(S, K, mode, tol, cfg.flag("distances", "include_zero"), origin)
    if mode == "exact":
        rows = [(v, f"{Fraction(n, res.denominator)}") for v, n in zip(res.values, res.numerators)]
        header = ["squared_distance", "exact"]
    else:
        rows = [(v,) for v in res.values]
        header = ["distance"]
    summary = {"count": res.count, "mode": res.mode, "tolerance": res.tolerance, "points": len(S),
               "body": {"a1": K.a1, "a2": K.a2, "phi": K.phi}, "include_zero": res.include_zero}
    if kind == "grid":
        q = cfg.integer("points", "q")
        g = grid_count_bound_check(q, K, mode, tol)
        summary["grid_bound"] = {"q": q, "origin_count": g.origin_count, "origin_bound": g.origin_bound,
                                 "pair_count": g.pair_count, "pair_bound": g.pair_bound, "passed": g.passed}
    passed = summary.get("grid_bound", {}).get("passed", True)
    return {"distances.csv": lambda p: write_rows(p, header, rows)}, summary, passed


def _measure(cfg: Config) -> DiscreteMeasure:
    kind = cfg.text("measure", "kind")
    if kind == "cantor":
        ratio = cfg.number("measure", "ratio")
        if not 0 < ratio < 0.5:
            raise ConfigError("[measure] ratio must lie in (0, 1/2)")
        depth = cfg.integer("measure", "depth")
        if not 1 <= depth <= 10:
            raise ConfigError("[measure] depth must lie in 1..10")
        return cantor_dust(ratio, depth)
    if kind == "point":
        return point_mass(scale=_positive(cfg.number("measure", "scale"), "scale"))
    if kind == "file":
        return DiscreteMeasure.read_csv(cfg.text("measure", "file"))
    raise ConfigError(f"[measure] kind must be cantor, point or file, got {kind!r}")


def run_mattila(cfg: Config):
    mu = _measure(cfg)
    samples = _samples(cfg)
    t_max = cfg.number("resolution", "t_max")
    if t_max <= 1:
        raise ConfigError("[resolution] t_max must exceed 1")
    npb = cfg.integer("resolution", "nodes_per_block")
    angle_nodes = cfg.integer("resolution", "angle_nodes")
    method = cfg.text("resolution", "method")
    if method not in ("pairs", "quadrature"):
        raise ConfigError("[resolution] method must be 'pairs' or 'quadrature'")
    if npb < 2:
        raise ConfigError("[resolution] nodes_per_block must be at least 2")
    if method == "quadrature" and (angle_nodes < 256 or angle_nodes & (angle_nodes - 1)):
        raise ConfigError("[resolution] angle_nodes must be a power of two >= 256")
    mu.require_frequency(t_max)
    ratio_max = cfg.number("thresholds", "block_ratio_max")
    sum_tol = cfg.number("thresholds", "sum_rel_tol")

    prof = mattila_profile(mu, samples, t_grid(t_max, npb), psi=psi_cutoff, method=method, angle_nodes=angle_nodes)
    avg = averaged_mattila(mu, samples, t_max, profile=prof)
    clipped = dyadic_blocks(mu, samples, t_max=t_max, profile=prof, nodes_per_block=npb)
    block_sum = math.fsum(b.value for b in clipped)
    rel = abs(block_sum - avg.value) / abs(avg.value) if avg.value else abs(block_sum)
    full = []
    if resolved_blocks(mu):
        full = dyadic_blocks(mu, samples, nodes_per_block=npb, angle_nodes=angle_nodes, method=method)
    ratios = [b.value / a.value for a, b in zip(full, full[1:])]
    ratio_ok = all(r < ratio_max for r in ratios) if ratios else None
    summary = {
        "measure": mu.label, "scale": mu.scale, "alpha": mu.alpha, "t_max": t_max, "samples": len(samples),
        "value": avg.value, "variance": avg.variance,
        "blocks": [b.to_dict() for b in full], "block_ratios": ratios, "block_ratio_ok": ratio_ok,
        "clipped_blocks": [b.to_dict() for b in clipped], "block_sum": block_sum,
        "block_sum_rel_error": rel, "block_sum_ok": rel <= sum_tol,
    }
    passed = summary["block_sum_ok"] and ratio_ok is not False
    sample_rows = [(K.a1, K.a2, K.phi, psi_cutoff(K.a1, K.a2), v) for K, v in zip(samples, avg.per_sample)]
    block_rows = [(b.n, b.t_range[0], b.t_range[1], b.value, "full") for b in full]
    block_rows += [(b.n, b.t_range[0], b.t_range[1], b.value, "clipped") for b in clipped]
    outputs = {
        "profile.csv": lambda p: emit_plotdata((prof.grid, prof.mean_sq), p, "t", "mean_psi_S_squared",
                                               note=f"measure={mu.label}"),
        "blocks.csv": lambda p: write_rows(p, ["n", "t_lo", "t_hi", "value", "kind"], block_rows),
        "samples.csv": lambda p: write_rows(p, ["a1", "a2", "phi", "psi", "integral"], sample_rows),
    }
    return outputs, summary, passed


def run_sharpness(cfg: Config):
    try:
        c = FalconerConstruction(cfg.number("construction", "s"), tuple(cfg.integers("construction", "moduli")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    stage = cfg.integer("construction", "stage")
    if not 1 <= stage <= c.depth:
        raise ConfigError(f"[construction] stage must lie in 1..{c.depth}")
    samples = _samples(cfg)
    rep = sharpness_experiment(c, stage, samples, cfg.optional_number("distances", "tolerance"),
                               cfg.number("thresholds", "dimension_tol"))
    rows, cover_rows = [], []
    for i, x in enumerate(rep.samples):
        rows.append((i, x.body.a1, x.body.a2, x.body.phi, x.value_count, x.covering, x.bound,
                     x.dimension.slope, x.passed))
        cover_rows.extend((i, ell, n) for ell, n in zip(rep.scales, x.coverings))
    summary = {"s": rep.s, "stage": rep.stage, "q": rep.q, "ell": rep.ell, "scales": list(rep.scales),
               "max_dimension": rep.max_dimension, "dimension_bound": rep.s + rep.dimension_tol,
               "max_covering": max(x.covering for x in rep.samples), "covering_bound": (2 * rep.q + 1) ** 2,
               "passed": rep.passed}
    outputs = {
        "sharpness.csv": lambda p: write_rows(
            p, ["sample", "a1", "a2", "phi", "values", "covering", "bound", "dimension", "passed"], rows),
        "coverings.csv": lambda p: write_rows(p, ["sample", "ell", "N"], cover_rows),
    }
    return outputs, summary, rep.passed


def run_stationary_phase(cfg: Config):
    K = _body(cfg)
    ang = cfg.number("direction", "angle")
    x = np.array([math.cos(ang), math.sin(ang)])
    lo, hi = cfg.number("resolution", "trho_min"), cfg.number("resolution", "trho_max")
    if not 1 <= lo < hi:
        raise ConfigError("[resolution] need 1 <= trho_min < trho_max")
    amplitude = cfg.text("resolution", "amplitude")
    if amplitude not in ("support", "curvature"):
        raise ConfigError("[resolution] amplitude must be 'support' or 'curvature'")
    nodes = cfg.integer("resolution", "nodes")
    rep = stationary_phase_residual(K, x, (lo, hi), cfg.integer("resolution", "points"), nodes, amplitude,
                                    cfg.integer("resolution", "bins_per_octave"))
    smax, r2min = cfg.number("thresholds", "slope_max"), cfg.number("thresholds", "r2_min")
    passed = rep.envelope_fit.slope <= smax and rep.envelope_fit.r_squared >= r2min
    summary = {"fit": _fit_dict(rep.envelope_fit), "constant": rep.constant, "direction": x.tolist(),
               "amplitude": amplitude, "slope_max": smax, "r2_min": r2min, "passed": passed}
    return {"residual.csv": lambda p: emit_plotdata((rep.trho, rep.residual), p, "t_rho", "abs_residual")}, \
        summary, passed


def run_erdos(cfg: Config):
    kind = cfg.text("points", "kind")
    if kind not in ("lattice", "perturbed-lattice"):
        raise ConfigError("[points] kind must be lattice or perturbed-lattice")
    jitter = cfg.number("points", "jitter")
    if not 0 <= jitter < 0.5:
        raise ConfigError("[points] jitter must lie in [0, 1/2)")
    radii = cfg.numbers("erdos", "radii")
    if len(radii) < 4 or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] < 1:
        raise ConfigError("[erdos] radii must be at least 4 increasing values >= 1")
    samples = _samples(cfg)
    rep = erdos_experiment(radii, samples, kind, cfg.seed, jitter, cfg.optional_number("distances", "tolerance"))
    emin = cfg.number("thresholds", "exponent_min")
    passed = bool(np.all(rep.exponents >= emin))
    rows = [(R, K.a1, K.a2, K.phi, n) for K, cs in zip(rep.samples, rep.counts) for R, n in zip(rep.R, cs)]
    summary = {"kind": kind, "jitter": jitter, "radii": list(rep.R),
               "fits": [_fit_dict(f) for f in rep.fits], "quantiles": rep.quantiles(),
               "exponent_min": emin, "passed": passed}
    return {"erdos.csv": lambda p: write_rows(p, ["R", "a1", "a2", "phi", "count"], rows)}, summary, passed


def run_decay(cfg: Config):
    K = _body(cfg)
    ndir = cfg.integer("decay", "directions")
    if ndir < 1:
        raise ConfigError("[decay] directions must be at least 1")
    lo, hi = cfg.number("decay", "t_min"), cfg.number("decay", "t_max")
    if not 0 < lo < hi:
        raise ConfigError("[decay] need 0 < t_min < t_max")
    nodes = cfg.integer("decay", "nodes") if cfg.has("decay", "nodes") else None
    # sigma_hat of a symmetric body is even, so half the circle suffices
    angles = math.pi * np.arange(ndir) / ndir
    env = decay_envelope(K, angles, (lo, hi), cfg.integer("decay", "points"), nodes)
    ex, ey = upper_envelope(env.grid, env.values, cfg.integer("decay", "bins_per_octave"))
    fit = fit_exponent(ex, ey)
    smax = cfg.number("thresholds", "slope_max")
    passed = fit.slope <= smax
    summary = {"fit": _fit_dict(fit), "directions": ndir, "slope_max": smax, "passed": passed}
    return {"envelope.csv": lambda p: env.to_csv(p, "t", "max_abs_sigma_hat")}, summary, passed


RUNNERS = {
    "distances": run_distances,
    "mattila": run_mattila,
    "sharpness": run_sharpness,
    "stationary-phase": run_stationary_phase,
    "erdos": run_erdos,
    "decay": run_decay,
}


# --------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellipdist", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="experiment")
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", help="INI file overriding the defaults")
        p.add_argument("--seed", type=int, help="seed overriding [run] seed")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(command: str, config: str | None = None, seed: int | None = None, out: str = ".") -> int:
    """Run one experiment and write its outputs; returns the exit status."""
    try:
        cfg = Config(command, config, seed)
        outputs, summary, passed = RUNNERS[command](cfg)
    except ResolutionError as exc:
        print(f"ellipdist: resolution: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except BudgetExceededError as exc:
        print(f"ellipdist: budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, OSError, KeyError) as exc:
        print(f"ellipdist: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, writer in outputs.items():
        writer(out_dir / name)
        hashes[name] = _sha256(out_dir / name)
    summary = dict(summary, experiment=command, passed=bool(passed))
    write_json(out_dir / "summary.json", summary)
    hashes["summary.json"] = _sha256(out_dir / "summary.json")
    manifest = {"experiment": command, "version": __version__, "seed": cfg.seed,
                "config": cfg.values, "outputs": hashes}
    write_json(out_dir / "manifest.json", manifest)
    status = "passed" if passed else "FAILED"
    print(f"{command}: {status}; outputs in {out_dir}")
    return EXIT_OK if passed else EXIT_THRESHOLD


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
