"""``telewell`` command-line interface.

Usage: ``telewell <command> --config run.json [--out DIR]``.  Tables go to CSV
and scalars/verdicts to JSON inside ``DIR`` (default: the working directory);
a JSON summary is also printed on stdout.

Exit codes: 0 success, 2 configuration error, 3 regime or geometry error,
4 numerical non-convergence, 5 validation failure.
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import io
from .config import RunConfig
from .errors import ConfigError, GeometryError, InfiniteMean, InternalConsistencyError, NonConvergent
from .invariant import (
    bin_masses,
    flux_identity_residual,
    fokker_planck_residual,
    resolve_attractor,
    stationary_density,
)
from .passage import batch_rows, exit_prob_upper, mean_passage
from .potential import classify_regime
from .telegraph import sample_path
from .validation import default_pairs, validate

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4, 5


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _run(fn):
    """Translate library errors into exit codes."""
    try:
        fn()
    except _Fail as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except ConfigError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except GeometryError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_GEOMETRY)
    except (NonConvergent, InternalConsistencyError) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


def _load(config_path) -> RunConfig:
    return RunConfig.load(config_path)


def _emit(payload: dict) -> None:
    click.echo(io.dumps(payload))


config_option = click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
                             help="JSON run configuration.")
out_option = click.option("--out", "out_dir", default=".", show_default=True, type=click.Path(file_okay=False),
                          help="Directory for output files.")


@click.group()
@click.version_option(io.package_version(), prog_name="telewell")
def main():
    """Telegraph processes in double-well potentials."""


@main.command()
@config_option
@out_option
def classify(config_path, out_dir):
    """Report the velocity regime and its regions."""
    def go():
        rc = _load(config_path)
        report = classify_regime(rc.potential, rc.process.velocities).to_dict()
        io.write_json(Path(out_dir) / "classify.json", "classify", rc.to_dict(), {"regime": report})
        _emit(report)
    _run(go)


def _dense_path(proc, traj, per_segment: int = 24):
    dyn = proc.dynamics
    ts, xs = [], []
    for t0, x0, state, dur in traj.segments:
        for s in np.linspace(0.0, dur, per_segment, endpoint=False):
            ts.append(t0 + s)
            xs.append(dyn.pattern(int(state), float(s), float(x0)))
    ts.append(traj.final_time)
    xs.append(traj.final_position)
    return np.array(ts), np.array(xs)


@main.command()
@config_option
@out_option
def simulate(config_path, out_dir):
    """Sample one exact trajectory (CSV of switching segments, optional SVG)."""
    def go():
        rc = _load(config_path)
        proc = rc.process
        traj = sample_path(proc, rc["x"], rc["state"], rc["horizon"])
        rows = [tuple(r) for r in traj.segments]
        path = io.write_csv(Path(out_dir) / "trajectory.csv", "simulate", rc.to_dict(),
                            ["t_start", "x_start", "state", "duration"], rows)
        summary = {"segments": len(rows), "switches": traj.n_switches, "final_position": traj.final_position,
                   "final_state": traj.final_state, "csv": str(path)}
        if rc["plot"]:
            bands = {k: v for k, v in proc.regime.regions.attractors().items()}
            if proc.regime.regions.g_zero is not None:
                bands["g_zero"] = proc.regime.regions.g_zero
            svg = io.plot_trajectory(Path(out_dir) / "trajectory.svg", traj.segments,
                                     (traj.final_time, traj.final_position), bands, _dense_path(proc, traj))
            summary["svg"] = str(svg)
        _emit(summary)
    _run(go)


@main.command("exit-prob")
@config_option
@out_option
def exit_prob(config_path, out_dir):
    """Exit probabilities through the upper end of the metastable interval."""
    def go():
        rc = _load(config_path)
        proc = rc.process
        xs = rc["xs"]
        if xs is None:
            g = proc.regime.regions.g_zero
            if g is None:
                raise _Fail(EXIT_GEOMETRY, f"regime {proc.regime.tag.value} has no metastable interval")
            xs = list(g[0] + (g[1] - g[0]) * np.linspace(0.0, 1.0, 43)[1:-1])
        res = exit_prob_upper(proc, xs, tol=rc["quad_tol"])
        rows = zip(res.x, res.p0, res.p1, res.err0, res.err1)
        path = io.write_csv(Path(out_dir) / "exit_prob.csv", "exit-prob", rc.to_dict(),
                            ["x", "p0", "p1", "err0", "err1"], rows)
        _emit({"points": len(xs), "B0": res.B0, "B1": res.B1, "csv": str(path)})
    _run(go)


@main.command()
@config_option
@out_option
def mfpt(config_path, out_dir):
    """Mean first-passage times for (x, y) pairs with their case tags."""
    def go():
        rc = _load(config_path)
        proc = rc.process
        pairs = rc["pairs"] or default_pairs(proc)
        rows = []
        for x, y in pairs:
            try:
                m = mean_passage(proc, x, y, variant=rc["variant"])
                rows.append((x, y, m.m0, m.m1, m.error0, m.error1, m.case_tag))
            except InfiniteMean:
                rows.append((x, y, math.inf, math.inf, 0.0, 0.0, "infinite"))
        path = io.write_csv(Path(out_dir) / "mfpt.csv", "mfpt", rc.to_dict(),
                            ["x", "y", "m0", "m1", "err0", "err1", "case_tag"], rows)
        _emit({"pairs": len(rows), "csv": str(path)})
    _run(go)


@main.command()
@config_option
@out_option
def invariant(config_path, out_dir):
    """Stationary densities on an attractor with residual summary."""
    def go():
        rc = _load(config_path)
        proc = rc.process
        G = resolve_attractor(proc, rc["attractor"])
        d = stationary_density(proc, G, n=rc["grid"], tol=rc["quad_tol"])
        path = io.write_csv(Path(out_dir) / "invariant.csv", "invariant", rc.to_dict(),
                            ["x", "pi0", "pi1"], zip(d.grid, d.pi0, d.pi1))
        masses = bin_masses(proc, G, [G[0], G[1]], tol=rc["quad_tol"])[:, 0]
        r0, r1 = fokker_planck_residual(proc, d)
        summary = {
            "interval": list(G), "C0": d.C0, "C1": d.C1,
            "log_C0": d.normalizers.log_C0, "log_C1": d.normalizers.log_C1,
            "masses": {"state0": masses[0], "state1": masses[1], "total": masses.sum()},
            "residuals": {"fokker_planck": [r0, r1],
                          "fokker_planck_relative": max(r0, r1) / max(d.pi0.max(), d.pi1.max()),
                          "flux_identity": flux_identity_residual(proc, d),
                          "zero_flux_mismatch": d.normalizers.zero_flux_mismatch},
            "csv": str(path),
        }
        io.write_json(Path(out_dir) / "invariant.json", "invariant", rc.to_dict(), summary)
        _emit(summary)
    _run(go)


@main.command("validate")
@config_option
@out_option
def validate_cmd(config_path, out_dir):
    """Closed form versus Monte Carlo battery; exit code 5 on failure."""
    def go():
        rc = _load(config_path)
        v = validate(rc.process, n=rc["n"], sigmas=rc["sigmas"], t_max=rc["t_max"], bins=rc["bins"],
                     burn_in=rc["burn_in"], occupation_horizon=rc["occupation_horizon"],
                     semigroup_h=rc["semigroup_h"], semigroup_n=rc["semigroup_n"],
                     attractor=rc["attractor"], variant=rc["variant"])
        verdict = v.to_dict()
        io.write_json(Path(out_dir) / "validate.json", "validate", rc.to_dict(), verdict)
        _emit({"passed": v.passed, "failed": [c.name for c in v.checks if not c.passed],
               "checks": len(v.checks), "skipped": v.skipped})
        if not v.passed:
            raise _Fail(EXIT_VALIDATION, "validation failed")
    _run(go)


@main.command()
@config_option
@click.option("--request", "request_path", required=True, type=click.Path(dir_okay=False),
              help='JSON request {"xs": [...], "y": ..., "quantity": "exit_prob"|"mfpt"}.')
@out_option
def batch(config_path, request_path, out_dir):
    """Evaluate a batch request into CSV rows (x, q0, q1, err0, err1, case_tag)."""
    def go():
        rc = _load(config_path)
        try:
            request = json.loads(Path(request_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read request {request_path}: {exc}") from None
        rows = batch_rows(rc.process, request)
        q = request.get("quantity", "exit_prob")
        cols = ["x", "p0", "p1", "err0", "err1", "case_tag"] if q == "exit_prob" else \
            ["x", "m0", "m1", "err0", "err1", "case_tag"]
        meta = {**rc.to_dict(), "request": request}
        path = io.write_csv(Path(out_dir) / "batch.csv", "batch", meta, cols, rows)
        _emit({"rows": len(rows), "csv": str(path)})
    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
