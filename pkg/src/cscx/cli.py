"""Command-line front end: ``cscx <command> [options]``.

Every command writes its primary artifact to ``--out`` (plus companions with
the same stem) and a run manifest ``<out>.manifest.json`` listing the
resolved config, its hash, every output file with its SHA-256, the package
version and the wall time. ``--verify`` recomputes everything in memory
and compares the artifacts byte for byte against the existing files.

Exit codes: 0 ok, 2 precondition failure, 3 numerical failure (including a
failed ``--verify``), 4 I/O error.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .ale_models import simanca_decay, solve_simanca_ode
from .class_arithmetic import BlowupClassData, monotonicity_check, scal_sweep, sweep_to_csv
from .errors import CscxError
from .mode_analysis import GroupDescriptor, indicial_roots
from .neck_gluing import GluingConfig, convergence_study, match

SCHEMA_VERSION = 1
EXIT_IO = 4
EXIT_VERIFY = 3

_FLOAT = re.compile(r'"@@F@@([^@]*)@@"')


# -----------------------------------------------------------------------------
# serialization
# -----------------------------------------------------------------------------
def _prep(obj):
    """Make ``obj`` JSON-ready, tagging floats so they can be printed with 17 digits."""
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return bool(obj) if obj is not None else None
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return f"@@F@@{x:.17g}@@" if math.isfinite(x) else None
    if isinstance(obj, dict):
        return {str(k): _prep(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_prep(v) for v in obj]
    if dataclasses.is_dataclass(obj):
        return _prep(dataclasses.asdict(obj))
    return str(obj)


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, 17 significant digits, NaN/inf as null."""
    return _FLOAT.sub(r"\1", json.dumps(_prep(obj), indent=2, sort_keys=True)) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Run:
    """Collects outputs of one command and writes them plus the manifest."""

    def __init__(self, command: str, config: dict, out: Path):
        self.command, self.config, self.out = command, config, out
        self.files: dict[str, bytes] = {}
        self.t0 = time.perf_counter()

    def add(self, suffix: str, text: str) -> None:
        name = self.out.name if suffix == "" else self.out.stem + suffix
        self.files[name] = text.encode()

    def write(self, directory: Path) -> list[Path]:
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, data in self.files.items():
            p = directory / name
            p.write_bytes(data)
            paths.append(p)
        cfg_text = dumps(self.config)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "input_hashes": {"config": _sha256(cfg_text.encode())},
            "outputs": [{"file": n, "sha256": _sha256(d)} for n, d in self.files.items()],
            "version": __version__,
            "wall_time_s": time.perf_counter() - self.t0,
        }
        mp = directory / (self.out.name + ".manifest.json")
        mp.write_text(dumps(manifest))
        return paths + [mp]


def _finish(run: _Run, verify: bool) -> None:
    """Write outputs, or with ``verify`` compare them to the files already on disk."""
    directory = run.out.parent if str(run.out.parent) else Path(".")
    if not verify:
        for p in run.write(directory):
            click.echo(f"wrote {p}")
        return
    bad = []
    for name, data in run.files.items():
        p = directory / name
        if not p.exists():
            bad.append(f"{name}: missing")
        elif p.read_bytes() != data:
            bad.append(f"{name}: differs")
    if bad:
        for b in bad:
            click.echo(f"verify: {b}", err=True)
        sys.exit(EXIT_VERIFY)
    click.echo(f"verify: {len(run.files)} file(s) identical")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CSCX_THREADS", "1")))
    except ValueError:
        return 1


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"not a comma-separated list of numbers: {text}") from exc


class _Group(click.Group):
    """Maps toolkit and I/O errors onto exit codes with a one-line diagnostic."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except CscxError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(exc.exit_code)
        except OSError as exc:
            click.echo(f"error: I/O: {exc}", err=True)
            sys.exit(EXIT_IO)


_out = click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
                    help="Primary output file; companions share its stem.")
_verify = click.option("--verify", is_flag=True, help="Recompute and diff against existing outputs.")


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="cscx")
def main():
    """Radial constant-scalar-curvature gluing toolkit."""


# -----------------------------------------------------------------------------
# commands
# -----------------------------------------------------------------------------
@main.command("simanca")
@click.option("--m", "m", type=int, required=True)
@click.option("--smax", type=float, default=1e4, show_default=True)
@click.option("--tol", type=float, default=1e-12, show_default=True)
@click.option("--check", is_flag=True, help="Fail unless the ODE residual is <= 10*tol.")
@_out
@_verify
def cmd_simanca(m, smax, tol, check, out, verify):
    """Integrate the Simanca model; write profile JSON and decay CSV."""
    prof = solve_simanca_ode(m, smax, tol)
    config = {"m": m, "s_max": smax, "tol": tol, "check": check}
    run = _Run("simanca", config, out)
    s_hi = min(1e4, smax)
    report = simanca_decay(prof, s_lo=s_hi / 100, s_hi=s_hi)
    data = prof.to_dict()
    data["decay"] = {"window": [s_hi / 100, s_hi], "slope_literal": report.slope_literal,
                     "slope_corrected": report.slope_corrected, "expected_order": 1 - m}
    run.add("", dumps(data))
    run.add("_asymptotics.csv", report.to_csv())
    click.echo(f"lambda = {prof.lam:.17g}  ode_residual = {prof.ode_residual_max:.3g}  "
               f"slope = {report.slope_literal:.4f} (corrected {report.slope_corrected:.4f})")
    if check and not prof.ode_residual_max <= 10 * tol:
        click.echo(f"error: ODE residual {prof.ode_residual_max:.3g} exceeds 10*tol", err=True)
        sys.exit(3)
    _finish(run, verify)


@main.command("roots")
@click.option("--m", "m", type=int, required=True)
@click.option("--group", default="trivial", show_default=True, help="trivial, zk or cyclic_diagonal(k)")
@click.option("--gamma-max", type=int, default=4, show_default=True)
@_out
@_verify
def cmd_roots(m, group, gamma_max, out, verify):
    """Tabulate indicial roots of the bi-Laplacian on invariant modes."""
    g = GroupDescriptor.parse(group, m)
    table = indicial_roots(m, g, gamma_max)
    run = _Run("roots", {"m": m, "group": g.to_dict(), "gamma_max": gamma_max}, out)
    run.add("", table.to_csv())
    click.echo(f"{len(table.rows)} mode(s); roots {table.roots}")
    _finish(run, verify)


def _gluing_config(m, ale, eps, theta, a, method, relaxation, r0, R0) -> GluingConfig:
    return GluingConfig(m=m, eps=eps, ale=ale, neck_exponent=theta, a_weight=a, method=method,
                        relaxation=relaxation, r0=r0, R0=R0)


_glue_opts = [
    click.option("--m", "m", type=int, required=True),
    click.option("--ale", type=click.Choice(["burns", "simanca", "calabi"]), default="burns",
                 show_default=True),
    click.option("--theta", type=float, default=None, help="Neck exponent (default (2m-1)/(2m))."),
    click.option("--a", "a", type=float, default=1.0, show_default=True, help="ALE weight."),
    click.option("--method", type=click.Choice(["picard", "newton", "auto"]), default="auto",
                 show_default=True),
    click.option("--relaxation", type=float, default=0.7, show_default=True),
    click.option("--r0", type=float, default=1.0, show_default=True),
    click.option("--R0", "R0", type=float, default=0.05, show_default=True),
]


def _apply(opts):
    def deco(f):
        for o in reversed(opts):
            f = o(f)
        return f
    return deco


@main.command("glue")
@_apply(_glue_opts)
@click.option("--eps", type=float, required=True)
@_out
@_verify
def cmd_glue(m, ale, theta, a, method, relaxation, r0, R0, eps, out, verify):
    """Match one glued solution; write its JSON report."""
    cfg = _gluing_config(m, ale, eps, theta, a, method, relaxation, r0, R0)
    sol = match(cfg)
    run = _Run("glue", cfg.to_dict(), out)
    run.add("", dumps(sol.to_dict()))
    click.echo(f"nu = {sol.nu:.17g}  mismatch = {max(sol.mismatch):.3g}  "
               f"iterations = {sol.iterations}  picard: {sol.picard_status}")
    _finish(run, verify)


@main.command("sweep")
@_apply(_glue_opts)
@click.option("--eps", "eps_list", required=True, help="Comma-separated, decreasing.")
@_out
@_verify
def cmd_sweep(m, ale, theta, a, method, relaxation, r0, R0, eps_list, out, verify):
    """Convergence study over eps; write CSV with fitted slopes."""
    eps = _floats(eps_list)
    cfg = _gluing_config(m, ale, eps[0] if eps else 0.1, theta, a, method, relaxation, r0, R0)
    study = convergence_study(cfg, eps, threads=_threads())
    config = cfg.to_dict()
    config["eps"] = eps
    run = _Run("sweep", config, out)
    run.add("", study.to_csv())
    ok = sum(r["status"] == "ok" for r in study.rows)
    click.echo(f"{ok}/{len(study.rows)} ok  slope(defect) = {study.slope_defect}  "
               f"slope(nu) = {study.slope_nu}  (vs eps: {study.slope_nu_eps}, theta = {study.theta:.6g})")
    if study.rows and ok == 0:
        click.echo("error: every sweep point failed", err=True)
        sys.exit(3)
    _finish(run, verify)


@main.command("scal")
@click.option("--m", "m", type=int, required=True)
@click.option("--vol", type=float, required=True)
@click.option("--chern", type=float, required=True)
@click.option("--weights", default="1", show_default=True, help="Comma-separated point weights.")
@click.option("--eps-max", type=float, default=0.5, show_default=True)
@click.option("--n", "n", type=int, default=31, show_default=True)
@_out
@_verify
def cmd_scal(m, vol, chern, weights, eps_max, n, out, verify):
    """Average scalar curvature of the blow-up class along eps."""
    data = BlowupClassData(m, vol, chern, tuple(_floats(weights)))
    rows = scal_sweep(data, eps_max, n)
    mono = monotonicity_check(data, eps_max)
    config = {"m": m, "vol": vol, "chern": chern, "weights": list(data.weights),
              "eps_max": eps_max, "n": n}
    run = _Run("scal", config, out)
    run.add("", sweep_to_csv(rows))
    run.add("_monotonicity.json", dumps(dataclasses.asdict(mono)))
    click.echo(f"decreasing on (0, {eps_max}]: {mono.decreasing}"
               + ("" if mono.first_violation is None else f"  (violation at {mono.first_violation:.6g})"))
    _finish(run, verify)


main.add_command(cmd_scal, "scal-sweep")


if __name__ == "__main__":  # pragma: no cover
    main()
