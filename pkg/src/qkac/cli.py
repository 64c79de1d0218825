"""Reproducible experiment driver.

Reads a JSON configuration document, dispatches to the library, and
writes ``<command>.csv`` plus ``manifest.txt`` into the output directory.
Outputs are deterministic given the same configuration: any randomized
initial data is drawn from the recorded seed, and CSV files are written
atomically with floats at 17 significant digits.

Exit codes: 0 success, 1 configuration or validation failure (no partial
outputs), 2 numerical contract violation (positivity or convergence).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .boltzmann import (classify_steady_states, conserved_check, gibbs,
                        qkbe_integrate)
from .chaos import ChaosExperiment, run_chaos_experiment
from .collisions import spec_by_name, verify_spec
from .errors import NumericalContractError
from .linearized import BKMGeometry, spectral_gap
from .master import KacGenerator, evolve_master, steady_states_basis
from .operators import (random_density, relative_entropy, trace_norm,
                        validate_density_matrix, von_neumann_entropy)
from .spectra import (SingleParticleModel, classify_shell,
                      commutant_projection, shell_decomposition)
from .tolerances import NAMED_TOLERANCES, check_size_guard

COMMANDS = ("verify-spec", "ergodicity", "evolve-master", "steady-states",
            "evolve-qkbe", "steady-family", "check-conserved", "chaos", "gap")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: SingleParticleModel
    spec_name: str | None
    params: dict
    output_dir: str
    seed: int
    force: bool
    tols: dict
    raw_bytes: bytes = field(repr=False, default=b"")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _parse_matrix(obj, dim: int) -> np.ndarray:
    """Matrix from nested lists; entries are numbers or [re, im] pairs."""
    if not isinstance(obj, list) or len(obj) != dim:
        raise ConfigError(f"matrix must be a list of {dim} rows")
    out = np.zeros((dim, dim), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != dim:
            raise ConfigError(f"matrix row {i} must have {dim} entries")
        for j, entry in enumerate(row):
            if isinstance(entry, (int, float)):
                out[i, j] = entry
            elif isinstance(entry, list) and len(entry) == 2:
                out[i, j] = complex(entry[0], entry[1])
            else:
                raise ConfigError(f"matrix entry ({i},{j}) must be a number or [re, im]")
    return out


def _initial_state(params: dict, model: SingleParticleModel, dim: int,
                   rng: np.random.Generator, key: str = "initial") -> np.ndarray:
    init = params.get(key)
    if init is None:
        raise ConfigError(f"params.{key} is required")
    kind = init.get("kind")
    if kind == "maximally_mixed":
        return np.eye(dim, dtype=complex) / dim
    if kind == "matrix":
        return validate_density_matrix(_parse_matrix(init.get("state"), dim))
    if kind == "gibbs":
        if dim != model.dim:
            raise ConfigError("gibbs initial data is single-particle only")
        return gibbs(model, float(init.get("beta", 0.0)))
    if kind == "random":
        return random_density(dim, rng)
    raise ConfigError(f"unknown initial-state kind '{kind}'")


def load_config(path: str, output_override: str | None, force_flag: bool,
                tol_overrides: dict) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"field 'command' must be one of {COMMANDS}, got {command!r}")
    model_doc = doc.get("model")
    if not isinstance(model_doc, dict):
        raise ConfigError("field 'model' must be an object with dim and energies")
    energies = model_doc.get("energies")
    if not isinstance(energies, list) or not energies:
        raise ConfigError("field 'model.energies' must be a non-empty list")
    if any(not isinstance(e, int) for e in energies):
        raise ConfigError("field 'model.energies' must be integers")
    dim = model_doc.get("dim", len(energies))
    if dim != len(energies):
        raise ConfigError("field 'model.dim' disagrees with the energy count")
    try:
        model = SingleParticleModel(tuple(energies))
    except ValueError as exc:
        raise ConfigError(f"field 'model.energies': {exc}") from exc
    tols = dict(NAMED_TOLERANCES)
    tols.update(doc.get("tolerances", {}))
    tols.update(tol_overrides)
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("field 'params' must be an object")
    output_dir = output_override or doc.get("output_dir")
    if not output_dir:
        raise ConfigError("an output directory is required ('output_dir' or --output)")
    return RunConfig(
        command=command,
        model=model,
        spec_name=doc.get("spec"),
        params=params,
        output_dir=output_dir,
        seed=int(doc.get("seed", 0)),
        force=bool(doc.get("force", False)) or force_flag,
        tols=tols,
        raw_bytes=raw,
    )


def _require_spec(cfg: RunConfig):
    if not cfg.spec_name:
        raise ConfigError("field 'spec' is required for this command")
    try:
        return spec_by_name(cfg.spec_name, cfg.model,
                            cfg.params.get("points_per_angle"))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"field 'spec': {exc}") from exc


def _int_param(cfg: RunConfig, name: str, minimum: int = 1) -> int:
    val = cfg.params.get(name)
    if not isinstance(val, int) or val < minimum:
        raise ConfigError(f"params.{name} must be an integer >= {minimum}")
    return val


def _time_grid(cfg: RunConfig) -> np.ndarray:
    t_max = cfg.params.get("t_max")
    if not isinstance(t_max, (int, float)) or t_max <= 0:
        raise ConfigError("params.t_max must be a positive number")
    steps = _int_param(cfg, "steps") if "steps" in cfg.params else 100
    return np.linspace(0.0, float(t_max), steps + 1)


# ---------------------------------------------------------------------------
# command implementations, each returning (header, rows)
# ---------------------------------------------------------------------------

def _cmd_verify_spec(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    report = verify_spec(spec)
    rows = [(name, resid, resid <= 1e-9)
            for name, resid in sorted(report.residuals.items())]
    return ["check", "residual", "passes"], rows


def _cmd_ergodicity(cfg: RunConfig, rng):
    n = _int_param(cfg, "N")
    check_size_guard(cfg.model.dim ** n, force=cfg.force)
    rows = []
    for E, idxs in shell_decomposition(cfg.model, n, force=cfg.force):
        part = classify_shell(cfg.model, n, E, force=cfg.force)
        rows.append((E, len(idxs), part.num_classes))
    return ["E", "dim_KE", "class_count"], rows


def _cmd_evolve_master(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    n = _int_param(cfg, "N", minimum=2)
    gen = KacGenerator(spec, n, force=cfg.force)
    rho0 = _initial_state(cfg.params, cfg.model, gen.shape.dim, rng)
    limit = commutant_projection(cfg.model, n, rho0, force=cfg.force)
    rows = []
    state = rho0
    grid = _time_grid(cfg)
    for idx, t in enumerate(grid):
        if idx > 0:
            state = evolve_master(gen, state, float(grid[idx] - grid[idx - 1]),
                                  tail_tol=cfg.tols["tail"],
                                  tol_psd=cfg.tols["psd"])
        rows.append((float(t),
                     trace_norm(state - limit),
                     von_neumann_entropy(state, tol_psd=cfg.tols["psd"]),
                     relative_entropy(state, limit, tol_psd=cfg.tols["psd"])))
    return ["t", "distance_to_limit", "entropy", "relative_entropy_to_limit"], rows


def _cmd_steady_states(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    n = _int_param(cfg, "N", minimum=2)
    gen = KacGenerator(spec, n, force=cfg.force)
    basis = steady_states_basis(gen, tol=cfg.tols["fixed_eig"])
    rows = [(E, k, rank) for k, (E, _, rank) in enumerate(basis)]
    return ["E", "class_index", "rank"], rows


def _cmd_evolve_qkbe(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    d = cfg.model.dim
    rho0 = _initial_state(cfg.params, cfg.model, d, rng)
    grid = _time_grid(cfg)
    traj = qkbe_integrate(spec, rho0, grid, tol_psd=cfg.tols["psd"])
    h = cfg.model.hamiltonian()
    header = ["t", "energy", "entropy"]
    for i in range(d):
        for j in range(d):
            header += [f"rho_{i}{j}_re", f"rho_{i}{j}_im"]
    rows = []
    for t, rho in zip(grid, traj):
        row = [float(t), float(np.trace(rho @ h).real),
               von_neumann_entropy(rho, tol_psd=cfg.tols["psd"])]
        for i in range(d):
            for j in range(d):
                row += [rho[i, j].real, rho[i, j].imag]
        rows.append(tuple(row))
    return header, rows


def _cmd_steady_family(cfg: RunConfig, rng):
    family = classify_steady_states(cfg.model)
    rows = []
    for k, row in enumerate(family.constraint_basis):
        for e, coeff in zip(family.distinct_energies, row):
            rows.append((k, e, float(coeff)))
    return ["basis_index", "energy", "coefficient"], rows


def _cmd_check_conserved(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    d = cfg.model.dim
    rho0 = _initial_state(cfg.params, cfg.model, d, rng)
    traj = qkbe_integrate(spec, rho0, _time_grid(cfg), tol_psd=cfg.tols["psd"])
    h = cfg.model.hamiltonian()
    named = {"identity": np.eye(d, dtype=complex), "h": h, "h_squared": h @ h}
    wanted = cfg.params.get("invariants", ["identity", "h"])
    rows = []
    for item in wanted:
        if isinstance(item, str) and item in named:
            name, op = item, named[item]
        elif isinstance(item, dict) and "diag" in item:
            vals = item["diag"]
            if len(vals) != d:
                raise ConfigError("diagonal invariant needs one value per level")
            name, op = "diag:" + ",".join(map(str, vals)), np.diag(
                np.asarray(vals, dtype=float)).astype(complex)
        else:
            raise ConfigError(f"unknown invariant {item!r}")
        rows.append((name, conserved_check(spec, traj, op)))
    return ["invariant", "max_drift"], rows


def _cmd_chaos(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    n_list = cfg.params.get("N_list")
    if (not isinstance(n_list, list) or not n_list
            or any(not isinstance(n, int) or n < 2 for n in n_list)):
        raise ConfigError("params.N_list must be a list of integers >= 2")
    rho0 = _initial_state(cfg.params, cfg.model, cfg.model.dim, rng)
    exp = ChaosExperiment(spec, rho0, n_list, _time_grid(cfg), force=cfg.force)
    rows = [(r.N, r.t, r.delta1, r.delta2, r.entropy_N, r.entropy_qkbe)
            for r in run_chaos_experiment(exp)]
    return ["N", "t", "delta1", "delta2", "entropy_N", "entropy_qkbe"], rows


def _cmd_gap(cfg: RunConfig, rng):
    spec = _require_spec(cfg)
    states = cfg.params.get("rho_inf")
    if isinstance(states, dict):
        states = [states]
    if not isinstance(states, list) or not states:
        raise ConfigError("params.rho_inf must be an object or list of objects")
    rows = []
    for item in states:
        kind = item.get("kind")
        if kind == "gibbs":
            beta = float(item.get("beta", 0.0))
            rho_inf = gibbs(cfg.model, beta)
            label = f"gibbs(beta={_fmt(beta)})"
        elif kind == "diag":
            vals = np.asarray(item.get("values"), dtype=float)
            if vals.size != cfg.model.dim or vals.min() <= 0:
                raise ConfigError("diag rho_inf needs positive values, one per level")
            rho_inf = np.diag(vals / vals.sum()).astype(complex)
            label = "diag:" + ",".join(_fmt(float(v)) for v in vals)
        else:
            raise ConfigError(f"unknown rho_inf kind {kind!r}")
        geo = BKMGeometry(rho_inf)
        gap, kernel_dim = spectral_gap(spec, geo)
        rows.append((spec.name, label, gap, kernel_dim))
    return ["spec", "rho_inf_params", "gap", "kernel_dim"], rows


_DISPATCH = {
    "verify-spec": _cmd_verify_spec,
    "ergodicity": _cmd_ergodicity,
    "evolve-master": _cmd_evolve_master,
    "steady-states": _cmd_steady_states,
    "evolve-qkbe": _cmd_evolve_qkbe,
    "steady-family": _cmd_steady_family,
    "check-conserved": _cmd_check_conserved,
    "chaos": _cmd_chaos,
    "gap": _cmd_gap,
}


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _write_atomic(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _manifest_text(cfg: RunConfig) -> str:
    lines = [
        f"command: {cfg.command}",
        f"config_sha256: {hashlib.sha256(cfg.raw_bytes).hexdigest()}",
        f"library_version: {__version__}",
        f"seed: {cfg.seed}",
        "tolerances: " + " ".join(f"{k}={_fmt(float(v))}"
                                  for k, v in sorted(cfg.tols.items())),
        f"timestamp: {datetime.now(timezone.utc).isoformat()}",
    ]
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    header, rows = _DISPATCH[cfg.command](cfg, rng)
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_atomic(os.path.join(cfg.output_dir, f"{cfg.command}.csv"),
                  _csv_text(header, rows))
    _write_atomic(os.path.join(cfg.output_dir, "manifest.txt"),
                  _manifest_text(cfg))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qkac",
        description="Quantum mean-field collision-model laboratory")
    parser.add_argument("--config", required=True, help="path to a JSON run configuration")
    parser.add_argument("--output", help="output directory (overrides config)")
    parser.add_argument("--force", action="store_true",
                        help="override the d**N size guard")
    parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="override a named tolerance (repeatable)")
    args = parser.parse_args(argv)
    overrides = {}
    for item in args.tol:
        if "=" not in item:
            print(f"error: --tol expects NAME=VALUE, got {item!r}", file=sys.stderr)
            return 1
        name, value = item.split("=", 1)
        if name not in NAMED_TOLERANCES:
            print(f"error: unknown tolerance {name!r}; known: "
                  f"{sorted(NAMED_TOLERANCES)}", file=sys.stderr)
            return 1
        try:
            overrides[name] = float(value)
        except ValueError:
            print(f"error: tolerance {name!r} needs a numeric value", file=sys.stderr)
            return 1
    try:
        cfg = load_config(args.config, args.output, args.force, overrides)
        return run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalContractError as exc:
        print(f"numerical contract violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
