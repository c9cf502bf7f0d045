"""
Command-line driver: scenario set-up, U0 sweeps and result files.

Configuration comes from three layers, later ones winning: built-in
defaults, an optional flat ``key = value`` file (``--config``), and command
line flags.  Output goes to a directory holding one time-series file per
sweep point, a sweep summary and ``manifest.json``.  Nothing time- or
host-dependent is written, so identical configurations give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (UndefinedRelaxationError, RelaxationError, bh_kx_operator,
                       organization_weight, particle_observable, photon_number_op,
                       relaxation_time)
from .bh import BHParams, bh_states, build_bh_hamiltonian, density_correlation_op
from .dynamics import RNG_STREAM, cavity_decay, mcwf_ensemble, me_evolve, steady_state
from .hilbert import BasisDescriptor, identity, kron
from .lattice import (ModelParams, build_full_hamiltonian, initial_state_full,
                      wannier_states)

__all__ = ["RunConfig", "ConfigError", "parse_config", "build_scenario", "run", "main"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIOS = ("single-full", "single-bh", "two-bh", "two-full")
SOLVERS = ("mcwf", "me", "both")
INITIALS = ("right", "left", "mi", "sf")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "single-bh"
    v0: float = -10.0
    u0_list: tuple = (0.0,)
    kappa: float = 10.0
    delta_c: Optional[float] = None
    resonance: Optional[bool] = None
    initial: str = "right"
    n_traj: int = 200
    seed: int = 0
    t_max: float = 200.0
    dt_record: float = 0.5
    m_cutoff: Optional[int] = None
    n_max: Optional[int] = None
    solver: str = "me"
    out_path: str = "results"
    format: str = "csv"
    allow_large: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: expected one of {SCENARIOS}, got {self.scenario!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver: expected one of {SOLVERS}, got {self.solver!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format: expected one of {FORMATS}, got {self.format!r}")
        if self.initial not in INITIALS:
            raise ConfigError(f"initial: expected one of {INITIALS}, got {self.initial!r}")
        if self.n_particles == 1 and self.initial in ("mi", "sf"):
            raise ConfigError(f"initial: {self.initial!r} needs a two-particle scenario")
        if not self.u0_list:
            raise ConfigError("u0: at least one value required")
        if any(u > 0 for u in self.u0_list):
            raise ConfigError("u0: values must be <= 0")
        if self.delta_c is not None and self.resonance:
            raise ConfigError("delta_c: conflicts with resonance = true")
        if not self.t_max > 0:
            raise ConfigError("t_max: must be positive")
        if not 0 < self.dt_record <= self.t_max:
            raise ConfigError("dt_record: must lie in (0, t_max]")
        if self.n_traj < 1:
            raise ConfigError("n_traj: must be >= 1")
        if self.kappa <= 0:
            raise ConfigError("kappa: must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")

    @property
    def n_particles(self) -> int:
        return 2 if self.scenario.startswith("two") else 1

    @property
    def full_model(self) -> bool:
        return self.scenario.endswith("full")

    def model(self, u0: float) -> ModelParams:
        return ModelParams(V0=self.v0, U0=u0, kappa=self.kappa, DeltaC=self.delta_c,
                           N=self.n_particles, M=self.m_cutoff, n_max=self.n_max)

    def times(self) -> np.ndarray:
        n = int(round(self.t_max / self.dt_record))
        return np.arange(n + 1) * self.dt_record


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

# config/flag key -> (RunConfig field, converter)
def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _u0_values(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


_KEYS = {
    "scenario": ("scenario", str), "v0": ("v0", float), "u0": ("u0_list", _u0_values),
    "kappa": ("kappa", float), "delta_c": ("delta_c", float), "resonance": ("resonance", _bool),
    "initial": ("initial", str), "ntraj": ("n_traj", int), "seed": ("seed", int),
    "tmax": ("t_max", float), "dt_record": ("dt_record", float), "m_cutoff": ("m_cutoff", int),
    "nmax": ("n_max", int), "solver": ("solver", str), "out": ("out_path", str),
    "format": ("format", str), "allow_large": ("allow_large", _bool), "workers": ("workers", int),
}


def parse_config_text(text: str) -> dict:
    """Parse a flat ``key = value`` document into RunConfig field values.

    Keys use the flag spelling with ``-`` or ``_``; ``#`` starts a comment.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        norm = key.replace("-", "_")
        if norm not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name, conv = _KEYS[norm]
        try:
            out[name] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cavitylattice",
        description="Lattice particles in a lossy cavity: trajectory and master-equation runs.",
        argument_default=argparse.SUPPRESS)
    ap.add_argument("--config", help="flat key = value file; flags override it")
    ap.add_argument("--scenario", choices=SCENARIOS)
    ap.add_argument("--v0", type=float, help="lattice depth per photon (recoil units, <= 0)")
    ap.add_argument("--u0", type=float, action="append", dest="u0",
                    help="single-photon light shift; repeat for a sweep")
    ap.add_argument("--kappa", type=float)
    ap.add_argument("--delta-c", type=float, dest="delta_c",
                    help="pump-cavity detuning; omitted means DeltaC = N*U0 - kappa")
    ap.add_argument("--resonance", action="store_true",
                    help="insist on the resonance rule (errors if --delta-c is also given)")
    ap.add_argument("--initial", choices=INITIALS)
    ap.add_argument("--ntraj", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tmax", type=float)
    ap.add_argument("--dt-record", type=float, dest="dt_record")
    ap.add_argument("--m-cutoff", type=int, dest="m_cutoff")
    ap.add_argument("--nmax", type=int)
    ap.add_argument("--solver", choices=SOLVERS)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", choices=FORMATS)
    ap.add_argument("--allow-large", action="store_true", dest="allow_large")
    ap.add_argument("--workers", type=int, help="processes for trajectory batches")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_config(argv: Optional[Sequence[str]] = None, text: Optional[str] = None) -> RunConfig:
    """Resolve defaults < config text/file < flags into a :class:`RunConfig`."""
    values = {}
    ns = {}
    if argv is not None:
        parser = build_parser()
        try:
            ns = vars(parser.parse_args(list(argv)))
        except SystemExit as exc:
            if exc.code == 0:
                raise
            raise ConfigError(f"invalid command line: {' '.join(argv)}") from exc
        ns.pop("verbose", None)
        path = ns.pop("config", None)
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
    if text is not None:
        values.update(parse_config_text(text))
    for key, val in ns.items():
        name, _ = _KEYS[key]
        values[name] = tuple(val) if key == "u0" else val
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

def full_dimension(cfg: RunConfig, u0: float) -> int:
    p = cfg.model(u0)
    m = 2 * p.m_cutoff + 1
    dp = m if p.N == 1 else m * (m + 1) // 2
    return dp * (p.fock_cutoff + 1)


def build_scenario(cfg: RunConfig, u0: float):
    """Hamiltonian, decay channels, initial state and observables for one U0."""
    p = cfg.model(u0)
    if cfg.full_model:
        H = build_full_hamiltonian(p)
        particle = BasisDescriptor.of(H.basis.factors[0])
        field_id = identity(BasisDescriptor.of(H.basis.factors[1]))
        obs = {"n": photon_number_op(H.basis),
               "kx": kron(particle_observable("kx", particle), field_id)}
        if p.N == 2:
            obs["nlnr"] = kron(particle_observable("nlnr", particle), field_id)
        psi0 = initial_state_full(p, cfg.initial)
    else:
        w = wannier_states(p.V0, p.m_cutoff)
        bp = BHParams.from_model(p, w)
        H = build_bh_hamiltonian(bp)
        obs = {"n": photon_number_op(H.basis)}
        if p.N == 1:
            obs["kx"] = bh_kx_operator(w, bp.n_max)
        else:
            obs["nlnr"] = density_correlation_op(2, bp.n_max)
        psi0 = bh_states(p.N, bp.n_max)[cfg.initial]
    return H, [cavity_decay(p.kappa, H.basis)], psi0, obs


def _run_point(cfg: RunConfig, u0: float) -> tuple[dict, dict]:
    H, ch, psi0, obs = build_scenario(cfg, u0)
    t = cfg.times()
    cols = {"t": t}
    summary = {"u0": u0, "tau": None, "regime": "", "w": None,
               "max_photon": None, "n_jumps_total": None}
    primary = None
    if cfg.solver in ("me", "both"):
        sol = me_evolve(H, ch, psi0, t, obs)
        prefix = "me_" if cfg.solver == "both" else ""
        for k, v in sol.observables.items():
            cols[prefix + k] = v
        primary = sol.observables
        summary["trace_drift"] = sol.trace_drift
    if cfg.solver in ("mcwf", "both"):
        ens = mcwf_ensemble(H, ch, psi0, t, cfg.n_traj, seed=cfg.seed, observables=obs,
                            workers=cfg.workers)
        prefix = "mcwf_" if cfg.solver == "both" else ""
        for k in obs:
            cols[prefix + k] = ens.mean[k]
            cols[prefix + k + "_stderr"] = ens.stderr[k]
        summary["n_jumps_total"] = ens.n_jumps_total
        if primary is None:
            primary = ens.mean
    summary["max_photon"] = float(np.max(primary["n"]))
    if "kx" in primary:
        try:
            fit = relaxation_time(t, primary["kx"], 0.0)
            summary["tau"], summary["regime"] = fit.tau, fit.regime
        except UndefinedRelaxationError:
            summary["regime"] = "undefined"
        except RelaxationError:
            summary["regime"] = "fit-failed"
    if cfg.n_particles == 2 and not cfg.full_model:
        rho = steady_state(H, ch, method="relax", rho0=psi0)
        summary["w"] = organization_weight(rho)
    return cols, summary


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

SUMMARY_COLUMNS = ("u0", "tau", "regime", "w", "max_photon", "n_jumps_total")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _series_name(u0: float, fmt: str) -> str:
    return f"series_u0_{repr(float(u0))}.{fmt}"


def _write_table(path: str, columns: Sequence[str], rows: Sequence[Sequence], fmt: str,
                 extra: Optional[dict] = None) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        text = buf.getvalue()
    else:
        doc = {"version": SCHEMA_VERSION, **(extra or {}), "columns": list(columns),
               "rows": [[_jsonable(x) for x in r] for r in rows]}
        text = json.dumps(doc, indent=1, sort_keys=False) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run(cfg: RunConfig) -> int:
    """Execute every sweep point, write outputs; returns a process exit code."""
    if cfg.scenario == "two-full":
        dims = {u: full_dimension(cfg, u) for u in cfg.u0_list}
        print(f"two-full: state dimension per U0 {dims}", file=sys.stderr)
        if not cfg.allow_large:
            print("two-full needs --allow-large", file=sys.stderr)
            return 2
    os.makedirs(cfg.out_path, exist_ok=True)
    entries, rows = [], []
    status = 0
    for u0 in cfg.u0_list:
        name = _series_name(u0, cfg.format)
        try:
            cols, summary = _run_point(cfg, u0)
        except Exception as exc:  # flushed to the manifest, keep the sweep going
            log.error("U0=%g failed: %s", u0, exc)
            entries.append({"u0": u0, "status": "incomplete", "error": f"U0={u0!r}: {exc}"})
            status = 1
            continue
        names = list(cols)
        _write_table(os.path.join(cfg.out_path, name), names,
                     list(zip(*(cols[k] for k in names))), cfg.format, {"u0": u0})
        rows.append([summary[k] for k in SUMMARY_COLUMNS])
        entry = {"u0": u0, "status": "complete", "series": name}
        if "trace_drift" in summary:
            entry["trace_drift"] = float(summary["trace_drift"])
        entries.append(entry)
    _write_table(os.path.join(cfg.out_path, f"summary.{cfg.format}"), SUMMARY_COLUMNS,
                 rows, cfg.format)
    manifest = {
        "version": SCHEMA_VERSION,
        "code_version": __version__,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "resolved": [{"u0": u0, "delta_c": cfg.model(u0).delta_c,
                      "m_cutoff": cfg.model(u0).m_cutoff, "n_max": cfg.model(u0).fock_cutoff}
                     for u0 in cfg.u0_list],
        "rng": {"generator": RNG_STREAM, "seed": cfg.seed,
                "trajectory_indices": [0, cfg.n_traj - 1]},
        "entries": entries,
    }
    with open(os.path.join(cfg.out_path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
