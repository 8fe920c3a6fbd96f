"""Experiment configuration, execution and report files.

A config is a JSON object.  Common keys::

    kind       bell | restricted | two-state | iid | circuit | violation-scan | convergence
    seed       master seed (overridden by --seed, then by BEABLE_LAB_SEED)
    n_runs     ensemble size for stochastic kinds
    system     {"preset": "rabi"} | {"preset": "haar", "dim": d, "seed": s}
               | {"hamiltonian" | "unitary": matrix, "psi0": vector, "blocks": [[...], ...]}
    check      thresholds used with --check

Complex entries may be numbers, [re, im] pairs or strings such as "1-2j".
Each run writes ``summary.json`` (the resolved config, seed and results)
and ``table.csv``.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bell import SamplerControls, jump_rates, sample_ensemble
from .circuits import load_circuit, run_circuit_ensemble
from .currents import EXPRESSION_9, CandidateId, violation_scan
from .discrete import (
    iid_chain,
    restricted_transition_series,
    two_state_chain_ensemble,
    two_state_transition,
)
from .errors import BeableLabError, NumericalFailure
from .hilbert import (
    Decomposition,
    HermitianOperator,
    StateVector,
    UnitaryOperator,
    haar_random_unitary,
    principal_log_hamiltonian,
    random_state,
)
from .stats import compare_distributions, lag1_independence_test, pooled_marginal_z

log = logging.getLogger(__name__)

KINDS = ("bell", "restricted", "two-state", "iid", "circuit", "violation-scan", "convergence")
STOCHASTIC = {"bell", "restricted", "two-state", "iid", "circuit", "violation-scan"}
TABLE_HEADER = ["time", "config", "count", "empirical", "born", "z"]
SEED_ENV = "BEABLE_LAB_SEED"


class ConfigError(BeableLabError, ValueError):
    pass


class CheckFailure(BeableLabError):
    def __init__(self, message: str, summary: dict):
        super().__init__(message)
        self.summary = summary


# ---------------------------------------------------------------------------
# config parsing


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"complex entry must be [re, im], got {x!r}")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, str):
        return complex(x.replace(" ", "").replace("i", "j"))
    return complex(x)


def _vector(v) -> np.ndarray:
    return np.array([_complex(x) for x in v], dtype=complex)


def _matrix(m) -> np.ndarray:
    return np.array([[_complex(x) for x in row] for row in m], dtype=complex)


@dataclass
class System:
    dec: Decomposition
    psi0: StateVector
    H: HermitianOperator | None = None
    U: UnitaryOperator | None = None

    def hamiltonian(self, tau: float | None = None) -> HermitianOperator:
        if self.H is not None:
            return self.H
        if self.U is None or tau is None:
            raise ConfigError("system has no Hamiltonian; give one or a unitary with tau")
        return principal_log_hamiltonian(self.U, tau)

    def unitary(self, tau: float | None = None) -> UnitaryOperator:
        if self.U is not None:
            return self.U
        if self.H is None or tau is None:
            raise ConfigError("system has no unitary; give one or a Hamiltonian with tau")
        return UnitaryOperator(self.H.propagator(tau))


def resolve_system(sys_cfg: dict) -> System:
    sys_cfg = sys_cfg or {}
    preset = sys_cfg.get("preset")
    try:
        if preset == "rabi":
            H = HermitianOperator([[0, 1], [1, 0]])
            psi0 = StateVector.normalized(_vector(sys_cfg["psi0"])) if "psi0" in sys_cfg else StateVector([1, 0])
            return System(Decomposition.singletons(2), psi0, H=H)
        if preset == "haar":
            d = int(sys_cfg.get("dim", 3))
            s = int(sys_cfg.get("seed", 0))
            U = haar_random_unitary(d, np.random.SeedSequence(s, spawn_key=(0,)))
            psi0 = random_state(d, np.random.SeedSequence(s, spawn_key=(1,)))
            return System(_blocks(sys_cfg, d), psi0, U=U)
        if preset is not None:
            raise ConfigError(f"unknown preset {preset!r}")
        H = HermitianOperator(_matrix(sys_cfg["hamiltonian"])) if "hamiltonian" in sys_cfg else None
        U = UnitaryOperator(_matrix(sys_cfg["unitary"])) if "unitary" in sys_cfg else None
        if H is None and U is None:
            raise ConfigError("system needs a preset, a hamiltonian or a unitary")
        d = (H or U).dim
        psi0 = StateVector.normalized(_vector(sys_cfg["psi0"])) if "psi0" in sys_cfg else StateVector.basis(d, 0)
        return System(_blocks(sys_cfg, d), psi0, H=H, U=U)
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid system: {exc}") from exc


def _blocks(sys_cfg: dict, d: int) -> Decomposition:
    if "blocks" in sys_cfg:
        dec = Decomposition(tuple(tuple(b) for b in sys_cfg["blocks"]))
        if dec.dim != d:
            raise ConfigError(f"blocks cover {dec.dim} indices, system has dimension {d}")
        return dec
    return Decomposition.singletons(d)


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict
    seed: int | None = None
    n_runs: int | None = None
    controls: SamplerControls = field(default_factory=SamplerControls)
    base_dir: Path = field(default_factory=Path.cwd)
    system: System | None = None

    @classmethod
    def from_dict(cls, raw: dict, seed_override: int | None = None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = copy.deepcopy(raw)
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
        seed = raw.get("seed")
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                seed = int(env)
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV} must be an integer") from exc
        if seed_override is not None:
            seed = seed_override
        if seed is not None:
            raw["seed"] = seed = int(seed)
        n_runs = raw.get("n_runs")
        if kind in STOCHASTIC:
            if seed is None:
                raise ConfigError(f"{kind} experiments need a seed")
            if kind != "violation-scan" and (n_runs is None or int(n_runs) < 1):
                raise ConfigError(f"{kind} experiments need n_runs >= 1")
        try:
            controls = SamplerControls(**raw.get("controls", {}))
        except TypeError as exc:
            raise ConfigError(f"unknown numeric control: {exc}") from exc
        cfg = cls(kind, raw, seed, None if n_runs is None else int(n_runs), controls)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path, seed_override: int | None = None) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(raw, seed_override)
        cfg.base_dir = Path(path).resolve().parent
        return cfg

    def _validate(self):
        r = self.raw
        need = {
            "bell": ["t_end"],
            "restricted": ["tau", "steps"],
            "two-state": ["steps"],
            "iid": ["steps"],
            "circuit": ["circuit"],
            "violation-scan": [],
            "convergence": ["taus"],
        }[self.kind]
        missing = [k for k in need if k not in r]
        if missing:
            raise ConfigError(f"{self.kind} config is missing {', '.join(missing)}")
        if self.kind != "circuit" and self.kind != "violation-scan":
            self.system = resolve_system(r.get("system", {"preset": "rabi"}))

    def get(self, key, default=None):
        return self.raw.get(key, default)


# ---------------------------------------------------------------------------
# experiments


def _ensemble_rows(times, counts, born) -> tuple[list[list], list[dict]]:
    rows, per_time = [], []
    for t, c, p in zip(times, counts, born):
        cmp = compare_distributions(c, p)
        n = c.sum()
        for q in range(len(c)):
            rows.append([float(t), q, int(c[q]), c[q] / n, float(p[q]), float(cmp.z_scores[q])])
        per_time.append({"time": float(t), **cmp.as_dict()})
    return rows, per_time


def _tv_check(per_time, limit):
    worst = max(x["tv_distance"] for x in per_time)
    return {"max_tv": {"value": worst, "threshold": limit, "pass": worst <= limit}}


def run_bell(cfg: ExperimentConfig):
    s = cfg.system
    H = s.hamiltonian(cfg.get("tau"))
    t_end = float(cfg.get("t_end"))
    times = np.array(cfg.get("record_times", list(np.linspace(0, t_end, 5)[1:])), dtype=float)
    res = sample_ensemble(H, s.dec, s.psi0, t_end, cfg.n_runs, cfg.seed, q0=cfg.get("q0"), record_times=times, controls=cfg.controls)
    counts = res.counts(s.dec.n_configs)
    born = np.array([s.dec.weights(H.propagator(t) @ s.psi0.amplitudes) for t in times])
    rows, per_time = _ensemble_rows(times, counts, born)
    results = {"per_time": per_time, "mean_jumps": float(res.n_jumps.mean()), "zero_weight_events": res.zero_weight_events}
    return results, TABLE_HEADER, rows, _tv_check(per_time, cfg.get("check", {}).get("tv_max", 0.01))


def run_restricted(cfg: ExperimentConfig):
    s = cfg.system
    tau, steps = float(cfg.get("tau")), int(cfg.get("steps"))
    H = s.hamiltonian(tau)
    U = s.unitary(tau)
    times = tau * np.arange(steps + 1)
    res = sample_ensemble(H, s.dec, s.psi0, times[-1], cfg.n_runs, cfg.seed, q0=cfg.get("q0"), record_times=times, controls=cfg.controls)
    counts = res.counts(s.dec.n_configs)
    born, a = [], s.psi0.amplitudes
    for _ in times:
        born.append(s.dec.weights(a))
        a = U.matrix @ a
    rows, per_time = _ensemble_rows(times, counts, np.array(born))
    results = {"per_step": per_time, "hamiltonian_spectrum": [float(x) for x in H.eigh[0]]}
    return results, TABLE_HEADER, rows, _tv_check(per_time, cfg.get("check", {}).get("tv_max", 0.01))


def run_two_state(cfg: ExperimentConfig):
    s = cfg.system
    steps = int(cfg.get("steps"))
    U = s.unitary(cfg.get("tau"))
    configs, born = two_state_chain_ensemble(U, s.dec, s.psi0, steps, cfg.n_runs, cfg.seed, q0=cfg.get("q0"))
    counts = np.stack([np.bincount(configs[:, j], minlength=2) for j in range(steps + 1)])
    rows, per_time = _ensemble_rows(np.arange(steps + 1), counts, born)
    return {"per_step": per_time}, TABLE_HEADER, rows, _tv_check(per_time, cfg.get("check", {}).get("tv_max", 0.01))


def run_iid(cfg: ExperimentConfig):
    s = cfg.system
    steps = int(cfg.get("steps"))
    U = s.unitary(cfg.get("tau", 0.1))
    n = s.dec.n_configs
    runs = []
    counts = np.zeros((steps + 1, n), dtype=np.int64)
    born = None
    for r in range(cfg.n_runs):
        traj, born = iid_chain(U, s.dec, s.psi0, steps, cfg.seed, run_index=r)
        runs.append(traj.configs)
        np.add.at(counts, (np.arange(steps + 1), traj.configs), 1)
    stat, dof, p = lag1_independence_test(runs[0], born)
    z = pooled_marginal_z(runs[0], born)
    rows, per_time = _ensemble_rows(np.arange(steps + 1), counts, born)
    results = {
        "lag1_statistic": stat,
        "lag1_dof": dof,
        "lag1_p_value": p,
        "marginal_z": [float(x) for x in z],
        "per_step_max_tv": max(x["tv_distance"] for x in per_time),
    }
    chk = cfg.get("check", {})
    checks = {
        "lag1_p_value": {"value": p, "threshold": chk.get("p_min", 1e-3), "pass": p > chk.get("p_min", 1e-3)},
        "marginal_z": {"value": float(np.max(np.abs(z))), "threshold": 3.0, "pass": bool(np.all(np.abs(z) <= 3.0))},
    }
    return results, TABLE_HEADER, rows, checks


def run_circuit(cfg: ExperimentConfig):
    path = Path(cfg.get("circuit"))
    if not path.is_absolute():
        path = cfg.base_dir / path
    try:
        circuit = load_circuit(path)
    except OSError as exc:
        raise ConfigError(f"cannot read circuit {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if "psi0" in cfg.raw:
        psi0 = StateVector.normalized(_vector(cfg.get("psi0")))
    else:
        psi0 = StateVector.basis(circuit.dim, 0)
    ens = run_circuit_ensemble(circuit, psi0, cfg.n_runs, cfg.seed, q0=cfg.get("q0"))
    rows, per_time = _ensemble_rows(np.arange(len(circuit) + 1), ens.counts(), ens.born)
    results = {"n_qubits": circuit.n_qubits, "n_gates": len(circuit), "per_gate": per_time, "zero_weight_events": ens.zero_weight_events}
    return results, TABLE_HEADER, rows, _tv_check(per_time, cfg.get("check", {}).get("tv_max", 0.015))


def run_scan(cfg: ExperimentConfig):
    d = int(cfg.get("dim", 3))
    blocks = cfg.get("blocks")
    dec = Decomposition(tuple(tuple(b) for b in blocks)) if blocks else Decomposition.singletons(d)
    cand = CandidateId.parse(cfg.get("candidate", str(EXPRESSION_9)))
    pair = tuple(cfg.get("q_pair", [1, 0]))
    fixed = np.eye(d) if cfg.get("identity_unitary") else None
    res = violation_scan(d, dec, pair, cand, int(cfg.get("n_samples", 1000)), cfg.seed, fixed_unitary=fixed)
    header = ["condition", "failures", "max_residual"]
    rows = [[k, res.tallies[k], res.max_residual[k]] for k in ("cond1", "cond2", "cond3", "cond4")]
    chk = cfg.get("check", {})
    lo, hi = chk.get("fraction_range", [0.01, 0.15])
    checks = {"cond3_fraction": {"value": res.violation_fraction, "threshold": [lo, hi], "pass": lo <= res.violation_fraction <= hi}}
    if (cand.base, cand.part) == ("guess1", "real"):
        for k in ("cond1", "cond2", "cond4"):
            checks[f"{k}_residual"] = {"value": res.max_residual[k], "threshold": 1e-10, "pass": res.max_residual[k] <= 1e-10}
    return res.as_dict(), header, rows, checks


def run_convergence(cfg: ExperimentConfig):
    s = cfg.system
    if s.dec.n_configs != 2:
        raise ConfigError("convergence experiment compares two-state processes; use two configurations")
    taus = [float(x) for x in cfg.get("taus")]
    t = float(cfg.get("t", 0.3))
    q_from = int(cfg.get("q_from", 0))
    H0 = s.hamiltonian(cfg.get("tau", min(taus)))
    psi_t = StateVector(H0.propagator(t) @ s.psi0.amplitudes)
    sigma = float(jump_rates(psi_t, H0, s.dec).rates[1 - q_from, q_from])
    header = ["tau", "process", "jump_prob", "rate_estimate", "bell_rate", "error", "ratio"]
    rows = []
    errs = {"two-state": [], "restricted": []}
    for tau in taus:
        U = UnitaryOperator(H0.propagator(tau))
        H = principal_log_hamiltonian(U, tau)
        p_hat = float(two_state_transition(psi_t, U, s.dec).probs[1 - q_from, q_from])
        ser = restricted_transition_series(H, s.dec, psi_t, q_from, 1 - q_from, tau, n_max=int(cfg.get("n_max", 3)))
        for name, p in (("two-state", p_hat), ("restricted", ser.probability)):
            err = abs(p / tau - sigma)
            ratio = err / errs[name][-1] if errs[name] else float("nan")
            errs[name].append(err)
            rows.append([tau, name, p, p / tau, sigma, err, ratio])
    lo, hi = cfg.get("check", {}).get("ratio_range", [0.35, 0.65])
    checks = {}
    for name, e in errs.items():
        ratios = [b / a for a, b in zip(e, e[1:])]
        checks[f"{name}_ratios"] = {"value": ratios, "threshold": [lo, hi], "pass": all(lo <= r <= hi for r in ratios)}
        checks[f"{name}_monotone"] = {"value": e, "threshold": "decreasing", "pass": all(b < a for a, b in zip(e, e[1:]))}
    return {"bell_rate": sigma, "errors": errs}, header, rows, checks


RUNNERS = {
    "bell": run_bell,
    "restricted": run_restricted,
    "two-state": run_two_state,
    "iid": run_iid,
    "circuit": run_circuit,
    "violation-scan": run_scan,
    "convergence": run_convergence,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, check: bool = False) -> dict:
    """Run ``cfg``; write ``summary.json`` and ``table.csv`` into ``out_dir`` if given.

    Raises CheckFailure (after writing the reports) when ``check`` is set and
    a threshold is breached.
    """
    try:
        results, header, rows, checks = RUNNERS[cfg.kind](cfg)
    except (NumericalFailure, ConfigError):
        raise
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    except ValueError as exc:
        # library input validation reached through a config value
        raise ConfigError(str(exc)) from exc
    passed = all(c["pass"] for c in checks.values())
    summary = {
        "kind": cfg.kind,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.raw,
        "results": _jsonable(results),
        "checks": _jsonable(checks),
        "passed": passed,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        with open(out / "table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(_jsonable(rows))
    if check and not passed:
        failed = [k for k, c in checks.items() if not c["pass"]]
        raise CheckFailure(f"acceptance thresholds breached: {', '.join(failed)}", summary)
    return summary


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x
