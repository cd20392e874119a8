"""Batch experiment driver.

An experiment is a JSON document (see :data:`SCHEMA_VERSION`) naming a
scenario, its channel parameters, an SNR grid and a list of start seeds. Each
``(sweep value, snr, seed)`` cell runs one solve; baselines run once per
``(sweep value, snr)``. Results are written as

``results.csv``
    one row per cell, columns :data:`RESULT_COLUMNS`;
``summary.csv``
    best row per ``(sweep value, snr)``, columns :data:`SUMMARY_COLUMNS`;
``baselines.csv``
    baseline designs, columns :data:`BASELINE_COLUMNS`;
``traces.json``
    the full outer trace and final precoder of every solve.

Files are byte-for-byte reproducible for a fixed config: all randomness is
seeded from the config and wall-clock times are written as ``0`` unless the
config sets ``"timing": true``.

Seed ``0`` starts from the scenario's deterministic point (scaled identity
blocks, or the supplied ``P0`` for the wiretap). Seed ``s > 0`` starts from
the identity plus a seeded complex Gaussian perturbation, rescaled to keep
10% slack on every constraint. An optional ``start_power`` further shrinks
every start to at most that Frobenius power.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .algorithms import BetaSchedule, SolveTrace, solve_gqmp, solve_minrate, solve_sum_secrecy
from .functions import eval_gqmf
from .hermitian import ShapeError, matrix_from_literal, matrix_to_literal
from .mi import ChannelStats, MCConfig, exp_corr, fa_mi_mc, make_constellation
from .scenarios import (
    CRNetworkConfig,
    WiretapConfig,
    block_powers,
    broadcast_rate_mc,
    build_broadcast,
    build_multicast,
    build_multicast_doubly_correlated,
    build_p2p,
    build_wiretap,
    gaussian_broadcast_baseline,
    gaussian_precoding_mc,
    grid_minimum,
    initial_precoder,
    multicast_rate_mc,
    waterfilling,
)

__all__ = [
    "SCHEMA_VERSION",
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
    "BASELINE_COLUMNS",
    "PLOT_KINDS",
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "RunOutput",
    "parse_config",
    "load_config",
    "preset_names",
    "load_preset",
    "run_experiment",
    "write_results",
    "read_results",
    "emit_plotdata",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIOS = ("p2p", "wiretap", "multicast", "broadcast")
BASELINES = {
    "p2p": ("waterfilling",),
    "wiretap": (),
    "multicast": ("gaussian_ccp",),
    "broadcast": ("gaussian_broadcast",),
}
RESULT_COLUMNS = (
    "experiment_id",
    "sweep_value",
    "snr_db",
    "seed",
    "objective_bits",
    "iterations",
    "kkt_residual",
    "wall_time_ms",
    "status",
)
SUMMARY_COLUMNS = ("experiment_id", "sweep_value", "snr_db", "best_seed", "best_objective_bits")
BASELINE_COLUMNS = ("experiment_id", "sweep_value", "snr_db", "baseline", "objective_bits", "block_powers")
PLOT_KINDS = {
    "fig2": ("snr_db", "proposed_bits", "waterfilling_bits"),
    "fig3": ("snr_db", "proposed_bits"),
    "fig4": ("rho", "snr_db", "best_rate_bits"),
    "fig6": ("snr_db", "proposed_bits", "gaussian_bits"),
    "fig7": ("snr_db", "proposed_bits", "gaussian_bits"),
}
SWEEP_MARK = "sweep"
CONFIG_KEYS = {
    "schema_version",
    "experiment_id",
    "scenario",
    "constellation",
    "snr_db",
    "seeds",
    "mc",
    "solver",
    "channel",
    "baselines",
    "baseline_draws",
    "sweep",
    "start_power",
    "output",
    "timing",
    "notes",
}


class ConfigError(ValueError):
    """Invalid experiment config; ``errors`` lists every violated field."""

    def __init__(self, errors: list):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``channel`` keeps the scenario-specific block in parsed form: numpy
    matrices for fixed channels, ``LinkSpec`` lists for network scenarios.
    """

    experiment_id: str
    scenario: str
    constellation: str
    snr_db: list
    seeds: list
    mc: MCConfig
    eps: float = 1e-7
    max_outer: int = 1000
    beta_start: float = -5.0
    beta_cap: float = 200.0
    channel: dict = field(default_factory=dict)
    baselines: list = field(default_factory=list)
    baseline_draws: int = 100
    sweep_values: list = field(default_factory=lambda: [None])
    sweep_name: str = ""
    start_power: Optional[float] = None
    output: Optional[str] = None
    timing: bool = False
    document: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LinkSpec:
    rho: Any  # float, SWEEP_MARK, or None when ``transmit_corr`` is given
    transmit_corr: Optional[np.ndarray]
    rx_antennas: int
    receive_corr: Optional[np.ndarray]

    def stats(self, n: int, sweep_value: Optional[float]) -> ChannelStats:
        if self.transmit_corr is not None:
            theta = self.transmit_corr
        else:
            theta = exp_corr(sweep_value if self.rho == SWEEP_MARK else self.rho, n)
        return ChannelStats(theta, self.rx_antennas, self.receive_corr)


@dataclass
class ResultRow:
    experiment_id: str
    sweep_value: Optional[float]
    snr_db: float
    seed: int
    objective_bits: float
    iterations: int
    kkt_residual: float
    wall_time_ms: float
    status: str


@dataclass
class RunOutput:
    """Everything :func:`run_experiment` produced, before writing."""

    config: ExperimentConfig
    rows: list
    summary: list
    baselines: list
    traces: list

    @property
    def failed(self) -> bool:
        return any(r.status == "failure" for r in self.rows) or any(
            b["status"] == "failure" for b in self.baselines
        )


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _number(doc, key, errors, default=None, positive=False, integer=False):
    if key not in doc:
        if default is None:
            errors.append(f"{key}: required")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errors.append(f"{key}: must be a finite number")
        return default
    if integer and int(v) != v:
        errors.append(f"{key}: must be an integer")
        return default
    if positive and not v > 0:
        errors.append(f"{key}: must be positive")
        return default
    return int(v) if integer else float(v)


def _matrix(value, key, errors):
    try:
        return matrix_from_literal(value)
    except ShapeError as exc:
        errors.append(f"{key}: {exc}")
        return None


def _links(doc, key, errors, allow_empty=False):
    specs = doc.get(key)
    if not isinstance(specs, list) or (not specs and not allow_empty):
        errors.append(f"channel.{key}: must be a {'' if allow_empty else 'non-empty '}list of links")
        return []
    out = []
    for k, s in enumerate(specs):
        where = f"channel.{key}[{k}]"
        if not isinstance(s, dict):
            errors.append(f"{where}: must be an object")
            continue
        rho, theta, recv = None, None, None
        if "transmit_corr" in s:
            theta = _matrix(s["transmit_corr"], f"{where}.transmit_corr", errors)
        elif "rho" in s:
            rho = s["rho"]
            if rho != SWEEP_MARK and (isinstance(rho, bool) or not isinstance(rho, (int, float)) or not 0 <= rho < 1):
                errors.append(f"{where}.rho: must be in [0, 1) or \"{SWEEP_MARK}\"")
        else:
            errors.append(f"{where}: needs 'rho' or 'transmit_corr'")
        rx = s.get("rx_antennas", 2)
        if isinstance(rx, bool) or not isinstance(rx, int) or rx < 1:
            errors.append(f"{where}.rx_antennas: must be a positive integer")
            rx = 1
        if "receive_corr" in s:
            recv = _matrix(s["receive_corr"], f"{where}.receive_corr", errors)
        out.append(LinkSpec(rho, theta, rx, recv))
    return out


def parse_config(doc: Any) -> ExperimentConfig:
    """Validate a config document.

    Raises
    ------
    ConfigError
        Listing every problem found, not just the first.
    """
    if not isinstance(doc, dict):
        raise ConfigError(["config: must be a JSON object"])
    errors: list = [f"{k}: unknown field" for k in sorted(set(doc) - CONFIG_KEYS)]
    if doc.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: must be {SCHEMA_VERSION}")
    exp_id = doc.get("experiment_id")
    if not isinstance(exp_id, str) or not exp_id:
        errors.append("experiment_id: must be a non-empty string")
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        errors.append(f"scenario: must be one of {', '.join(SCENARIOS)}")
    cname = doc.get("constellation")
    try:
        make_constellation(cname)
    except (ValueError, TypeError, AttributeError):
        errors.append("constellation: unknown constellation")

    snr = doc.get("snr_db")
    if not isinstance(snr, list) or not snr:
        errors.append("snr_db: must be a non-empty list")
        snr = []
    elif any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in snr):
        errors.append("snr_db: entries must be numbers")
        snr = []
    elif any(b <= a for a, b in zip(snr, snr[1:])):
        errors.append("snr_db: must be sorted ascending without repeats")
    seeds = doc.get("seeds")
    if not isinstance(seeds, list) or not seeds:
        errors.append("seeds: must be a non-empty list")
        seeds = []
    elif any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in seeds):
        errors.append("seeds: entries must be nonnegative integers")
    elif len(set(seeds)) != len(seeds):
        errors.append("seeds: entries must be distinct")

    mc_doc = doc.get("mc", {})
    if not isinstance(mc_doc, dict):
        errors.append("mc: must be an object")
        mc_doc = {}
    mc_errors: list = []
    mc_args = (
        _number(mc_doc, "noise_samples", mc_errors, 500, positive=True, integer=True),
        _number(mc_doc, "channel_samples", mc_errors, 200, positive=True, integer=True),
        _number(mc_doc, "seed", mc_errors, 0, integer=True),
    )
    errors += [f"mc.{e}" for e in mc_errors]

    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        errors.append("solver: must be an object")
        solver = {}
    s_errors: list = []
    eps = _number(solver, "eps", s_errors, 1e-7, positive=True)
    max_outer = _number(solver, "max_outer", s_errors, 1000, positive=True, integer=True)
    beta_start = _number(solver, "beta_start", s_errors, -5.0)
    beta_cap = _number(solver, "beta_cap", s_errors, 200.0, positive=True)
    if beta_start is not None and not beta_start < 0:
        s_errors.append("beta_start: must be negative")
    errors += [f"solver.{e}" for e in s_errors]

    sweep_name, sweep_values = "", [None]
    if "sweep" in doc:
        sw = doc["sweep"]
        vals = sw.get("values") if isinstance(sw, dict) else None
        if not isinstance(sw, dict) or sw.get("name") != "rho":
            errors.append("sweep.name: only 'rho' sweeps are supported")
        elif not isinstance(vals, list) or not vals or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v < 1 for v in vals
        ):
            errors.append("sweep.values: must be a non-empty list of numbers in [0, 1)")
        else:
            sweep_name, sweep_values = "rho", [float(v) for v in vals]

    channel = _parse_channel(doc.get("channel"), scenario, errors)
    if sweep_name and scenario in ("multicast", "broadcast"):
        links = channel.get("sr", []) + channel.get("ed", []) + channel.get("pr", [])
        if not any(l.rho == SWEEP_MARK for l in links):
            errors.append("sweep: no link uses \"sweep\" as its rho")
    elif scenario in ("multicast", "broadcast"):
        links = channel.get("sr", []) + channel.get("ed", []) + channel.get("pr", [])
        if any(l.rho == SWEEP_MARK for l in links):
            errors.append("sweep: a link uses \"sweep\" but no sweep is configured")

    baselines = doc.get("baselines", [])
    if not isinstance(baselines, list):
        errors.append("baselines: must be a list")
        baselines = []
    for b in baselines:
        if scenario in BASELINES and b not in BASELINES[scenario]:
            errors.append(f"baselines: {b!r} is not available for scenario {scenario}")
    draws = _number(doc, "baseline_draws", errors, 100, positive=True, integer=True)
    start_power = None
    if "start_power" in doc:
        start_power = _number(doc, "start_power", errors, None, positive=True)
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        errors.append("output: must be a string path")
    timing = doc.get("timing", False)
    if not isinstance(timing, bool):
        errors.append("timing: must be true or false")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment_id=exp_id,
        scenario=scenario,
        constellation=cname,
        snr_db=[float(v) for v in snr],
        seeds=list(seeds),
        mc=MCConfig(*mc_args),
        eps=eps,
        max_outer=max_outer,
        beta_start=beta_start,
        beta_cap=beta_cap,
        channel=channel,
        baselines=list(baselines),
        baseline_draws=draws,
        start_power=start_power,
        sweep_values=sweep_values,
        sweep_name=sweep_name,
        output=output,
        timing=timing,
        document=doc,
    )


def _parse_channel(ch, scenario, errors) -> dict:
    if not isinstance(ch, dict):
        errors.append("channel: must be an object")
        return {}
    out: dict = {}
    if scenario == "p2p":
        if "H" not in ch:
            errors.append("channel.H: required")
        else:
            out["H"] = _matrix(ch["H"], "channel.H", errors)
    elif scenario == "wiretap":
        for key in ("H_r", "H_e"):
            if key not in ch:
                errors.append(f"channel.{key}: required")
            else:
                out[key] = _matrix(ch[key], f"channel.{key}", errors)
        if out.get("H_r") is not None and out.get("H_e") is not None and out["H_r"].shape[1] != out["H_e"].shape[1]:
            errors.append("channel.H_e: must have as many columns as channel.H_r")
        out["noise_var"] = _number(ch, "noise_var", errors, 1.0, positive=True)
        if "P0" in ch:
            out["P0"] = _matrix(ch["P0"], "channel.P0", errors)
    elif scenario in ("multicast", "broadcast"):
        n = ch.get("tx_antennas", 2)
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            errors.append("channel.tx_antennas: must be a positive integer")
            n = 2
        out["tx_antennas"] = n
        out["sr"] = _links(ch, "sr", errors)
        out["ed"] = _links(ch, "ed", errors)
        out["pr"] = _links(ch, "pr", errors, allow_empty=True)
        out["interference_ratio"] = _number(ch, "interference_ratio", errors, 0.1, positive=True)
        for key in ("sr", "ed", "pr"):
            for k, l in enumerate(out[key]):
                if l.transmit_corr is not None and l.transmit_corr.shape != (n, n):
                    errors.append(f"channel.{key}[{k}].transmit_corr: must be {n} x {n}")
                if l.receive_corr is not None and l.receive_corr.shape != (l.rx_antennas, l.rx_antennas):
                    errors.append(f"channel.{key}[{k}].receive_corr: must match rx_antennas")
    return out


def load_config(path) -> ExperimentConfig:
    """Read and validate a config file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    return parse_config(doc)


def preset_names() -> list:
    base = resources.files("gqmp") / "presets"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    """Bundled config by name (``example1`` ... ``example5``, ``example2-multistart``)."""
    if name not in preset_names():
        raise ConfigError([f"preset: unknown preset {name!r}; available: {', '.join(preset_names())}"])
    text = (resources.files("gqmp") / "presets" / f"{name}.json").read_text()
    return parse_config(json.loads(text))


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


def _power(cfg: ExperimentConfig, snr_db: float) -> float:
    gamma = 10.0 ** (snr_db / 10.0)
    if cfg.scenario == "wiretap":
        return gamma * cfg.channel["noise_var"]
    return gamma


def _network(cfg: ExperimentConfig, snr_db: float, sweep) -> CRNetworkConfig:
    ch = cfg.channel
    n = ch["tx_antennas"]
    g0 = _power(cfg, snr_db)
    return CRNetworkConfig(
        [l.stats(n, sweep) for l in ch["sr"]],
        [l.stats(n, sweep) for l in ch["ed"]],
        [l.stats(n, sweep) for l in ch["pr"]],
        g0,
        [ch["interference_ratio"] * g0] * len(ch["pr"]),
        make_constellation(cfg.constellation),
        cfg.scenario,
    )


def _doubly(cfg: ExperimentConfig) -> bool:
    ch = cfg.channel
    return any(l.receive_corr is not None for key in ("sr", "ed", "pr") for l in ch[key])


def _start(cfg: ExperimentConfig, qset, shape, seed: int, P0: Optional[np.ndarray] = None) -> np.ndarray:
    if seed == 0 and P0 is not None and P0.shape == shape:
        X = P0 if qset.contains(P0) else _scaled(qset, P0)
    elif seed == 0:
        X = initial_precoder(qset, shape)
    else:
        X = initial_precoder(qset, shape, seed)
    # optional cap on the starting power; shrinking keeps every constraint satisfied
    if cfg.start_power is not None:
        X = X * min(1.0, np.sqrt(cfg.start_power) / np.linalg.norm(X))
    return X


def _scaled(qset, X: np.ndarray) -> np.ndarray:
    t = qset.max_feasible_scale(X)
    return X * t * np.sqrt(0.9) if np.isfinite(t) else X


def _mi_stats_rate(cfg, H_r, H_e, P, mc):
    c = make_constellation(cfg.constellation)
    return max(0.0, fa_mi_mc(H_r, P, c, mc) - fa_mi_mc(H_e, P, c, mc))


def _solve_cell(cfg: ExperimentConfig, sweep, snr_db: float, seed: int) -> tuple:
    """One proposed-design solve; returns ``(ResultRow, trace record)``."""
    t0 = time.perf_counter()
    record: dict = {"sweep_value": sweep, "snr_db": snr_db, "seed": seed}
    try:
        trace, objective, extra = _dispatch(cfg, sweep, snr_db, seed)
        status = trace.stop_reason
    except Exception as exc:  # a failing cell is flagged, the run continues
        log.error("cell (%s, %s, %s) failed: %s", sweep, snr_db, seed, exc)
        trace, objective, extra, status = None, float("nan"), {}, "failure"
        record["error"] = f"{type(exc).__name__}: {exc}"
    wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
    row = ResultRow(
        cfg.experiment_id,
        sweep,
        snr_db,
        seed,
        float(objective),
        trace.iterations if trace is not None else 0,
        trace.kkt_residual if trace is not None else float("nan"),
        wall,
        status,
    )
    if trace is not None:
        record.update(_trace_record(trace, cfg.timing))
    record.update(extra)
    record["objective_bits"] = float(objective)
    record["status"] = status
    return row, record


def _trace_record(trace: SolveTrace, timing: bool) -> dict:
    return {
        "values": [float(v) for v in trace.values],
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
        "kkt_residual": float(trace.kkt_residual),
        "stationarity": float(trace.stationarity),
        "monotone": trace.is_monotone(1e-8),
        "beta": trace.beta,
        "notes": list(trace.notes),
        "rows": [list(r) for r in trace.rows(timing)],
        "precoder": matrix_to_literal(trace.x),
    }


def _dispatch(cfg: ExperimentConfig, sweep, snr_db: float, seed: int) -> tuple:
    ch = cfg.channel
    gamma = _power(cfg, snr_db)
    sched = dict(eps=cfg.eps, max_outer=cfg.max_outer)
    if cfg.scenario == "p2p":
        c = make_constellation(cfg.constellation)
        p = build_p2p(ch["H"], gamma, c)
        x0 = _start(cfg, p.feasible_set, p.x_dims, seed)
        trace = solve_gqmp(p, x0, **sched)
        return trace, fa_mi_mc(ch["H"], trace.x, c, cfg.mc), {"approx_bits": float(trace.value)}
    if cfg.scenario == "wiretap":
        w = WiretapConfig(ch["H_r"], ch["H_e"], ch["noise_var"], gamma, make_constellation(cfg.constellation))
        p = build_wiretap(w)
        x0 = _start(cfg, p.feasible_set, p.x_dims, seed, ch.get("P0"))
        trace = solve_gqmp(p, x0, **sched)
        s = np.sqrt(ch["noise_var"])
        rate = _mi_stats_rate(cfg, ch["H_r"] / s, ch["H_e"] / s, trace.x, cfg.mc)
        return trace, rate, {"approx_bits": float(trace.value)}
    net = _network(cfg, snr_db, sweep)
    if cfg.scenario == "multicast":
        pieces = build_multicast_doubly_correlated(net) if _doubly(cfg) else build_multicast(net)
        x0 = _start(cfg, pieces.qset, pieces.x_shape, seed)
        trace = solve_minrate(
            pieces.flat(), [], pieces.qset, x0, beta=cfg.beta_start, beta_cap=cfg.beta_cap, **sched
        )
        approx = grid_minimum(pieces.grid, trace.x)
        return trace, multicast_rate_mc(net, trace.x, cfg.mc), {"approx_bits": approx}
    pieces = build_broadcast(net)
    x0 = _start(cfg, pieces.qset, pieces.x_shape, seed)
    trace = solve_sum_secrecy(
        pieces.grid, pieces.qset, x0, cfg.eps, BetaSchedule(cfg.beta_start, cfg.beta_cap), cfg.max_outer
    )
    n = net.tx_antennas
    extra = {"approx_bits": float(trace.value), "block_powers": [float(v) for v in block_powers(trace.x, n)]}
    return trace, broadcast_rate_mc(net, trace.x, cfg.mc), extra


def _baseline_cell(cfg: ExperimentConfig, name: str, sweep, snr_db: float) -> list:
    """Baseline records for one ``(sweep, snr)`` point."""
    try:
        return _baseline_dispatch(cfg, name, sweep, snr_db)
    except Exception as exc:
        log.error("baseline %s at (%s, %s) failed: %s", name, sweep, snr_db, exc)
        return [
            {
                "sweep_value": sweep,
                "snr_db": snr_db,
                "baseline": name,
                "objective_bits": float("nan"),
                "status": "failure",
                "error": f"{type(exc).__name__}: {exc}",
            }
        ]


def _baseline_dispatch(cfg, name, sweep, snr_db) -> list:
    base = {"sweep_value": sweep, "snr_db": snr_db, "status": "ok"}
    gamma = _power(cfg, snr_db)
    if name == "waterfilling":
        H = cfg.channel["H"]
        c = make_constellation(cfg.constellation)
        P = waterfilling(H, gamma)
        lam = np.linalg.eigvalsh(P.conj().T @ H.conj().T @ H @ P)
        capacity = float(np.sum(np.log2(1.0 + np.clip(lam, 0.0, None))))
        pg = build_p2p(H, gamma)
        trace = solve_gqmp(pg, _start(cfg, pg.feasible_set, pg.x_dims, 0), eps=cfg.eps, max_outer=cfg.max_outer)
        return [
            {**base, "baseline": "waterfilling_capacity", "objective_bits": capacity, "precoder": matrix_to_literal(P)},
            {
                **base,
                "baseline": "gaussian_gqmp",
                "objective_bits": float(eval_gqmf(pg.objective, trace.x)),
                "precoder": matrix_to_literal(trace.x),
                **{k: v for k, v in _trace_record(trace, cfg.timing).items() if k != "precoder"},
            },
            {
                **base,
                "baseline": "waterfilling_fa",
                "objective_bits": float(fa_mi_mc(H, P, c, cfg.mc)),
                "precoder": matrix_to_literal(P),
            },
        ]
    net = _network(cfg, snr_db, sweep)
    if name == "gaussian_ccp":
        res = gaussian_precoding_mc(net, draws=cfg.baseline_draws, seed=cfg.mc.seed)
        return [
            {
                **base,
                "baseline": name,
                "objective_bits": float(multicast_rate_mc(net, res.P, cfg.mc)),
                "gaussian_bits": float(res.value),
                "ccp_values": [float(v) for v in res.values],
                "ccp_status": res.status,
                "precoder": matrix_to_literal(res.P),
            }
        ]
    if name == "gaussian_broadcast":
        best = None
        for seed in cfg.seeds:
            pieces = build_broadcast(net)
            x0 = _start(cfg, pieces.qset, pieces.x_shape, seed)
            trace, _ = gaussian_broadcast_baseline(
                net, x0, draws=cfg.baseline_draws, seed=cfg.mc.seed, eps=cfg.eps, max_outer=cfg.max_outer
            )
            if best is None or trace.value > best[1].value:
                best = (seed, trace)
        seed, trace = best
        n = net.tx_antennas
        rec = _trace_record(trace, cfg.timing)
        return [
            {
                **base,
                **rec,
                "baseline": name,
                "start_seed": seed,
                "gaussian_bits": float(trace.value),
                "objective_bits": float(broadcast_rate_mc(net, trace.x, cfg.mc)),
                "block_powers": [float(v) for v in block_powers(trace.x, n)],
            }
        ]
    raise ValueError(f"unknown baseline {name!r}")  # pragma: no cover - rejected by parse_config


def _sort_key(sweep, snr, extra):
    return (-math.inf if sweep is None else sweep, snr, extra)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> RunOutput:
    """Run every cell of ``cfg`` and assemble rows, summary and baselines.

    Cells are independent; with ``workers > 1`` they run in a process pool.
    Assembly sorts by ``(sweep value, snr, seed)`` so the output does not
    depend on completion order.
    """
    cells = [(sw, snr, seed) for sw in cfg.sweep_values for snr in cfg.snr_db for seed in cfg.seeds]
    bcells = [(name, sw, snr) for name in cfg.baselines for sw in cfg.sweep_values for snr in cfg.snr_db]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(_solve_cell, *zip(*[(cfg, *c) for c in cells])))
            bsolved = list(pool.map(_baseline_cell, *zip(*[(cfg, *b) for b in bcells]))) if bcells else []
    else:
        solved = [_solve_cell(cfg, *c) for c in cells]
        bsolved = [_baseline_cell(cfg, *b) for b in bcells]
    order = sorted(range(len(cells)), key=lambda k: _sort_key(*cells[k]))
    rows = [solved[k][0] for k in order]
    traces = [solved[k][1] for k in order]
    baselines = [rec for group in bsolved for rec in group]
    baselines.sort(key=lambda r: _sort_key(r["sweep_value"], r["snr_db"], r["baseline"]))
    for b in baselines:
        b["experiment_id"] = cfg.experiment_id
    return RunOutput(cfg, rows, _summarize(rows), baselines, traces)


def _summarize(rows: list) -> list:
    best: dict = {}
    for r in rows:
        key = (r.sweep_value, r.snr_db)
        v = r.objective_bits
        if key not in best or (not math.isnan(v) and (math.isnan(best[key].objective_bits) or v > best[key].objective_bits)):
            best[key] = r
    out = []
    for key in sorted(best, key=lambda k: _sort_key(*k, 0)):
        r = best[key]
        out.append(
            {
                "experiment_id": r.experiment_id,
                "sweep_value": r.sweep_value,
                "snr_db": r.snr_db,
                "best_seed": r.seed,
                "best_objective_bits": r.objective_bits,
            }
        )
    return out


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def _write_csv(path: Path, columns, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([_cell(rec.get(c)) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_results(out: RunOutput, out_dir) -> Path:
    """Write the four result files into ``out_dir`` (created if needed)."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "results.csv", RESULT_COLUMNS, [r.__dict__ for r in out.rows])
    _write_csv(d / "summary.csv", SUMMARY_COLUMNS, out.summary)
    _write_csv(d / "baselines.csv", BASELINE_COLUMNS, out.baselines)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "experiment_id": out.config.experiment_id,
        "config": out.config.document,
        "runs": out.traces,
        "baselines": out.baselines,
    }
    (d / "traces.json").write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")
    return d


def _read_csv(path: Path) -> list:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_results(results_dir) -> dict:
    """Load ``summary.csv`` and ``baselines.csv`` rows as dicts of strings."""
    d = Path(results_dir)
    return {"summary": _read_csv(d / "summary.csv"), "baselines": _read_csv(d / "baselines.csv")}


def emit_plotdata(results_dir, kind: str, out_path=None) -> Path:
    """Write figure series for ``kind`` as CSV with the columns in :data:`PLOT_KINDS`.

    A missing or empty results directory yields a header-only file.

    Raises
    ------
    ValueError
        If ``kind`` is unknown.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    res = read_results(results_dir)
    summary, baselines = res["summary"], res["baselines"]

    def base(name):
        return {(b["sweep_value"], b["snr_db"]): b["objective_bits"] for b in baselines if b["baseline"] == name}

    records = []
    if kind == "fig2":
        wf = base("waterfilling_fa")
        for s in summary:
            records.append(
                {
                    "snr_db": s["snr_db"],
                    "proposed_bits": s["best_objective_bits"],
                    "waterfilling_bits": wf.get((s["sweep_value"], s["snr_db"]), ""),
                }
            )
    elif kind == "fig3":
        records = [{"snr_db": s["snr_db"], "proposed_bits": s["best_objective_bits"]} for s in summary]
    elif kind == "fig4":
        records = [
            {"rho": s["sweep_value"], "snr_db": s["snr_db"], "best_rate_bits": s["best_objective_bits"]}
            for s in summary
        ]
    else:
        g = base("gaussian_ccp" if kind == "fig6" else "gaussian_broadcast")
        for s in summary:
            records.append(
                {
                    "snr_db": s["snr_db"],
                    "proposed_bits": s["best_objective_bits"],
                    "gaussian_bits": g.get((s["sweep_value"], s["snr_db"]), ""),
                }
            )
    path = Path(out_path) if out_path is not None else Path(results_dir) / f"plot_{kind}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_KINDS[kind])
        for rec in records:
            w.writerow([rec[c] for c in PLOT_KINDS[kind]])
    return path


def with_seeds(cfg: ExperimentConfig, seeds: list) -> ExperimentConfig:
    """Copy of ``cfg`` with a different seed list (``--seed-override``)."""
    if not seeds or any(s < 0 for s in seeds) or len(set(seeds)) != len(seeds):
        raise ConfigError(["seeds: must be a non-empty list of distinct nonnegative integers"])
    doc = dict(cfg.document, seeds=list(seeds))
    return replace(cfg, seeds=list(seeds), document=doc)
