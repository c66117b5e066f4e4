"""Experiment harness: strict JSON configs, reproducible seeded runs, and
CSV/JSON reporting with provenance (package version, seed, config hash).

All outputs are byte-deterministic for a fixed config + seed: floats are
written with repr (shortest round-trip), JSON keys are sorted, and no
wall-clock values enter any artifact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from . import __version__
from . import asg, epidemics, forward, lm, sde
from .core import (
    MigrationStructure,
    RegimeSpec,
    RngStream,
    SweepParams,
    migration_from_json,
    resolve_regime,
)
from .errors import ConfigError

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "load_config",
    "run_regime_experiment",
    "run_lm_experiment",
    "run_fixprob_experiment",
    "run_duality_experiment",
    "run_figure1",
    "write_csv",
    "write_trajectory",
]

CSV_VERSION_TAG = "# sweepsim-csv v1"

_COMMON_KEYS = {"kind", "seed", "out"}
_ALLOWED_KEYS = {
    "fixtime": _COMMON_KEYS
    | {"migration", "alpha_grid", "regime", "replicates", "founder", "tolerance",
       "event_cap", "limit_samples"},
    "lm": _COMMON_KEYS
    | {"migration", "alpha", "mu", "regime", "replicates", "founder", "event_cap",
       "compare_sde"},
    "fixprob": _COMMON_KEYS
    | {"migration", "alpha", "mu", "x0", "n_total", "replicates", "founder"},
    "duality": _COMMON_KEYS
    | {"migration", "alpha", "mu", "grid", "conditioned_grid", "replicates",
       "k_max", "dt"},
    "figure1": _COMMON_KEYS | {"panel", "max_generations"},
}
_REGIME_KEYS = {"kind", "c", "gamma"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    raw: dict
    out: Path | None = None

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)

    @property
    def config_hash(self) -> str:
        # the output directory is not part of the experiment identity
        doc = {k: v for k, v in self.raw.items() if k != "out"}
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()[:16]


def load_config(source, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate an experiment config (path, JSON string or dict).

    Unknown keys are errors; a seed is mandatory (no wall-clock defaults).
    """
    if isinstance(source, dict):
        doc = dict(source)
    else:
        text = Path(source).read_text() if Path(str(source)).is_file() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    kind = doc.get("kind")
    if kind not in _ALLOWED_KEYS:
        raise ConfigError(
            f"unknown experiment kind {kind!r}; expected one of {sorted(_ALLOWED_KEYS)}"
        )
    unknown = set(doc) - _ALLOWED_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown config keys for {kind!r}: {sorted(unknown)}")
    if "seed" not in doc or not isinstance(doc["seed"], int):
        raise ConfigError("config must carry an explicit integer seed")
    if "regime" in doc:
        bad = set(doc["regime"]) - _REGIME_KEYS
        if bad:
            raise ConfigError(f"unknown regime keys: {sorted(bad)}")
    if "alpha_grid" in doc:
        grid = doc["alpha_grid"]
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("alpha_grid must be non-empty and strictly increasing")
    if doc.get("replicates", 1) < 1:
        raise ConfigError("replicates must be >= 1")
    out = Path(doc["out"]) if doc.get("out") else None
    return ExperimentConfig(kind=kind, seed=doc["seed"], raw=doc, out=out)


def _regime_from(doc: dict) -> RegimeSpec:
    return RegimeSpec(kind=doc["kind"], c=doc.get("c", 1.0), gamma=doc.get("gamma"))


def _migration_from(cfg: ExperimentConfig) -> MigrationStructure:
    spec = cfg.get("migration")
    if spec is None:
        raise ConfigError("config needs a 'migration' entry (inline dict or file path)")
    return migration_from_json(spec)


@dataclass
class ExperimentReport:
    kind: str
    provenance: dict
    rows: list
    summary: dict
    passed: bool | None = None

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "provenance": self.provenance,
            "rows": self.rows,
            "summary": self.summary,
            "passed": self.passed,
        }
        return json.dumps(doc, sort_keys=True, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _provenance(cfg: ExperimentConfig, replicates) -> dict:
    return {
        "version": __version__,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
        "replicates": replicates,
    }


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf"
        return repr(v)
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_VERSION_TAG + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_report(cfg: ExperimentConfig, report: ExperimentReport, stem: str) -> None:
    if cfg.out is None:
        return
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / f"{stem}.json").write_text(report.to_json() + "\n", encoding="utf-8")


def write_trajectory(result, out_dir, stem: str, seed: int) -> None:
    """Persist one integrator run: CSV (t, x_1..x_d) plus a summary JSON
    (outcome, T_fix, eps, dt, seed)."""
    out_dir = Path(out_dir)
    d = result.path.shape[1]
    write_csv(
        out_dir / f"{stem}.csv",
        ["t"] + [f"x_{i + 1}" for i in range(d)],
        [(t, *row) for t, row in zip(result.times, result.path)],
    )
    summary = {
        "outcome": result.outcome_label,
        "T_fix": result.t_fix,
        "eps": result.eps,
        "dt": result.dt,
        "seed": seed,
    }
    (out_dir / f"{stem}.json").write_text(
        json.dumps(summary, sort_keys=True, default=_json_default) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# fixtime: Theorem-2 regime sweep
# ---------------------------------------------------------------------------

def run_regime_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Scaled hitting-time medians along an alpha grid against the
    limiting prediction; the deviation must shrink along the grid and meet
    the tolerance at the largest alpha."""
    ms = _migration_from(cfg)
    regime = _regime_from(cfg["regime"])
    founder = cfg.get("founder", 0)
    replicates = cfg.get("replicates", 1000)
    cap = cfg.get("event_cap", lm.DEFAULT_EVENT_CAP)
    alpha_grid = [float(a) for a in cfg["alpha_grid"]]
    limit = epidemics.theorem2_limit(ms, regime, founder)
    rng = RngStream(seed=cfg.seed)

    default_tol = {"linear": 0.10, "power": 0.15, "inverse_log": 0.10}[regime.kind]
    tol = cfg.get("tolerance", default_tol)

    rows = []
    csv_rows = []
    deviations = []
    for alpha in alpha_grid:
        mu = resolve_regime(regime, alpha)
        sp = SweepParams(alpha=alpha, mu=mu, founder=founder)
        res = lm.lm_hitting_times(ms, sp, replicates, rng, cap=cap)
        med = float(np.median(res.scaled))
        row = {
            "alpha": alpha,
            "mu": mu,
            "median_scaled": med,
            "mean_scaled": float(res.scaled.mean()),
            "q10": float(np.quantile(res.scaled, 0.1)),
            "q90": float(np.quantile(res.scaled, 0.9)),
            "replicates": replicates,
        }
        if limit.kind == "constant":
            row["limit"] = limit.value
            row["deviation"] = abs(med / limit.value - 1.0)
            deviations.append(row["deviation"])
        else:
            n_lim = cfg.get("limit_samples", 10 ** 5)
            lim_samples = limit.sample(n_lim, rng)
            row["limit"] = "1+S_J"
            row["deviation"] = float(ks_2samp(res.scaled, lim_samples).statistic)
            deviations.append(row["deviation"])
        rows.append(row)
        first = np.where(np.isinf(res.first_migrant), math.inf, res.first_migrant)
        for r in range(replicates):
            csv_rows.append(
                (r, alpha, mu, regime.label, res.T[r], res.scaled[r], first[r],
                 res.events[r], res.seeds[r])
            )

    monotone = all(b <= a for a, b in zip(deviations, deviations[1:]))
    passed = monotone and deviations[-1] < tol
    report = ExperimentReport(
        kind="fixtime",
        provenance=_provenance(cfg, replicates),
        rows=rows,
        summary={
            "regime": regime.label,
            "tolerance": tol,
            "monotone": monotone,
            "final_deviation": deviations[-1],
        },
        passed=passed,
    )
    if cfg.out is not None:
        write_csv(
            cfg.out / "fixtime_replicates.csv",
            ["replicate_id", "alpha", "mu", "gamma_or_kind", "T", "scaled_T",
             "first_migrant_time", "events", "seed"],
            csv_rows,
        )
        _write_report(cfg, report, "fixtime_report")
    return report


# ---------------------------------------------------------------------------
# lm: single setting replicate dump
# ---------------------------------------------------------------------------

def run_lm_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    ms = _migration_from(cfg)
    founder = cfg.get("founder", 0)
    replicates = cfg.get("replicates", 100)
    alpha = float(cfg["alpha"])
    if "regime" in cfg.raw:
        regime = _regime_from(cfg["regime"])
        mu = resolve_regime(regime, alpha)
        label = regime.label
    else:
        mu = float(cfg.get("mu", 0.0))
        label = "explicit"
    sp = SweepParams(alpha=alpha, mu=mu, founder=founder)
    rng = RngStream(seed=cfg.seed)
    res = lm.lm_hitting_times(ms, sp, replicates, rng,
                              cap=cfg.get("event_cap", lm.DEFAULT_EVENT_CAP))
    summary = {
        "alpha": alpha,
        "mu": mu,
        "median_scaled": float(np.median(res.scaled)),
        "mean_scaled": float(res.scaled.mean()),
    }
    if cfg.get("compare_sde"):
        # moderate-alpha side-by-side with the conditioned diffusion;
        # reported for inspection, no tolerance asserted
        icfg = sde.IntegratorConfig(conditioned=True)
        horizon = 40.0 * math.log(alpha) / alpha
        status, times = sde.fixation_times(
            _entrance_x0(ms, sp), ms, sp, icfg, horizon, replicates, rng
        )
        ok = status == sde.FIXED
        summary["sde_scaled_median"] = (
            float(np.median(times[ok] * alpha / math.log(alpha))) if ok.any() else None
        )
        summary["sde_fixed_fraction"] = float(ok.mean())
    rows = [
        (r, alpha, mu, label, res.T[r], res.scaled[r],
         res.first_migrant[r] if np.isfinite(res.first_migrant[r]) else math.inf,
         res.events[r], res.seeds[r])
        for r in range(replicates)
    ]
    report = ExperimentReport(
        kind="lm", provenance=_provenance(cfg, replicates), rows=[], summary=summary,
        passed=None,
    )
    if cfg.out is not None:
        write_csv(
            cfg.out / "lm_replicates.csv",
            ["replicate_id", "alpha", "mu", "gamma_or_kind", "T", "scaled_T",
             "first_migrant_time", "events", "seed"],
            rows,
        )
        _write_report(cfg, report, "lm_report")
    return report


def _entrance_x0(ms: MigrationStructure, sp: SweepParams) -> np.ndarray:
    x0 = np.zeros(ms.d)
    x0[sp.founder] = sde.default_entrance_eps(sp.alpha)
    return x0


# ---------------------------------------------------------------------------
# fixprob
# ---------------------------------------------------------------------------

def run_fixprob_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    ms = _migration_from(cfg)
    sp = SweepParams(alpha=float(cfg["alpha"]), mu=float(cfg.get("mu", 0.0)),
                     founder=cfg.get("founder", 0))
    replicates = cfg.get("replicates", 10 ** 4)
    n_total = cfg.get("n_total", 1000)
    x0 = np.asarray(cfg["x0"], dtype=float)
    rng = RngStream(seed=cfg.seed)
    init = forward.moran_state_from_frequencies(ms, n_total, x0)
    status, times, _, seeds = forward.moran_fixation_runs(init, ms, sp, replicates, rng)
    n_fixed = int((status == 1).sum())
    p_hat = n_fixed / replicates
    se = math.sqrt(max(p_hat * (1 - p_hat), 1e-300) / replicates)
    target = asg.fixation_probability_closed_form(init.frequencies, ms, sp)
    z = (p_hat - target) / se if se > 0 else 0.0
    passed = abs(z) <= 3.0
    report = ExperimentReport(
        kind="fixprob",
        provenance=_provenance(cfg, replicates),
        rows=[],
        summary={
            "p_hat": p_hat,
            "std_err": se,
            "closed_form": target,
            "z": z,
            "n_total": n_total,
        },
        passed=passed,
    )
    if cfg.out is not None:
        write_csv(
            cfg.out / "fixprob_replicates.csv",
            ["replicate_id", "outcome", "absorption_time", "seed", "stream_id"],
            [
                (r, "fixed" if status[r] == 1 else "lost", times[r], seeds[r], 0)
                for r in range(replicates)
            ],
        )
        _write_report(cfg, report, "fixprob_report")
    return report


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

def run_duality_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Moment-duality grid: diffusion Monte Carlo vs particle Monte Carlo
    vs truncated-generator oracle, plus optional conditioned-duality
    settings (coupled two-group estimator vs conditioned diffusion)."""
    ms = _migration_from(cfg)
    sp = SweepParams(alpha=float(cfg["alpha"]), mu=float(cfg.get("mu", 0.0)))
    if sp.alpha > 10.0:
        raise ConfigError("duality experiments need alpha <= 10 (oracle feasibility)")
    replicates = cfg.get("replicates", 10 ** 5)
    k_max = cfg.get("k_max", 40)
    dt = cfg.get("dt")
    rng = RngStream(seed=cfg.seed)
    icfg = sde.IntegratorConfig(dt=dt, conditioned=False)

    settings = []
    all_pass = True
    for entry in cfg["grid"]:
        k = np.asarray(entry["k"], dtype=np.int64)
        x = np.asarray(entry["x"], dtype=float)
        tau = float(entry["tau"])
        est = asg.duality_lhs_vs_rhs(k, x, tau, ms, sp, replicates, rng, cfg=icfg)
        oracle = asg.truncated_dual_moment(k, x, tau, ms, sp, k_max)
        ok_pair = est.gap <= 3.0 * est.combined_se
        ok_lhs = abs(est.lhs_hat - oracle.value) <= 3.0 * max(est.lhs_se, 1e-12)
        ok_rhs = abs(est.rhs_hat - oracle.value) <= 3.0 * max(est.rhs_se, 1e-12)
        all_pass = all_pass and ok_pair and ok_lhs and ok_rhs
        settings.append(
            {
                "setting": {"k": k.tolist(), "x": x.tolist(), "tau": tau},
                "lhs_hat": est.lhs_hat,
                "rhs_hat": est.rhs_hat,
                "oracle": oracle.value,
                "overflow_mass": oracle.overflow_mass,
                "std_errs": {"lhs": est.lhs_se, "rhs": est.rhs_se},
                "replicates": replicates,
                "seed": cfg.seed,
                "pass": bool(ok_pair and ok_lhs and ok_rhs),
            }
        )
    for entry in cfg.get("conditioned_grid", []):
        k = np.asarray(entry["k"], dtype=np.int64)
        x = np.asarray(entry["x"], dtype=float)
        tau = float(entry["tau"])
        p_hat, p_se, n_acc, n_att = asg.conditioned_moment_yz(
            k, x, tau, ms, sp, replicates, rng, max_attempts=replicates * 100
        )
        ccfg = sde.IntegratorConfig(dt=dt, conditioned=True)
        samples, n_deg = sde.endpoint_samples(x, ms, sp, ccfg, tau, replicates, rng)
        vals = np.prod((1.0 - samples) ** k.astype(float), axis=1)
        m_hat = float(vals.mean())
        m_se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        combined = math.hypot(p_se, m_se)
        ok = abs(p_hat - m_hat) <= 3.0 * combined
        all_pass = all_pass and ok
        settings.append(
            {
                "setting": {"k": k.tolist(), "x": x.tolist(), "tau": tau,
                            "conditioned": True},
                "lhs_hat": m_hat,
                "rhs_hat": p_hat,
                "oracle": None,
                "std_errs": {"lhs": m_se, "rhs": p_se},
                "replicates": n_acc,
                "seed": cfg.seed,
                "degenerate_discarded": n_deg,
                "pass": bool(ok),
            }
        )

    report = ExperimentReport(
        kind="duality",
        provenance=_provenance(cfg, replicates),
        rows=settings,
        summary={"n_settings": len(settings)},
        passed=all_pass,
    )
    if cfg.out is not None:
        _write_report(cfg, report, "duality_report")
    return report


# ---------------------------------------------------------------------------
# figure1
# ---------------------------------------------------------------------------

_SYMMETRIC_2 = {"d": 2, "b": [[0.0, 1.0], [1.0, 0.0]]}


def figure1_panel_params(panel: str) -> dict:
    """Wright-Fisher parameters of the two sweep-trajectory panels:
    equal-size two-colony model, a(1,2)=a(2,1)=b(1,2)=b(2,1)=1."""
    if panel == "A":
        n, s = 10 ** 4, 0.01
        return {"n": n, "s": s, "m": 0.001}
    if panel == "B":
        n, s = 10 ** 5, 0.1
        # colony-scaled migration mu = N*m set to 1/log(N*s)
        return {"n": n, "s": s, "m": 1.0 / (n * math.log(n * s))}
    raise ConfigError(f"panel must be 'A' or 'B', got {panel!r}")


def run_figure1(cfg: ExperimentConfig) -> ExperimentReport:
    """One fixation-conditioned Wright-Fisher sweep trajectory starting
    from a single beneficial copy in colony 1; CSV columns
    (generation, freq_1, freq_2)."""
    panel = cfg.get("panel", "A")
    params = figure1_panel_params(panel)
    ms = migration_from_json(_SYMMETRIC_2)
    rng = RngStream(seed=cfg.seed)
    freq0 = np.array([1.0 / params["n"], 0.0])
    path = forward.wf_conditioned_trajectory(
        ms, params["n"], params["s"], params["m"], freq0, rng,
        max_generations=cfg.get("max_generations", 10 ** 6),
    )
    report = ExperimentReport(
        kind="figure1",
        provenance=_provenance(cfg, 1),
        rows=[],
        summary={"panel": panel, **params, "fixation_generation": len(path) - 1},
        passed=bool(np.all(path[-1] >= 1.0)),
    )
    if cfg.out is not None:
        write_csv(
            cfg.out / f"figure1_panel{panel}.csv",
            ["generation", "freq_1", "freq_2"],
            [(g, path[g, 0], path[g, 1]) for g in range(len(path))],
        )
        _write_report(cfg, report, f"figure1_panel{panel}_report")
    return report


_RUNNERS = {
    "fixtime": run_regime_experiment,
    "lm": run_lm_experiment,
    "fixprob": run_fixprob_experiment,
    "duality": run_duality_experiment,
    "figure1": run_figure1,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return _RUNNERS[cfg.kind](cfg)
