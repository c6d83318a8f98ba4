"""Batch helpers shared by the scripts and the acceptance suite."""

from __future__ import annotations

import logging
from typing import Dict, Iterable, List, Optional

import numpy as np

from .scheduler import SimulationResult, SystemConfig, default_config, rolling_simulate
from .validation import DEFAULT_SAMPLES, HnsRecord, sample_hns

log = logging.getLogger(__name__)


def run_case(hours: int, mode: str = "joint", ambiguity: str = "gaussian",
             epsilon: Optional[float] = None, sigma_multiplier: Optional[float] = None,
             config: Optional[SystemConfig] = None) -> SimulationResult:
    """Rolling run of ``config`` (bundled fixture by default) with DR-CC overrides."""
    cfg = config or default_config()
    kw = {"mode": mode, "ambiguity": ambiguity}
    if epsilon is not None:
        kw["epsilon"] = epsilon
    cfg = cfg.with_drcc(**kw)
    if sigma_multiplier is not None:
        cfg = cfg.replace(sigma_multiplier=sigma_multiplier)
    log.info("running %d h mode=%s ambiguity=%s", hours, mode, ambiguity)
    return rolling_simulate(cfg, hours)


def hns_records(result: SimulationResult, sampler: str, n: int = DEFAULT_SAMPLES,
                seed: int = 0) -> List[HnsRecord]:
    return [sample_hns(r, sampler, n=n, seed=seed) for r in result.records]


def hns_stats(records: Iterable[HnsRecord], tight_only: bool = False) -> Dict[str, float]:
    """min / median / max hns over hours with a positive schedule (optionally tight ones)."""
    vals = np.array([r.hns for r in records if r.r_bar > 0 and (r.tight or not tight_only)])
    if vals.size == 0:
        return {"hours": 0, "min": float("nan"), "median": float("nan"), "max": float("nan")}
    return {"hours": int(vals.size), "min": float(vals.min()),
            "median": float(np.median(vals)), "max": float(vals.max())}


def cost_table(results: Dict[str, SimulationResult]) -> List[dict]:
    rows = []
    base = results.get("disabled")
    for name, res in results.items():
        rows.append({"run": name, "total_cost": res.total_cost,
                     "delta_vs_disabled": res.total_cost - base.total_cost if base else float("nan"),
                     "max_residual_gw": res.max_residual,
                     "tight_hours": int(res.column("tight").sum())})
    return rows


__all__ = ["run_case", "hns_records", "hns_stats", "cost_table"]
