"""Run a configured experiment and write its output bundle.

A bundle holds one CSV per cell, ``summary.txt`` (``key = value`` lines,
17 significant digits) and, unless disabled, SVG curves of cumulative
regret and cumulative queries. Cells are independent (config, seed) pairs;
cell ``i`` uses seed ``seed + i`` and owns its random streams, so the
bundle does not depend on how cells are scheduled.
"""

from __future__ import annotations

import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import bandit, imitation, selsamp
from ..classes import (FiniteClass, LinearClass, binary_reduction, disagreement_estimate,
                       eluder_dimension, hard_margin_class, random_simplex_class, star_number,
                       strong_star_number)
from ..core import IDENTITY, LinkSpec, identity_link, softmax_link
from ..oracles import (BANDIT, BANDIT_TWO_QUERY, FULL, PER_EXPERT, PER_STEP, oracle_init,
                       regret_budget)
from .config import ExperimentConfig
from .rng import CONTEXTS, INSTANCE, RngStream
from .svg import line_chart


class RunError(RuntimeError):
    """A cell failed; the message names the cell and its seed."""


@dataclass
class CellResult:
    cell: int
    seed: int
    csv: str
    summary: dict
    curves: dict = field(default_factory=dict)


# ---------------------------------------------------------------- instances


def _finite_from_json(obj) -> FiniteClass:
    if "codes" in obj:
        return FiniteClass(truth=int(obj.get("truth", 0)), codes=obj["codes"],
                           codebook=obj["codebook"], contexts=obj.get("contexts"),
                           score_bound=obj.get("score_bound"))
    return FiniteClass(obj["table"], int(obj.get("truth", 0)), contexts=obj.get("contexts"),
                       score_bound=obj.get("score_bound"))


def load_class_file(path) -> object:
    """Read a class description.

    ``{"type": "finite", "table": [...], "truth": i}`` (or ``codes`` plus
    ``codebook``), ``{"type": "linear", "features": ..., "truth_weights": ...}``
    or ``{"type": "experts", "experts": [finite, ...]}`` for several experts.
    """
    with open(path) as fh:
        obj = json.load(fh)
    kind = obj.get("type", "finite")
    if kind == "finite":
        return _finite_from_json(obj)
    if kind == "linear":
        return LinearClass(obj["features"], obj["truth_weights"],
                           float(obj.get("weight_bound", 1.0)), float(obj.get("score_bound", 1.0)))
    if kind == "experts":
        return [_finite_from_json(e) for e in obj["experts"]]
    raise ValueError(f"unknown class type {kind!r}")


def build_link(cfg: ExperimentConfig) -> LinkSpec:
    if cfg.link == IDENTITY:
        if cfg.lam not in (None, 1.0) or cfg.gamma not in (None, 1.0):
            raise ValueError("identity link has lambda = gamma = 1")
        return identity_link()
    base = softmax_link(cfg.K)
    return LinkSpec(base.kind, base.lam if cfg.lam is None else cfg.lam,
                    base.gamma if cfg.gamma is None else cfg.gamma, base.score_bound)


def build_classes(cfg: ExperimentConfig):
    """Class (or list of expert classes for ss-m) drawn from the config seed."""
    if cfg.class_source == "file":
        cls = load_class_file(cfg.class_path())
        if cfg.kind == "ss-m" and not isinstance(cls, list):
            raise ValueError("kind=ss-m needs a class file of type experts")
        return cls
    rng = RngStream(cfg.seed)[INSTANCE]
    if cfg.class_source == "hard-margin":
        make = lambda: hard_margin_class(rng, cfg.members, cfg.contexts, cfg.K)
    else:
        make = lambda: random_simplex_class(rng, cfg.members, cfg.contexts, cfg.K)
    if cfg.kind == "ss-m":
        return [make() for _ in range(cfg.M)]
    return make()


def cell_seeds(cfg: ExperimentConfig) -> list:
    return [cfg.seed + i for i in range(cfg.runs)]


# ---------------------------------------------------------------- cells


def _budget(cfg, cls, link, flavor, count=1):
    oracle = oracle_init(cls, link, cfg.eta)
    return regret_budget(flavor, oracle.regret_bound(cfg.T), cfg.T, cfg.delta,
                         lam=link.lam, count=count, n_actions=cfg.K).psi


def _contexts(cls, seed, horizon):
    return RngStream(seed)[CONTEXTS].integers(cls.n_contexts, size=horizon)


def _csv_text(log) -> str:
    buf = io.StringIO()
    log.to_csv(buf)
    return buf.getvalue()


def _runlog_summary(log) -> dict:
    out = {"regret": log.regret, "expected_regret": log.expected_regret,
           "queries": log.n_queries}
    for e, n in sorted(log.t_eps.items()):
        out[f"t_eps[{e:g}]"] = n
    return out


def _curves(values_r, values_q):
    t = np.arange(1, len(values_r) + 1)
    return {"regret": (t, np.cumsum(values_r)), "queries": (t, np.cumsum(values_q))}


def _run_selsamp(cfg, link, cls, seed):
    contexts = _contexts(cls[0] if isinstance(cls, list) else cls, seed, cfg.T)
    summary = {}
    if cfg.kind == "ss":
        psi = _budget(cfg, cls, link, FULL)
        log = selsamp.sage_run(cls, link, psi, contexts, seed, learning_rate=cfg.eta,
                               gamma=cfg.gamma, eps_grid=cfg.eps_grid,
                               reference_widths=cfg.reference_widths)
    elif cfg.kind == "ss-dis":
        psi = _budget(cfg, cls, link, FULL)
        log = selsamp.dis_run(cls, link, psi, contexts, seed, learning_rate=cfg.eta,
                              gamma=cfg.gamma, eps_grid=cfg.eps_grid)
    elif cfg.kind == "ss-m":
        psi = [_budget(cfg, c, link, PER_EXPERT, count=len(cls)) for c in cls]
        agg = selsamp.Aggregator(cfg.aggregator, cfg.rho)
        log = selsamp.sagem_run(cls, link, psi, agg, contexts, seed, learning_rate=cfg.eta,
                                gamma=cfg.gamma, resolution=cfg.resolution,
                                eps_grid=cfg.eps_grid)
    elif cfg.kind == "bandit":
        psi = _budget(cfg, cls, link, BANDIT)
        log = bandit.sage_bandit_run(cls, link, psi, contexts, seed, learning_rate=cfg.eta,
                                     threshold=cfg.xi_threshold, eps_grid=cfg.eps_grid)
        summary["anomalies"] = len(log.anomalies)
    else:
        psi = _budget(cfg, cls, link, BANDIT_TWO_QUERY)
        log = bandit.multiquery_bandit_run(cls, link, psi, contexts, seed,
                                           learning_rate=cfg.eta, eps_grid=cfg.eps_grid)
    summary = {**_runlog_summary(log), "psi": psi, **summary}
    return _csv_text(log), summary, _curves(log.column("inst_regret"), log.column("queried"))


def _il_env(cfg, seed):
    if cfg.env == "tree":
        return imitation.tree_env(cfg.H, seed, cfg.bernoulli)
    return imitation.ChainEnv(horizon=cfg.H, n_regions=cfg.regions)


def _il_summary(log):
    out = {"regret": log.regret, "queries": log.n_queries}
    for h, counts in sorted(log.t_eps.items()):
        for e, n in sorted(counts.items()):
            out[f"t_eps[h={h},{e:g}]"] = n
    return out


def _il_curves(log):
    r = log.column("comparator_reward") - log.column("inst_reward")
    return _curves(r, log.column("queried"))


def _run_il(cfg, link, seed):
    env = _il_env(cfg, seed)
    if cfg.kind == "il":
        psi = _budget(cfg, env.classes[0], link, PER_STEP, count=env.horizon)
        log = imitation.ravioli_run(env, link, psi, cfg.T, seed, learning_rate=cfg.eta,
                                    gamma=cfg.gamma, eps_grid=cfg.eps_grid,
                                    reference_widths=cfg.reference_widths)
    else:
        psi = _budget(cfg, env.multi_classes[0][0], link, PER_STEP, count=env.horizon)
        agg = selsamp.Aggregator(cfg.aggregator, cfg.rho)
        log = imitation.ravioli_m_run(env, link, psi, agg, cfg.T, seed, learning_rate=cfg.eta,
                                      gamma=cfg.gamma, resolution=cfg.resolution,
                                      eps_grid=cfg.eps_grid)
    agg = log.aggregator
    summary = {**_il_summary(log), "psi": psi,
               "recovers_comparator": imitation.recovers_comparator(env, log.policy, link,
                                                                    aggregator=agg)}
    return _csv_text(log), summary, _il_curves(log)


def _run_separation(cfg, link, seed):
    env = imitation.tree_env(cfg.H, seed, cfg.bernoulli)
    psi = _budget(cfg, env.classes[0], link, PER_STEP, count=env.horizon)
    log = imitation.ravioli_run(env, link, psi, cfg.T, seed, learning_rate=cfg.eta,
                                gamma=cfg.gamma, eps_grid=cfg.eps_grid)
    n_demos = cfg.T if cfg.demos is None else cfg.demos
    demos = imitation.expert_demos(env, link, n_demos, seed)
    bc = imitation.behavior_cloning(demos, env.n_actions)
    inter = imitation.recovers_comparator(env, log.policy, link)
    offline = imitation.recovers_comparator(env, bc, link)
    summary = {"interactive_recovers": inter, "bc_recovers": offline,
               "queries": log.n_queries, "regret": log.regret, "psi": psi}
    return _csv_text(log), summary, _il_curves(log)


def run_cell(cfg: ExperimentConfig, cell: int, seed: int) -> CellResult:
    """Run one cell; exceptions are wrapped with the cell id and seed."""
    try:
        link = build_link(cfg)
        if cfg.kind in ("il", "il-m"):
            csv, summary, curves = _run_il(cfg, link, seed)
        elif cfg.kind == "bc-vs-il":
            csv, summary, curves = _run_separation(cfg, link, seed)
        else:
            cls = build_classes(cfg)
            csv, summary, curves = _run_selsamp(cfg, link, cls, seed)
    except Exception as exc:
        raise RunError(f"cell {cell} (seed {seed}, kind {cfg.kind}): {exc}") from exc
    return CellResult(cell, seed, csv, summary, curves)


def complexity_summary(cfg: ExperimentConfig) -> dict:
    """Complexity measures of the configured class at scale ``beta``."""
    cls = build_classes(cfg)
    if not isinstance(cls, FiniteClass):
        raise ValueError("complexity measures need a finite class")
    out = {"members": cls.n_members, "contexts": cls.n_contexts, "actions": cls.n_actions,
           "beta": cfg.beta, "eluder": eluder_dimension(cls, cfg.beta),
           "star": strong_star_number(cls, cfg.beta),
           "eps0": cfg.eps0,
           "disagreement_estimate": disagreement_estimate(cls, cfg.eps0, cfg.beta)}
    if cfg.zeta is not None:
        scalar = cls if cls.n_actions == 1 else binary_reduction(cls)
        out["zeta"] = cfg.zeta
        out["weak_star"] = star_number(scalar, cfg.zeta, cfg.beta, target=cls.truth)
    return out


# ---------------------------------------------------------------- bundle


def worker_count(n_cells: int) -> int:
    cap = os.environ.get("AIL_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_cells))


def _run_cells(cfg, progress=None) -> list:
    seeds = cell_seeds(cfg)
    workers = worker_count(len(seeds))
    results = {}
    if workers == 1:
        for i, s in enumerate(seeds):
            results[i] = run_cell(cfg, i, s)
            if progress:
                progress(f"cell {i + 1}/{len(seeds)} done (seed {s})")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, cfg, i, s): i for i, s in enumerate(seeds)}
            for fut in futures:
                i = futures[fut]
                results[i] = fut.result()
                if progress:
                    progress(f"cell {i + 1}/{len(seeds)} done (seed {seeds[i]})")
    return [results[i] for i in sorted(results)]


def format_summary(items: dict) -> str:
    return "".join(f"{k} = {selsamp.fmt(v)}\n" for k, v in items.items())


def _prepare_out(path: Path):
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RunError(f"output directory {path} is not writable: {exc}") from exc


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress=None) -> dict:
    """Run every cell and write the bundle; returns ``{filename: text}``."""
    out = Path(cfg.out_dir if out_dir is None else out_dir)
    _prepare_out(out)
    head = {"kind": cfg.kind, "seed": cfg.seed}
    files = {}
    if cfg.kind == "complexity":
        try:
            summary = {**head, **complexity_summary(cfg)}
        except Exception as exc:
            raise RunError(f"complexity (seed {cfg.seed}): {exc}") from exc
        files["summary.txt"] = format_summary(summary)
    else:
        cells = _run_cells(cfg, progress)
        summary = {**head, "T": cfg.T, "runs": len(cells)}
        for c in cells:
            tag = f"cell_{c.cell:03d}"
            files[f"{tag}.csv"] = c.csv
            summary[f"{tag}.seed"] = c.seed
            for k, v in c.summary.items():
                summary[f"{tag}.{k}"] = v
        summary.update(_aggregate(cfg, cells))
        files["summary.txt"] = format_summary(summary)
        if cfg.kind == "bc-vs-il":
            files["separation.csv"] = _separation_table(cells)
        if cfg.svg:
            for name, label in (("regret", "cumulative regret"), ("queries", "cumulative queries")):
                series = {f"seed {c.seed}": c.curves[name] for c in cells}
                files[f"{name}.svg"] = line_chart(series, f"{cfg.kind}: {label}", "t", label)
    for name, text in files.items():
        (out / name).write_text(text)
    return files


def _aggregate(cfg, cells) -> dict:
    if cfg.kind == "bc-vs-il":
        n = len(cells)
        inter = sum(c.summary["interactive_recovers"] for c in cells) / n
        bc = sum(c.summary["bc_recovers"] for c in cells) / n
        ratio = inter / bc if bc > 0 else math.inf
        return {"interactive_rate": inter, "bc_rate": bc, "rate_ratio": ratio}
    regrets = [c.summary["regret"] for c in cells]
    queries = [c.summary["queries"] for c in cells]
    return {"mean_regret": float(np.mean(regrets)), "mean_queries": float(np.mean(queries))}


def _separation_table(cells) -> str:
    lines = ["cell,seed,interactive,bc"]
    for c in cells:
        lines.append(",".join(selsamp.fmt(v) for v in (
            c.cell, c.seed, c.summary["interactive_recovers"], c.summary["bc_recovers"])))
    return "\n".join(lines) + "\n"


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
