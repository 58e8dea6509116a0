"""Experiment runner: pass@k tables, reuse efficiency, sweeps, ablations.

Episodes bucket by the structure of their ground-truth workflow (linear
buckets 2-3 / 4-6 / 7+ by task count, nested buckets 1-2 / 3-4 / 5+ by
depth).  Reports carry only deterministic quantities, so a fixed seed
and config reproduce them byte for byte; parallel execution partitions
episodes over cloned networks and merges life deltas commutatively, so
aggregate numbers do not depend on scheduling.
"""

from __future__ import annotations

import copy
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

from . import workflow as wf
from .agents import AgentNetwork, build_agents, eliminate_and_refresh
from .corpus import CorpusRecord, load_corpus
from .errors import ConfigError, DecompositionFailure
from .orchestrator import EpisodeResult, SolveConfig, solve

ABLATABLE = ("scale_control", "verification", "hypothesis", "input_goal", "output_goal")


@dataclass(frozen=True)
class ExperimentConfig:
    train_path: str = ""
    test_path: str = ""
    k_list: tuple[int, ...] = (1, 3, 5)
    theta: float = 0.8
    eta: float = 0.95
    max_depth: int = 8
    repair_budget: int = 5
    mode: str = "oracle"
    seed: int = 0
    parallelism: int = 1
    disabled: frozenset[str] = frozenset()
    library_path: str | None = None
    sweep_sizes: tuple[int, ...] | None = None
    report_path: str | None = None
    csv_path: str | None = None
    transcripts_path: str | None = None

    def __post_init__(self):
        if list(self.k_list) != sorted(self.k_list) or len(set(self.k_list)) != len(self.k_list):
            raise ConfigError("k_list must be strictly ascending")
        if any(k < 1 for k in self.k_list):
            raise ConfigError("k values must be >= 1")
        unknown = set(self.disabled) - set(ABLATABLE)
        if unknown:
            raise ConfigError(f"unknown ablation component(s): {sorted(unknown)}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def solve_config(self) -> SolveConfig:
        return SolveConfig(
            theta=self.theta,
            eta=self.eta,
            max_depth=self.max_depth,
            k=max(self.k_list),
            repair_budget=self.repair_budget,
            mode=self.mode,
            seed=self.seed,
            verification="verification" not in self.disabled,
            hypothesis="hypothesis" not in self.disabled,
            scale_control="scale_control" not in self.disabled,
            input_goal="input_goal" not in self.disabled,
            output_goal="output_goal" not in self.disabled,
        )


@dataclass
class BucketedEpisode:
    record: CorpusRecord
    episode: EpisodeResult

    @property
    def bucket(self) -> str:
        return self.record.bucket


@dataclass
class MetricsReport:
    per_bucket: dict[str, dict[int, float]]
    reuse_pct: float | None
    life_summary: dict[str, int]
    runtime: dict[str, int]
    config_echo: dict
    sweep: dict[int, float] | None = None

    def __post_init__(self):
        for bucket, table in self.per_bucket.items():
            ks = sorted(table)
            values = [table[k] for k in ks]
            if any(b < a for a, b in zip(values, values[1:])):
                raise AssertionError(f"pass@k not monotone in bucket {bucket!r}: {table}")

    def to_doc(self) -> dict:
        return {
            "per_bucket": {
                bucket: {str(k): v for k, v in sorted(table.items())}
                for bucket, table in sorted(self.per_bucket.items())
            },
            "reuse_pct": self.reuse_pct,
            "life_summary": dict(sorted(self.life_summary.items())),
            "runtime": dict(sorted(self.runtime.items())),
            "config": self.config_echo,
            "sweep": ({str(k): v for k, v in sorted(self.sweep.items())}
                      if self.sweep is not None else None),
        }

    def csv_rows(self) -> list[tuple[str, int, float]]:
        rows = []
        for bucket in sorted(self.per_bucket):
            for k in sorted(self.per_bucket[bucket]):
                rows.append((bucket, k, self.per_bucket[bucket][k]))
        return rows


def write_atomic(path: str | FsPath, text: str) -> None:
    """Write via a sibling temp file and rename, so failures leave no partial file."""
    path = FsPath(path)
    handle = tempfile.NamedTemporaryFile(
        "w", dir=path.parent, prefix=path.name + ".", suffix=".tmp",
        delete=False, encoding="utf-8",
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        try:
            os.unlink(handle.name)
        except OSError:
            pass
        raise


# --- metrics ------------------------------------------------------------------


def pass_at_k(episodes: list[BucketedEpisode], ks: tuple[int, ...]) -> dict[str, dict[int, float]]:
    """Per bucket: the fraction of episodes with a passing candidate in ranks 1..k."""
    buckets: dict[str, list[int | None]] = {}
    for item in episodes:
        buckets.setdefault(item.bucket, []).append(item.episode.passed_rank())
    table: dict[str, dict[int, float]] = {}
    for bucket, ranks in buckets.items():
        table[bucket] = {
            k: sum(1 for r in ranks if r is not None and r <= k) / len(ranks)
            for k in ks
        }
    return table


def overall_pass_at_1(episodes: list[BucketedEpisode]) -> float:
    if not episodes:
        return 0.0
    hits = sum(1 for item in episodes if item.episode.passed_rank() == 1)
    return hits / len(episodes)


def reuse_efficiency(episodes: list[BucketedEpisode], library: list[wf.Workflow]) -> float:
    """Percentage of passing episodes whose final workflow contains a library pattern."""
    if not library:
        return 0.0
    passing = []
    for item in episodes:
        rank = item.episode.passed_rank()
        if rank is not None:
            passing.append(item.episode.candidates[rank - 1][0])
    if not passing:
        return 0.0
    hits = sum(1 for flow in passing if wf.find_subflows(flow, library))
    return 100.0 * hits / len(passing)


# --- episode execution -----------------------------------------------------------


def run_episode(net: AgentNetwork, record: CorpusRecord,
                solve_cfg: SolveConfig) -> BucketedEpisode:
    try:
        episode = solve(net, record.goal, solve_cfg, expected=record.workflow)
    except DecompositionFailure:
        # The no-hypothesis configuration cannot even propose a structure.
        episode = EpisodeResult(
            goal_id=record.goal.id, candidates=[], repairs_applied=[],
            outcomes=[], steps=0, seed=solve_cfg.seed, early_failure=True,
        )
    return BucketedEpisode(record=record, episode=episode)


def _run_batch(net: AgentNetwork, records: list[tuple[int, CorpusRecord]],
               solve_cfg: SolveConfig, scale_control: bool,
               life_summary: dict[str, int]) -> list[tuple[int, BucketedEpisode]]:
    out = []
    for index, record in records:
        out.append((index, run_episode(net, record, solve_cfg)))
        if scale_control:
            log = eliminate_and_refresh(net)
            life_summary["eliminations"] += len(log.archived)
            life_summary["revivals"] += len(log.revived)
            life_summary["spawns"] += len(log.spawned)
    return out


def run_episodes(net: AgentNetwork, records: list[CorpusRecord],
                 solve_cfg: SolveConfig, parallelism: int = 1
                 ) -> tuple[list[BucketedEpisode], dict[str, int]]:
    """Run every record; with parallelism > 1, batches run on cloned networks
    and life/stat deltas merge back by summation, clamped to the life bounds."""
    life_summary = {"eliminations": 0, "revivals": 0, "spawns": 0}
    indexed = list(enumerate(records))
    scale = solve_cfg.scale_control
    if parallelism <= 1 or len(records) <= 1:
        results = _run_batch(net, indexed, solve_cfg, scale, life_summary)
        return [ep for _, ep in sorted(results, key=lambda x: x[0])], life_summary

    batches = [indexed[i::parallelism] for i in range(parallelism)]
    batches = [b for b in batches if b]
    clones = [copy.deepcopy(net) for _ in batches]
    initial_life = {a.agent_id: a.life for a in net.active + net.archive}
    initial_stats = {
        a.agent_id: (a.stats.successes, a.stats.failures, a.stats.reuses,
                     a.stats.generalizations)
        for a in net.active + net.archive
    }
    summaries = [dict(life_summary) for _ in batches]
    with ThreadPoolExecutor(max_workers=len(batches)) as pool:
        futures = [
            pool.submit(_run_batch, clone, batch, solve_cfg, scale, summary)
            for clone, batch, summary in zip(clones, batches, summaries)
        ]
        collected: list[tuple[int, BucketedEpisode]] = []
        for future in futures:
            collected.extend(future.result())
    for summary in summaries:
        for key in life_summary:
            life_summary[key] += summary[key]
    # Merge commutatively: order of clones cannot change the sums.
    for agent in net.active + net.archive:
        base_life = initial_life[agent.agent_id]
        base_stats = initial_stats[agent.agent_id]
        delta_life = 0.0
        deltas = [0, 0, 0, 0]
        for clone in clones:
            try:
                twin = clone.agent_by_id(agent.agent_id)
            except KeyError:
                continue
            delta_life += twin.life - base_life
            deltas[0] += twin.stats.successes - base_stats[0]
            deltas[1] += twin.stats.failures - base_stats[1]
            deltas[2] += twin.stats.reuses - base_stats[2]
            deltas[3] += twin.stats.generalizations - base_stats[3]
        agent.life = min(net.config.l_max, max(0.0, base_life + delta_life))
        agent.stats.successes = base_stats[0] + deltas[0]
        agent.stats.failures = base_stats[1] + deltas[1]
        agent.stats.reuses = base_stats[2] + deltas[2]
        agent.stats.generalizations = base_stats[3] + deltas[3]
    for clone in clones:
        for signature, goals in clone.solved_shapes.items():
            net.solved_shapes.setdefault(signature, set()).update(goals)
    collected.sort(key=lambda x: x[0])
    return [ep for _, ep in collected], life_summary


# --- experiments -------------------------------------------------------------------


def _config_echo(config: ExperimentConfig) -> dict:
    return {
        "train": config.train_path,
        "test": config.test_path,
        "k_list": list(config.k_list),
        "theta": config.theta,
        "eta": config.eta,
        "max_depth": config.max_depth,
        "repair_budget": config.repair_budget,
        "mode": config.mode,
        "seed": config.seed,
        "parallelism": config.parallelism,
        "disabled": sorted(config.disabled),
    }


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Build the network from the train split, solve every test goal, aggregate.

    Writes the report (JSON), the flat CSV, and line-delimited episode
    transcripts when the corresponding paths are set.
    """
    for label, path in (("train", config.train_path), ("test", config.test_path)):
        if not path or not os.path.exists(path):
            raise ConfigError(f"{label} corpus file missing: {path!r}")
    train = load_corpus(config.train_path, strip_oracle=True)
    test = load_corpus(config.test_path)
    library: list[wf.Workflow] = []
    if config.library_path:
        if not os.path.exists(config.library_path):
            raise ConfigError(f"library file missing: {config.library_path!r}")
        with open(config.library_path, "r", encoding="utf-8") as handle:
            library = [wf.from_doc(json.loads(line)) for line in handle if line.strip()]

    solve_cfg = config.solve_config()
    net = build_agents([(r.goal, r.workflow) for r in train], rng_seed=config.seed)
    episodes, life_summary = run_episodes(net, test, solve_cfg, config.parallelism)

    sweep = None
    if config.sweep_sizes:
        sweep = {}
        for size in config.sweep_sizes:
            subset = train[:size]
            sub_net = build_agents(
                [(r.goal, r.workflow) for r in subset], rng_seed=config.seed
            )
            sub_eps, _ = run_episodes(sub_net, test, solve_cfg, config.parallelism)
            sweep[size] = overall_pass_at_1(sub_eps)

    report = MetricsReport(
        per_bucket=pass_at_k(episodes, config.k_list),
        reuse_pct=reuse_efficiency(episodes, library) if library else None,
        life_summary=life_summary,
        runtime={
            "episodes": len(episodes),
            "solver_steps": sum(e.episode.steps for e in episodes),
            "repairs": sum(len(e.episode.repairs_applied) for e in episodes),
            "early_failures": sum(1 for e in episodes if e.episode.early_failure),
        },
        config_echo=_config_echo(config),
        sweep=sweep,
    )

    if config.transcripts_path:
        lines = []
        for item in episodes:
            doc = item.episode.to_doc()
            doc["bucket"] = item.bucket
            lines.append(wf.canonical_json(doc))
        write_atomic(config.transcripts_path, "\n".join(lines) + ("\n" if lines else ""))
    if config.report_path:
        write_atomic(config.report_path, wf.canonical_json(report.to_doc()) + "\n")
    if config.csv_path:
        rows = ["bucket,k,value"]
        rows.extend(f"{bucket},{k},{value}" for bucket, k, value in report.csv_rows())
        write_atomic(config.csv_path, "\n".join(rows) + "\n")
    return report


def ablate(config: ExperimentConfig, component: str) -> MetricsReport:
    """Re-run the experiment with one component disabled."""
    if component not in ABLATABLE:
        raise ConfigError(f"unknown ablation component {component!r}")
    stripped = replace(config, disabled=config.disabled | {component})
    return run_experiment(stripped)
