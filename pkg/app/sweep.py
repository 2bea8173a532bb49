"""
Parameter sweeps and naive-versus-refined comparison tables.

Every (point, trial) session gets a seed derived from the master seed by
the labels ("point", i, "trial", j), so rows do not depend on the number of
worker threads or on completion order.
"""
import csv
import itertools
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence, TextIO

from app.analytics import avg_error_biased, detection_table, sift_efficiency
from app.config import settings
from app.models import BiasedAttackParams, ProtocolConfig, SessionSummary, SweepAxis, Verdict
from app.protocol import run_session
from app.rng import RandomStream

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "trial",
    "seed",
    "sift_fraction",
    "e1_hat",
    "e2_hat",
    "e_bar_hat",
    "verdict_naive",
    "verdict_refined",
    "abort_reason",
    "raw_key_len",
    "final_key_len",
    "theory_sift_fraction",
    "theory_e1",
    "theory_e2",
    "theory_e_bar",
    "theory_naive",
    "theory_refined",
]

COMPARE_COLUMNS = [
    "p1",
    "p2",
    "epsilon_alice",
    "epsilon_bob",
    "e_max",
    "trials",
    "theory_naive",
    "theory_refined",
    "sim_naive",
    "sim_refined",
    "sim_naive_accepts",
    "sim_refined_accepts",
    "mean_e1_hat",
    "mean_e2_hat",
    "mean_e_bar_hat",
    "agree",
]


def worker_count(threads: Optional[int] = None) -> int:
    limit = threads if threads is not None else settings.threads
    if limit:
        return max(1, limit)
    return min(32, os.cpu_count() or 1)


@dataclass(frozen=True)
class SessionTask:
    point: int
    trial: int
    values: dict[str, Any]
    config: ProtocolConfig
    attack: Optional[BiasedAttackParams]


def apply_overrides(
    config: ProtocolConfig, attack: Optional[BiasedAttackParams], values: dict[str, Any]
) -> tuple[ProtocolConfig, Optional[BiasedAttackParams]]:
    """Config and attack for one grid point; p1/p2 address the attack."""
    attack_updates = {k: v for k, v in values.items() if k in ("p1", "p2")}
    data = config.model_dump()
    for key, value in values.items():
        if key == "epsilon":
            data["epsilon_alice"] = data["epsilon_bob"] = value
        elif key not in attack_updates:
            data[key] = value
    point_config = ProtocolConfig.model_validate(data)
    if attack_updates:
        base = attack.model_dump() if attack is not None else {}
        attack = BiasedAttackParams.model_validate({**base, **attack_updates})
    return point_config, attack


def grid_points(axes: Sequence[SweepAxis]) -> list[dict[str, Any]]:
    names = [axis.name for axis in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(axis.values() for axis in axes))]


def plan_tasks(
    config: ProtocolConfig,
    attack: Optional[BiasedAttackParams],
    points: Sequence[dict[str, Any]],
    trials: int,
) -> list[SessionTask]:
    master = RandomStream(config.seed)
    tasks = []
    for i, values in enumerate(points):
        point_config, point_attack = apply_overrides(config, attack, values)
        for j in range(trials):
            seed = master.derive_seed("point", i, "trial", j)
            tasks.append(SessionTask(i, j, values, point_config.with_seed(seed), point_attack))
    return tasks


def _run_task(task: SessionTask) -> SessionSummary:
    try:
        return run_session(task.config, task.attack).summary()
    except Exception:
        logger.exception("Session failed at point %d trial %d", task.point, task.trial)
        raise


def run_tasks(tasks: Sequence[SessionTask], threads: Optional[int] = None) -> list[tuple[SessionTask, SessionSummary]]:
    workers = worker_count(threads)
    logger.info("Running %d sessions on %d workers", len(tasks), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        summaries = list(pool.map(_run_task, tasks))
    results = sorted(zip(tasks, summaries), key=lambda pair: (pair[0].point, pair[0].trial))
    return results


def theory_columns(config: ProtocolConfig, attack: Optional[BiasedAttackParams]) -> dict[str, Any]:
    p1, p2 = (attack.p1, attack.p2) if attack is not None else (0.0, 0.0)
    e_bar = avg_error_biased(config.epsilon_alice, p1, p2, config.epsilon_bob)
    naive, refined = theory_verdicts(config, p1, p2)
    return {
        "theory_sift_fraction": sift_efficiency(config.epsilon_alice, config.epsilon_bob),
        "theory_e1": p2 / 2,
        "theory_e2": p1 / 2,
        "theory_e_bar": e_bar,
        "theory_naive": naive.value,
        "theory_refined": refined.value,
    }


def theory_verdicts(config: ProtocolConfig, p1: float, p2: float) -> tuple[Verdict, Verdict]:
    if config.epsilon_alice == config.epsilon_bob:
        return detection_table(config.epsilon_alice, p1, p2, config.e_max)
    naive = avg_error_biased(config.epsilon_alice, p1, p2, config.epsilon_bob) < config.e_max
    refined = p2 / 2 < config.e_max and p1 / 2 < config.e_max
    return (Verdict.ACCEPT if naive else Verdict.ABORT), (Verdict.ACCEPT if refined else Verdict.ABORT)


def _result_row(task: SessionTask, summary: SessionSummary) -> dict[str, Any]:
    row = dict(task.values)
    row.update({
        "trial": task.trial,
        "seed": summary.seed,
        "sift_fraction": summary.sift_fraction,
        "e1_hat": summary.e1_hat,
        "e2_hat": summary.e2_hat,
        "e_bar_hat": summary.e_bar_hat,
        "verdict_naive": summary.verdict_naive.value,
        "verdict_refined": summary.verdict_refined.value,
        "abort_reason": summary.abort_reason.value if summary.abort_reason else None,
        "raw_key_len": summary.raw_key_len,
        "final_key_len": summary.final_key_len,
    })
    row.update(theory_columns(task.config, task.attack))
    return row


def sweep(
    config: ProtocolConfig,
    attack: Optional[BiasedAttackParams],
    axes: Sequence[SweepAxis],
    trials: int = 1,
    threads: Optional[int] = None,
) -> tuple[list[dict[str, Any]], list[SessionSummary]]:
    """One row per (grid point, trial), ordered by point then trial."""
    tasks = plan_tasks(config, attack, grid_points(axes), trials)
    results = run_tasks(tasks, threads)
    return [_result_row(task, summary) for task, summary in results], [s for _, s in results]


def sweep_columns(axes: Sequence[SweepAxis]) -> list[str]:
    return [axis.name for axis in axes] + RESULT_COLUMNS


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def compare(
    config: ProtocolConfig,
    pairs: Sequence[tuple[float, float]],
    trials: int = 1,
    threads: Optional[int] = None,
) -> tuple[list[dict[str, Any]], list[SessionSummary]]:
    """Theoretical versus simulated verdicts for each (p1, p2) pair.

    Simulated verdicts are the majority over ``trials`` sessions; ``agree``
    is False where they differ from theory.
    """
    points = [{"p1": p1, "p2": p2} for p1, p2 in pairs]
    results = run_tasks(plan_tasks(config, None, points, trials), threads)
    rows = []
    for i, (p1, p2) in enumerate(pairs):
        summaries = [s for task, s in results if task.point == i]
        naive_accepts = sum(s.verdict_naive is Verdict.ACCEPT for s in summaries)
        refined_accepts = sum(s.verdict_refined is Verdict.ACCEPT for s in summaries)
        sim_naive = Verdict.ACCEPT if 2 * naive_accepts > len(summaries) else Verdict.ABORT
        sim_refined = Verdict.ACCEPT if 2 * refined_accepts > len(summaries) else Verdict.ABORT
        theory_naive, theory_refined = theory_verdicts(config, p1, p2)
        rows.append({
            "p1": p1,
            "p2": p2,
            "epsilon_alice": config.epsilon_alice,
            "epsilon_bob": config.epsilon_bob,
            "e_max": config.e_max,
            "trials": len(summaries),
            "theory_naive": theory_naive.value,
            "theory_refined": theory_refined.value,
            "sim_naive": sim_naive.value,
            "sim_refined": sim_refined.value,
            "sim_naive_accepts": naive_accepts,
            "sim_refined_accepts": refined_accepts,
            "mean_e1_hat": _mean(s.e1_hat for s in summaries),
            "mean_e2_hat": _mean(s.e2_hat for s in summaries),
            "mean_e_bar_hat": _mean(s.e_bar_hat for s in summaries),
            "agree": theory_naive == sim_naive and theory_refined == sim_refined,
        })
    return rows, [s for _, s in results]


def write_csv(rows: Sequence[dict[str, Any]], columns: Sequence[str], stream: TextIO) -> None:
    """RFC 4180 table: CRLF line endings, minimal quoting, empty cells for None."""
    writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\r\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def write_json(rows: Sequence[dict[str, Any]], stream: TextIO) -> None:
    json.dump(list(rows), stream, indent=2)
    stream.write("\n")
