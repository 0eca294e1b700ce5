from __future__ import annotations

import json
import logging
import math
import multiprocessing as mp
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
from scipy.stats import spearmanr

from data.repositories import (
    CsvTableRepository,
    GraphRepository,
    ProblemDataRepository,
    RunRecordRepository,
    TerminationRunRepository,
)
from models import (
    CounterexampleConfig,
    EquivalenceReport,
    InvalidArgumentError,
    InvariantLedger,
    RunConfig,
    RunRecord,
    TerminationResult,
    Variant,
)
from services.counterexample_service import counterexample_setup, verify_equivalence
from services.graph_service import build_gn_prime, build_standard, gn_prime_spectrum, mixing_matrix, parse_graph
from services.problem_service import estimate_optimum, make_counterexample_problem, make_quartic_elasticnet
from services.schedule_service import parse_schedule
from services.solver_service import DEFAULT_ITERATION_CAP, run, terminate_on_mapping
from services.verify_service import REPORT_HEADER, SuiteReport, VerifyHorizons, run_suite

logger = logging.getLogger(__name__)

SPECTRUM_HEADER = ("index", "closed_form", "numeric", "abs_diff")
COUNTEREXAMPLE_HEADER = ("t", "y", "eps_sqrt_t_y", "x_v_solver", "abs_diff")
INDEPENDENCE_HEADER = ("t", "scaled_gap", "flag")
INVERSION_HEADER = ("beta", "mean_iters_centralized", "se_c", "mean_iters_distributed", "se_d", "capped_runs")
INVERSION_EXPERIMENT = "fig-inversion"


@dataclass(frozen=True, slots=True)
class InversionSetup:
    """Everything one fig-inversion draw needs; picklable for worker processes."""

    seed: int
    K: int = 10
    d: int = 2
    lambda1: float = 1.0
    lambda2: float = 1.0 / 20.0
    noise_std: float = 1.0 / 5.0
    n_agents: int = 10
    eps: float = 0.25
    threshold: float = 0.03
    zero_band: float = 1e-6
    cap: int = DEFAULT_ITERATION_CAP
    radius: float = 2.0

    @property
    def experiment_key(self) -> str:
        return (
            f"{INVERSION_EXPERIMENT}:seed={self.seed}:K={self.K}:d={self.d}:l1={self.lambda1!r}:"
            f"l2={self.lambda2!r}:noise={self.noise_std!r}:n={self.n_agents}:eps={self.eps!r}:"
            f"threshold={self.threshold!r}:zero_band={self.zero_band!r}:cap={self.cap}:radius={self.radius!r}"
        )

    def draw_seed(self, run_index: int) -> int:
        # same draw for every beta
        return int(np.random.SeedSequence([self.seed, run_index]).generate_state(1)[0])


@dataclass(slots=True)
class SpectrumResult:
    path: Path
    max_abs_diff: float
    sigma: float


@dataclass(slots=True)
class RunOutcome:
    path: Path
    record: RunRecord
    ledger: InvariantLedger


@dataclass(slots=True)
class InversionSummary:
    path: Path
    rows: list[tuple[float, float, float, float, float, int]]
    spearman_centralized: float
    distributed_non_monotone: bool


def _termination_pair(job: tuple[InversionSetup, float, int]) -> tuple[float, int, TerminationResult, TerminationResult]:
    setup, beta, run_index = job
    problem = make_quartic_elasticnet(
        K=setup.K,
        d=setup.d,
        lambda1=setup.lambda1,
        lambda2=setup.lambda2,
        noise_std=setup.noise_std,
        seed=setup.draw_seed(run_index),
        n_agents=setup.n_agents,
        radius=setup.radius,
    )
    schedule = parse_schedule(f"poly:{beta!r}")
    w = mixing_matrix(build_standard("line", setup.n_agents), setup.eps)
    centralized = terminate_on_mapping(
        None, problem, schedule, Variant.CENTRALIZED, setup.threshold, setup.zero_band, setup.cap
    )
    distributed = terminate_on_mapping(
        w, problem, schedule, Variant.MIX_AFTER_PROJECT, setup.threshold, setup.zero_band, setup.cap
    )
    return beta, run_index, centralized, distributed


def _independence_curve(job: tuple[int, float, int]) -> tuple[int, np.ndarray, np.ndarray]:
    n, beta, T = job
    cfg = CounterexampleConfig.simulation(n=n, eps=1.0 / n, T=T, beta=beta)
    setup = counterexample_setup(cfg)
    record = run(setup.mixing, setup.problem, setup.schedule, Variant.MIX_AFTER_PROJECT, T, sub_override=setup.selector)
    return n, record.t, record.scaled_gap


def _fan_out(worker, jobs: list, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield worker(job)
        return
    pool = mp.Pool(min(threads, len(jobs)))
    try:
        yield from pool.imap_unordered(worker, jobs)
    finally:
        pool.close()
        pool.join()


def _mean_and_se(values: list[int]) -> tuple[float, float]:
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        return math.nan, math.nan
    if array.size == 1:
        return float(array[0]), 0.0
    return float(array.mean()), float(array.std(ddof=1) / math.sqrt(array.size))


def _is_non_monotone(values: list[float]) -> bool:
    steps = np.diff(np.asarray(values, dtype=float))
    return bool(np.any(steps > 0) and np.any(steps < 0))


class ExperimentService:
    def __init__(
        self,
        tables: CsvTableRepository,
        records: RunRecordRepository,
        termination_runs: TerminationRunRepository,
        graphs: GraphRepository,
        problems: ProblemDataRepository,
        charts: bool = False,
    ) -> None:
        self.tables = tables
        self.records = records
        self.termination_runs = termination_runs
        self.graphs = graphs
        self.problems = problems
        self.charts = charts

    @property
    def out_dir(self) -> Path:
        return self.tables.out_dir

    def spectrum(self, n: int, eps: float) -> SpectrumResult:
        closed = np.array(gn_prime_spectrum(n, eps))
        w = mixing_matrix(build_gn_prime(n), eps)
        numeric = np.sort(np.linalg.eigvalsh(w.entries))[::-1]
        diffs = np.abs(numeric - closed)
        rows = [(index, closed[index], numeric[index], diffs[index]) for index in range(closed.size)]
        path = self.tables.write(f"spectrum_n{n}_eps{eps!r}", SPECTRUM_HEADER, rows)
        max_diff = float(diffs.max())
        logger.info("spectrum n=%d eps=%g: max |diff| = %.3e, sigma = %.12g", n, eps, max_diff, w.sigma)
        return SpectrumResult(path=path, max_abs_diff=max_diff, sigma=w.sigma)

    def run(self, config: RunConfig) -> RunOutcome:
        graph = parse_graph(config.graph)
        schedule = parse_schedule(config.schedule)
        extra = config.extra
        sub_override = None
        name = f"run_{config.problem}_{config.graph.replace(':', '')}_{config.variant.value}_{schedule.label.replace(':', '')}"

        if config.problem == "counterexample":
            if not config.graph.startswith("gn:"):
                raise InvalidArgumentError("The counterexample problem runs on a gn:<n> graph.")
            n = graph.n_nodes // 2
            eps = config.eps if config.eps is not None else 1.0 / n
            cfg = CounterexampleConfig(
                n=n,
                eps=eps,
                gamma=float(extra.get("gamma", 2.0)),
                a=float(extra.get("a", 5.0)),
                T=config.T,
                beta=schedule.beta if schedule.kind == "polynomial" else 0.5,
            )
            problem = make_counterexample_problem(n, cfg.gamma, cfg.a)
            if config.variant is Variant.MIX_AFTER_PROJECT and schedule.kind == "polynomial":
                sub_override = counterexample_setup(cfg).selector
        elif config.problem == "quartic":
            eps = config.eps if config.eps is not None else 0.5 / max(graph.max_degree, 1)
            problem = make_quartic_elasticnet(
                K=int(extra.get("K", 10)),
                d=int(extra.get("d", 2)),
                lambda1=float(extra.get("lambda1", 1.0)),
                lambda2=float(extra.get("lambda2", 0.05)),
                noise_std=float(extra.get("noise_std", 0.2)),
                seed=config.seed,
                n_agents=graph.n_nodes,
                radius=float(extra.get("radius", 2.0)),
            )
            problem = problem.with_optimum(estimate_optimum(problem))
            self.problems.save(problem.data.A, problem.data.b, problem.data.assignment, f"{name}_data")
        else:
            raise InvalidArgumentError(f"Unknown problem '{config.problem}'; expected counterexample or quartic.")

        w = None
        if config.variant is not Variant.CENTRALIZED:
            w = mixing_matrix(graph, eps, allow_zero_diagonal=config.problem == "counterexample")
        ledger = InvariantLedger(tolerance=config.tolerance)
        record = run(
            w,
            problem,
            schedule,
            config.variant,
            config.T,
            window_rule=config.window,
            sub_override=sub_override,
            ledger=ledger,
        )
        self.graphs.save(graph, f"{name}_graph")
        path = self.records.save(
            record,
            name,
            extra={"graph": config.graph, "eps": eps, "seed": config.seed, "tolerance": config.tolerance},
        )
        if self.charts:
            self._chart(path.with_suffix(".svg"), f"{config.variant.value} on {config.graph}", {name: record}, "gap")
        return RunOutcome(path=path, record=record, ledger=ledger)

    def counterexample(self, cfg: CounterexampleConfig, handle: TextIO) -> EquivalenceReport:
        report = verify_equivalence(cfg, record=True)
        t = np.arange(1, cfg.T + 1, dtype=float)
        y = report.closed_form_y
        scaled = cfg.eps * np.sqrt(t) * y
        diff = np.abs(report.solver_v - y)
        rows = zip(t.astype(int), y, scaled, report.solver_v, diff)
        status = "PASS" if report.passed else f"FAIL at t={report.first_violation_t}: {report.reason}"
        summary = (
            f"# {status} n={cfg.n} eps={cfg.eps!r} gamma={cfg.gamma!r} a={cfg.a!r} T={cfg.T} "
            f"max_u_dev={report.max_u_deviation:.3e} max_v_dev={report.max_v_deviation:.3e} "
            f"max_abs_pre_projection={report.max_abs_pre_projection!r}"
        )
        self.tables.write_stream(handle, COUNTEREXAMPLE_HEADER, rows, footer=(summary,))
        return report

    def fig_independence(self, n_list: list[int], beta: float, T: int, threads: int = 1) -> list[Path]:
        if not (beta == 0.5 or 0.5 < beta < 1.0):
            raise InvalidArgumentError(f"beta must be 1/2 or lie in (1/2, 1), got {beta}.")
        jobs = [(n, beta, T) for n in sorted(set(n_list))]
        curves = {n: (t, scaled) for n, t, scaled in _fan_out(_independence_curve, jobs, threads)}

        paths = []
        for n in sorted(curves):
            t, scaled = curves[n]
            below = scaled <= 1.0
            settled = np.zeros(t.size, dtype=bool)
            if below.size and below[-1]:
                above = np.flatnonzero(~below)
                settled[0 if above.size == 0 else int(above[-1]) + 1 :] = True
            rows = zip(t, scaled, settled)
            paths.append(self.tables.write(f"fig_independence_beta{beta!r}_n{n}", INDEPENDENCE_HEADER, rows))
            logger.info("fig-independence n=%d: terminal scaled gap %.6g", n, scaled[-1])
        if self.charts:
            from ui.charts import ChartSeries, render_line_chart

            render_line_chart(
                self.out_dir / f"fig_independence_beta{beta!r}.svg",
                f"t^(1-beta) (F(x_bar) - F*), beta = {beta:g}",
                [ChartSeries(f"n = {n}", *curves[n]) for n in sorted(curves)],
                "t",
                "scaled gap",
                reference_level=1.0 if beta > 0.5 else None,
            )
        return paths

    def fig_inversion(self, betas: list[float], runs: int, setup: InversionSetup, threads: int = 1) -> InversionSummary:
        if runs < 1:
            raise InvalidArgumentError(f"The run count must be at least 1, got {runs}.")
        for beta in betas:
            if not 0.0 < beta < 1.0:
                raise InvalidArgumentError(f"beta values must lie in (0, 1), got {beta}.")
        betas = sorted(set(betas))
        key = setup.experiment_key

        jobs = []
        for beta in betas:
            done = self.termination_runs.completed_indices(key, beta, "centralized") & self.termination_runs.completed_indices(
                key, beta, "distributed"
            )
            jobs.extend((setup, beta, index) for index in range(runs) if index not in done)
        logger.info("fig-inversion: %d of %d draws to compute", len(jobs), len(betas) * runs)

        for beta, index, centralized, distributed in _fan_out(_termination_pair, jobs, threads):
            seed = setup.draw_seed(index)
            self.termination_runs.record(key, beta, index, "centralized", centralized, seed)
            self.termination_runs.record(key, beta, index, "distributed", distributed, seed)

        rows = []
        for beta in betas:
            mean_c, se_c = _mean_and_se(self.termination_runs.iterations(key, beta, "centralized", runs))
            mean_d, se_d = _mean_and_se(self.termination_runs.iterations(key, beta, "distributed", runs))
            capped = self.termination_runs.capped_runs(key, beta, runs)
            if capped > runs:
                logger.warning("beta=%g: %d of %d runs hit the iteration cap", beta, capped, 2 * runs)
            rows.append((beta, mean_c, se_c, mean_d, se_d, capped))

        path = self.tables.write("fig_inversion", INVERSION_HEADER, rows)
        centralized_means = [row[1] for row in rows]
        distributed_means = [row[3] for row in rows]
        rho = math.nan
        if len(betas) > 1:
            rho, _ = spearmanr(betas, centralized_means)
            rho = float(rho)
        non_monotone = _is_non_monotone(distributed_means)
        sidecar = path.with_suffix(".meta.json")
        sidecar.write_text(
            json.dumps(
                {
                    "experiment": key,
                    "runs": runs,
                    "spearman_centralized": rho,
                    "distributed_non_monotone": non_monotone,
                    "graph": f"line:{setup.n_agents}",
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        if self.charts:
            from ui.charts import ChartSeries, render_line_chart

            beta_axis = np.array(betas)
            render_line_chart(
                self.out_dir / "fig_inversion.svg",
                "iterations until the averaged gradient mapping drops below threshold",
                [
                    ChartSeries("centralized", beta_axis, np.array(centralized_means)),
                    ChartSeries("distributed", beta_axis, np.array(distributed_means)),
                ],
                "beta",
                "mean iterations",
                log_x=False,
            )
        return InversionSummary(
            path=path, rows=rows, spearman_centralized=rho, distributed_non_monotone=non_monotone
        )

    def verify(self, suite: str, horizons: VerifyHorizons, tolerance: float, seed: int = 0) -> list[SuiteReport]:
        reports = run_suite(suite, horizons, tolerance, seed)
        rows = [row for report in reports for row in report.rows()]
        self.tables.write(f"verify_{suite}", REPORT_HEADER, rows)
        return reports

    def _chart(self, path: Path, title: str, records: dict[str, RunRecord], column: str) -> None:
        from ui.charts import ChartSeries, render_line_chart

        render_line_chart(
            path,
            title,
            [ChartSeries(label, record.t, getattr(record, column)) for label, record in records.items()],
            "t",
            column,
        )

