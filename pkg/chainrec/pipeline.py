"""
Analysis pipelines behind the command-line front end.

``run_analysis`` chains the stages

- ``graph``: build the ε-transition graph
- ``morse``: SCCs, condensation, Morse nodes
- ``family``: canonical family or full attractor lattice
- ``separation`` / ``lemma_dual``: structure checks on the family
- ``lyapunov``: complete Lyapunov function and its verification

and records a ``StageResult`` per stage. ``run_sweep`` and
``run_recurrence`` back the other two commands. Input errors (parse,
config, lattice cap) propagate as exceptions; failed verifications are
returned in the results.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

from .chaingraph import MorsePartition, TransitionGraph, build_graph, morse_partition
from .conley import (
    AttractorFamily,
    LemmaDualReport,
    SeparationReport,
    canonical_family,
    full_lattice,
    verify_lemma_dual,
    verify_separation,
)
from .grid import Domain, Grid
from .lyapunov import CompleteLyapunov, CompleteReport, complete_lyapunov, verify_complete
from .mapdef import BUILTIN_KINDS, MapInstance, build_map, resolve_map
from .models import (
    AnalysisBundle,
    ChecksOut,
    ConnectivityOut,
    ExactValue,
    FamilyOut,
    GraphOut,
    GridOut,
    HistogramBucket,
    LyapunovOut,
    MapOut,
    MorseNodeOut,
    PairOut,
    RecurrenceOutput,
    SweepOutput,
    SweepRow,
)
from .recurrence import ConnectivityReport, RecurrenceReport, connectivity_check, simulate_returns
from .settings import ConfigError, RunConfig

logger = logging.getLogger(__name__)


class SweepMonotonicityError(RuntimeError):
    """Edge or recurrent-cell counts dropped as ε grew."""


@dataclass
class StageResult:
    stage: str
    success: bool
    stats: Dict[str, Any]
    duration_ms: float = 0.0
    error: Optional[str] = None


@contextmanager
def _stage(stages: List[StageResult], name: str) -> Iterator[Dict[str, Any]]:
    """Time a stage; the yielded dict collects its stats."""
    stats: Dict[str, Any] = {}
    start = time.perf_counter()
    try:
        yield stats
    except Exception as e:
        duration_ms = round((time.perf_counter() - start) * 1000, 2)
        stages.append(StageResult(name, False, stats, duration_ms, str(e)))
        logger.error("Stage %s failed: %s", name, e, extra={"duration_ms": duration_ms})
        raise
    duration_ms = round((time.perf_counter() - start) * 1000, 2)
    stages.append(StageResult(name, True, stats, duration_ms))
    logger.info("Stage %s completed", name, extra={"duration_ms": duration_ms, **stats})


# ---- Problem setup ----


def resolve_problem(config: RunConfig) -> Tuple[Grid, MapInstance]:
    """Domain, grid and map described by a config."""
    domain = None
    if config.bounds is not None:
        periodic = config.periodic or tuple(True for _ in config.bounds)
        domain = Domain(bounds=tuple(config.bounds), periodic=tuple(periodic))
    elif config.periodic is not None:
        raise ConfigError("periodic flags need bounds")
    elif len(config.grid) > 1 and config.map.strip() not in {k.value for k in BUILTIN_KINDS}:
        # custom program on the unit cube matching the grid
        dim = len(config.grid)
        domain = Domain(bounds=((0.0, 1.0),) * dim, periodic=(True,) * dim)
    spec = resolve_map(config.map, alpha=config.alpha, a=config.a, domain=domain)
    subdivisions = config.grid
    if len(subdivisions) == 1 and spec.domain.dim > 1:
        subdivisions = subdivisions * spec.domain.dim
    if len(subdivisions) != spec.domain.dim:
        raise ConfigError(
            f"grid has {len(subdivisions)} axes but the map acts on {spec.domain.dim}"
        )
    return Grid(spec.domain, subdivisions), build_map(spec)


def default_epsilon(grid: Grid) -> float:
    """Two of the narrowest cell widths."""
    return 2.0 * float(grid.widths.min())


def map_summary(map_: MapInstance) -> MapOut:
    return MapOut(
        kind=map_.spec.kind.value,
        text=map_.spec.describe(),
        lipschitz=map_.lipschitz,
        lipschitz_rigorous=map_.lipschitz_rigorous,
        preserves_lebesgue=map_.preserves_lebesgue,
    )


# ---- analyze ----


@dataclass
class AnalysisRun:
    config: RunConfig
    grid: Grid
    map: MapInstance
    graph: TransitionGraph
    partition: MorsePartition
    family: AttractorFamily
    separation: SeparationReport
    lemma_dual: Optional[LemmaDualReport] = None
    lyapunov: Optional[CompleteLyapunov] = None
    complete: Optional[CompleteReport] = None
    error: Optional[str] = None
    stages: List[StageResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.separation.ok
            and self.complete is not None
            and self.complete.ok
            and (self.lemma_dual is None or self.lemma_dual.holds)
        )

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def timings(self) -> Dict[str, float]:
        return {s.stage: s.duration_ms for s in self.stages}


def run_analysis(config: RunConfig) -> AnalysisRun:
    stages: List[StageResult] = []
    grid, map_ = resolve_problem(config)
    epsilon = config.epsilon or default_epsilon(grid)

    with _stage(stages, "graph") as stats:
        graph = build_graph(grid, map_, epsilon, config.mode, workers=config.workers)
        stats.update(cells_count=graph.num_cells, edges_count=graph.edge_count)
    with _stage(stages, "morse") as stats:
        partition = morse_partition(graph)
        stats.update(morse_count=partition.num_morse)
    with _stage(stages, "family") as stats:
        if config.family == "full":
            family = full_lattice(graph, partition, cap=config.cap)
        else:
            family = canonical_family(graph, partition)
        stats.update(pairs_count=len(family.pairs))
    with _stage(stages, "separation"):
        separation = verify_separation(graph, partition, family)

    run = AnalysisRun(config, grid, map_, graph, partition, family, separation, stages=stages)
    if config.family == "full":
        with _stage(stages, "lemma_dual"):
            run.lemma_dual = verify_lemma_dual(graph, partition, family)

    if not separation.ok:
        run.error = "family does not separate the Morse nodes; Lyapunov function not built"
        logger.error(run.error)
        return run
    with _stage(stages, "lyapunov"):
        run.lyapunov = complete_lyapunov(graph, partition, family, grid, separation=separation)
        run.complete = verify_complete(graph, partition, run.lyapunov)
    return run


def analysis_bundle(run: AnalysisRun, include_timings: bool = False) -> AnalysisBundle:
    grid, partition, lyap = run.grid, run.partition, run.lyapunov
    dom = grid.domain
    nodes = [
        MorseNodeOut(
            id=i,
            size=len(cells),
            min_cell=cells[0],
            code=ExactValue.from_fraction(lyap.node_codes[i]) if lyap else None,
        )
        for i, cells in enumerate(partition.morse_nodes)
    ]
    lyap_out = None
    if lyap is not None:
        lyap_out = LyapunovOut(
            k=lyap.k,
            eta=lyap.eta,
            critical_values=[ExactValue.from_fraction(v) for v in lyap.critical_values],
            max_neighbor_jump=lyap.max_neighbor_jump,
        )
    return AnalysisBundle(
        grid=GridOut(
            subdivisions=list(grid.shape),
            bounds=list(dom.bounds),
            periodic=list(dom.periodic),
            num_cells=grid.num_cells,
            cell_diameter=grid.cell_diameter(),
        ),
        map=map_summary(run.map),
        epsilon=run.graph.epsilon,
        mode=run.graph.mode.value,
        graph=GraphOut(
            num_cells=run.graph.num_cells,
            num_edges=run.graph.edge_count,
            transient_cells=len(partition.transient_cells),
        ),
        morse_nodes=nodes,
        condensation_edges=[(int(a), int(b)) for a, b in partition.morse_graph().edges()],
        attractors=FamilyOut(
            kind=run.family.kind,
            k=run.family.k,
            pairs=[PairOut(**row) for row in run.family.summary()],
        ),
        lyapunov=lyap_out,
        checks=ChecksOut(
            ok=run.ok,
            separation=run.separation.to_dict(),
            complete=run.complete.to_dict() if run.complete else None,
            lemma_dual=run.lemma_dual.to_dict() if run.lemma_dual else None,
            error=run.error,
        ),
        timings=run.timings() if include_timings else {},
    )


# ---- sweep ----


def check_monotone(rows: List[SweepRow]) -> Optional[str]:
    """Description of the first drop in edge or recurrent counts, if any."""
    for prev, cur in zip(rows, rows[1:]):
        if cur.edges < prev.edges:
            return f"edge count fell from {prev.edges} to {cur.edges} at epsilon={cur.epsilon!r}"
        if cur.recurrent_cells < prev.recurrent_cells:
            return (
                f"recurrent cells fell from {prev.recurrent_cells} to "
                f"{cur.recurrent_cells} at epsilon={cur.epsilon!r}"
            )
    return None


def run_sweep(config: RunConfig) -> SweepOutput:
    """One row per ε; raises ``SweepMonotonicityError`` carrying the output on a drop."""
    if not config.epsilons:
        raise ConfigError("sweep needs --epsilons")
    grid, map_ = resolve_problem(config)
    rows = []
    for eps in config.epsilons:
        graph = build_graph(grid, map_, eps, config.mode, workers=config.workers)
        partition = morse_partition(graph)
        rows.append(
            SweepRow(
                epsilon=eps,
                edges=graph.edge_count,
                recurrent_cells=int(partition.recurrent_mask.sum()),
                morse_nodes=partition.num_morse,
            )
        )
    violation = check_monotone(rows)
    output = SweepOutput(
        map=map_summary(map_),
        mode=config.mode.value,
        rows=rows,
        monotone=violation is None,
        violation=violation,
    )
    if violation:
        error = SweepMonotonicityError(violation)
        error.output = output  # type: ignore[attr-defined]
        raise error
    return output


# ---- recurrence ----


@dataclass
class RecurrenceRun:
    output: RecurrenceOutput
    report: Optional[RecurrenceReport] = None
    connectivity: Optional[ConnectivityReport] = None

    @property
    def exit_code(self) -> int:
        return 0 if self.output.passed else 1


def run_recurrence(config: RunConfig) -> RecurrenceRun:
    """Return-time simulation, or the graph connectivity check with ``connectivity``."""
    grid, map_ = resolve_problem(config)
    if config.connectivity:
        graph = build_graph(
            grid, map_, config.epsilon or default_epsilon(grid), config.mode, workers=config.workers
        )
        conn = connectivity_check(graph)
        passed = conn.strongly_connected or not config.require_connected
        output = RecurrenceOutput(
            map=map_summary(map_),
            seed=config.seed,
            connectivity=ConnectivityOut(**conn.to_dict()),
            passed=passed,
        )
        return RecurrenceRun(output=output, connectivity=conn)

    report = simulate_returns(map_, config.points, config.iters, config.delta, config.seed)
    output = RecurrenceOutput(
        map=map_summary(map_),
        n_points=report.n_points,
        n_iters=report.n_iters,
        delta=report.delta,
        seed=report.seed,
        returned_fraction=report.returned_fraction,
        min_returned=config.min_returned,
        histogram=[
            HistogramBucket(bucket_lo=lo, bucket_hi=hi, count=n)
            for lo, hi, n in report.return_time_histogram
        ],
        warning=report.warning,
        passed=report.returned_fraction >= config.min_returned,
    )
    return RecurrenceRun(output=output, report=report)
