"""
Pydantic models for machine-readable command output.

``AnalysisBundle`` is the schema of ``bundle.json``; its top-level field
names are fixed. ``RecurrenceOutput`` and ``SweepOutput`` back
``recurrence.json`` and ``sweep.json``.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class ExactValue(BaseModel):
    """Rational number with its float approximation."""

    num: int
    den: int
    value: float

    @classmethod
    def from_fraction(cls, f: Fraction) -> "ExactValue":
        return cls(num=f.numerator, den=f.denominator, value=float(f))

    def to_fraction(self) -> Fraction:
        return Fraction(self.num, self.den)


class GridOut(BaseModel):
    subdivisions: List[int]
    bounds: List[Tuple[float, float]]
    periodic: List[bool]
    num_cells: int
    cell_diameter: float


class MapOut(BaseModel):
    kind: str
    text: str
    lipschitz: float
    lipschitz_rigorous: bool
    preserves_lebesgue: bool


class GraphOut(BaseModel):
    num_cells: int
    num_edges: int
    transient_cells: int


class MorseNodeOut(BaseModel):
    id: int
    size: int
    min_cell: int
    code: Optional[ExactValue] = None


class PairOut(BaseModel):
    index: int
    downset: List[int]
    attractor_size: int
    repeller_size: int
    trivial: bool


class FamilyOut(BaseModel):
    kind: str
    k: int
    pairs: List[PairOut]


class LyapunovOut(BaseModel):
    k: int
    eta: float
    critical_values: List[ExactValue]
    max_neighbor_jump: float


class ChecksOut(BaseModel):
    ok: bool
    separation: Dict[str, Any]
    complete: Optional[Dict[str, Any]] = None
    lemma_dual: Optional[Dict[str, Any]] = None
    error: Optional[str] = None


class AnalysisBundle(BaseModel):
    """Everything ``analyze`` computed, as written to bundle.json."""

    grid: GridOut
    map: MapOut
    epsilon: float
    mode: str
    graph: GraphOut
    morse_nodes: List[MorseNodeOut]
    condensation_edges: List[Tuple[int, int]]
    attractors: FamilyOut
    lyapunov: Optional[LyapunovOut] = None
    checks: ChecksOut
    timings: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def counts_consistent(self) -> "AnalysisBundle":
        covered = sum(node.size for node in self.morse_nodes) + self.graph.transient_cells
        if covered != self.graph.num_cells or self.grid.num_cells != self.graph.num_cells:
            raise ValueError(
                f"Morse node sizes plus transient cells ({covered}) "
                f"do not add up to the cell count ({self.graph.num_cells})"
            )
        return self


class HistogramBucket(BaseModel):
    bucket_lo: int
    bucket_hi: int
    count: int


class ConnectivityOut(BaseModel):
    strongly_connected: bool
    witness: Optional[Tuple[int, int]] = None


class RecurrenceOutput(BaseModel):
    map: MapOut
    n_points: Optional[int] = None
    n_iters: Optional[int] = None
    delta: Optional[float] = None
    seed: int
    returned_fraction: Optional[float] = None
    min_returned: Optional[float] = None
    histogram: List[HistogramBucket] = Field(default_factory=list)
    warning: Optional[str] = None
    connectivity: Optional[ConnectivityOut] = None
    passed: bool


class SweepRow(BaseModel):
    epsilon: float
    edges: int
    recurrent_cells: int
    morse_nodes: int


class SweepOutput(BaseModel):
    map: MapOut
    mode: str
    rows: List[SweepRow]
    monotone: bool
    violation: Optional[str] = None
