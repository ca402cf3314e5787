"""
File exports for analysis results.

CSV files use ``\\n`` line endings and ``repr`` floats so output does not
depend on locale. DOT text is produced by pydot from networkx graphs built
in sorted node order, so identical inputs give identical files.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import networkx as nx
from pydantic import BaseModel

from .chaingraph import MorsePartition, TransitionGraph
from .lyapunov import CompleteLyapunov
from .models import HistogramBucket, SweepRow

logger = logging.getLogger(__name__)

# Raw cell graphs above this size are not written as DOT
MAX_DOT_CELLS = 10_000


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug("Wrote %s (%d bytes)", path, len(text))
    return path


def write_json(path: Path, model: BaseModel) -> Path:
    return _write(path, model.model_dump_json(indent=2) + "\n")


# ---- CSV ----


def edges_csv(graph: TransitionGraph) -> str:
    src, dst = graph.edges()
    return _csv_text(("src", "dst"), zip(src.tolist(), dst.tolist()))


def lyapunov_csv(partition: MorsePartition, lyap: CompleteLyapunov) -> str:
    """One row per cell: value, recurrent flag (1/0) and Morse node id (-1 if transient)."""
    recurrent = partition.recurrent_mask
    rows = (
        (c, repr(float(v)), int(recurrent[c]), int(partition.morse_of[c]))
        for c, v in enumerate(lyap.values)
    )
    return _csv_text(("cell", "value", "recurrent", "morse_node"), rows)


def histogram_csv(buckets: Sequence[HistogramBucket]) -> str:
    return _csv_text(
        ("bucket_lo", "bucket_hi", "count"),
        ((b.bucket_lo, b.bucket_hi, b.count) for b in buckets),
    )


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return _csv_text(
        ("epsilon", "edges", "recurrent_cells", "morse_nodes"),
        ((repr(r.epsilon), r.edges, r.recurrent_cells, r.morse_nodes) for r in rows),
    )


# ---- DOT ----


def _dot(graph: nx.DiGraph, name: str) -> str:
    dot = nx.nx_pydot.to_pydot(graph)
    dot.set_name(name)
    return dot.to_string()


def morse_graph_dot(partition: MorsePartition, lyap: Optional[CompleteLyapunov] = None) -> str:
    """Hasse diagram of the Morse nodes; labels carry id, size and code."""
    hasse = partition.morse_graph()
    out = nx.DiGraph()
    for node in sorted(hasse.nodes):
        label = f"M{node} ({hasse.nodes[node]['size']} cells)"
        if lyap is not None:
            label += f" {lyap.node_codes[node]}"
        out.add_node(node, label=f'"{label}"')
    out.add_edges_from(sorted(hasse.edges()))
    return _dot(out, "condensation")


def cell_graph_dot(graph: TransitionGraph) -> Optional[str]:
    """Raw cell graph, or None above ``MAX_DOT_CELLS`` cells."""
    if graph.num_cells > MAX_DOT_CELLS:
        logger.info(
            "Skipping cell graph DOT for %d cells", graph.num_cells,
            extra={"cells_count": graph.num_cells},
        )
        return None
    out = nx.DiGraph()
    out.add_nodes_from(range(graph.num_cells))
    src, dst = graph.edges()
    out.add_edges_from(zip(src.tolist(), dst.tolist()))
    return _dot(out, "cells")


# ---- Bundles ----


def write_analysis_files(
    out_dir: Path,
    formats: Sequence[str],
    bundle: BaseModel,
    graph: TransitionGraph,
    partition: MorsePartition,
    lyap: Optional[CompleteLyapunov],
) -> List[Path]:
    """bundle.json, lyapunov.csv, edges.csv, condensation.dot, cells.dot as selected."""
    written: List[Path] = []
    if "json" in formats:
        written.append(write_json(out_dir / "bundle.json", bundle))
    if "csv" in formats:
        if lyap is not None:
            written.append(_write(out_dir / "lyapunov.csv", lyapunov_csv(partition, lyap)))
        written.append(_write(out_dir / "edges.csv", edges_csv(graph)))
    if "dot" in formats:
        written.append(_write(out_dir / "condensation.dot", morse_graph_dot(partition, lyap)))
        cells = cell_graph_dot(graph)
        if cells is not None:
            written.append(_write(out_dir / "cells.dot", cells))
    return written
