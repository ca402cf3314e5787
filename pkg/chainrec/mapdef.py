"""
Map definitions: built-in homeomorphisms and parsed custom maps.

Built-ins:
- ``identity`` on any domain
- ``rotation`` x -> x + alpha (alpha in units of the circle length)
- ``northsouth`` θ -> θ + a sin(2πθ) on a circle, |2πa| < 1
- ``cat`` (x, y) -> (2x + y, x + y) on a 2-torus

Custom maps come from the expression language in ``chainrec.expressions``.
Every map evaluates on ``(n, dim)`` arrays and reduces periodic outputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .expressions import Program, format_program, parse_program
from .grid import Domain

logger = logging.getLogger(__name__)

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INVERSE = np.array([[1.0, -1.0], [-1.0, 2.0]])

# Sampled Lipschitz estimate for custom maps
LIPSCHITZ_SAMPLES = 10_000
LIPSCHITZ_SAFETY = 1.5
LIPSCHITZ_SEED = 0
LIPSCHITZ_STEP = 1e-4  # relative to the smallest axis span

NEWTON_ITERATIONS = 60

Evaluator = Callable[[np.ndarray], np.ndarray]


class MapKind(str, Enum):
    IDENTITY = "identity"
    ROTATION = "rotation"
    NORTHSOUTH = "northsouth"
    CAT = "cat"
    CUSTOM = "custom"


BUILTIN_KINDS = tuple(k for k in MapKind if k is not MapKind.CUSTOM)


class MapDefinitionError(ValueError):
    """Built-in parameters or domain do not fit the map."""


class MapEvaluationError(ArithmeticError):
    """A map produced a non-finite coordinate."""


@dataclass(frozen=True)
class MapSpec:
    kind: MapKind
    domain: Domain
    alpha: float = 0.0
    a: float = 0.0
    program: Optional[Program] = None

    def __post_init__(self) -> None:
        dom = self.domain
        circle = dom.dim == 1 and dom.periodic[0]
        if self.kind in (MapKind.ROTATION, MapKind.NORTHSOUTH) and not circle:
            raise MapDefinitionError(f"{self.kind.value} needs a 1-dimensional periodic domain")
        if self.kind is MapKind.CAT and not (dom.dim == 2 and all(dom.periodic)):
            raise MapDefinitionError("cat needs a 2-dimensional fully periodic domain")
        if self.kind is MapKind.NORTHSOUTH and not abs(2 * np.pi * self.a) < 1:
            raise MapDefinitionError(
                f"northsouth amplitude must satisfy |2*pi*a| < 1, got a={self.a}"
            )
        if self.kind is MapKind.CUSTOM:
            if self.program is None:
                raise MapDefinitionError("custom map needs a parsed program")
            if self.program.dim != dom.dim:
                raise MapDefinitionError(
                    f"program has {self.program.dim} coordinates, domain has {dom.dim}"
                )

    def describe(self) -> str:
        """Canonical text of the map (pretty-printed program for custom maps)."""
        if self.kind is MapKind.ROTATION:
            return f"rotation(alpha={self.alpha!r})"
        if self.kind is MapKind.NORTHSOUTH:
            return f"northsouth(a={self.a!r})"
        if self.kind is MapKind.CUSTOM and self.program is not None:
            return format_program(self.program)
        return self.kind.value


@dataclass(frozen=True)
class MapInstance:
    """A ready-to-evaluate map with its global Lipschitz bound."""

    spec: MapSpec
    forward: Evaluator
    lipschitz: float
    lipschitz_rigorous: bool
    preserves_lebesgue: bool
    inverse: Optional[Evaluator] = None

    @property
    def domain(self) -> Domain:
        return self.spec.domain

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """f on ``(n, dim)`` coordinates, periodic axes reduced."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.forward(pts)
        bad = ~np.all(np.isfinite(out), axis=-1)
        if np.any(bad):
            row = int(np.flatnonzero(bad)[0])
            raise MapEvaluationError(
                f"{self.spec.describe()} is not finite at {pts[row].tolist()}"
            )
        return self.domain.reduce(out)

    def invert(self, points: np.ndarray) -> np.ndarray:
        if self.inverse is None:
            raise MapDefinitionError(f"{self.spec.describe()} has no closed-form inverse")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.domain.reduce(self.inverse(pts))


# ---- Spec construction ----


def parse_map(text: str, domain: Domain) -> MapSpec:
    """Custom map spec from expression text; raises ``ParseError``."""
    program = parse_program(text, domain.dim)
    return MapSpec(kind=MapKind.CUSTOM, domain=domain, program=program)


def builtin_spec(
    name: str,
    alpha: float = 0.0,
    a: float = 0.0,
    domain: Optional[Domain] = None,
) -> MapSpec:
    """Spec for a built-in on its natural domain unless one is given."""
    kind = MapKind(name)
    if domain is None:
        domain = Domain.unit_torus() if kind is MapKind.CAT else Domain.unit_circle()
    return MapSpec(kind=kind, domain=domain, alpha=alpha, a=a)


def resolve_map(
    text: str,
    alpha: float = 0.0,
    a: float = 0.0,
    domain: Optional[Domain] = None,
) -> MapSpec:
    """Built-in by name, otherwise parse ``text`` as a custom program."""
    name = text.strip()
    if name in {k.value for k in BUILTIN_KINDS}:
        return builtin_spec(name, alpha=alpha, a=a, domain=domain)
    return parse_map(text, domain or Domain.unit_circle())


# ---- Evaluators ----


def _identity(pts: np.ndarray) -> np.ndarray:
    return pts.copy()


def _normalized(domain: Domain) -> Tuple[np.ndarray, np.ndarray]:
    return domain.lows, domain.spans


def _rotation(spec: MapSpec, sign: float) -> Evaluator:
    shift = sign * spec.alpha * spec.domain.spans

    def rotate(pts: np.ndarray) -> np.ndarray:
        return pts + shift

    return rotate


def _northsouth_forward(spec: MapSpec) -> Evaluator:
    lows, spans = _normalized(spec.domain)

    def forward(pts: np.ndarray) -> np.ndarray:
        u = (pts - lows) / spans
        return lows + spans * (u + spec.a * np.sin(2 * np.pi * u))

    return forward


def _northsouth_inverse(spec: MapSpec) -> Evaluator:
    """Safeguarded Newton solve of u + a sin(2πu) = v on the lifted line."""
    lows, spans = _normalized(spec.domain)
    amp = abs(spec.a)

    def inverse(pts: np.ndarray) -> np.ndarray:
        v = (pts - lows) / spans
        lo, hi = v - amp, v + amp
        u = v.copy()
        for _ in range(NEWTON_ITERATIONS):
            g = u + spec.a * np.sin(2 * np.pi * u) - v
            lo = np.where(g < 0, u, lo)
            hi = np.where(g > 0, u, hi)
            slope = 1 + 2 * np.pi * spec.a * np.cos(2 * np.pi * u)
            step = u - g / slope
            u = np.where((step > lo) & (step < hi), step, (lo + hi) / 2)
        return lows + spans * u

    return inverse


def _linear_torus(spec: MapSpec, matrix: np.ndarray) -> Evaluator:
    lows, spans = _normalized(spec.domain)

    def apply(pts: np.ndarray) -> np.ndarray:
        u = (pts - lows) / spans
        return lows + spans * (u @ matrix.T)

    return apply


def _cat_lipschitz(domain: Domain) -> float:
    scale = np.diag(domain.spans)
    return float(np.linalg.norm(scale @ CAT_MATRIX @ np.linalg.inv(scale), 2))


def estimate_lipschitz(
    forward: Evaluator,
    domain: Domain,
    n_pairs: int = LIPSCHITZ_SAMPLES,
    seed: int = LIPSCHITZ_SEED,
) -> float:
    """Largest sampled ratio d(f p, f q) / d(p, q) over nearby pairs, times the safety factor."""
    rng = np.random.default_rng(seed)
    lows, spans = domain.lows, domain.spans
    p = lows + rng.random((n_pairs, domain.dim)) * spans
    direction = rng.normal(size=(n_pairs, domain.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    q = p + direction * (LIPSCHITZ_STEP * spans.min())
    q = np.where(domain.periodic_mask, q, np.clip(q, lows, lows + spans))
    base = domain.distances(p, q)
    keep = base > 0
    with np.errstate(all="ignore"):
        fp = domain.reduce(forward(p[keep]))
        fq = domain.reduce(forward(q[keep]))
        ratios = domain.distances(fp, fq) / base[keep]
    finite = ratios[np.isfinite(ratios)]
    estimate = float(finite.max()) if finite.size else 0.0
    return max(LIPSCHITZ_SAFETY * estimate, np.finfo(float).eps)


def build_map(spec: MapSpec) -> MapInstance:
    """Attach evaluators and the Lipschitz bound to a spec."""
    kind = spec.kind
    if kind is MapKind.IDENTITY:
        return MapInstance(spec, _identity, 1.0, True, True, inverse=_identity)
    if kind is MapKind.ROTATION:
        return MapInstance(
            spec, _rotation(spec, 1.0), 1.0, True, True, inverse=_rotation(spec, -1.0)
        )
    if kind is MapKind.NORTHSOUTH:
        return MapInstance(
            spec,
            _northsouth_forward(spec),
            1.0 + 2.0 * np.pi * abs(spec.a),
            True,
            False,
            inverse=_northsouth_inverse(spec),
        )
    if kind is MapKind.CAT:
        return MapInstance(
            spec,
            _linear_torus(spec, CAT_MATRIX),
            _cat_lipschitz(spec.domain),
            True,
            True,
            inverse=_linear_torus(spec, CAT_INVERSE),
        )

    program = spec.program
    assert program is not None
    lipschitz = estimate_lipschitz(program.evaluate, spec.domain)
    logger.warning(
        "Lipschitz bound for custom map is a sampled estimate (L=%.6g), not rigorous",
        lipschitz,
    )
    return MapInstance(spec, program.evaluate, lipschitz, False, False)


# ---- Public scalar API ----


def eval_point(map_: MapInstance, p: Sequence[float]) -> Tuple[float, ...]:
    """f(p) with periodic reduction; raises ``MapEvaluationError`` on non-finite output."""
    return tuple(float(x) for x in map_(np.asarray(p, dtype=float)[None, :])[0])


def lipschitz_bound(map_: MapInstance) -> float:
    return map_.lipschitz


def check_inverse(map_: MapInstance, n_points: int = 1000, seed: int = 0) -> float:
    """Largest metric(f⁻¹(f(p)), p) over seeded uniform points."""
    dom = map_.domain
    rng = np.random.default_rng(seed)
    pts = dom.lows + rng.random((n_points, dom.dim)) * dom.spans
    back = map_.invert(map_(pts))
    return float(dom.distances(back, pts).max())
