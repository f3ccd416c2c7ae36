"""Constrained evolutionary search over a parameterized sub-network space.

The attribute predictors act as feasibility oracles; the fitness function is
pluggable.  The default fitness is the decoded network's weight-parameter
count — a transparent stand-in for demonstrations and tests, NOT an accuracy
model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .dataset import ATTR_MODE
from .errors import InfeasibleError, SchemaError
from .features import extract_features
from .forest import predict
from .ir import NetworkSpec, network_from_dict
from .predictor import AttributeModelSet
from .pruning import resize_network


@dataclass(frozen=True)
class WidthKnob:
    """Choice of a filter-count multiplier applied to a group of layers."""

    name: str
    layer_ids: tuple[str, ...]
    multipliers: tuple[float, ...]

    def __post_init__(self):
        if not self.multipliers:
            raise SchemaError(f"knob '{self.name}' has no choices")
        for m in self.multipliers:
            if not 0 < m <= 1:
                raise SchemaError(f"knob '{self.name}': multiplier {m} not in (0, 1]")

    @property
    def arity(self) -> int:
        return len(self.multipliers)


@dataclass(frozen=True)
class DepthKnob:
    """Choice of how many residual units of a group to keep.

    Each unit is a set of layer ids that can be dropped wholesale because an
    add-join bypass keeps the channel stream intact without them.
    """

    name: str
    units: tuple[tuple[str, ...], ...]
    depths: tuple[int, ...]

    def __post_init__(self):
        if not self.depths:
            raise SchemaError(f"knob '{self.name}' has no choices")
        for d in self.depths:
            if not 0 <= d <= len(self.units):
                raise SchemaError(f"knob '{self.name}': depth {d} out of range")

    @property
    def arity(self) -> int:
        return len(self.depths)


Knob = WidthKnob | DepthKnob


@dataclass(frozen=True)
class SearchSpace:
    base: NetworkSpec
    knobs: tuple[Knob, ...]

    def __post_init__(self):
        known = {l.layer_id for l in self.base.layers}
        for knob in self.knobs:
            ids = (knob.layer_ids if isinstance(knob, WidthKnob)
                   else tuple(lid for unit in knob.units for lid in unit))
            unknown = sorted(set(ids) - known)
            if unknown:
                raise SchemaError(f"knob '{knob.name}' references unknown layers {unknown}")

    def arities(self) -> tuple[int, ...]:
        return tuple(k.arity for k in self.knobs)

    def size(self) -> int:
        return math.prod(self.arities())

    def decode(self, encoding: tuple[int, ...]) -> NetworkSpec:
        """Materialize a candidate as a valid NetworkSpec."""
        if len(encoding) != len(self.knobs):
            raise SchemaError(f"encoding length {len(encoding)} != {len(self.knobs)} knobs")
        dropped: set[str] = set()
        keep: dict[str, Fraction] = {}
        for knob, idx in zip(self.knobs, encoding):
            if not 0 <= idx < knob.arity:
                raise SchemaError(f"knob '{knob.name}': choice {idx} out of range")
            if isinstance(knob, DepthKnob):
                for unit in knob.units[knob.depths[idx]:]:
                    dropped.update(unit)
            else:
                frac = Fraction(knob.multipliers[idx])
                for lid in knob.layer_ids:
                    keep[lid] = frac
        net = _drop_layers(self.base, dropped) if dropped else self.base
        keep = {lid: f for lid, f in keep.items() if lid not in dropped}
        return resize_network(net, keep)

    def enumerate_encodings(self):
        """All encodings in lexicographic order (small spaces only)."""
        def rec(prefix, rest):
            if not rest:
                yield tuple(prefix)
                return
            for i in range(rest[0]):
                yield from rec(prefix + [i], rest[1:])
        yield from rec([], self.arities())


def _drop_layers(net: NetworkSpec, dropped: set[str]) -> NetworkSpec:
    layers = tuple(l for l in net.layers if l.layer_id not in dropped)
    edges = tuple(e for e in net.edges if e.src not in dropped and e.dst not in dropped)
    return replace(net, layers=layers, edges=edges)


def space_from_dict(doc: dict, base: NetworkSpec | None = None) -> SearchSpace:
    if not isinstance(doc, dict):
        raise SchemaError("space document root must be an object")
    if base is None:
        if "network" not in doc:
            raise SchemaError("space document needs an inline 'network' object")
        base = network_from_dict(doc["network"])
    knobs = []
    for i, entry in enumerate(doc.get("knobs", [])):
        kind = entry.get("kind", "width")
        name = entry.get("name", f"knob{i}")
        if kind == "width":
            knobs.append(WidthKnob(name=name,
                                   layer_ids=tuple(entry["layers"]),
                                   multipliers=tuple(entry["multipliers"])))
        elif kind == "depth":
            knobs.append(DepthKnob(name=name,
                                   units=tuple(tuple(u) for u in entry["units"]),
                                   depths=tuple(entry["depths"])))
        else:
            raise SchemaError(f"knobs[{i}].kind must be 'width' or 'depth', got {kind!r}")
    return SearchSpace(base=base, knobs=tuple(knobs))


def parse_space(text: str, base: NetworkSpec | None = None) -> SearchSpace:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    return space_from_dict(doc, base)


@dataclass(frozen=True)
class Constraints:
    """Hard upper bounds on predicted attributes; any subset may be unset.

    Training memory is checked at `gamma_bs`; the inference attributes are
    checked at batch size 1.
    """

    max_gamma_mb: float | None = None
    gamma_bs: int = 32
    max_small_gamma_mb: float | None = None
    max_small_phi_ms: float | None = None

    def __post_init__(self):
        for name in ("max_gamma_mb", "max_small_gamma_mb", "max_small_phi_ms"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise SchemaError(f"{name} must be > 0, got {v}")
        if self.gamma_bs < 1:
            raise SchemaError("gamma_bs must be >= 1")

    def required_attributes(self) -> tuple[str, ...]:
        out = []
        if self.max_gamma_mb is not None:
            out.append("gamma")
        if self.max_small_gamma_mb is not None:
            out.append("small_gamma")
        if self.max_small_phi_ms is not None:
            out.append("small_phi")
        return tuple(out)


@dataclass(frozen=True)
class Candidate:
    encoding: tuple[int, ...]


@dataclass(frozen=True)
class EsConfig:
    population: int = 100
    iterations: int = 500
    mutation_rate: float = 0.1
    parent_fraction: float = 0.25
    seed: int = 0
    rejection_budget: int = 10_000

    def __post_init__(self):
        if self.population < 1 or self.iterations < 1:
            raise SchemaError("population and iterations must be >= 1")
        if not 0 <= self.mutation_rate <= 1:
            raise SchemaError("mutation_rate must be in [0, 1]")
        if not 0 < self.parent_fraction <= 1:
            raise SchemaError("parent_fraction must be in (0, 1]")


class _Evaluator:
    """Feasibility and fitness of candidates, memoized per encoding.

    Results of the models and fitness are pure functions of the encoding, so
    caching changes nothing except speed; `evaluations` still counts every
    candidate the search asked about.
    """

    def __init__(self, space, constraints, models, fitness):
        required = constraints.required_attributes()
        missing = [a for a in required if a not in models.models]
        if missing:
            raise InfeasibleError(
                f"constraints require models for {missing}, none provided")
        self.space = space
        self.constraints = constraints
        self.models = models
        self.fitness_fn = fitness
        self.evaluations = 0
        self.best_encoding: tuple[int, ...] | None = None
        self.best_fitness = -math.inf
        self._memo: dict[tuple[int, ...], tuple[bool, float]] = {}

    def _predict(self, model, net, bs):
        fv = extract_features(net, bs, ATTR_MODE[model.target_name])
        return predict(model, fv.as_floats())

    def evaluate(self, encoding) -> tuple[bool, float]:
        self.evaluations += 1
        result = self._memo.get(encoding)
        if result is None:
            net = self.space.decode(encoding)
            c = self.constraints
            feasible = True
            if c.max_gamma_mb is not None:
                feasible = self._predict(self.models.models["gamma"], net, c.gamma_bs) <= c.max_gamma_mb
            if feasible and c.max_small_gamma_mb is not None:
                feasible = self._predict(self.models.models["small_gamma"], net, 1) <= c.max_small_gamma_mb
            if feasible and c.max_small_phi_ms is not None:
                feasible = self._predict(self.models.models["small_phi"], net, 1) <= c.max_small_phi_ms
            fitness = float(self.fitness_fn(Candidate(encoding), net)) if feasible else -math.inf
            result = (feasible, fitness)
            self._memo[encoding] = result
        if result[0] and result[1] > self.best_fitness:
            self.best_fitness = result[1]
            self.best_encoding = encoding
        return result


def parameter_count_fitness(candidate: Candidate, net: NetworkSpec) -> float:
    """Default proxy fitness: total weight parameters of the decoded network.

    A transparent placeholder so the search loop can be exercised without
    any accuracy predictor; it is NOT a statement about model quality.
    """
    return float(net.weight_params())


def _random_encoding(arities, rng) -> tuple[int, ...]:
    return tuple(int(rng.integers(0, a)) for a in arities)


def sample_feasible(space: SearchSpace, constraints: Constraints,
                    models: AttributeModelSet, rng, budget: int = 10_000,
                    _evaluator: _Evaluator | None = None) -> tuple[Candidate, int]:
    """Rejection-sample until a candidate satisfies all set constraints.

    Returns the candidate and the number of rejections before acceptance.
    """
    ev = _evaluator or _Evaluator(space, constraints, models, parameter_count_fitness)
    arities = space.arities()
    rejections = 0
    for _ in range(budget):
        encoding = _random_encoding(arities, rng)
        feasible, _ = ev.evaluate(encoding)
        if feasible:
            return Candidate(encoding), rejections
        rejections += 1
    raise InfeasibleError(f"no feasible candidate found in {budget} samples")


@dataclass(frozen=True)
class SearchResult:
    best: Candidate
    best_fitness: float
    best_network: NetworkSpec
    log: tuple[dict, ...]
    evaluations: int


def evolve(space: SearchSpace, constraints: Constraints, models: AttributeModelSet,
           fitness=parameter_count_fitness, es_config: EsConfig = EsConfig()) -> SearchResult:
    """Evolutionary search: keep top parents, refill by mutation + crossover.

    Every candidate is feasibility-checked before entering the population and
    the returned best is always feasible.  Fully deterministic given the seed.
    """
    rng = np.random.default_rng(es_config.seed & 0xFFFFFFFFFFFFFFFF)
    ev = _Evaluator(space, constraints, models, fitness)
    arities = space.arities()
    budget = es_config.rejection_budget

    def feasible_child(generate) -> tuple[int, ...]:
        for _ in range(budget):
            encoding = generate()
            ok, _ = ev.evaluate(encoding)
            if ok:
                return encoding
        raise InfeasibleError(f"no feasible candidate found in {budget} samples")

    population = [feasible_child(lambda: _random_encoding(arities, rng))
                  for _ in range(es_config.population)]

    log = []
    n_parents = max(1, math.ceil(es_config.parent_fraction * es_config.population))

    for iteration in range(es_config.iterations):
        # the whole population is (re)evaluated each generation; memoization
        # keeps this cheap while `evaluations` reflects every request
        scored = []
        for enc in population:
            _, fit = ev.evaluate(enc)
            scored.append((fit, enc))
        scored.sort(key=lambda t: (-t[0], t[1]))
        log.append({"iter": iteration, "best_fitness": ev.best_fitness,
                    "evaluated_total": ev.evaluations,
                    "best_encoding": list(ev.best_encoding)})

        parents = [enc for _, enc in scored[:n_parents]]
        n_children = es_config.population - len(parents)
        n_mutants = (n_children + 1) // 2

        def mutate() -> tuple[int, ...]:
            base = parents[int(rng.integers(0, len(parents)))]
            return tuple(int(rng.integers(0, a)) if rng.random() < es_config.mutation_rate
                         else v for v, a in zip(base, arities))

        def crossover() -> tuple[int, ...]:
            pa = parents[int(rng.integers(0, len(parents)))]
            pb = parents[int(rng.integers(0, len(parents)))]
            return tuple(a if rng.random() < 0.5 else b for a, b in zip(pa, pb))

        children = [feasible_child(mutate) for _ in range(n_mutants)]
        children += [feasible_child(crossover) for _ in range(n_children - n_mutants)]
        population = parents + children

    best_encoding, best_fitness = ev.best_encoding, ev.best_fitness
    assert best_encoding is not None
    ok, _ = ev.evaluate(best_encoding)
    assert ok, "search returned an infeasible candidate"
    return SearchResult(best=Candidate(best_encoding), best_fitness=best_fitness,
                        best_network=space.decode(best_encoding),
                        log=tuple(log), evaluations=ev.evaluations)


def write_search_log(log, path) -> None:
    """JSON-lines log: one record per iteration."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def expected_sample_count(es_config: EsConfig) -> int:
    """Nominal candidates sampled by a run: one population per iteration."""
    return es_config.population * es_config.iterations


def estimate_search_cost(candidates: int, per_candidate_cost_s: float) -> float:
    """Total seconds to evaluate `candidates` at a fixed per-candidate cost."""
    if candidates < 0 or per_candidate_cost_s < 0:
        raise SchemaError("candidate count and per-candidate cost must be >= 0")
    return candidates * per_candidate_cost_s
