"""Genetic search over bounded parameter genomes.

Each generation the population is ranked by fitness (lower is better), the
``elite_count`` best genomes are carried over unchanged, and the remaining
slots are filled by crossing ranked-better with ranked-worse individuals
(rank ``i`` with rank ``N-1-i``) followed by mutation. Fitness values are
cached per genome, so an elite is never re-scored and the best-so-far curve
is non-increasing.
"""
from __future__ import annotations

import inspect
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptySpace, ValidationError

logger = logging.getLogger(__name__)


class Gene:
    def sample(self, rng: np.random.Generator):
        raise NotImplementedError

    def mutate(self, value, rng: np.random.Generator):
        raise NotImplementedError

    def contains(self, value) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Integer(Gene):
    low: int
    high: int
    allow_none: bool = False

    def __post_init__(self):
        if self.high < self.low:
            raise ValidationError(f"empty integer domain [{self.low}, {self.high}]")

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))

    def mutate(self, value, rng):
        if value is None:
            return self.sample(rng)
        sigma = 0.1 * (self.high - self.low)
        new = int(round(value + rng.normal(0.0, sigma))) if sigma > 0 else value
        return int(min(max(new, self.low), self.high))

    def contains(self, value):
        if value is None:
            return self.allow_none
        return isinstance(value, (int, np.integer)) and not isinstance(value, bool) \
            and self.low <= value <= self.high


@dataclass(frozen=True)
class Real(Gene):
    low: float
    high: float
    log: bool = False
    allow_none: bool = False

    def __post_init__(self):
        if not self.high >= self.low:
            raise ValidationError(f"empty real domain [{self.low}, {self.high}]")
        if self.log and self.low <= 0:
            raise ValidationError("log-scaled domain must be positive")

    def _to(self, v):
        return math.log(v) if self.log else v

    def _from(self, u):
        return math.exp(u) if self.log else u

    def sample(self, rng):
        lo, hi = self._to(self.low), self._to(self.high)
        return float(min(max(self._from(rng.uniform(lo, hi)), self.low), self.high))

    def mutate(self, value, rng):
        if value is None:
            return self.sample(rng)
        lo, hi = self._to(self.low), self._to(self.high)
        u = self._to(value) + rng.normal(0.0, 0.1 * (hi - lo))
        return float(min(max(self._from(min(max(u, lo), hi)), self.low), self.high))

    def contains(self, value):
        if value is None:
            return self.allow_none
        return isinstance(value, (float, int)) and not isinstance(value, bool) \
            and self.low <= value <= self.high


@dataclass(frozen=True)
class Categorical(Gene):
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise ValidationError("categorical gene needs at least one choice")

    def sample(self, rng):
        return self.choices[int(rng.integers(len(self.choices)))]

    def mutate(self, value, rng):
        return self.sample(rng)

    def contains(self, value):
        return any(value == c and type(value) is type(c) for c in self.choices)


Genome = Dict[str, Any]


@dataclass
class GaConfig:
    population_size: int = 20
    generations: int = 10
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    elite_count: int = 1
    seed: int = 42

    def __post_init__(self):
        if self.population_size < 2:
            raise ValidationError("population_size must be >= 2")
        if self.generations < 1:
            raise ValidationError("generations must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValidationError("crossover_rate must lie in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValidationError("mutation_rate must lie in [0, 1]")
        if not 1 <= self.elite_count < self.population_size:
            raise ValidationError("elite_count must satisfy 1 <= elite_count < population_size")


@dataclass
class GaResult:
    best_genome: Genome
    best_fitness: float
    best_seed: int
    history: List[float]
    evaluations: int
    failures: int = 0
    populations: List[List[Genome]] = field(default_factory=list, repr=False)


def derived_seed(seed: int, generation: int, index: int) -> int:
    """Seed for one fitness evaluation; independent of evaluation order and threads."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, generation, index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def genome_key(genome: Mapping[str, Any]) -> str:
    return json.dumps(list(genome.items()))


def validate_genome(space: Mapping[str, Gene], genome: Mapping[str, Any]) -> Genome:
    if list(genome) != list(space):
        raise ValidationError("genome genes do not match the search space")
    for name, gene in space.items():
        if not gene.contains(genome[name]):
            raise ValidationError(f"gene {name!r}={genome[name]!r} outside its domain")
    return dict(genome)


def _wants_seed(fitness: Callable) -> bool:
    try:
        params = inspect.signature(fitness).parameters.values()
    except (TypeError, ValueError):
        return False
    positional = [p for p in params if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
    return len(positional) >= 2 or any(p.kind == p.VAR_POSITIONAL for p in params)


def _json_float(v: float):
    return v if math.isfinite(v) else None


def run_ga(space: Mapping[str, Gene], fitness: Callable, config: GaConfig,
           initial: Sequence[Mapping[str, Any]] = (), checkpoint_dir=None,
           threads: int = 1, on_generation: Optional[Callable] = None) -> GaResult:
    """Minimise ``fitness`` over genomes drawn from ``space``.

    ``fitness`` is called as ``fitness(genome)`` or ``fitness(genome, seed)``
    when it accepts two positional arguments; exceptions and non-finite
    returns score ``+inf``. ``initial`` genomes seed the first population.
    With ``checkpoint_dir`` set, one JSON file is written per generation.
    ``on_generation(generation, population, scores, best_genome)`` runs after
    each generation has been scored.
    """
    if not space:
        raise EmptySpace("search space declares no genes")
    space = dict(space)
    rng = np.random.default_rng(config.seed)
    pass_seed = _wants_seed(fitness)
    n = config.population_size

    population = [validate_genome(space, g) for g in list(initial)[:n]]
    while len(population) < n:
        population.append({k: g.sample(rng) for k, g in space.items()})

    cache: Dict[str, tuple] = {}
    failures = 0
    best_genome, best_fit, best_seed = None, math.inf, 0
    history: List[float] = []
    populations = []
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    def evaluate(item):
        genome, seed = item
        try:
            value = fitness(genome, seed) if pass_seed else fitness(genome)
            value = float(value)
            if math.isnan(value):
                raise ValueError("fitness returned NaN")
            return value, None
        except Exception as exc:  # scored as worst, search continues
            return math.inf, exc

    for gen in range(config.generations):
        pending, seen = [], set()
        for i, genome in enumerate(population):
            key = genome_key(genome)
            if key not in cache and key not in seen:
                seen.add(key)
                pending.append((key, genome, derived_seed(config.seed, gen, i)))
        items = [(g, s) for _, g, s in pending]
        if threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(evaluate, items))
        else:
            results = [evaluate(it) for it in items]
        for (key, genome, seed), (value, exc) in zip(pending, results):
            if exc is not None:
                failures += 1
                logger.warning("fitness failure for %s: %r", genome, exc)
            cache[key] = (value, seed)

        scores = [cache[genome_key(g)][0] for g in population]
        order = sorted(range(n), key=lambda i: (scores[i], i))
        top = order[0]
        if best_genome is None or scores[top] < best_fit:
            best_genome = dict(population[top])
            best_fit, best_seed = scores[top], cache[genome_key(population[top])][1]
        history.append(best_fit)
        populations.append([dict(g) for g in population])
        logger.info("generation %d: best %.6g", gen, best_fit)

        if ckpt is not None:
            record = {
                "generation": gen,
                "population": population,
                "fitness": [_json_float(s) for s in scores],
                "best_genome": best_genome,
                "best_fitness": _json_float(best_fit),
                "history": [_json_float(h) for h in history],
            }
            path = ckpt / f"generation_{gen:03d}.json"
            path.write_text(json.dumps(record, indent=1) + "\n")

        if on_generation is not None:
            on_generation(gen, population, scores, best_genome)
        if gen == config.generations - 1:
            break
        ranked = [population[i] for i in order]
        nxt = [dict(g) for g in ranked[: config.elite_count]]
        pairs = [(ranked[i], ranked[n - 1 - i]) for i in range(n // 2)]
        p = 0
        while len(nxt) < n:
            better, worse = pairs[p % len(pairs)]
            p += 1
            c1, c2 = dict(better), dict(worse)
            if rng.random() < config.crossover_rate:
                for k in space:
                    if rng.random() < 0.5:
                        c1[k], c2[k] = c2[k], c1[k]
            for child in (c1, c2):
                for k, gene in space.items():
                    if rng.random() < config.mutation_rate:
                        child[k] = gene.mutate(child[k], rng)
                if len(nxt) < n:
                    nxt.append(child)
        population = nxt

    return GaResult(best_genome, best_fit, best_seed, history, len(cache), failures,
                    populations)
