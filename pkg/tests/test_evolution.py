import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcast.errors import EmptySpace, ValidationError
from pvcast.evolution import (Categorical, GaConfig, Integer, Real, derived_seed, run_ga,
                              validate_genome)


def distance_to_five(g):
    return abs(g["x"] - 5)


def test_integer_target_reaches_exhaustive_optimum():
    oracle = min(abs(v - 5) for v in range(0, 101))
    res = run_ga({"x": Integer(0, 100)}, distance_to_five, GaConfig(20, 30, seed=3))
    assert res.best_fitness == oracle == 0
    assert res.best_genome == {"x": 5}


def test_single_generation_returns_best_of_initial_population():
    space = {"x": Integer(0, 100), "y": Real(-1.0, 1.0)}
    cfg = GaConfig(10, 1, seed=11)

    def f(g):
        return (g["x"] - 40) ** 2 + g["y"] ** 2

    res = run_ga(space, f, cfg)
    pop = res.populations[0]
    assert res.best_fitness == min(f(g) for g in pop)
    assert res.best_genome in pop


def test_history_is_monotone_and_has_one_entry_per_generation():
    space = {"a": Real(-5, 5), "b": Real(-5, 5), "c": Categorical(("p", "q"))}

    def f(g):
        return (g["a"] - 1) ** 2 + (g["b"] + 2) ** 2 + (g["c"] == "q")

    res = run_ga(space, f, GaConfig(8, 12, seed=5))
    assert len(res.history) == 12
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_elite_survives_unchanged():
    res = run_ga({"x": Integer(0, 100)}, distance_to_five, GaConfig(6, 5, seed=9))
    for gen in range(4):
        pop, nxt = res.populations[gen], res.populations[gen + 1]
        best = min(pop, key=distance_to_five)
        assert best in nxt


def test_same_seed_same_result():
    space = {"x": Integer(0, 100), "r": Real(1e-3, 1.0, log=True)}

    def f(g):
        return abs(g["x"] - 17) + abs(math.log10(g["r"]) + 1)

    a = run_ga(space, f, GaConfig(10, 6, seed=1))
    b = run_ga(space, f, GaConfig(10, 6, seed=1))
    assert a.best_genome == b.best_genome and a.history == b.history
    assert a.populations == b.populations


def noisy(genome, seed):
    rng = np.random.default_rng(seed)
    return abs(genome["x"] - 50) + rng.uniform(0, 0.5)


def test_checkpoints_identical_across_thread_counts(tmp_path):
    space = {"x": Integer(0, 100), "k": Categorical(("a", "b", "c"))}
    for name, threads in (("one", 1), ("four", 4), ("again", 1)):
        run_ga(space, noisy, GaConfig(12, 4, seed=21), checkpoint_dir=tmp_path / name,
               threads=threads)
    for gen in range(4):
        f = f"generation_{gen:03d}.json"
        one = (tmp_path / "one" / f).read_bytes()
        assert one == (tmp_path / "four" / f).read_bytes() == (tmp_path / "again" / f).read_bytes()
    record = json.loads((tmp_path / "one" / "generation_003.json").read_text())
    assert set(record) >= {"generation", "population", "fitness", "best_genome", "best_fitness"}
    assert len(record["population"]) == 12


def test_seeded_fitness_receives_derived_seeds():
    seen = []

    def f(g, seed):
        seen.append(seed)
        return float(g["x"])

    run_ga({"x": Integer(0, 3)}, f, GaConfig(4, 1, seed=8))
    assert seen and all(s == derived_seed(8, 0, i) for i, s in enumerate(seen))


def test_failures_score_infinity_and_search_continues():
    def f(g):
        if g["x"] % 2:
            raise RuntimeError("odd genome")
        if g["x"] == 4:
            return float("nan")
        return float(g["x"])

    res = run_ga({"x": Integer(0, 30)}, f, GaConfig(10, 3, seed=2))
    assert res.failures > 0
    assert math.isfinite(res.best_fitness) and res.best_genome["x"] % 2 == 0
    assert res.best_genome["x"] != 4


def test_checkpoint_writes_null_for_infinite_fitness(tmp_path):
    run_ga({"x": Integer(0, 5)}, lambda g: math.inf if g["x"] else 0.0, GaConfig(4, 1, seed=0),
           checkpoint_dir=tmp_path)
    text = (tmp_path / "generation_000.json").read_text()
    assert "Infinity" not in text
    json.loads(text)


def test_empty_space():
    with pytest.raises(EmptySpace):
        run_ga({}, lambda g: 0.0, GaConfig())


@pytest.mark.parametrize("kwargs", [dict(population_size=1), dict(generations=0),
                                    dict(crossover_rate=1.5), dict(mutation_rate=-0.1),
                                    dict(population_size=4, elite_count=4)])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        GaConfig(**kwargs)


def test_initial_genomes_are_validated():
    with pytest.raises(ValidationError):
        run_ga({"x": Integer(0, 5)}, distance_to_five, GaConfig(4, 1), initial=[{"x": 9}])


def test_validate_genome_checks_names_and_domains():
    space = {"x": Integer(0, 5), "c": Categorical((True, False))}
    assert validate_genome(space, {"x": 3, "c": False}) == {"x": 3, "c": False}
    with pytest.raises(ValidationError):
        validate_genome(space, {"x": 3})
    with pytest.raises(ValidationError):
        validate_genome(space, {"x": 3.5, "c": True})


@given(st.integers(0, 2**31), st.sampled_from(["int", "real", "log", "none"]))
@settings(max_examples=100, deadline=None)
def test_sampling_and_mutation_stay_in_domain(seed, which):
    gene = {"int": Integer(-3, 7), "real": Real(-1.0, 2.0), "log": Real(1e-4, 10.0, log=True),
            "none": Integer(2, 10, allow_none=True)}[which]
    rng = np.random.default_rng(seed)
    v = gene.sample(rng)
    assert gene.contains(v)
    for _ in range(5):
        v = gene.mutate(v, rng)
        assert gene.contains(v)
