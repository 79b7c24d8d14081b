"""Multi-objective evolutionary search over unitary-sum decompositions.

Three minimized objectives per candidate: weighted gate count of the term
circuits, negated post-selection success probability on the uniform state,
and the Frobenius norm of the residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decompose import (Decomposition, SignedPermutation, Term,
                        gate_complexity, pauli_decompose, permutation_decompose)


@dataclass
class Genome:
    """Search-space point.

    pauli-subset: bitmask over the exact expansion's support terms.
    permutation-set: explicit signed permutations with positive weights.
    """

    mode: str
    mask: np.ndarray | None = None
    perms: list[SignedPermutation] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("pauli-subset", "permutation-set"):
            raise ValueError(f"unknown genome mode {self.mode!r}")
        if self.mode == "permutation-set" and len(self.perms) != len(self.weights):
            raise ValueError("one weight per permutation required")


@dataclass(frozen=True)
class ObjectiveVector:
    """All three components are minimized."""

    gate_cost: float
    neg_success_prob: float
    residual: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gate_cost, self.neg_success_prob, self.residual)


@dataclass
class Individual:
    genome: Genome
    objectives: ObjectiveVector
    rank: int = 0
    crowding: float = 0.0


@dataclass
class Population:
    individuals: list[Individual]
    generation: int
    rng_seed: int


@dataclass
class SearchConfig:
    population_size: int = 64
    generations: int = 100
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    tournament_size: int = 2
    seed: int = 0
    mode: str = "auto"  # "auto" | "pauli-subset" | "permutation-set"
    max_terms: int = 16

    def __post_init__(self):
        if self.population_size < 2 or self.generations < 1:
            raise ValueError("population and generations must be positive")


def decode(genome: Genome, target: np.ndarray,
           support: list[Term] | None = None) -> Decomposition:
    """Materialize a genome into a Decomposition for the fixed target."""
    if genome.mode == "pauli-subset":
        if support is None:
            support = pauli_decompose(target).terms
        if genome.mask is None or len(genome.mask) != len(support):
            raise ValueError("mask length must match the support size")
        terms = [support[i] for i in np.nonzero(genome.mask)[0]]
    else:
        terms = [Term(w, "perm", perm=p)
                 for p, w in zip(genome.perms, genome.weights) if w > 0]
    kept = sum(t.weight * t.dense().real for t in terms) \
        if terms else np.zeros_like(target)
    return Decomposition(target=np.asarray(target, dtype=float),
                         terms=terms, residual=target - kept)


def _uniform_success_probability(decomp: Decomposition) -> float:
    """p on the uniform node state: ||R u||^2 / (||h||^2 2^a) with R the
    reconstructed operator; equals the circuit value when the plan is run."""
    m = decomp.num_terms
    if m == 0:
        return 0.0
    dim = decomp.target.shape[0]
    u = np.full(dim, 1.0 / np.sqrt(dim))
    r = sum(t.weight * t.dense().real for t in decomp.terms)
    h = decomp.weights
    ancillas = (m - 1).bit_length()
    return float(np.sum((r @ u) ** 2) / (np.sum(h ** 2) * 2 ** ancillas))


def evaluate(genome: Genome, target: np.ndarray,
             support: list[Term] | None = None) -> ObjectiveVector:
    """Decode and score a genome."""
    decomp = decode(genome, target, support)
    cost = sum(gate_complexity(t.circuit()) for t in decomp.terms)
    return ObjectiveVector(gate_cost=float(cost),
                           neg_success_prob=-_uniform_success_probability(decomp),
                           residual=decomp.residual_norm)


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    at, bt = a.as_tuple(), b.as_tuple()
    return all(x <= y for x, y in zip(at, bt)) and any(x < y for x, y in zip(at, bt))


def non_dominated_sort(objectives: list[ObjectiveVector]) -> list[int]:
    """Pareto rank per individual; 0 is the non-dominated front."""
    n = len(objectives)
    if n == 0:
        raise ValueError("empty objective list")
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    dom_count = [0] * n
    ranks = [0] * n
    front = []
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(objectives[p], objectives[q]):
                dominated_by[p].append(q)
            elif dominates(objectives[q], objectives[p]):
                dom_count[p] += 1
        if dom_count[p] == 0:
            ranks[p] = 0
            front.append(p)
    rank = 0
    while front:
        nxt = []
        for p in front:
            for q in dominated_by[p]:
                dom_count[q] -= 1
                if dom_count[q] == 0:
                    ranks[q] = rank + 1
                    nxt.append(q)
        rank += 1
        front = nxt
    return ranks


def crowding_distance(front: list[ObjectiveVector]) -> list[float]:
    """Per-objective normalized neighbor-gap sums; boundaries get +inf."""
    n = len(front)
    if n == 0:
        raise ValueError("empty front")
    if n <= 2:
        return [float("inf")] * n
    dist = [0.0] * n
    num_obj = len(front[0].as_tuple())
    for k in range(num_obj):
        vals = np.array([ind.as_tuple()[k] for ind in front])
        order = np.argsort(vals, kind="stable")
        span = vals[order[-1]] - vals[order[0]]
        dist[order[0]] = dist[order[-1]] = float("inf")
        if span <= 0:
            continue
        for i in range(1, n - 1):
            dist[order[i]] += (vals[order[i + 1]] - vals[order[i - 1]]) / span
    return dist


def _assign_ranks_crowding(pop: list[Individual]):
    ranks = non_dominated_sort([ind.objectives for ind in pop])
    for ind, r in zip(pop, ranks):
        ind.rank = r
    for r in set(ranks):
        members = [i for i, ind in enumerate(pop) if ind.rank == r]
        dists = crowding_distance([pop[i].objectives for i in members])
        for i, d in zip(members, dists):
            pop[i].crowding = d


def _tournament(pop: list[Individual], rng, k: int) -> Individual:
    picks = [pop[rng.integers(len(pop))] for _ in range(k)]
    return min(picks, key=lambda ind: (ind.rank, -ind.crowding))


def _mutate_pauli(genome: Genome, rng, rate: float) -> Genome:
    mask = genome.mask.copy()
    flips = rng.random(len(mask)) < rate
    mask[flips] = ~mask[flips]
    return Genome("pauli-subset", mask=mask)


def _crossover_pauli(a: Genome, b: Genome, rng) -> Genome:
    point = int(rng.integers(1, len(a.mask))) if len(a.mask) > 1 else 0
    return Genome("pauli-subset",
                  mask=np.concatenate([a.mask[:point], b.mask[point:]]))


def _random_transposition(perm: SignedPermutation, rng) -> SignedPermutation:
    mapping = list(perm.mapping)
    i, j = rng.choice(len(mapping), size=2, replace=False)
    mapping[i], mapping[j] = mapping[j], mapping[i]
    return SignedPermutation(tuple(mapping), perm.signs)


def _mutate_perm(genome: Genome, target: np.ndarray, rng,
                 rate: float, max_terms: int) -> Genome:
    perms = list(genome.perms)
    weights = list(genome.weights)
    for i in range(len(perms)):
        if rng.random() < rate:
            choice = rng.integers(3)
            if choice == 0:
                perms[i] = _random_transposition(perms[i], rng)
            elif choice == 1:
                signs = list(perms[i].signs)
                j = int(rng.integers(len(signs)))
                signs[j] = -signs[j]
                perms[i] = SignedPermutation(perms[i].mapping, tuple(signs))
            else:
                weights[i] = max(1e-6, weights[i] * float(np.exp(
                    rng.normal(0.0, 0.25))))
    if rng.random() < rate and perms:
        drop = int(rng.integers(len(perms)))
        perms.pop(drop)
        weights.pop(drop)
    if rng.random() < rate and len(perms) < max_terms:
        # targeted insertion: peel one greedy term off the current residual
        kept = sum(w * p.dense() for p, w in zip(perms, weights)) \
            if perms else np.zeros_like(target)
        step = permutation_decompose(target - kept, max_terms=1)
        if step.terms:
            perms.append(step.terms[0].perm)
            weights.append(step.terms[0].weight)
    return Genome("permutation-set", perms=perms, weights=weights)


def _crossover_perm(a: Genome, b: Genome, rng, max_terms: int) -> Genome:
    if not a.perms or not b.perms:
        donor = a if a.perms else b
        return Genome("permutation-set", perms=list(donor.perms),
                      weights=list(donor.weights))
    cut_a = int(rng.integers(1, len(a.perms) + 1))
    cut_b = int(rng.integers(0, len(b.perms) + 1))
    perms = list(a.perms[:cut_a]) + list(b.perms[cut_b:])
    weights = list(a.weights[:cut_a]) + list(b.weights[cut_b:])
    return Genome("permutation-set", perms=perms[:max_terms],
                  weights=weights[:max_terms])


def _is_integral(matrix: np.ndarray) -> bool:
    return bool(np.allclose(matrix, np.round(matrix), atol=1e-12))


def _run_search(target: np.ndarray,
                config: SearchConfig) -> tuple[Population, list[Term] | None]:
    target = np.asarray(target, dtype=float)
    rng = np.random.default_rng(config.seed)
    mode = config.mode
    if mode == "auto":
        mode = "permutation-set" if _is_integral(target) else "pauli-subset"

    support = None
    if mode == "pauli-subset":
        support = pauli_decompose(target).terms
        width = len(support)

        def fresh(full: bool) -> Genome:
            mask = np.ones(width, dtype=bool) if full \
                else rng.random(width) < 0.5
            return Genome("pauli-subset", mask=mask)

        pop_genomes = [fresh(full=(i == 0)) for i in range(config.population_size)]
    else:
        greedy = permutation_decompose(target, max_terms=config.max_terms)
        base = Genome("permutation-set",
                      perms=[t.perm for t in greedy.terms],
                      weights=[t.weight for t in greedy.terms])
        pop_genomes = [base]
        while len(pop_genomes) < config.population_size:
            pop_genomes.append(_mutate_perm(base, target, rng,
                                            max(config.mutation_rate, 0.3),
                                            config.max_terms))

    pop = [Individual(g, evaluate(g, target, support)) for g in pop_genomes]
    _assign_ranks_crowding(pop)

    for generation in range(config.generations):
        offspring = []
        while len(offspring) < config.population_size:
            pa = _tournament(pop, rng, config.tournament_size)
            pb = _tournament(pop, rng, config.tournament_size)
            if mode == "pauli-subset":
                child = _crossover_pauli(pa.genome, pb.genome, rng) \
                    if rng.random() < config.crossover_rate else \
                    Genome("pauli-subset", mask=pa.genome.mask.copy())
                child = _mutate_pauli(child, rng, config.mutation_rate)
            else:
                child = _crossover_perm(pa.genome, pb.genome, rng,
                                        config.max_terms) \
                    if rng.random() < config.crossover_rate else \
                    Genome("permutation-set", perms=list(pa.genome.perms),
                           weights=list(pa.genome.weights))
                child = _mutate_perm(child, target, rng, config.mutation_rate,
                                     config.max_terms)
            offspring.append(Individual(child, evaluate(child, target, support)))
        merged = pop + offspring
        _assign_ranks_crowding(merged)
        merged.sort(key=lambda ind: (ind.rank, -ind.crowding))
        pop = merged[:config.population_size]
        _assign_ranks_crowding(pop)

    return Population(individuals=pop, generation=config.generations,
                      rng_seed=config.seed), support


def search(target: np.ndarray, config: SearchConfig) -> list[Decomposition]:
    """Elitist generational loop; returns the final rank-0 front decoded and
    sorted by residual then gate cost. Deterministic in config.seed."""
    population, support = _run_search(target, config)
    target = np.asarray(target, dtype=float)
    front = [ind for ind in population.individuals if ind.rank == 0]
    decoded = [(decode(ind.genome, target, support), ind.objectives)
               for ind in front]
    decoded.sort(key=lambda pair: (pair[1].residual, pair[1].gate_cost))
    # drop exact duplicates (same objectives) to keep the front readable
    seen = set()
    out = []
    for decomp, obj in decoded:
        key = tuple(np.round(obj.as_tuple(), 12))
        if key not in seen:
            seen.add(key)
            out.append(decomp)
    return out


def final_population(target: np.ndarray, config: SearchConfig) -> Population:
    """The whole ranked final population, for exhaustive dominance checks."""
    population, _ = _run_search(target, config)
    return population
