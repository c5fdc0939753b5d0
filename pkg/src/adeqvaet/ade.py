"""Adaptive differential evolution over a normalized [0,1]^d genome box.

DE/rand/1 mutation with binomial crossover and non-strict greedy selection,
plus success-history adaptation of the control parameters: per-candidate F is
drawn from Cauchy(mu_F, 0.1) and CR from Normal(mu_CR, 0.1), and after each
generation the distribution centers move toward the Lehmer mean / mean of the
values that produced accepted trials. Scores are maximized; internally the
engine minimizes fitness = 1 - score so the <=-replacement rule and the
argmax result agree.

Every candidate's stochastic draws in a generation come from its own labeled
substream, so evaluation order (serial or thread pool) cannot change results.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CandidateEvaluationFailed, DimensionMismatch, PopulationTooSmall
from .seeding import substream

log = logging.getLogger("adeqvaet.ade")


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    kind: str = "continuous"  # continuous | integer | log

    def __post_init__(self):
        if self.kind not in ("continuous", "integer", "log"):
            raise ValueError(f"unknown dimension kind {self.kind!r}")
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower bound must be < upper bound")
        if self.kind == "log" and self.lower <= 0:
            raise ValueError(f"{self.name}: log-scaled bounds must be positive")


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    @property
    def d(self) -> int:
        return len(self.dims)

    @classmethod
    def box(cls, lower: float, upper: float, d: int, prefix: str = "x") -> "SearchSpace":
        return cls(tuple(Dimension(f"{prefix}{i}", lower, upper) for i in range(d)))


@dataclass
class Candidate:
    genome: np.ndarray  # components in [0, 1]
    fitness: float | None = None
    id: int = 0


@dataclass(frozen=True)
class ControlParams:
    F: float
    CR: float

    def __post_init__(self):
        if not 0.0 < self.F <= 1.0:
            raise ValueError(f"F must be in (0, 1], got {self.F}")
        if not 0.0 <= self.CR <= 1.0:
            raise ValueError(f"CR must be in [0, 1], got {self.CR}")


@dataclass
class AdaptState:
    mu_f: float = 0.5
    mu_cr: float = 0.5
    c: float = 0.1
    success_f: list[float] = field(default_factory=list)
    success_cr: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class AdeConfig:
    pop_size: int = 30
    max_generations: int = 100
    patience: int = 30
    seed: int = 0
    crossover_mode: str = "binomial"  # "whole_vector" keeps the one-draw variant
    adapt_c: float = 0.1
    fixed_f: float | None = None  # set both fixed_* to run classical DE
    fixed_cr: float | None = None

    def __post_init__(self):
        if self.crossover_mode not in ("binomial", "whole_vector"):
            raise ValueError(f"unknown crossover mode {self.crossover_mode!r}")

    @property
    def fixed_control(self) -> ControlParams | None:
        if self.fixed_f is None or self.fixed_cr is None:
            return None
        return ControlParams(F=self.fixed_f, CR=self.fixed_cr)


@dataclass
class AdeResult:
    best_theta: dict
    best_score: float
    best_genome: np.ndarray
    history: list[dict]
    evaluations: int
    generations: int


# --- operators ---------------------------------------------------------------


def init_population(space: SearchSpace, cfg: AdeConfig) -> tuple[list[Candidate], AdaptState]:
    """Uniform seeded genomes, unevaluated, plus a fresh adaptation state."""
    if cfg.pop_size < 4:
        raise PopulationTooSmall(f"pop_size must be >= 4, got {cfg.pop_size}")
    rng = substream(cfg.seed, "init")
    pop = [
        Candidate(genome=rng.random(space.d), id=j)
        for j in range(cfg.pop_size)
    ]
    return pop, AdaptState(c=cfg.adapt_c)


def mutate(population: list[Candidate], target_index: int, f: float, rng: np.random.Generator) -> np.ndarray:
    """DE/rand/1 donor: Y_s1 + F * (Y_s2 - Y_s3), clipped back into the box."""
    n = len(population)
    if n < 4:
        raise PopulationTooSmall("mutation needs three distinct non-target candidates")
    others = [i for i in range(n) if i != target_index]
    picks = rng.choice(len(others), size=3, replace=False)
    s1, s2, s3 = (population[others[int(p)]].genome for p in picks)
    return np.clip(s1 + f * (s2 - s3), 0.0, 1.0)


def crossover(
    target: np.ndarray,
    donor: np.ndarray,
    cr: float,
    rng: np.random.Generator,
    mode: str = "binomial",
) -> np.ndarray:
    """Binomial crossover with a forced donor index (drawn first).

    mode="whole_vector" instead applies one draw to the entire vector: the
    trial is the donor when rand <= CR and the target otherwise.
    """
    if target.shape != donor.shape:
        raise DimensionMismatch(f"target {target.shape} vs donor {donor.shape}")
    if mode == "whole_vector":
        return donor.copy() if rng.random() <= cr else target.copy()
    d = target.shape[0]
    j_rand = int(rng.integers(d))
    take = rng.random(d) <= cr
    take[j_rand] = True
    return np.where(take, donor, target)


def select(
    target: Candidate,
    trial: Candidate,
    adapt: AdaptState | None = None,
    control: ControlParams | None = None,
) -> Candidate:
    """Non-strict greedy replacement; ties count as successes for adaptation."""
    if trial.fitness <= target.fitness:
        if adapt is not None and control is not None:
            adapt.success_f.append(control.F)
            adapt.success_cr.append(control.CR)
        return trial
    return target


def sample_control(adapt: AdaptState, rng: np.random.Generator) -> ControlParams:
    """F ~ Cauchy(mu_F, 0.1) redrawn while <= 0 and truncated at 1;
    CR ~ Normal(mu_CR, 0.1) clipped into [0, 1]."""
    f = 0.0
    while f <= 0.0:
        f = adapt.mu_f + 0.1 * rng.standard_cauchy()
    f = min(f, 1.0)
    cr = float(np.clip(rng.normal(adapt.mu_cr, 0.1), 0.0, 1.0))
    return ControlParams(F=f, CR=cr)


def adapt_parameters(adapt: AdaptState) -> AdaptState:
    """Move mu_F toward the Lehmer mean and mu_CR toward the mean of the
    generation's successful draws; no successes leaves both untouched."""
    if adapt.success_f:
        s = np.asarray(adapt.success_f)
        lehmer = float((s * s).sum() / s.sum())
        adapt.mu_f = (1.0 - adapt.c) * adapt.mu_f + adapt.c * lehmer
    if adapt.success_cr:
        adapt.mu_cr = (1.0 - adapt.c) * adapt.mu_cr + adapt.c * float(np.mean(adapt.success_cr))
    adapt.success_f.clear()
    adapt.success_cr.clear()
    return adapt


def decode_genome(genome: np.ndarray, space: SearchSpace) -> dict:
    """Map a normalized genome to named hyperparameter values."""
    genome = np.asarray(genome, dtype=np.float64)
    if genome.shape != (space.d,):
        raise DimensionMismatch(f"genome has {genome.shape}, space has {space.d} dims")
    theta = {}
    for g, dim in zip(genome, space.dims):
        if dim.kind == "log":
            value = math.exp(math.log(dim.lower) + g * (math.log(dim.upper) - math.log(dim.lower)))
        else:
            value = dim.lower + g * (dim.upper - dim.lower)
            if dim.kind == "integer":
                value = int(min(max(math.floor(value + 0.5), dim.lower), dim.upper))
        theta[dim.name] = value
    return theta


# --- driver -------------------------------------------------------------------


def _fitness_of(objective, theta, candidate_id: int) -> float:
    try:
        return 1.0 - float(objective(theta))
    except Exception as exc:  # failed candidates score worst, run continues
        log.warning("%s", CandidateEvaluationFailed(candidate_id, exc))
        return math.inf


def optimize(
    objective,
    space: SearchSpace,
    cfg: AdeConfig,
    workers: int = 1,
    on_generation=None,
) -> AdeResult:
    """Maximize a black-box score over the search space.

    The generational loop is synchronous: donors always come from the
    population as it stood at the start of the generation, so per-generation
    objective evaluations can run on a thread pool without changing results.
    Stops at max_generations or after `patience` generations without a
    strict best-fitness improvement. Ties in the final argmax go to the
    earliest evaluation.
    """
    pop, adapt = init_population(space, cfg)

    def evaluate(genomes):
        thetas = [decode_genome(g, space) for g in genomes]
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(
                    pool.map(lambda args: _fitness_of(objective, args[1], args[0]), enumerate(thetas))
                )
        return [_fitness_of(objective, theta, j) for j, theta in enumerate(thetas)]

    fits = evaluate([c.genome for c in pop])
    for cand, fit in zip(pop, fits):
        cand.fitness = fit
    evaluations = len(pop)

    best: Candidate | None = None
    for cand in pop:
        if math.isfinite(cand.fitness) and (best is None or cand.fitness < best.fitness):
            best = Candidate(genome=cand.genome.copy(), fitness=cand.fitness, id=cand.id)

    history: list[dict] = []
    stall = 0
    generations = 0
    for gen in range(1, cfg.max_generations + 1):
        trials = []
        controls = []
        for j in range(cfg.pop_size):
            rng = substream(cfg.seed, f"gen{gen}:cand{j}")
            control = cfg.fixed_control or sample_control(adapt, rng)
            donor = mutate(pop, j, control.F, rng)
            trials.append(crossover(pop[j].genome, donor, control.CR, rng, cfg.crossover_mode))
            controls.append(control)
        trial_fits = evaluate(trials)
        evaluations += cfg.pop_size

        improved = False
        for j in range(cfg.pop_size):
            trial = Candidate(genome=trials[j], fitness=trial_fits[j], id=j)
            pop[j] = select(pop[j], trial, adapt, controls[j])
            fit = pop[j].fitness
            if math.isfinite(fit) and (best is None or fit < best.fitness):
                improved = True
                best = Candidate(genome=pop[j].genome.copy(), fitness=fit, id=j)
        adapt_parameters(adapt)
        generations = gen

        finite = [1.0 - c.fitness for c in pop if math.isfinite(c.fitness)]
        record = {
            "gen": gen,
            "best": None if best is None else 1.0 - best.fitness,
            "mean": float(np.mean(finite)) if finite else None,
            "mu_F": adapt.mu_f,
            "mu_CR": adapt.mu_cr,
            "best_theta": None if best is None else decode_genome(best.genome, space),
        }
        history.append(record)
        if on_generation is not None:
            on_generation(record)

        stall = 0 if improved else stall + 1
        if stall >= cfg.patience:
            break

    if best is None:
        raise CandidateEvaluationFailed(-1, RuntimeError("every objective evaluation failed"))
    return AdeResult(
        best_theta=decode_genome(best.genome, space),
        best_score=1.0 - best.fitness,
        best_genome=best.genome,
        history=history,
        evaluations=evaluations,
        generations=generations,
    )


# --- benchmark functions -------------------------------------------------------


def sphere(x: np.ndarray) -> float:
    return float(np.sum(x * x))


def rosenbrock(x: np.ndarray) -> float:
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def rastrigin(x: np.ndarray) -> float:
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


BENCHMARKS = {"sphere": sphere, "rosenbrock": rosenbrock, "rastrigin": rastrigin}


def minimize_function(
    func, lower: float, upper: float, dim: int, cfg: AdeConfig, workers: int = 1
) -> tuple[np.ndarray, float, list[dict]]:
    """Minimize a benchmark function; history carries function values."""
    space = SearchSpace.box(lower, upper, dim)
    names = [d.name for d in space.dims]

    def objective(theta: dict) -> float:
        return -func(np.array([theta[n] for n in names]))

    result = optimize(objective, space, cfg, workers=workers)
    history = []
    for rec in result.history:
        theta = rec["best_theta"]
        history.append(
            {
                "gen": rec["gen"],
                "best": None if rec["best"] is None else -rec["best"],
                "mean": None if rec["mean"] is None else -rec["mean"],
                "mu_F": rec["mu_F"],
                "mu_CR": rec["mu_CR"],
                "best_theta": None if theta is None else [theta[n] for n in names],
            }
        )
    best_vec = np.array([result.best_theta[n] for n in names])
    return best_vec, -result.best_score, history
