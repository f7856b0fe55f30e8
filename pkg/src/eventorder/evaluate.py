"""Sequence-recovery metrics and the solver benchmark harness.

Metrics compare a recovered event ordering against the generating one:
Kendall's tau-a over event pairs (permutations have no ties) and the
fraction of events placed at exactly the right position. The positional
variance diagram flattens a sampled event-by-position frequency matrix
into plottable rows. The benchmark harness runs the variational solver
and the classical baselines on identical synthetic cohorts and reports
wall time and recovery per run; timing covers the inference loop only
unless asked for end-to-end, and pins linear algebra to one thread so
solvers with different BLAS appetites compare fairly.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .baseline import ebm_greedy, ebm_mcmc
from .core import EventSequence, ModelConfig, rng_from_seed
from .mixture import build_tables, fit_mixtures
from .model import fit
from .synth import SynthSpec, generate
from .transport import solve_assignment

SOLVERS = ("vebm", "greedy", "mcmc")

BENCHMARK_HEADER = "solver,I,J,sigma,seed,wall_ms,tau,frac_correct"


def _positions(s) -> np.ndarray:
    seq = s if isinstance(s, EventSequence) else EventSequence(np.asarray(s, dtype=np.int64))
    return seq.positions()


def kendalls_tau(a, b) -> float:
    """Kendall's tau-a between two orderings of the same events.

    (concordant - discordant) / (N(N-1)/2) over all event pairs; 1 for
    identical orderings, -1 for exact reversals.
    """
    pa, pb = _positions(a), _positions(b)
    if pa.size != pb.size:
        raise ValueError("sequences must order the same number of events")
    if pa.size < 2:
        raise ValueError("need at least two events")
    da = np.sign(pa[:, None] - pa[None, :])
    db = np.sign(pb[:, None] - pb[None, :])
    iu = np.triu_indices(pa.size, 1)
    return float((da[iu] * db[iu]).sum() / iu[0].size)


def fraction_correct(a, b) -> float:
    """Fraction of positions at which both orderings place the same event."""
    pa, pb = _positions(a), _positions(b)
    if pa.size != pb.size:
        raise ValueError("sequences must order the same number of events")
    return float((pa == pb).mean())


def positional_variance_diagram(f, truth=None) -> list[tuple]:
    """Flatten an event-by-position frequency matrix into diagram rows.

    Rows are (event, position, frequency) triples, events listed by
    their maximum-frequency assignment so the mass of a well-determined
    matrix runs down the diagonal; with truth given, each row gains a
    final flag marking the generating position of its event.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError("frequency matrix must be square")
    if (f < 0).any() or np.abs(f.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("rows must be frequency distributions summing to one")
    n = f.shape[0]
    display = np.argsort(solve_assignment(f), kind="stable")
    truth_pos = _positions(truth) if truth is not None else None
    rows = []
    for e in display:
        for p in range(n):
            if truth_pos is None:
                rows.append((int(e), p, float(f[e, p])))
            else:
                rows.append((int(e), p, float(f[e, p]), bool(truth_pos[e] == p)))
    return rows


@dataclass(frozen=True)
class BenchmarkRow:
    """One solver run on one synthetic cohort; error is set when the run failed."""

    solver: str
    n_individuals: int
    n_features: int
    sigma: float
    seed: int
    wall_ms: float
    tau: float
    frac_correct: float
    error: str = ""


def benchmark_csv_lines(rows) -> list[str]:
    """Machine-readable report lines (header first), one per run."""
    out = [BENCHMARK_HEADER]
    for r in rows:
        out.append(
            f"{r.solver},{r.n_individuals},{r.n_features},{r.sigma:g},{r.seed},"
            f"{r.wall_ms:.3f},{r.tau:.6f},{r.frac_correct:.6f}"
        )
    return out


def benchmark(
    solvers,
    sizes,
    repeats: int = 1,
    *,
    sigma: float = 0.5,
    base_seed: int = 0,
    config: ModelConfig | None = None,
    greedy_iters: int = 1000,
    greedy_seeds: int = 10,
    mcmc_samples: int = 1_000_000,
    end_to_end: bool = False,
    single_thread: bool = True,
) -> list[BenchmarkRow]:
    """Run each solver on shared synthetic cohorts; one row per (size, repeat, solver).

    Replicate r of any size uses seed base_seed + r for generation and
    for the solvers, so runs are reproducible and paired across solvers.
    Baseline defaults are the classical settings (1000 greedy passes
    over 10 starts; one million Metropolis samples). A solver failure is
    recorded as a row with NaN metrics and the error message, and the
    sweep continues.
    """
    solvers = tuple(solvers)
    for s in solvers:
        if s not in SOLVERS:
            raise ValueError(f"unknown solver {s!r}; choose from {SOLVERS}")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    cfg = config if config is not None else ModelConfig()
    rows = []
    guard = threadpool_limits(limits=1) if single_thread else nullcontext()
    with guard:
        for n_ind, n_feat in sizes:
            for rep in range(repeats):
                seed = base_seed + rep
                d, true_seq, _ = generate(
                    SynthSpec(n_individuals=n_ind, n_features=n_feat, sigma=sigma, seed=seed)
                )
                t0 = time.perf_counter()
                tables = build_tables(d, fit_mixtures(d))
                mix_seconds = time.perf_counter() - t0
                for solver in solvers:
                    try:
                        wall, order = _run_solver(
                            solver, d, tables, cfg, seed,
                            greedy_iters, greedy_seeds, mcmc_samples,
                            mix_seconds, end_to_end,
                        )
                        row = BenchmarkRow(
                            solver, n_ind, n_feat, sigma, seed,
                            1000.0 * wall,
                            kendalls_tau(true_seq, order),
                            fraction_correct(true_seq, order),
                        )
                    except Exception as exc:  # recorded, sweep continues
                        row = BenchmarkRow(
                            solver, n_ind, n_feat, sigma, seed,
                            float("nan"), float("nan"), float("nan"), error=str(exc),
                        )
                    rows.append(row)
    return rows


def _run_solver(solver, d, tables, cfg, seed, greedy_iters, greedy_seeds,
                mcmc_samples, mix_seconds, end_to_end):
    if solver == "vebm":
        t0 = time.perf_counter()
        fm = fit(d, cfg)
        wall = time.perf_counter() - t0 if end_to_end else fm.inference_seconds
        return wall, fm.sequence
    if solver == "greedy":
        t0 = time.perf_counter()
        seq = ebm_greedy(tables, greedy_iters, greedy_seeds, seed=seed)
    else:
        init = rng_from_seed(seed).permutation(d.n_features)
        t0 = time.perf_counter()
        seq = ebm_mcmc(tables, EventSequence(init), mcmc_samples, seed=seed).map_sequence
    wall = time.perf_counter() - t0
    return wall + (mix_seconds if end_to_end else 0.0), seq
