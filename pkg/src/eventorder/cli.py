"""Command line interface.

Four verbs cover the full workflow:

* ``simulate`` — draw a synthetic cohort; writes ``data.csv``,
  ``truth.json`` and ``sim_params.json`` into the output directory.
* ``fit`` — infer an event ordering from a dataset; writes
  ``model.json`` and ``sequence.csv``.
* ``stage`` — place individuals along a fitted ordering; writes
  ``stages.csv`` with the maximum-likelihood stage and the full
  posterior per row.
* ``evaluate`` — compare orderings (Kendall tau, fraction correct,
  optional positional-variance table) or, with ``--benchmark``, run
  the solver timing harness across cohort sizes.

Settings resolve as flags > config file > built-in defaults. The config
file is flat ``key=value`` text whose keys match the long flag names
with underscores (``tau_prior=2.0``). Every command accepts ``--seed``,
``--threads``, ``--config`` and ``--out-dir``; errors go to stderr with
an ``error:`` prefix and the exit status is zero only on success.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import evaluate as ev
from . import io as eio
from . import model as em
from . import synth
from .core import DivergenceError, ModelConfig

_CONFIG_KEYS = {
    "seed": int,
    "threads": int,
    "tau": float,
    "tau_prior": float,
    "sinkhorn_iters": int,
    "opt_iters": int,
    "lr": float,
    "gumbel": None,  # parsed by _parse_bool
    "x_init": str,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


class _Settings:
    """Merged view of flags, config file, and defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.conf: dict = {}
        if getattr(args, "config", None):
            for key, raw in eio.read_config_file(args.config).items():
                if key not in _CONFIG_KEYS:
                    known = ", ".join(sorted(_CONFIG_KEYS))
                    raise ValueError(f"config: unknown key {key!r} (known keys: {known})")
                cast = _parse_bool if key == "gumbel" else _CONFIG_KEYS[key]
                try:
                    self.conf[key] = cast(raw)
                except ValueError as exc:
                    raise ValueError(f"config: bad value for {key!r}: {exc}") from None

    def get(self, name: str, default):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.conf:
            return self.conf[name]
        return default

    def model_config(self) -> ModelConfig:
        base = ModelConfig()
        return ModelConfig(
            tau=self.get("tau", base.tau),
            tau_prior=self.get("tau_prior", base.tau_prior),
            n_s=self.get("sinkhorn_iters", base.n_s),
            n_opt=self.get("opt_iters", base.n_opt),
            learning_rate=self.get("lr", base.learning_rate),
            use_gumbel_noise=self.get("gumbel", base.use_gumbel_noise),
            seed=self.get("seed", base.seed),
            x_init=self.get("x_init", base.x_init),
        )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap BLAS threads (default: all cores; benchmarks always pin to one)",
    )
    p.add_argument("--config", default=None, help="key=value settings file")
    p.add_argument("--out-dir", default=".", help="directory for output files")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=None, help="posterior temperature")
    p.add_argument("--tau-prior", type=float, default=None, help="prior temperature")
    p.add_argument("--sinkhorn-iters", type=int, default=None, help="Sinkhorn sweeps per step")
    p.add_argument("--opt-iters", type=int, default=None, help="optimiser steps")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    p.add_argument(
        "--gumbel",
        action="store_const",
        const=True,
        default=None,
        help="perturb scores with fresh Gumbel noise each step",
    )
    p.add_argument(
        "--x-init",
        choices=("zeros", "prevalence"),
        default=None,
        help="score-matrix initialisation",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventorder",
        description="Infer event orderings from cross-sectional snapshots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic cohort")
    p_sim.add_argument("--individuals", type=int, required=True)
    p_sim.add_argument("--features", type=int, required=True)
    p_sim.add_argument("--sigma", type=float, required=True, help="measurement noise scale")
    p_sim.add_argument("--control-fraction", type=float, default=0.2)
    p_sim.add_argument("--missing-fraction", type=float, default=0.0)
    p_sim.add_argument("--mean-low", type=float, default=1.0)
    p_sim.add_argument("--mean-high", type=float, default=3.0)
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="infer an event ordering from a dataset")
    p_fit.add_argument("--data", required=True, help="dataset CSV")
    _add_model_flags(p_fit)
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_stage = sub.add_parser("stage", help="place individuals along a fitted ordering")
    p_stage.add_argument("--model", required=True, help="model JSON from fit")
    p_stage.add_argument("--data", required=True, help="dataset CSV")
    _add_common(p_stage)
    p_stage.set_defaults(func=cmd_stage)

    p_eval = sub.add_parser("evaluate", help="score a sequence or run the benchmark")
    p_eval.add_argument("--truth", default=None, help="truth JSON with the planted sequence")
    p_eval.add_argument("--model", default=None, help="model JSON to score")
    p_eval.add_argument("--sequence", default=None, help="sequence CSV to score")
    p_eval.add_argument(
        "--variance-samples",
        type=int,
        default=0,
        help="sample the fitted posterior this many times and write the positional-variance table",
    )
    p_eval.add_argument("--benchmark", action="store_true", help="run the timing harness")
    p_eval.add_argument(
        "--solvers",
        default=",".join(ev.SOLVERS),
        help="comma-separated subset of: " + ", ".join(ev.SOLVERS),
    )
    p_eval.add_argument("--sizes", default=None, help="cohort sizes as IxJ, e.g. 100x10,1000x100")
    p_eval.add_argument("--repeats", type=int, default=1, help="replicates per size")
    p_eval.add_argument("--sigma", type=float, default=0.5, help="noise scale for benchmark cohorts")
    p_eval.add_argument("--greedy-iters", type=int, default=1000)
    p_eval.add_argument("--greedy-seeds", type=int, default=10)
    p_eval.add_argument("--mcmc-samples", type=int, default=1_000_000)
    p_eval.add_argument(
        "--end-to-end",
        action="store_true",
        help="time mixture fitting too, not just the ordering search",
    )
    _add_model_flags(p_eval)
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, settings: _Settings) -> int:
    if args.sigma <= 0:
        raise ValueError("sigma must be positive")
    spec = synth.SynthSpec(
        n_individuals=args.individuals,
        n_features=args.features,
        sigma=args.sigma,
        control_fraction=args.control_fraction,
        patient_mean_range=(args.mean_low, args.mean_high),
        missing_fraction=args.missing_fraction,
        seed=settings.get("seed", 0),
    )
    d, seq, stages = synth.generate(spec)
    out = _out_dir(args)
    eio.write_dataset_csv(out / "data.csv", d)
    eio.write_truth_json(out / "truth.json", seq, stages)
    eio.write_params_json(out / "sim_params.json", spec)
    return 0


def cmd_fit(args, settings: _Settings) -> int:
    d, _ = eio.read_dataset_csv(args.data)
    cfg = settings.model_config()
    fm = em.fit(d, cfg)
    out = _out_dir(args)
    eio.write_model_json(out / "model.json", fm)
    eio.write_sequence_csv(out / "sequence.csv", fm)
    return 0


def cmd_stage(args, settings: _Settings) -> int:
    fm = eio.read_model_json(args.model)
    d, ids = eio.read_dataset_csv(args.data)
    posteriors = em.stage(fm, d)
    eio.write_stages_csv(_out_dir(args) / "stages.csv", ids, posteriors)
    return 0


def _load_candidate(args):
    if args.model:
        return eio.read_model_json(args.model)
    if args.sequence:
        return eio.read_sequence_csv(args.sequence)
    raise ValueError("evaluate needs --model or --sequence (or --benchmark)")


def cmd_evaluate(args, settings: _Settings) -> int:
    out = _out_dir(args)
    if args.benchmark:
        return _run_benchmark(args, settings, out)

    if args.truth is None:
        raise ValueError("evaluate needs --truth (or --benchmark)")
    truth = eio.read_sequence_json(args.truth)
    candidate = _load_candidate(args)
    cand_seq = candidate.sequence if hasattr(candidate, "sequence") else candidate
    tau = ev.kendalls_tau(truth, cand_seq)
    frac = ev.fraction_correct(truth, cand_seq)
    print(f"kendalls_tau {_num(tau)}")
    print(f"fraction_correct {_num(frac)}")
    eio.write_lines(
        out / "metrics.csv",
        ["metric,value", f"kendalls_tau,{_num(tau)}", f"fraction_correct,{_num(frac)}"],
    )
    if args.variance_samples > 0:
        if not hasattr(candidate, "x_scores"):
            raise ValueError("--variance-samples needs --model (sampling uses the fitted scores)")
        freq = em.sample_positional_variance(
            candidate, candidate.config, args.variance_samples, seed=settings.get("seed", 0)
        )
        rows = ev.positional_variance_diagram(freq, truth=truth)
        eio.write_variance_csv(out / "positional_variance.csv", rows)
    return 0


def _run_benchmark(args, settings: _Settings, out: Path) -> int:
    if not args.sizes:
        raise ValueError("--benchmark needs --sizes, e.g. --sizes 100x10,1000x100")
    sizes = []
    for token in args.sizes.split(","):
        parts = token.lower().split("x")
        if len(parts) != 2:
            raise ValueError(f"bad size {token!r}: use IxJ, e.g. 100x10")
        try:
            sizes.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"bad size {token!r}: use IxJ, e.g. 100x10") from None
    solvers = tuple(s.strip() for s in args.solvers.split(",") if s.strip())
    rows = ev.benchmark(
        solvers,
        sizes,
        repeats=args.repeats,
        sigma=args.sigma,
        base_seed=settings.get("seed", 0),
        config=settings.model_config(),
        greedy_iters=args.greedy_iters,
        greedy_seeds=args.greedy_seeds,
        mcmc_samples=args.mcmc_samples,
        end_to_end=args.end_to_end,
    )
    lines = ev.benchmark_csv_lines(rows)
    for line in lines:
        print(line)
    eio.write_lines(out / "benchmark.csv", lines)
    return 0


def _num(v: float) -> str:
    return f"{v:.6f}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _Settings(args)
        threads = settings.get("threads", 0)
        if threads < 0:
            raise ValueError("threads must be non-negative")
        limit = threads if threads > 0 else None
        with threadpool_limits(limits=limit):
            return args.func(args, settings)
    except (ValueError, DivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
