"""Command-line harness.

Every command is a pure function of its input files, flags, and seed:
rerunning with the same inputs reproduces output files byte for byte.
Each output file gets a ``<name>.manifest`` sidecar (directories get one
``manifest.txt``) recording the resolved flags, tool version, and sha256
hashes of inputs and outputs, so a run can be replay-verified.

Exit codes: 0 success, 2 usage or validation problems, 3 mathematical or
resource infeasibility (cap overruns, off-path states, zero-mass
conditioning).
"""
from __future__ import annotations

import functools
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (EvalReport, conditional_tc_exact,
                       conditional_tc_plugin, eval_generation, kl,
                       metrics_csv, tv)
from .core import (AlphaSchedule, DenseDistribution, StateSpace, TimeGrid,
                   coupling_marginal, states_to_indices)
from .errors import INFEASIBLE, CapError, RediError, ValidationError
from .fileio import (read_coupling, read_distribution, sha256_file,
                     write_coupling, write_manifest, write_samples,
                     write_trajectories)
from .flow import (PathMode, sample_sources, sample_trajectories)
from .rectify import (RectifyConfig, build_independent, build_masked_source,
                      build_random, build_two_bit_demo, one_step_model,
                      redi_iterate, save_run)
from .rng import RngSpec

MAKE_KINDS = ("independent", "fig1-pi0", "fig1-pi1", "masked", "random")


def _guard(f):
    """Map package errors onto the exit-code contract."""
    @functools.wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except INFEASIBLE as exc:
            click.echo(f"infeasible: {type(exc).__name__}: {exc}", err=True)
            sys.exit(3)
        except RediError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(2)
    return wrapped


def _flag_entries(params: dict) -> dict:
    entries = {}
    for key in sorted(params):
        value = params[key]
        entries[f"flag:{key}"] = "" if value is None else str(value)
    return entries


def _sidecar(out_path, command: str, params: dict, inputs: dict) -> None:
    """Write <out_path>.manifest describing one output file."""
    entries = {"tool": "redi", "version": __version__, "command": command}
    entries.update(_flag_entries(params))
    for name, path in sorted(inputs.items()):
        entries[f"input:{name}"] = sha256_file(path)
    entries[f"output:{Path(out_path).name}"] = sha256_file(out_path)
    write_manifest(str(out_path) + ".manifest", entries)


def _space_from_flags(n, d, mask) -> StateSpace:
    if n is None or d is None:
        raise click.UsageError("this kind needs --n and --d")
    return StateSpace(n=n, d=d, mask_token=mask)


def _load_distribution(spec: str, space: StateSpace | None,
                       what: str) -> DenseDistribution:
    if spec == "uniform":
        if space is None:
            raise click.UsageError(
                f"--{what} uniform needs --n and --d for the state space")
        return DenseDistribution.uniform(space)
    dist = read_distribution(spec)
    if space is not None and dist.space != space:
        raise ValidationError(
            f"{what} file {spec} lives on a different state space")
    return dist


def _parse_mode(name: str) -> PathMode:
    return PathMode.parse(name)


@click.group()
@click.version_option(__version__, prog_name="redi")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker cap. Execution is sequential either way and "
                   "outputs are identical for any value, so this flag is "
                   "excluded from manifests.")
@click.pass_context
def main(ctx, threads):
    """Exact coupling rectification laboratory for discrete flows."""
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")
    ctx.obj = {"threads": threads}


@main.command()
@click.argument("kind", type=click.Choice(MAKE_KINDS))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Coupling file to write.")
@click.option("--n", type=int, default=None, help="Sequence length.")
@click.option("--d", type=int, default=None, help="Alphabet size.")
@click.option("--mask", type=int, default=None,
              help="Mask token (required for kind=masked).")
@click.option("--r", type=float, default=0.3, show_default=True,
              help="Masked-source interpolation ratio.")
@click.option("--source", "source_spec", default="uniform",
              show_default=True, help="'uniform' or a distribution file.")
@click.option("--target", "target_spec", default="uniform",
              show_default=True, help="'uniform' or a distribution file.")
@click.option("--support", type=int, default=None,
              help="Support size for kind=random.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
@_guard
def make(ctx, kind, out, n, d, mask, r, source_spec, target_spec, support,
         seed):
    """Build a coupling and write it as a canonical coupling file."""
    if kind == "fig1-pi0":
        c = build_two_bit_demo("pi0")
    elif kind == "fig1-pi1":
        c = build_two_bit_demo("pi1")
    elif kind == "independent":
        space = None
        if source_spec == "uniform" or target_spec == "uniform":
            space = _space_from_flags(n, d, mask)
        p0 = _load_distribution(source_spec, space, "source")
        q1 = _load_distribution(target_spec, p0.space, "target")
        c = build_independent(p0, q1)
    elif kind == "masked":
        if mask is None:
            raise click.UsageError("kind=masked needs --mask")
        space = _space_from_flags(n, d, mask)
        q1 = _load_distribution(target_spec, space, "target")
        c = build_masked_source(space, r, q1)
    else:
        if support is None:
            raise click.UsageError("kind=random needs --support")
        space = _space_from_flags(n, d, mask)
        c = build_random(space, support, RngSpec(seed))
    write_coupling(out, c)
    inputs = {}
    if source_spec != "uniform":
        inputs["source"] = source_spec
    if target_spec != "uniform":
        inputs["target"] = target_spec
    _sidecar(out, "redi make " + kind, ctx.params, inputs)
    click.echo(f"wrote {out} ({c.n_entries} entries)")


@main.command()
@click.argument("coupling", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", type=float, default=0.0, show_default=True)
@click.option("--s", type=float, default=1.0, show_default=True)
@click.option("--method", type=click.Choice(["exact", "plugin"]),
              default="exact", show_default=True)
@click.option("--roots", type=int, default=5000, show_default=True,
              help="Conditioning states for the plug-in estimator.")
@click.option("--samples", type=int, default=10, show_default=True,
              help="Transition draws per conditioning state.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--schedule", default="linear", show_default=True,
              help="linear | cosine | power:<p>")
@click.option("--path", "path_mode",
              type=click.Choice(["coordinatewise", "holistic"]),
              default="coordinatewise", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write the CSV to a file.")
@click.pass_context
@_guard
def tc(ctx, coupling, t, s, method, roots, samples, seed, schedule,
       path_mode, out):
    """Measure conditional total correlation of a coupling's transition."""
    c = read_coupling(coupling)
    sched = AlphaSchedule.parse(schedule)
    mode = _parse_mode(path_mode)
    if method == "exact":
        report = conditional_tc_exact(c, t, s, sched, mode)
    else:
        report = conditional_tc_plugin(c, t, s, sched, mode, roots=roots,
                                       samples_per_root=samples,
                                       rng=RngSpec(seed))
    text = metrics_csv([report])
    click.echo(text, nl=False)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
        _sidecar(out, "redi tc", ctx.params, {"coupling": coupling})


@main.command()
@click.argument("coupling", type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", type=int, default=16, show_default=True,
              help="Sampler steps per rectification round.")
@click.option("--k", type=int, default=1, show_default=True,
              help="Rectification rounds.")
@click.option("--method", type=click.Choice(["exact", "sampled"]),
              default="exact", show_default=True)
@click.option("--pairs", type=int, default=50000, show_default=True,
              help="Pairs drawn per round when --method sampled.")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--schedule", default="linear", show_default=True)
@click.option("--path", "path_mode",
              type=click.Choice(["coordinatewise", "holistic"]),
              default="coordinatewise", show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Output directory for pi_<k>.redi, tc_curve.csv, "
                   "manifest.txt.")
@click.pass_context
@_guard
def rectify(ctx, coupling, steps, k, method, pairs, tau, seed, schedule,
            path_mode, out):
    """Iterate rectification and record the total-correlation curve."""
    c = read_coupling(coupling)
    cfg = RectifyConfig(grid=TimeGrid.uniform(steps),
                        schedule=AlphaSchedule.parse(schedule),
                        mode=_parse_mode(path_mode), tau=tau, method=method,
                        pairs=pairs if method == "sampled" else None,
                        rng=RngSpec(seed))
    try:
        run = redi_iterate(c, k, cfg)
    except CapError as exc:
        click.echo(f"infeasible: CapError: {exc} (try --method sampled)",
                   err=True)
        sys.exit(3)
    extra = {"tool": "redi", "version": __version__,
             "command": "redi rectify"}
    extra.update(_flag_entries(ctx.params))
    extra["input:coupling"] = sha256_file(coupling)
    save_run(run, out, extra)
    curve = " -> ".join(f"{v:.6f}" for v in run.tc_curve)
    click.echo(f"wrote {out}: tc_curve [{curve}]"
               + (f", {len(run.violations)} monotonicity violation(s) "
                  f"recorded in counterexamples.json"
                  if run.violations else ""))


@main.command("eval")
@click.argument("coupling", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", "target_spec", default="coupling",
              show_default=True,
              help="'coupling' (its target marginal), 'uniform', or a "
                   "distribution file.")
@click.option("--steps", type=int, default=16, show_default=True)
@click.option("--sampler", type=click.Choice(["exact", "mc"]),
              default="exact", show_default=True,
              help="exact composition or Monte-Carlo trajectories.")
@click.option("--n", "n_samples", type=int, default=100000,
              show_default=True, help="Trajectories when --sampler mc.")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--schedule", default="linear", show_default=True)
@click.option("--path", "path_mode",
              type=click.Choice(["coordinatewise", "holistic"]),
              default="coordinatewise", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write the CSV to a file.")
@click.pass_context
@_guard
def eval_cmd(ctx, coupling, target_spec, steps, sampler, n_samples, tau,
             seed, schedule, path_mode, out):
    """Compare the multi-step sampler's output law against a target."""
    c = read_coupling(coupling)
    target = _resolve_target(c, target_spec)
    report = eval_generation(
        c, TimeGrid.uniform(steps), target, AlphaSchedule.parse(schedule),
        _parse_mode(path_mode), tau, RngSpec(seed),
        sampler="exact" if sampler == "exact" else "sampled",
        n_samples=n_samples)
    text = metrics_csv([report])
    click.echo(text, nl=False)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
        inputs = {"coupling": coupling}
        if target_spec not in ("coupling", "uniform"):
            inputs["target"] = target_spec
        _sidecar(out, "redi eval", ctx.params, inputs)


def _resolve_target(c, target_spec: str) -> DenseDistribution:
    if target_spec == "coupling":
        return DenseDistribution.from_sparse(
            c.space, coupling_marginal(c, "target"))
    if target_spec == "uniform":
        return DenseDistribution.uniform(c.space)
    dist = read_distribution(target_spec)
    if dist.space != c.space:
        raise ValidationError(
            f"target file {target_spec} lives on a different state space")
    return dist


@main.command()
@click.argument("coupling", type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "count", type=int, default=100000, show_default=True,
              help="Samples to draw.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--target", "target_spec", default="coupling",
              show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Samples file to write.")
@click.pass_context
@_guard
def onestep(ctx, coupling, count, seed, target_spec, out):
    """Sample the one-step factorized model and score it against a target."""
    c = read_coupling(coupling)
    family = one_step_model(c)
    samples = family.sample(count, RngSpec(seed))
    write_samples(out, c.space, samples)
    target = _resolve_target(c, target_spec)
    idx = states_to_indices(c.space, samples)
    empirical = np.bincount(idx, minlength=c.space.num_states) / count
    support = target.probs > 0.0
    report = EvalReport(
        tv_to_target=tv(target.probs, empirical),
        kl_target_generated=kl(target.probs, empirical, smoothing=1e-9),
        support_coverage=float(
            np.count_nonzero(empirical[support] > 0.0) / support.sum()),
        steps=1)
    inputs = {"coupling": coupling}
    if target_spec not in ("coupling", "uniform"):
        inputs["target"] = target_spec
    _sidecar(out, "redi onestep", ctx.params, inputs)
    click.echo(metrics_csv([report]), nl=False)


@main.command()
@click.argument("coupling", type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", type=int, default=16, show_default=True)
@click.option("--n", "count", type=int, default=100, show_default=True,
              help="Trajectories to draw.")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--schedule", default="linear", show_default=True)
@click.option("--path", "path_mode",
              type=click.Choice(["coordinatewise", "holistic"]),
              default="coordinatewise", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Trajectory file to write.")
@click.pass_context
@_guard
def sample(ctx, coupling, steps, count, tau, seed, schedule, path_mode, out):
    """Dump raw factorized-sampler trajectories (all stages)."""
    c = read_coupling(coupling)
    grid = TimeGrid.uniform(steps)
    rng = RngSpec(seed)
    src = sample_sources(c, count, rng)
    traj = sample_trajectories(c, grid, src, AlphaSchedule.parse(schedule),
                               _parse_mode(path_mode), tau, rng,
                               return_path=True)
    write_trajectories(out, c.space, list(grid.times), traj)
    _sidecar(out, "redi sample", ctx.params, {"coupling": coupling})
    click.echo(f"wrote {out} ({count} trajectories, {steps} steps)")


if __name__ == "__main__":
    main()
