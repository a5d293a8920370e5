"""gridflex command line: the full study or one pipeline stage at a time."""

import logging
import sys
import time
from concurrent.futures import Future, ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import click

from src.config import load_config
from src.errors import GridFlexError
from src.flexopf import OpfMode
from src.progress import ProgressTracker, StudyStage, create_progress_callback
from src.study import (
    StageWorkspace,
    emit_reports,
    load_context,
    run_audit_stage,
    run_dispatch_stage,
    run_flexopf_stage,
    run_powerflow_stage,
    run_reinforce_stage,
    run_report_stage,
    run_study,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
POLL_SECONDS = 0.2


def _fatal(message: str) -> None:
    click.echo(f"Error: {message}", err=True)
    sys.exit(EXIT_FATAL)


def _banner(title: str) -> None:
    click.echo(f"\n{'=' * 60}")
    click.echo(f"  {title}")
    click.echo(f"{'=' * 60}\n")


def _echo_progress(tracker: ProgressTracker, cursor: int, pending: Optional[Future] = None) -> int:
    """Echo new updates until ``pending`` is done; returns the cursor to resume from."""
    while True:
        done = pending is None or pending.done()
        updates, cursor = tracker.get_updates_since(cursor)
        for update in updates:
            if update.stage is StudyStage.FAILED:
                click.echo(f"  ⚠ {update.line()}", err=True)
            else:
                click.echo(f"  {'✓' if update.is_complete else '·'} {update.line()}")
        if done:
            return cursor
        time.sleep(POLL_SECONDS)


def _load(ctx: click.Context, overrides: dict):
    """Config file from the group options, then command-line overrides."""
    return load_config(ctx.obj["config_path"], overrides)


def _stage_setup(ctx, scale, mode, workdir, seed, weeks):
    config = _load(ctx, {"profiles.seed": seed, "profiles.weeks": weeks})
    return config, load_context(config), OpfMode(mode), StageWorkspace(workdir)


def stage_options(func):
    """Options shared by every single-stage command."""
    func = click.option("--weeks", default=None, help="ISO weeks to keep, or 'representative'")(func)
    func = click.option("--seed", type=int, default=None, help="Profile synthesis seed")(func)
    func = click.option(
        "--workdir", type=click.Path(file_okay=False, path_type=Path), default=Path("."),
        show_default=True, help="Directory of the stage hand-over files",
    )(func)
    func = click.option(
        "--mode", type=click.Choice([m.value for m in OpfMode]), default=OpfMode.WITH_STORAGE.value,
        show_default=True, help="Flexibility mode",
    )(func)
    func = click.option("--scale", type=float, required=True, help="PV scale factor in (0, 1]")(func)
    return func


@click.group(name="gridflex")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Study configuration file (section.key = value)")
@click.option("--verbose", "-v", is_flag=True, help="Log solver detail")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Compare grid reinforcement against distributed flexibility on a LV network."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@cli.command()
@stage_options
@click.pass_context
def dispatch(ctx, scale, mode, workdir, seed, weeks):
    """Size and dispatch prosumer batteries (stage 1)."""
    try:
        config, context, mode, ws = _stage_setup(ctx, scale, mode, workdir, seed, weeks)
        stage1 = run_dispatch_stage(config, context, scale, mode, ws)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))
    batteries = sum(1 for s in stage1.values() if s.capacity_kwh > 1e-9)
    click.echo(f"✓ Dispatched {len(stage1)} prosumers, {batteries} with a battery → {ws.path('dispatch.csv')}")


@cli.command()
@stage_options
@click.pass_context
def powerflow(ctx, scale, mode, workdir, seed, weeks):
    """Run the AC load flow on every step of dispatch.csv."""
    try:
        config, context, _, ws = _stage_setup(ctx, scale, mode, workdir, seed, weeks)
        series = run_powerflow_stage(config, context, ws)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))
    click.echo(f"✓ Solved {series.horizon_steps} steps → {ws.root}")
    if series.failed_steps:
        click.echo(f"⚠ Load flow failed at {len(series.failed_steps)} steps: {list(series.failed_steps)[:10]}", err=True)
        sys.exit(EXIT_PARTIAL)


@cli.command(name="audit")
@stage_options
@click.pass_context
def audit_cmd(ctx, scale, mode, workdir, seed, weeks):
    """Check the load flow against operating limits and extract intervention periods."""
    try:
        config, context, _, ws = _stage_setup(ctx, scale, mode, workdir, seed, weeks)
        violations, periods = run_audit_stage(config, context, ws)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))
    hours = sum(p.hours(context.profiles.dt_hours) for p in periods)
    click.echo(f"✓ {len(violations)} violations in {len(periods)} periods ({hours:.2f} h)")


@cli.command()
@stage_options
@click.pass_context
def reinforce(ctx, scale, mode, workdir, seed, weeks):
    """Price the replacement of overloaded lines and transformers."""
    try:
        config, context, _, ws = _stage_setup(ctx, scale, mode, workdir, seed, weeks)
        cost = run_reinforce_stage(config, context, ws)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))
    click.echo(
        f"✓ {len(cost.replaced_lines)} lines, {len(cost.replaced_transformers)} transformers: "
        f"{cost.c_reinf_chf_yr:.2f} CHF/yr"
    )


@cli.command()
@stage_options
@click.pass_context
def flexopf(ctx, scale, mode, workdir, seed, weeks):
    """Clear each intervention period with minimal curtailment."""
    try:
        config, context, mode, ws = _stage_setup(ctx, scale, mode, workdir, seed, weeks)
        spliced, failures, residual = run_flexopf_stage(config, context, scale, mode, ws)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))
    click.echo(f"✓ Curtailed {spliced.curtailed_kwh:.3f} kWh → {ws.path('dispatch_flex.csv')}")
    for failure in failures:
        click.echo(f"⚠ Period {failure.period}: {failure.reason}", err=True)
    if residual:
        click.echo(f"⚠ {len(residual)} violations remain after splicing", err=True)
    if failures or residual:
        sys.exit(EXIT_PARTIAL)


@cli.command()
@stage_options
@click.pass_context
def report(ctx, scale, mode, workdir, seed, weeks):
    """Compare reinforcement and flexibility cost for one scale and mode."""
    try:
        config, context, mode, ws = _stage_setup(ctx, scale, mode, workdir, seed, weeks)
        reports = run_report_stage(config, context, scale, mode, ws)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))
    for r in reports:
        verdict = "flexibility" if r.flexibility_cheaper else "reinforcement"
        click.echo(
            f"  c_trafo {r.c_trafo_kchf_mva:g} kCHF/MVA: C_reinf {r.c_reinf_chf_yr:.2f}, "
            f"Δopex {r.delta_opex_chf_yr:.2f} CHF/yr → {verdict}"
        )
    click.echo(f"✓ Report → {ws.path('report.csv')}")


@cli.command()
@click.option("--scales", default=None, help="Comma-separated PV scale factors")
@click.option("--modes", default=None, help="Comma-separated modes (with_storage, no_storage)")
@click.option("--workers", type=int, default=None, help="Scenario worker processes")
@click.option("--seed", type=int, default=None, help="Profile synthesis seed")
@click.option("--weeks", default=None, help="ISO weeks to keep, or 'representative'")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory")
@click.pass_context
def study(ctx, scales, modes, workers, seed, weeks, out):
    """Run the whole pipeline over the scenario ladder and write every table."""
    start_time = time.perf_counter()
    try:
        config = _load(ctx, {
            "pv.scales": scales,
            "study.modes": modes,
            "study.workers": workers,
            "profiles.seed": seed,
            "profiles.weeks": weeks,
            "study.out": str(out) if out is not None else None,
        })
        _banner(f"gridflex study: {len(config.pv.scales)} scenarios, modes "
                f"{', '.join(m.value for m in config.study.modes)}")
        tracker = ProgressTracker()
        callback = create_progress_callback(tracker)
        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(run_study, config, callback)
            cursor = _echo_progress(tracker, 0, pending)
            run = pending.result()
        written = emit_reports(run, config.study.out, callback)
        _echo_progress(tracker, cursor)
    except (GridFlexError, OSError) as e:
        _fatal(str(e))

    _banner("SUMMARY")
    for scenario in run.scenarios:
        penetration = f"{scenario.scenario.penetration:6.1f}%" if scenario.scenario else "     -"
        click.echo(f"  {scenario.label} {penetration}  {scenario.status}")
        for name, result in scenario.modes.items():
            r = result.report
            click.echo(
                f"      {name:<13} periods {len(result.periods):3d}  C_reinf {r.c_reinf_chf_yr:10.2f}  "
                f"Δopex {r.delta_opex_chf_yr:10.2f}  curtailed {r.curtailed_pct:5.2f}%"
            )
    for failure in run.failures:
        click.echo(f"⚠ {failure.scenario} {failure.mode or '-'} [{failure.stage}] {failure.message}", err=True)
    click.echo(f"\n✓ Wrote {len(written)} files to {config.study.out}")
    click.echo(f"⏱ Total runtime: {time.perf_counter() - start_time:.2f} seconds")
    sys.exit(EXIT_PARTIAL if run.partial else EXIT_OK)


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
