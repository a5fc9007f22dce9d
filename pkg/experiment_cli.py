"""
Command-line surface: ``c3 <subcommand> --config path [--set k=v]... [--jobs N] [--svg] [--preset name]``.

Exit codes: 0 success, 2 config error, 3 scorer unavailable, 4 I/O error,
5 internal invariant violation.
"""

import json
import logging
from pathlib import Path
from typing import Annotated, Any

import typer
from pydantic import ValidationError

from config import CONFIG
from constants import ExitCode, LogMsg, Preset, Subcommand, SweepParam
from exceptions import (
    ConfigError,
    DimensionError,
    DomainError,
    ExperimentIOError,
    InvariantViolationError,
    ScorerUnavailableError,
    TensorFormatError,
)
from experiments import ExperimentRunner, load_experiment_config
from log_utils import ErrorPayload, log_with_payload

app = typer.Typer(name="c3", add_completion=False, no_args_is_help=True)

ConfigOpt = Annotated[Path | None, typer.Option("--config", "-c", help="Experiment config (JSON).")]
SetOpt = Annotated[list[str] | None, typer.Option("--set", help="Override a config key: a.b.c=value (repeatable).")]
JobsOpt = Annotated[int, typer.Option("--jobs", "-j", min=1, help="Worker threads for per-seed work.")]
SvgOpt = Annotated[bool, typer.Option("--svg", help="Also write an SVG plot where the command has one.")]
PresetOpt = Annotated[Preset | None, typer.Option("--preset", help="Model-family preset: steps and scaling sum.")]
ProfileOpt = Annotated[Path | None, typer.Option("--profile", help="C3 profile JSON written by combine.")]
LatentsOpt = Annotated[bool, typer.Option("--dump-latents", help="gen: also write final latents as tensor files.")]
QuietOpt = Annotated[bool, typer.Option("--quiet", "-q", help="Hide progress bars and INFO logs.")]

EXIT_CODES: tuple[tuple[type[BaseException] | tuple[type[BaseException], ...], ExitCode], ...] = (
    ((ConfigError, ValidationError, DomainError, DimensionError), ExitCode.CONFIG_ERROR),
    (ScorerUnavailableError, ExitCode.SCORER_UNAVAILABLE),
    ((ExperimentIOError, TensorFormatError, OSError), ExitCode.IO_ERROR),
    (InvariantViolationError, ExitCode.INVARIANT_VIOLATION),
)


def setup_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else getattr(logging, CONFIG.log_config.level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(module)s.%(funcName)s:%(lineno)d - %(message)s",
    )


def exit_code_for(error: BaseException) -> ExitCode | None:
    for types, code in EXIT_CODES:
        if isinstance(error, types):
            return code
    return None


def run_command(
    command: Subcommand,
    config: Path | None,
    overrides: list[str] | None,
    jobs: int,
    svg: bool,
    preset: Preset | None,
    profile: Path | None,
    dump_latents: bool,
    quiet: bool,
    **kwargs: Any,
) -> None:
    setup_logging(quiet)
    runner: ExperimentRunner | None = None
    try:
        experiment = load_experiment_config(config, overrides or [], preset)
        runner = ExperimentRunner(
            experiment,
            jobs=jobs,
            svg=svg,
            profile_path=profile,
            dump_latents=dump_latents,
            quiet=quiet,
            endpoint_override=CONFIG.scorer_endpoint,
        )
        manifest = runner.run(command, **kwargs)
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            log_with_payload(
                logging.ERROR,
                LogMsg.UNEXPECTED_ERROR,
                payload=ErrorPayload(error_message=str(e)),
                exc_info=True,
                error=e,
            )
            raise
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(code=int(code)) from e
    finally:
        if runner is not None:
            runner.close()
    typer.echo(str(manifest))


def _register(command: Subcommand, help_text: str) -> None:
    def handler(
        config: ConfigOpt = None,
        overrides: SetOpt = None,
        jobs: JobsOpt = 1,
        svg: SvgOpt = False,
        preset: PresetOpt = None,
        profile: ProfileOpt = None,
        dump_latents: LatentsOpt = False,
        quiet: QuietOpt = False,
    ) -> None:
        run_command(command, config, overrides, jobs, svg, preset, profile, dump_latents, quiet)

    app.command(name=command, help=help_text)(handler)


for _command, _help in (
    (Subcommand.GEN, "Baseline and hooked images for every (concept, seed)."),
    (Subcommand.ABLATE_BLOCKS, "Single-block amplification over the factor grid."),
    (Subcommand.ABLATE_FREQUENCY, "All-band versus low-band amplification of one block."),
    (Subcommand.SELECT, "Constrained amplification-factor search per target block."),
    (Subcommand.COMBINE, "Merge saved selections into one C3 profile and render it."),
    (Subcommand.QUANT, "Creativity metric battery, plain versus C3."),
    (Subcommand.ABLATE_MODIFIER, "Creativity modifier present/absent crossed with C3 on/off."),
    (Subcommand.FREEU_COMPARE, "FreeU-style (b, s) grid next to the C3 profile."),
    (Subcommand.TEMPLATE_SWEEP, "The C3 profile under each creativity modifier."),
    (Subcommand.CFG_COMPARE, "Guidance scale and negative prompt settings, C3 off and on."),
):
    _register(_command, _help)


@app.command(name=Subcommand.SWEEP, help="One hyperparameter swept around a single-block profile.")
def sweep(
    param: Annotated[SweepParam | None, typer.Option("--param", help="Parameter to sweep.")] = None,
    values: Annotated[str | None, typer.Option("--values", help="JSON list of values.")] = None,
    config: ConfigOpt = None,
    overrides: SetOpt = None,
    jobs: JobsOpt = 1,
    svg: SvgOpt = False,
    preset: PresetOpt = None,
    profile: ProfileOpt = None,
    quiet: QuietOpt = False,
) -> None:
    parsed = None
    if values is not None:
        try:
            parsed = json.loads(values)
        except json.JSONDecodeError:
            parsed = [v.strip() for v in values.split(",") if v.strip()]
        if not isinstance(parsed, list):
            parsed = [parsed]
    run_command(
        Subcommand.SWEEP, config, overrides, jobs, svg, preset, profile, False, quiet, param=param, values=parsed
    )


def main() -> None:
    app()


if __name__ == "__main__":
    main()
