"""
Командная строка: данные для рисунков, анализ задач, проверка Монте-Карло.

    python -m glslimit.cli fig1 --out fig1.csv
    python -m glslimit.cli fig3 --n 2 7 limit --format json
    python -m glslimit.cli analyze problem.json
    python -m glslimit.cli mc-validate problem.json --trials 100000 --seed 7
    python -m glslimit.cli replay fig1.csv.manifest.json
"""

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
import pandas as pd
from sqlalchemy.exc import SQLAlchemyError

from . import __version__, constants
from .config import Settings, ToleranceConfig, load_settings
from .constants import EstimatorMode, ExitCode, OutputFormat
from .correlation import kappa, sign_vector
from .gls import blue_fit, estimator_covariance, estimator_weights, two_point_mean_variance
from .logging_config import get_logger, setup_logging
from .manifest import RunManifest, file_digest, manifest_path, record_run
from .monte_carlo import McConfig, empirical_estimator_covariance
from .sampling import SnrProfile, SeriesKey, variance_curve_vs_delta, variance_curve_vs_n
from .serialization import Problem, curve_to_csv, curve_to_json, load_problem, report_to_json
from .subspace import limit_variance_prediction, limiting_covariance, noise_free_count, spectral_decompose
from .validators import (
    GlsLimitError,
    NumericalError,
    ValidationError,
    validate_count,
    validate_positive,
)

logger = get_logger(__name__)


@dataclass
class CommandOutcome:
    payload: str
    parameters: dict[str, Any]
    inputs: list[Path] = field(default_factory=list)
    exit_code: ExitCode = ExitCode.OK


def _series_key(text: str) -> SeriesKey:
    if text == constants.LIMIT_MARKER:
        return constants.LIMIT_MARKER
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидалось целое n или '{constants.LIMIT_MARKER}', получено {text!r}")


def _profile(alpha: float, normalize: bool) -> SnrProfile:
    if normalize:
        return SnrProfile.normalized_linear(alpha)
    return SnrProfile.linear(tau0=1.0, alpha=alpha)


def fig1_table(
    sigma1: float,
    sigma2_values: Sequence[float],
    rho_points: int,
    tie_gap: float = constants.TIE_GAP,
) -> pd.DataFrame:
    """V(μ̂) двух измерений по сетке ρ ∈ [−1, 1]; концы берутся как пределы."""
    rho_points = validate_count(rho_points, "rho_points", minimum=3)
    sigma1 = validate_positive(sigma1, "sigma1")
    rhos = np.linspace(-1.0, 1.0, rho_points)
    rhos[0], rhos[-1] = -1.0, 1.0
    table = pd.DataFrame({"rho": rhos})
    for sigma2 in sigma2_values:
        table[f"sigma2={sigma2:g}"] = [two_point_mean_variance(sigma1, sigma2, rho, tie_gap) for rho in rhos]
    return table


def delta_curve_table(
    alpha: float,
    n_values: Sequence[SeriesKey],
    delta_min: float,
    delta_max: float,
    delta_points: int,
    normalize: bool = True,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    delta_min = validate_positive(delta_min, "delta_min")
    delta_max = validate_positive(delta_max, "delta_max")
    if delta_max <= delta_min:
        raise ValidationError("delta_max должно быть больше delta_min.")
    deltas = np.linspace(delta_min, delta_max, validate_count(delta_points, "delta_points", minimum=2))
    return variance_curve_vs_delta(_profile(alpha, normalize), deltas, n_values, workers=workers)


def n_curve_table(
    alpha: float,
    deltas: Sequence[float],
    n_max: int,
    normalize: bool = True,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    n_max = validate_count(n_max, "n_max")
    return variance_curve_vs_n(_profile(alpha, normalize), deltas, np.arange(1, n_max + 1), workers=workers)


def analyze_problem(problem: Problem, tolerances: ToleranceConfig) -> dict[str, Any]:
    """
    Полный отчёт по задаче: BLUE (если разрешима), прогноз предела, κ.

    Ошибки отдельных частей не прерывают отчёт, а попадают в поля *_error.
    """
    report: dict[str, Any] = {
        "n": problem.n,
        "m": problem.m,
        "kappa": kappa(problem.correlation),
        "blue": None,
        "blue_error": None,
        "negative_weights": [],
        "limit_report": None,
        "limit_error": None,
        "limiting_covariance": None,
        "limiting_covariance_error": None,
    }

    try:
        if problem.y is not None:
            result = blue_fit(
                problem.y, problem.design, problem.covariance, tolerances.conditioning_floor, tolerances.rank_rtol
            )
            report["blue"] = result.to_dict()
            weights = result.weights
        else:
            weights = estimator_weights(
                problem.design, problem.covariance, tolerances.conditioning_floor, tolerances.rank_rtol
            )
            report["blue"] = {
                "covariance": estimator_covariance(
                    problem.design, problem.covariance, tolerances.conditioning_floor, tolerances.rank_rtol
                ).tolist(),
                "weights": weights.tolist(),
            }
        rows, cols = np.nonzero(weights < 0)
        report["negative_weights"] = [[int(i), int(j)] for i, j in zip(rows, cols)]
    except NumericalError as e:
        logger.warning(f"BLUE не вычислен: {e}")
        report["blue_error"] = str(e)

    try:
        signs = problem.signs or sign_vector(problem.correlation, tolerances.sign_threshold)
        prediction = limit_variance_prediction(
            problem.design,
            problem.deviations,
            signs,
            covariance_limit_rank=problem.covariance_limit_rank,
            membership_tol=tolerances.membership_tol,
            rank_rtol=tolerances.rank_rtol,
        )
        report["limit_report"] = prediction.to_dict()
    except GlsLimitError as e:
        report["limit_error"] = str(e)

    try:
        spectrum = spectral_decompose(problem.covariance, clamp_rtol=max(tolerances.clamp_rtol, constants.CLAMP_RTOL))
        if noise_free_count(spectrum, tolerances.clamp_rtol) > 0:
            report["limiting_covariance"] = limiting_covariance(
                problem.design, problem.covariance, tolerances.clamp_rtol, tolerances.rank_rtol
            ).tolist()
    except NumericalError as e:
        report["limiting_covariance_error"] = str(e)
    return report


def _parameters(args: argparse.Namespace) -> dict[str, Any]:
    parameters = {}
    for key, value in sorted(vars(args).items()):
        if isinstance(value, Path):
            value = str(value)
        parameters[key] = value
    return parameters


def _table_payload(table: pd.DataFrame, output_format: str) -> str:
    if OutputFormat(output_format) == OutputFormat.JSON:
        return curve_to_json(table)
    return curve_to_csv(table)


def cmd_fig1(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    table = fig1_table(args.sigma1, args.sigma2, args.rho_points, settings.tolerances.tie_gap)
    return CommandOutcome(payload=_table_payload(table, args.format), parameters=_parameters(args))


def cmd_fig35(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    table = delta_curve_table(
        args.alpha,
        args.n,
        args.delta_min,
        args.delta_max,
        args.delta_points,
        normalize=not args.no_normalize,
        workers=args.workers,
    )
    return CommandOutcome(payload=_table_payload(table, args.format), parameters=_parameters(args))


def cmd_fig4(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    table = n_curve_table(args.alpha, args.delta, args.n_max, normalize=not args.no_normalize, workers=args.workers)
    return CommandOutcome(payload=_table_payload(table, args.format), parameters=_parameters(args))


def cmd_analyze(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    problem = load_problem(args.problem, settings.tolerances.psd_floor, settings.tolerances.rank_rtol)
    report = analyze_problem(problem, settings.tolerances)
    return CommandOutcome(payload=report_to_json(report), parameters=_parameters(args), inputs=[args.problem])


def cmd_mc_validate(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    problem = load_problem(args.problem, settings.tolerances.psd_floor, settings.tolerances.rank_rtol)
    tolerances = settings.tolerances
    config = McConfig(
        trials=args.trials,
        seed=args.seed,
        beta_true=problem.beta_true,
        parallel_chunks=args.chunks,
    )
    report = empirical_estimator_covariance(
        problem.design,
        problem.covariance,
        config,
        mode=EstimatorMode(args.mode),
        analytic_covariance=problem.expected_covariance,
        conditioning_floor=tolerances.conditioning_floor,
        clamp_rtol=tolerances.clamp_rtol,
        rank_rtol=tolerances.rank_rtol,
    )
    return CommandOutcome(
        payload=report_to_json(report.to_dict()),
        parameters=_parameters(args),
        inputs=[args.problem],
        exit_code=ExitCode.OK if report.passed else ExitCode.VALIDATION_FAILURE,
    )


COMMANDS: dict[str, Callable[[argparse.Namespace, Settings], CommandOutcome]] = {
    "fig1": cmd_fig1,
    "fig3": cmd_fig35,
    "fig4": cmd_fig4,
    "fig5": cmd_fig35,
    "analyze": cmd_analyze,
    "mc-validate": cmd_mc_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="Файл результата (по умолчанию stdout)")
    common.add_argument(
        "--format",
        choices=[f.value for f in OutputFormat],
        default=OutputFormat.CSV.value,
        help="Формат таблиц рисунков",
    )
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=100_000)
    common.add_argument(
        "--no-normalize",
        action="store_true",
        help="Профиль τ(s) = 1 + αs вместо нормировки τ(1) = 1",
    )
    common.add_argument("--workers", type=int, default=1, help="Потоки для расчёта сеток")

    parser = argparse.ArgumentParser(
        prog=constants.TOOLKIT_NAME,
        description="Предел полной корреляции в обобщённом МНК",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    fig1 = commands.add_parser("fig1", parents=[common], help="V(μ̂) двух измерений от ρ")
    fig1.add_argument("--sigma1", type=float, default=constants.FIG1_SIGMA1)
    fig1.add_argument("--sigma2", type=float, nargs="+", default=list(constants.FIG1_SIGMA2_VALUES))
    fig1.add_argument("--rho-points", type=int, default=constants.FIG1_RHO_POINTS)

    for name, alpha in (("fig3", constants.FIG3_ALPHA), ("fig5", constants.FIG5_ALPHA)):
        figure = commands.add_parser(name, parents=[common], help="𝒱(n, δ) от δ")
        figure.add_argument("--alpha", type=float, default=alpha)
        figure.add_argument(
            "--n",
            type=_series_key,
            nargs="+",
            default=[*constants.FIG35_N_VALUES, constants.LIMIT_MARKER],
        )
        figure.add_argument("--delta-min", type=float, default=constants.FIG35_DELTA_MIN)
        figure.add_argument("--delta-max", type=float, default=constants.FIG35_DELTA_MAX)
        figure.add_argument("--delta-points", type=int, default=constants.FIG35_DELTA_POINTS)

    fig4 = commands.add_parser("fig4", parents=[common], help="𝒱(n, δ) от n")
    fig4.add_argument("--alpha", type=float, default=constants.FIG4_ALPHA)
    fig4.add_argument("--delta", type=float, nargs="+", default=list(constants.FIG4_DELTA_VALUES))
    fig4.add_argument("--n-max", type=int, default=constants.FIG4_N_MAX)

    analyze = commands.add_parser("analyze", parents=[common], help="Отчёт BLUE и прогноз предела")
    analyze.add_argument("problem", type=Path)

    mc = commands.add_parser("mc-validate", parents=[common], help="Проверка V методом Монте-Карло")
    mc.add_argument("problem", type=Path)
    mc.add_argument("--mode", choices=[m.value for m in EstimatorMode], default=EstimatorMode.BLUE.value)
    mc.add_argument("--chunks", type=int, default=1, help="Частей для параллельной генерации")

    replay = commands.add_parser("replay", help="Повторить запуск по манифесту")
    replay.add_argument("manifest", type=Path)
    return parser


def _write(payload: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(payload)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(payload)


def _record(args: argparse.Namespace, argv: list[str], outcome: CommandOutcome, settings: Settings) -> None:
    manifest = RunManifest(
        command=args.command,
        parameters=outcome.parameters,
        argv=argv,
        inputs={str(path): file_digest(path) for path in outcome.inputs},
        outputs=[str(args.out)] if args.out is not None else [],
        exit_code=int(outcome.exit_code),
    )
    if args.out is not None:
        manifest.save(manifest_path(args.out))
    try:
        record_run(manifest, settings.db.url)
    except SQLAlchemyError as e:
        logger.error(f"Не удалось записать запуск в журнал: {e}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = load_settings()
    except RuntimeError as e:
        print(f"Ошибка загрузки настроек: {e}", file=sys.stderr)
        return int(ExitCode.INPUT_ERROR)

    setup_logging(settings.logging.level, settings.logging.directory)
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "replay":
            source = RunManifest.load(args.manifest)
            logger.info(f"Повтор запуска {source.command} из {args.manifest}")
            argv = list(source.argv)
            args = parser.parse_args(argv)
            if args.command == "replay":
                raise ValidationError("Манифест не может ссылаться на другой replay.")

        logger.info(f"Команда {args.command}: старт")
        outcome = COMMANDS[args.command](args, settings)
    except ValidationError as e:
        logger.error(f"Ошибка входных данных в {args.command}: {e}")
        print(f"Ошибка входных данных: {e}", file=sys.stderr)
        return int(ExitCode.INPUT_ERROR)
    except GlsLimitError as e:
        logger.error(f"Команда {args.command} не выполнена: {e}")
        print(f"Ошибка: {e}", file=sys.stderr)
        return int(ExitCode.VALIDATION_FAILURE)

    _write(outcome.payload, args.out)
    _record(args, argv, outcome, settings)
    logger.info(f"Команда {args.command}: завершена, код {int(outcome.exit_code)}")
    return int(outcome.exit_code)


if __name__ == "__main__":
    sys.exit(main())
