# src/interacting_urns/cli.py

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from . import analytic, oracle, simulate
from .campaign import CampaignService
from .config import RunConfig, check_rho_token, load_config
from .exceptions import BudgetExceededError, InvalidParameterError
from .models import EstimationMode, ModelParams, SingleUrnSampler, WeightSequence
from .table_config import TABLES

logger = logging.getLogger(__name__)

# logging.getLevelNamesMapping is Python 3.11+; same mapping on 3.10.
_level_names_mapping = getattr(
    logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel)
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BUDGET = 3

DEFAULT_SINGLE_URN_HORIZON = 100

Row = Dict[str, object]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Root seed, 0 <= seed < 2**64")
    common.add_argument("--replicas", type=int, help="Monte Carlo replicas")
    common.add_argument("--out", help="CSV destination (default: standard output)")
    common.add_argument("--config", help="KEY=VALUE file mirroring the long flags")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--workers", type=int, help="Worker processes for replica batches")

    parser = argparse.ArgumentParser(
        prog="interacting-urns",
        description="Fixation probabilities of interacting urns: closed forms, oracle and Monte Carlo.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    analytic_cmd = commands.add_parser("analytic", parents=[common], help="Closed forms at one p")
    analytic_cmd.add_argument("--p", type=float)
    analytic_cmd.add_argument("--ell-max", dest="ell_max", type=int)

    oracle_cmd = commands.add_parser("oracle", parents=[common], help="Truncated-solve brackets")
    oracle_cmd.add_argument("--p", type=float)
    oracle_cmd.add_argument("--L", dest="L", type=int)
    oracle_cmd.add_argument("--ell-max", dest="ell_max", type=int)

    simulate_cmd = commands.add_parser("simulate", parents=[common], help="One Monte Carlo estimate")
    simulate_cmd.add_argument("--p", type=float)
    simulate_cmd.add_argument("--rho", help="'inf' or a decimal > 1")
    simulate_cmd.add_argument("--urns", type=int)
    simulate_cmd.add_argument("--colors", type=int)
    simulate_cmd.add_argument("--horizon", help="'auto' or a step count")
    simulate_cmd.add_argument("--mode", choices=[mode.value for mode in EstimationMode])
    _add_horizon_tuning(simulate_cmd)

    sweep_p = commands.add_parser("sweep-p", parents=[common], help="Fixation probability over a p grid")
    sweep_p.add_argument("--p-grid", dest="p_grid", help="start:stop:count")
    _add_horizon_tuning(sweep_p)

    sweep_rho = commands.add_parser("sweep-rho", parents=[common], help="Convergence in rho at fixed p")
    sweep_rho.add_argument("--p", type=float)
    sweep_rho.add_argument("--rho-list", dest="rho_list", help="Comma-separated finite rho values")
    sweep_rho.add_argument("--horizon", help="'auto' or a step count")
    _add_horizon_tuning(sweep_rho)

    nonconformist = commands.add_parser("nonconformist", parents=[common], help="Non-conformist urn law")
    nonconformist.add_argument("--urns", type=int)
    nonconformist.add_argument("--p", type=float)
    nonconformist.add_argument("--mode", choices=["exact", "mc"])
    nonconformist.add_argument("--deep-level", dest="deep_level", type=int)

    single = commands.add_parser("single-urn", parents=[common], help="Single-urn draw frequencies")
    single.add_argument("--weights", help="inf, classical:<rho> or table:u=...;v=...")
    single.add_argument("--horizon", help="Number of draws")
    single.add_argument("--mode", choices=[sampler.value for sampler in SingleUrnSampler])
    return parser


def _add_horizon_tuning(command: argparse.ArgumentParser) -> None:
    command.add_argument("--deep-level", dest="deep_level", type=int, help="Deficit level of the adaptive horizon")
    command.add_argument("--deep-steps", dest="deep_steps", type=int, help="Steps spent past the deficit level")
    command.add_argument("--max-steps", dest="max_steps", type=int, help="Hard cap of the adaptive horizon")


def render_csv(subcommand: str, rows: Iterable[Mapping[str, object]]) -> str:
    table = TABLES[subcommand]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.header)
    for row in rows:
        writer.writerow(table.row(row))
    return buffer.getvalue()


def cmd_analytic(config: RunConfig) -> List[Row]:
    form = analytic.closed_form(config.p)
    rows = []
    for ell in range(config.ell_max + 1):
        rows.append({
            "p": config.p,
            "lambda_minus": form.lambda_minus,
            "lambda_plus": form.lambda_plus,
            "C_p": form.C_p,
            "A_p": form.A_p,
            "q0": form.q0,
            "ell": ell,
            "q_ell": analytic.q_ell(config.p, ell),
            "r_ell": analytic.r_ell(config.p, ell) if config.p < 0.5 else None,
        })
    return rows


def cmd_oracle(config: RunConfig) -> List[Row]:
    if config.ell_max > config.L:
        raise InvalidParameterError(f"ell_max {config.ell_max} exceeds the truncation level {config.L}")
    table = oracle.bracket(config.p, config.L)
    return [
        {
            "p": config.p,
            "L": config.L,
            "ell": ell,
            "q_lower": table.q_lower[ell],
            "q_upper": table.q_upper[ell],
            "r_lower": table.r_lower[ell],
            "r_upper": table.r_upper[ell],
        }
        for ell in range(config.ell_max + 1)
    ]


def _analytic_reference(params: ModelParams) -> Optional[float]:
    if not (params.weights.is_infinite and params.urns == 2 and params.p <= 0.5):
        return None
    if params.colors == 2:
        return analytic.q0(params.p)
    return analytic.multicolor_q(params.colors, params.p)


async def cmd_simulate(config: RunConfig, service: CampaignService) -> List[Row]:
    params = ModelParams(urns=config.urns, colors=config.colors, p=config.p, weights=config.weight_sequence)
    mode = EstimationMode(config.mode or EstimationMode.BRACKET.value)
    estimate = await service.estimate_fixation(
        params, config.replicas, config.seed, mode, config.horizon_steps,
        deep_level=config.deep_level, deep_steps=config.deep_steps, max_steps=config.max_steps,
    )
    return [{
        "p": config.p,
        "rho": config.rho,
        "urns": config.urns,
        "colors": config.colors,
        "replicas": config.replicas,
        "mode": mode.value,
        "lower": estimate.lower,
        "upper": estimate.upper,
        "point": estimate.point,
        "stderr": estimate.stderr,
        "fixated": estimate.tally.fixated,
        "escaped": estimate.tally.escaped,
        "unresolved": estimate.tally.unresolved,
        "q_analytic": _analytic_reference(params),
    }]


async def cmd_sweep_p(config: RunConfig, service: CampaignService) -> List[Row]:
    grid = config.grid
    if any(not 0 <= p <= 0.5 for p in grid):
        raise InvalidParameterError(f"sweep-p grid must lie in [0, 1/2], got {config.p_grid}")
    rows = []
    for p in grid:
        params = ModelParams(p=p, weights=WeightSequence.generalized_power())
        mode = EstimationMode.RUIN_SHORTCUT if p < 0.5 else EstimationMode.BRACKET
        estimate = await service.estimate_fixation(
            params, config.replicas, config.seed, mode, None,
            deep_level=config.deep_level, deep_steps=config.deep_steps, max_steps=config.max_steps,
        )
        rows.append({
            "p": p,
            "q0_analytic": analytic.q0(p),
            "mc_lower": estimate.lower,
            "mc_upper": estimate.upper,
            "stderr": estimate.stderr,
        })
    return rows


async def cmd_sweep_rho(config: RunConfig, service: CampaignService) -> List[Row]:
    tokens = config.rho_tokens
    weights = [WeightSequence.parse(check_rho_token(token)) for token in tokens]
    if any(w.is_infinite for w in weights):
        raise InvalidParameterError("sweep-rho takes finite rho values only")
    rhos = [w.rho for w in weights]
    if rhos != sorted(rhos):
        raise InvalidParameterError(f"rho values must be ascending, got {config.rho_list}")
    reference = analytic.q0(config.p)
    horizon = config.horizon_steps
    rows = []
    for token, w in zip(tokens, weights):
        params = ModelParams(p=config.p, weights=w)
        if horizon is None:
            # both estimates read the same adaptive runs
            tally = await service.fixation_tally(
                params, config.replicas, config.seed, EstimationMode.BRACKET,
                deep_level=config.deep_level, deep_steps=config.deep_steps, max_steps=config.max_steps,
            )
            estimate = simulate.summarize_fixation(tally, params, EstimationMode.BRACKET, config.deep_level)
            ai = simulate.summarize_ai_draws(tally)
        else:
            estimate = await service.estimate_fixation(
                params, config.replicas, config.seed, EstimationMode.BRACKET, horizon,
                deep_level=config.deep_level, deep_steps=config.deep_steps, max_steps=config.max_steps,
            )
            ai = await service.ai_draw_rate(
                params, config.replicas, config.seed, horizon,
                deep_level=config.deep_level, deep_steps=config.deep_steps, max_steps=config.max_steps,
            )
        rows.append({
            "rho": token,
            "estimate_lower": estimate.lower,
            "estimate_upper": estimate.upper,
            "stderr": estimate.stderr,
            "deviation": abs(estimate.point - reference),
            "ai_draw_rate": ai.p_F_and_Abar,
            "ai_draw_stderr": ai.stderr,
        })
    return rows


async def cmd_nonconformist(config: RunConfig, service: CampaignService) -> List[Row]:
    mode = config.mode or "exact"
    if mode == "exact":
        pmf = analytic.nonconformist_pmf(config.urns, config.p)
    elif mode == "mc":
        tally = await service.nonconformist(
            config.urns, config.p, config.replicas, config.seed,
            deep_level=config.deep_level, max_steps=config.max_steps,
        )
        pmf = tally.pmf()
    else:
        raise InvalidParameterError(f"nonconformist mode must be exact or mc, got {mode}")
    return [
        {"urns": config.urns, "p": config.p, "mode": mode, "n": n, "probability": float(prob)}
        for n, prob in enumerate(pmf)
    ]


async def cmd_single_urn(config: RunConfig, service: CampaignService) -> List[Row]:
    sampler = SingleUrnSampler(config.mode or SingleUrnSampler.RUBIN.value)
    horizon = config.horizon_steps or DEFAULT_SINGLE_URN_HORIZON
    tally = await service.single_urn(
        WeightSequence.parse(config.weights), horizon, config.replicas, config.seed, sampler
    )
    n = tally.replicas
    return [
        {"time": t + 1, "black_freq": black / n, "balanced_freq": balanced / n}
        for t, (black, balanced) in enumerate(zip(tally.black, tally.balanced))
    ]


async def dispatch(command: str, config: RunConfig) -> str:
    if command == "analytic":
        rows = cmd_analytic(config)
    elif command == "oracle":
        rows = cmd_oracle(config)
    else:
        handlers = {
            "simulate": cmd_simulate,
            "sweep-p": cmd_sweep_p,
            "sweep-rho": cmd_sweep_rho,
            "nonconformist": cmd_nonconformist,
            "single-urn": cmd_single_urn,
        }
        async with CampaignService(config.workers) as service:
            rows = await handlers[command](config, service)
    return render_csv(command, rows)


async def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        format="%(asctime)s - %(levelname)s - %(message)s",
        level=args.log_level.upper() if _is_level(args.log_level) else logging.WARNING,
    )
    flags = {
        key: value for key, value in vars(args).items()
        if key not in ("command", "config") and value is not None
    }
    try:
        config = load_config(args.config, flags)
        logging.getLogger().setLevel(config.log_level)
        logger.info(f"Running {args.command} with seed {config.seed}")
        output = await dispatch(args.command, config)
    except BudgetExceededError as e:
        logger.debug("Budget exceeded", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as e:
        # ConfigError, model errors and pydantic validation errors all land here
        logger.debug("Invalid parameters", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    if config.out:
        Path(config.out).write_text(output, encoding="utf-8", newline="")
    else:
        sys.stdout.write(output)
    return EXIT_OK


def _is_level(value: Optional[str]) -> bool:
    return value is not None and value.upper() in _level_names_mapping()
