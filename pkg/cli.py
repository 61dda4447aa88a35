import argparse
import logging
import sys
from pathlib import Path

from errors import ConfigurationError, StepSPTError
from harness.config import STEP_SIZE_GRID, RunConfig, load_config, parse_sweep
from ingest.config import OUTPUT_DIR

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_RUNTIME = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value run configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--out", help="Output path (directory or file, per subcommand)")
    parser.add_argument("--ablation")
    parser.add_argument("--preset", choices=["near", "distant"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Step-wise style prompt tuning lab.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Evaluate one configuration over many episodes")
    _add_common(run)

    ablate = commands.add_parser("ablate", help="Paired comparison of ablation modes")
    _add_common(ablate)
    ablate.add_argument("--modes", default="full,no_step,no_style,ce_only", help="Comma-separated modes")
    ablate.add_argument("--sweep", help="key=v1,v2,... over alpha, gamma, sigma or steps")

    theory = commands.add_parser("theory", help="Step-wise bound values over a parameter grid")
    _add_common(theory)
    theory.add_argument("--products", default="1.5,2,3,4,5,10", help="tau_m*R values")
    theory.add_argument("--steps", default=",".join(str(e) for e in (0, *STEP_SIZE_GRID)))
    theory.add_argument("--alpha0", type=float, default=1.0)
    theory.add_argument("--n", type=int, default=1)
    theory.add_argument("--c-order", type=float, default=0.0)
    theory.add_argument("--one-shot-products", default="0,0.25,0.5,0.75,0.9", help="tau*R values below 1")
    theory.add_argument("--source-loss", type=float, default=0.1)
    theory.add_argument("--alpha-star", type=float, default=0.0)
    theory.add_argument("--omega-count", type=int, default=9, help="Frequencies spread evenly over [0, pi]")

    histogram = commands.add_parser("histogram", help="Input histograms before and after tuning")
    _add_common(histogram)
    histogram.add_argument("--episode-index", type=int, default=0)
    histogram.add_argument("--bins", type=int, default=20)

    gen_data = commands.add_parser("gen-data", help="Write the source, target and backbone files")
    _add_common(gen_data)
    return parser


def _config(args: argparse.Namespace, with_output: bool = True) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "episodes": args.episodes,
        "ablation": args.ablation,
        "preset": args.preset,
    }
    if with_output:
        overrides["output"] = args.out
    return load_config(args.config, overrides)


def _floats(key: str, text: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigurationError(key, f"{key} expects comma-separated numbers, got {text!r}") from None


def cmd_run(args: argparse.Namespace) -> int:
    from pipeline import run_flow

    run_flow(_config(args))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    from pipeline import ablation_flow

    modes = [mode.strip() for mode in args.modes.split(",") if mode.strip()]
    sweep = parse_sweep(args.sweep) if args.sweep else None
    _, comparison = ablation_flow(_config(args), modes, sweep)
    logger.info("\n%s", comparison.to_string(index=False))
    return EXIT_OK


def cmd_theory(args: argparse.Namespace) -> int:
    import numpy as np

    from theory.bounds import bound_grid, contraction_grid, one_shot_grid

    products = _floats("products", args.products)
    steps = [int(e) for e in _floats("steps", args.steps)]
    if args.n < 1:
        raise ConfigurationError("n", f"n must be >= 1, got {args.n}")
    one_shot_products = _floats("one_shot_products", args.one_shot_products)
    if any(p < 0 or p >= 1 for p in one_shot_products):
        raise ConfigurationError("one_shot_products", f"one-shot bound needs 0 <= tau*R < 1, got {one_shot_products}")
    if args.omega_count < 1:
        raise ConfigurationError("omega_count", f"omega_count must be >= 1, got {args.omega_count}")
    grid = bound_grid(products, steps, alpha0=args.alpha0, n=args.n, c_order=args.c_order)
    if any(p > 3 for p in products):
        logger.info(
            "For tau_m*R > 3 the per-step factor 2/(1 - tau_m*R) is negative; bounds use its magnitude"
        )
    out = Path(args.out) if args.out else OUTPUT_DIR / "theory.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.to_csv(out, index=False)
    logger.info("Wrote %d bound values to %s", len(grid), out)

    one_shot = one_shot_grid(one_shot_products, args.source_loss, args.alpha_star, n=args.n, c_order=args.c_order)
    one_shot_out = out.with_name(f"{out.stem}_one_shot.csv")
    one_shot.to_csv(one_shot_out, index=False)
    logger.info("Wrote %d one-shot bound values to %s", len(one_shot), one_shot_out)

    contraction = contraction_grid(products, np.linspace(0.0, np.pi, args.omega_count))
    contraction_out = out.with_name(f"{out.stem}_contraction.csv")
    contraction.to_csv(contraction_out, index=False)
    logger.info("Wrote %d contraction factors to %s", len(contraction), contraction_out)
    return EXIT_OK


def cmd_histogram(args: argparse.Namespace) -> int:
    from harness.histogram import emit_style_histogram
    from ingest.episodes import sample_episode
    from model.prompt import StylePrompt, compute_target_stats
    from pipeline import build_backbone, build_source, build_target
    from training.ablation import apply_ablation
    from training.episode import run_episode

    config, switches = apply_ablation("full", _config(args, with_output=False))
    target = build_target(config)
    backbone = build_backbone(config, build_source(config), target)
    episode = sample_episode(
        target, config.way, config.shot, config.query_per_class, seed=(config.seed, args.episode_index)
    )
    result = run_episode(episode, backbone, config, switches, args.episode_index)

    stats = compute_target_stats(episode.samples)
    before = StylePrompt.identity(stats.channels, config.epsilon)
    after = StylePrompt(result.omega1, result.omega2, config.epsilon)
    frame = emit_style_histogram(episode, stats, before, after, bins=args.bins)

    out = Path(args.out) if args.out else OUTPUT_DIR / f"histogram_{args.episode_index}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False)
    logger.info("Wrote %d histogram rows to %s", len(frame), out)
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    from ingest.storage import save_dataset
    from model.backbone import save_backbone
    from pipeline import build_backbone, build_source, build_target

    config = _config(args, with_output=False)
    out = Path(args.out) if args.out else OUTPUT_DIR / "data"
    out.mkdir(parents=True, exist_ok=True)
    source = build_source(config)
    target = build_target(config)
    backbone = build_backbone(config, source, target)
    save_dataset(out / "source.sptd", source)
    save_dataset(out / "target.sptd", target)
    save_backbone(out / "backbone.sptm", backbone)
    logger.info(
        "Wrote %d source and %d target samples plus a %d-layer backbone to %s",
        source.size,
        target.size,
        len(backbone.layers),
        out,
    )
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "ablate": cmd_ablate,
    "theory": cmd_theory,
    "histogram": cmd_histogram,
    "gen-data": cmd_gen_data,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIGURATION
    except StepSPTError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Run failed: %s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
