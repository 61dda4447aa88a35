import time
import traceback
from pathlib import Path

import pandas as pd
from prefect import flow, get_run_logger, task, unmapped
from prefect.cache_policies import NONE
from prefect.task_runners import ThreadPoolTaskRunner

from errors import DimensionError, EpisodeError
from harness.config import RunConfig, sweep_configs
from harness.report import (
    RunReport,
    build_report,
    comparison_frame,
    results_frame,
    run_id_for,
    write_comparison,
    write_report,
)
from ingest.config import MAX_WORKERS, OUTPUT_DIR, preset_shift_spec
from ingest.episodes import sample_episode
from ingest.storage import load_dataset
from ingest.synthetic import LabeledDataset, apply_domain_shift, generate_source_dataset
from model.backbone import (
    BackboneSpec,
    FrozenBackbone,
    load_backbone,
    pretrain_and_freeze,
    save_backbone,
)
from training.ablation import AblationMode, Switches, apply_ablation
from training.episode import EpisodeResult, run_episode
from warehouse.base import WarehouseClient
from warehouse.factory import get_warehouse_client


def build_source(config: RunConfig) -> LabeledDataset:
    if config.source_path:
        return load_dataset(config.source_path)
    return generate_source_dataset(
        config.source_classes,
        config.dim,
        config.source_per_class,
        config.cluster_spread,
        seed=config.seed,
    )


def build_target(config: RunConfig) -> LabeledDataset:
    """
    The target domain: fresh class centres under the preset's (or the explicit)
    style shift. Its classes sit after the source's in the global label space.
    """
    if config.target_path:
        return load_dataset(config.target_path, class_offset=config.source_classes)
    clean = generate_source_dataset(
        config.target_classes,
        config.dim,
        config.target_per_class,
        config.cluster_spread,
        seed=config.seed + 1,
        class_offset=config.source_classes,
    )
    spec = config.shift_spec() or preset_shift_spec(config.preset, config.dim, config.seed + 2)
    return apply_domain_shift(clean, spec, seed=config.seed + 3)


def build_backbone(config: RunConfig, source: LabeledDataset, target: LabeledDataset) -> FrozenBackbone:
    """Loads `backbone_path` when it exists; otherwise pretrains, and saves when a path is set."""
    if config.backbone_path and Path(config.backbone_path).is_file():
        backbone = load_backbone(config.backbone_path)
    else:
        backbone = pretrain_and_freeze(
            source,
            BackboneSpec(source.dim, config.hidden_widths),
            epochs=config.pretrain_epochs,
            seed=config.seed,
            learning_rate=config.pretrain_lr,
            batch_size=config.pretrain_batch_size,
            target_class_ids=target.class_ids,
        )
        if config.backbone_path:
            Path(config.backbone_path).parent.mkdir(parents=True, exist_ok=True)
            save_backbone(config.backbone_path, backbone)
    if backbone.input_dim != target.dim:
        raise DimensionError(
            f"backbone expects {backbone.input_dim} channels, target data has {target.dim}"
        )
    return backbone


@task(cache_policy=NONE)
def prepare_domains(config: RunConfig) -> tuple[FrozenBackbone, LabeledDataset]:
    """Builds the frozen backbone and the target dataset every episode shares."""
    logger = get_run_logger()
    source = build_source(config)
    target = build_target(config)
    backbone = build_backbone(config, source, target)
    logger.info(
        "Prepared backbone %s and target domain with %d samples over %d classes",
        backbone.digest()[:12],
        target.size,
        target.class_count,
    )
    return backbone, target


@task(cache_policy=NONE)
def run_episode_task(
    episode_index: int,
    target: LabeledDataset,
    backbone: FrozenBackbone,
    config: RunConfig,
    switches: Switches,
) -> EpisodeResult:
    # Seeded by (seed, index), so the same index draws the same episode in every mode
    episode = sample_episode(
        target,
        config.way,
        config.shot,
        config.query_per_class,
        seed=(config.seed, episode_index),
        extra_query_per_class=config.extra_query_per_class,
    )
    return run_episode(episode, backbone, config, switches, episode_index)


def evaluate_episodes(
    config: RunConfig,
    switches: Switches,
    backbone: FrozenBackbone,
    target: LabeledDataset,
    client: WarehouseClient,
) -> list[EpisodeResult]:
    """
    Maps the episodes onto the worker pool and collects them in index order,
    so the results do not depend on completion order or worker count.
    """
    logger = get_run_logger()
    run_id = run_id_for(config)
    indices = list(range(config.episodes))
    futures = run_episode_task.map(
        indices, unmapped(target), unmapped(backbone), unmapped(config), unmapped(switches)
    )

    results = []
    failures = []
    # strict: .map() returns exactly one future per episode
    for index, future in zip(indices, futures, strict=True):
        try:
            results.append(future.result())
        except (KeyboardInterrupt, SystemExit):
            raise
        except Exception as e:
            logger.error("Episode %d failed: %s", index, e)
            # Recording must not mask the episode's own error if the store is struggling
            try:
                client.log_run_error(
                    run_id=run_id,
                    episode_idx=index,
                    error_type=type(e).__name__,
                    error_message=str(e),
                    stack_trace="".join(traceback.format_exception(e)),
                )
            except Exception as log_error:
                logger.error("Could not record episode %d's failure in RUN_ERRORS: %s", index, log_error)
            failures.append((index, e))

    if failures:
        logger.warning(
            "%d/%d episodes failed: %s", len(failures), len(indices), [i for i, _ in failures]
        )
        index, error = failures[0]
        raise EpisodeError(index, error) from error
    return results


def _report(
    config: RunConfig,
    switches: Switches,
    backbone: FrozenBackbone,
    target: LabeledDataset,
    client: WarehouseClient,
    label: str | None = None,
) -> RunReport:
    started = time.perf_counter()
    results = evaluate_episodes(config, switches, backbone, target, client)
    report = build_report(config, results, time.perf_counter() - started, label=label)
    client.load_results(results_frame(report), overwrite=True)
    return report


def _output_dir(config: RunConfig) -> Path:
    return Path(config.output) if config.output else OUTPUT_DIR


@flow(
    name="StepSPT Episode Run",
    task_runner=ThreadPoolTaskRunner(max_workers=MAX_WORKERS),
    validate_parameters=False,
)
def run_flow(config: RunConfig) -> RunReport:
    logger = get_run_logger()

    client = get_warehouse_client()
    client.ensure_tables_exist()

    config, switches = apply_ablation(config.ablation, config)
    backbone, target = prepare_domains(config)
    digest = backbone.digest()

    report = _report(config, switches, backbone, target, client)
    if backbone.digest() != digest:
        raise RuntimeError("backbone weights changed during the run")

    write_report(report, _output_dir(config))
    logger.info(
        "Run %s (%s): accuracy %.4f +- %.4f over %d episodes",
        report.run_id,
        report.label,
        report.accuracy.mean,
        report.accuracy.ci95,
        report.episode_count,
    )
    return report


@flow(
    name="StepSPT Ablation Matrix",
    task_runner=ThreadPoolTaskRunner(max_workers=MAX_WORKERS),
    validate_parameters=False,
)
def ablation_flow(
    config: RunConfig,
    modes: list[str] | None = None,
    sweep: tuple[str, list[str]] | None = None,
) -> tuple[list[RunReport], pd.DataFrame]:
    """
    One report per mode (and per sweep value), all over the same backbone,
    target domain and episode seeds, so the comparison is paired.
    """
    logger = get_run_logger()

    client = get_warehouse_client()
    client.ensure_tables_exist()

    modes = [AblationMode.parse(mode).value for mode in (modes or [config.ablation])]
    # (label, mode, config) per report
    variants: list[tuple[str, str, RunConfig]] = []
    for mode in modes:
        if sweep is None:
            variants.append((mode, mode, config))
            continue
        key, values = sweep
        for value, swept in zip(values, sweep_configs(config, key, values), strict=True):
            variants.append((f"{mode}_{key}={value}", mode, swept))

    backbone, target = prepare_domains(config)

    reports = []
    for label, mode, variant in variants:
        variant, switches = apply_ablation(mode, variant)
        report = _report(variant, switches, backbone, target, client, label=label)
        write_report(report, _output_dir(config))
        logger.info(
            "%s: accuracy %.4f +- %.4f", label, report.accuracy.mean, report.accuracy.ci95
        )
        reports.append(report)

    comparison = comparison_frame(reports)
    write_comparison(comparison, _output_dir(config) / "comparison.csv")
    return reports, comparison


if __name__ == "__main__":
    run_flow(RunConfig())
