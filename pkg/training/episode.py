import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from alignment.credible import PredictionSet
from ingest.episodes import Episode
from model.backbone import FrozenBackbone
from model.classifier import LinearClassifier, PromptedModel
from model.prompt import StylePrompt, compute_target_stats
from theory.wasserstein import distribution_shift
from training.ablation import Switches
from training.optim import SGDState, StepSchedule
from training.phases import external_phase, internal_phase
from training.propagation import label_propagation

if TYPE_CHECKING:
    from harness.config import RunConfig

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


@dataclass
class EpisodeResult:
    episode_index: int
    episode_hash: str
    accuracy: float
    accuracy_lp: float | None
    extra_accuracy: float | None
    ce_trace: list[float] = field(default_factory=list)
    external_trace: list[float] = field(default_factory=list)
    mi_trace: list[float] = field(default_factory=list)
    kl_trace: list[float] = field(default_factory=list)
    group_sizes: list[int] = field(default_factory=list)
    fallback_steps: list[int] = field(default_factory=list)
    shift_trace: list[float] = field(default_factory=list)
    omega1: Array | None = None
    omega2: Array | None = None
    classifier_weight: Array | None = None
    classifier_bias: Array | None = None

    @property
    def max_shift(self) -> float | None:
        return max(self.shift_trace) if self.shift_trace else None


def _accuracy(predictions: Array, labels) -> float:
    return float(np.mean(np.argmax(predictions, axis=1) == np.asarray(labels)))


def run_episode(
    episode: Episode,
    backbone: FrozenBackbone,
    config: "RunConfig",
    switches: Switches | None = None,
    episode_index: int = 0,
) -> EpisodeResult:
    """
    Tunes a fresh prompt and classifier on one episode and scores the query set.

    Each step caches the previous predictions, trains the classifier, then
    aligns the current predictions to the cached ones through the prompt.
    Target statistics cover support and query, never the extra query set.
    """
    switches = switches or Switches()
    samples = episode.samples
    stats = compute_target_stats(samples)
    prompt = StylePrompt.identity(stats.channels, config.epsilon) if switches.style_prompt else None
    classifier = LinearClassifier.zeros(backbone.feature_dim, episode.way)
    model = PromptedModel(backbone, classifier, stats, prompt)

    schedule = StepSchedule.build(config.steps, config.max_epochs, config.batch_size, episode.support_size)
    classifier_optimizer = SGDState(config.lr, config.momentum, config.weight_decay)
    # the external phase keeps its own velocities, also when it trains the classifier;
    # only the prompt group steps at the scaled rate
    external_lr = config.lr * config.prompt_lr_scale if prompt is not None else config.lr
    external_optimizer = SGDState(external_lr, config.momentum, config.weight_decay)

    result = EpisodeResult(
        episode_index=episode_index,
        episode_hash=episode.membership_hash(),
        accuracy=0.0,
        accuracy_lp=None,
        extra_accuracy=None,
    )

    prev = PredictionSet(model.predict(samples), step_index=0)
    for step in range(1, schedule.total_steps + 1):
        result.ce_trace.extend(
            internal_phase(model, episode.support_x, episode.support_y, schedule, classifier_optimizer)
        )
        if switches.external_phase:
            outcome = external_phase(
                model,
                samples,
                prev,
                episode.support_y,
                alpha=config.alpha,
                gamma=config.gamma,
                sigma=config.effective_sigma,
                optimizer=external_optimizer,
                credible_rule=switches.credible_rule,
                use_mi=switches.use_mi,
            )
            result.external_trace.append(outcome.loss)
            if outcome.mutual_information is not None:
                result.mi_trace.append(outcome.mutual_information)
            result.kl_trace.append(outcome.diversity)
            result.group_sizes.append(len(outcome.group))
            if outcome.group.used_fallback:
                result.fallback_steps.append(step)

        current = PredictionSet(model.predict(samples), step_index=step)
        if config.track_shift:
            result.shift_trace.append(distribution_shift(prev, current).distance)
        prev = current

    query_predictions = prev.predictions[episode.support_size :]
    result.accuracy = _accuracy(query_predictions, episode.query_y)
    if switches.label_propagation:
        refined = label_propagation(
            prev.predictions,
            episode.support_y,
            k_neighbors=config.lp_neighbors,
            alpha_lp=config.lp_alpha,
            iterations=config.lp_iterations,
        )
        result.accuracy_lp = _accuracy(refined, episode.query_y)
    if episode.has_extra_query:
        result.extra_accuracy = _accuracy(model.predict(episode.extra_x), episode.extra_y)

    if prompt is not None:
        result.omega1 = prompt.omega1.values.copy()
        result.omega2 = prompt.omega2.values.copy()
    result.classifier_weight = classifier.weight.values.copy()
    result.classifier_bias = classifier.bias.values.copy()

    logger.debug(
        "Episode %d: accuracy %.4f (LP %s) over %d steps",
        episode_index,
        result.accuracy,
        "off" if result.accuracy_lp is None else f"{result.accuracy_lp:.4f}",
        schedule.total_steps,
    )
    return result
