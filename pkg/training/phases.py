"""
The two halves of one alignment step.

internal_phase trains the classifier on support cross-entropy with the prompt
frozen. external_phase aligns current predictions with last step's credible
group and takes one full-batch step on the prompt with the classifier frozen.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from alignment.credible import CredibleGroup, PredictionSet, credible_group
from alignment.pairing import PairSet, pair_all
from engine.tape import Parameter, Tape, Tensor, frozen
from model.classifier import PromptedModel
from objectives.information import external_loss
from objectives.supervised import cross_entropy_loss
from training.optim import SGDState, StepSchedule, sgd_update

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class ExternalOutcome:
    loss: float
    mutual_information: float | None
    diversity: float
    group: CredibleGroup
    pairs: PairSet
    predictions: PredictionSet  # before the update


def _prompt_parameters(model: PromptedModel) -> list[Parameter]:
    return [] if model.prompt is None else model.prompt.parameters()


def internal_phase(
    model: PromptedModel,
    support_x,
    support_y,
    schedule: StepSchedule,
    optimizer: SGDState,
) -> list[float]:
    """
    Runs `schedule.internal_epochs_per_step` epochs of mini-batch SGD on the
    classifier. Batches cover the support set in a fixed order.

    Returns:
        list[float]: Summed support cross-entropy seen during each epoch.
    """
    classifier_parameters = model.classifier.parameters()
    support_y = np.asarray(support_y)
    batch_size = schedule.support_batch_size
    trace = []
    with frozen(*_prompt_parameters(model)):
        # the prompt and backbone are fixed for the whole phase
        features = model.features(Tape(), support_x).values
        for _ in range(schedule.internal_epochs_per_step):
            epoch_loss = 0.0
            for start in range(0, features.shape[0], batch_size):
                tape = Tape()
                batch = Tensor(features[start : start + batch_size])
                probabilities = tape.apply("softmax", model.classifier.logits(tape, batch))
                loss = cross_entropy_loss(tape, probabilities, support_y[start : start + batch_size])
                tape.backward(loss)
                sgd_update(optimizer, classifier_parameters)
                epoch_loss += loss.item()
            trace.append(epoch_loss)
    return trace


def external_phase(
    model: PromptedModel,
    samples,
    prev: PredictionSet,
    support_labels,
    alpha: float,
    gamma: float,
    sigma: float,
    optimizer: SGDState,
    credible_rule: str = "both",
    use_mi: bool = True,
) -> ExternalOutcome:
    """
    Builds the credible group from `prev`, recomputes predictions for every
    sample, pairs each with a group member by chain search and takes one SGD
    step on L_ex.

    The update goes to the prompt. A model without a prompt sends it to the
    classifier instead.
    """
    if model.prompt is None:
        targets = model.classifier.parameters()
        held = []
    else:
        targets = model.prompt.parameters()
        held = model.classifier.parameters()

    group = credible_group(prev, alpha, gamma, support_labels, rule=credible_rule)
    with frozen(*held):
        tape = Tape()
        probabilities = model.probabilities(tape, samples)
        current = PredictionSet(probabilities.values, step_index=prev.step_index + 1)
        pairs = pair_all(current, prev, group)
        partners = prev.predictions[pairs.partners]
        loss = external_loss(tape, probabilities, partners, sigma, use_mi=use_mi)
        tape.backward(loss.total)
        sgd_update(optimizer, targets)

    logger.debug(
        "Step %d: |G|=%d, L_ex=%.6f, mean chain length %.2f",
        current.step_index,
        len(group),
        loss.total.item(),
        float(np.mean(pairs.hops)),
    )
    return ExternalOutcome(
        loss=loss.total.item(),
        mutual_information=None if loss.mutual_information is None else loss.mutual_information.item(),
        diversity=loss.diversity.item(),
        group=group,
        pairs=pairs,
        predictions=current,
    )
