import numpy as np
import pytest

from engine.tape import Tape
from errors import ConfigurationError, ContractError, DatasetFormatError, DimensionError, NumericError
from ingest.synthetic import generate_source_dataset
from model.backbone import (
    BackboneSpec,
    _initial_parameters,
    load_backbone,
    pretrain_and_freeze,
    save_backbone,
)
from model.classifier import LinearClassifier, PromptedModel, predict
from model.prompt import StylePrompt, apply_style_prompt, compute_target_stats, standardize


@pytest.fixture
def source_dataset():
    return generate_source_dataset(class_count=3, dim=4, per_class=10, cluster_spread=0.2, seed=1)


def test_target_stats_use_population_variance():
    """Divisor m, not m - 1."""
    stats = compute_target_stats([[0.0], [2.0]])
    assert np.array_equal(stats.mu, [1.0])
    assert np.array_equal(stats.sigma2, [1.0])

    stats = compute_target_stats([[1.0, 0.0], [3.0, 4.0]])
    assert np.array_equal(stats.mu, [2.0, 2.0])
    assert np.array_equal(stats.sigma2, [1.0, 4.0])
    assert stats.sample_count == 2


def test_target_stats_of_identical_samples_have_zero_variance():
    stats = compute_target_stats(np.full((5, 3), 2.5))
    assert np.array_equal(stats.sigma2, np.zeros(3))


def test_target_stats_need_two_samples():
    with pytest.raises(ContractError, match="at least 2"):
        compute_target_stats([[1.0, 2.0]])


def test_style_prompt_direct_arithmetic():
    """x=3, mu=1, sigma2=4, epsilon=0, omega=(2, 5) -> 2*(3-1)/2 + 5 = 7."""
    stats = compute_target_stats([[-1.0], [3.0]])
    assert stats.mu[0] == 1.0 and stats.sigma2[0] == 4.0

    prompt = StylePrompt([2.0], [5.0], epsilon=0.0)
    out = apply_style_prompt(Tape(), [[3.0]], stats, prompt)
    assert out.values[0, 0] == pytest.approx(7.0)


def test_passthrough_prompt_is_the_identity():
    rng = np.random.default_rng(4)
    x = rng.normal(loc=3.0, scale=2.0, size=(12, 5))
    stats = compute_target_stats(x)
    out = apply_style_prompt(Tape(), x, stats, StylePrompt.passthrough(stats))
    assert np.allclose(out.values, x, atol=1e-12)


def test_unit_prompt_standardizes():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(10, 3))
    stats = compute_target_stats(x)
    prompt = StylePrompt.identity(3, epsilon=1e-5)
    out = apply_style_prompt(Tape(), x, stats, prompt)
    assert np.allclose(out.values, standardize(x, stats, 1e-5))


def test_zero_variance_with_zero_epsilon_is_rejected():
    stats = compute_target_stats(np.ones((3, 2)))
    with pytest.raises(NumericError, match="sigma2 \\+ epsilon"):
        apply_style_prompt(Tape(), np.ones((3, 2)), stats, StylePrompt.identity(2, epsilon=0.0))


def test_prompt_shapes_and_epsilon_are_validated():
    with pytest.raises(DimensionError):
        StylePrompt([1.0, 1.0], [0.0])
    with pytest.raises(ContractError, match="epsilon"):
        StylePrompt([1.0], [0.0], epsilon=-1.0)

    stats = compute_target_stats([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DimensionError):
        apply_style_prompt(Tape(), [[1.0, 2.0]], stats, StylePrompt.identity(3))


def test_prompt_gradient_reaches_omega(smooth_backbone):
    """Through the frozen backbone, the loss still moves both omega vectors."""
    rng = np.random.default_rng(2)
    x = rng.normal(size=(6, 4))
    stats = compute_target_stats(x)
    prompt = StylePrompt.identity(4)
    classifier = LinearClassifier(rng.normal(size=(6, 3)), np.zeros(3))
    model = PromptedModel(smooth_backbone, classifier, stats, prompt)

    tape = Tape()
    probabilities = model.probabilities(tape, x)
    loss = tape.apply("sum", tape.apply("mul", probabilities, rng.normal(size=(6, 3))))
    tape.backward(loss)

    assert np.any(prompt.omega1.grad != 0)
    assert np.any(prompt.omega2.grad != 0)


def test_predict_sums_to_one_and_is_uniform_for_a_zero_classifier(smooth_backbone):
    rng = np.random.default_rng(8)
    x = rng.normal(size=(5, 4))
    stats = compute_target_stats(x)
    prompt = StylePrompt.identity(4)

    trained = LinearClassifier(rng.normal(size=(6, 3)), rng.normal(size=3))
    probabilities = predict(x, stats, prompt, smooth_backbone, trained)
    assert np.allclose(probabilities.sum(axis=1), 1.0, atol=1e-12)

    uniform = predict(x[0], stats, prompt, smooth_backbone, LinearClassifier.zeros(6, 3))
    assert uniform.shape == (3,)
    assert np.allclose(uniform, 1.0 / 3.0)


def test_predict_is_bit_identical_across_calls(smooth_backbone):
    x = np.random.default_rng(8).normal(size=(5, 4))
    stats = compute_target_stats(x)
    classifier = LinearClassifier(np.full((6, 2), 0.1), np.array([0.2, -0.2]))
    first = predict(x, stats, StylePrompt.identity(4), smooth_backbone, classifier)
    second = predict(x, stats, StylePrompt.identity(4), smooth_backbone, classifier)
    assert first.tobytes() == second.tobytes()


def test_prompt_free_model_feeds_raw_input(smooth_backbone):
    x = np.random.default_rng(0).normal(size=(3, 4))
    stats = compute_target_stats(x)
    model = PromptedModel(smooth_backbone, LinearClassifier.zeros(6, 2), stats, prompt=None)
    assert np.array_equal(model.prompted_input(Tape(), x).values, x)


def test_pretrain_zero_epochs_returns_seeded_initialisation(source_dataset):
    spec = BackboneSpec(4, (5, 3))
    backbone = pretrain_and_freeze(source_dataset, spec, epochs=0, seed=17)
    expected = _initial_parameters(spec, np.random.default_rng(17))

    weights = [layer.weight.values for layer in backbone.layers]
    biases = [layer.bias.values for layer in backbone.layers]
    assert all(np.array_equal(w, p.values) for w, p in zip(weights, expected[::2], strict=True))
    assert all(np.array_equal(b, p.values) for b, p in zip(biases, expected[1::2], strict=True))


def test_pretrain_is_deterministic(source_dataset):
    spec = BackboneSpec(4, (6,))
    first = pretrain_and_freeze(source_dataset, spec, epochs=2, seed=5, batch_size=8)
    second = pretrain_and_freeze(source_dataset, spec, epochs=2, seed=5, batch_size=8)
    assert first.digest() == second.digest()

    untrained = pretrain_and_freeze(source_dataset, spec, epochs=0, seed=5)
    assert first.digest() != untrained.digest()


def test_pretrain_rejects_overlapping_label_spaces(source_dataset):
    with pytest.raises(ConfigurationError, match="overlap"):
        pretrain_and_freeze(
            source_dataset, BackboneSpec(4, (4,)), epochs=0, seed=0, target_class_ids=range(2, 6)
        )


def test_backbone_weights_are_immutable(source_dataset):
    backbone = pretrain_and_freeze(source_dataset, BackboneSpec(4, (4,)), epochs=0, seed=0)
    with pytest.raises(ValueError):
        backbone.layers[0].weight.values[0, 0] = 1.0


def test_backbone_checkpoint_round_trip(tmp_path, source_dataset):
    backbone = pretrain_and_freeze(source_dataset, BackboneSpec(4, (5, 3)), epochs=1, seed=2)
    path = tmp_path / "backbone.sptm"
    save_backbone(path, backbone)

    restored = load_backbone(path)
    assert restored.digest() == backbone.digest()
    assert restored.input_dim == 4
    assert restored.feature_dim == 3


def test_backbone_checkpoint_rejects_corruption(tmp_path, source_dataset):
    backbone = pretrain_and_freeze(source_dataset, BackboneSpec(4, (3,)), epochs=0, seed=2)
    path = tmp_path / "backbone.sptm"
    save_backbone(path, backbone)
    data = path.read_bytes()

    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(DatasetFormatError) as excinfo:
        load_backbone(path)
    assert excinfo.value.offset == 0

    path.write_bytes(data[:-3])
    with pytest.raises(DatasetFormatError):
        load_backbone(path)
