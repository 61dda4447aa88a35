import numpy as np
import pandas as pd

from engine.tape import Tape
from errors import ContractError
from ingest.episodes import Episode
from model.prompt import StylePrompt, TargetStats, apply_style_prompt

HISTOGRAM_COLUMNS = ["channel", "bin_left", "count_before", "count_after"]


def _prompted(samples: np.ndarray, stats: TargetStats, prompt: StylePrompt | None) -> np.ndarray:
    if prompt is None:
        return samples
    return apply_style_prompt(Tape(), samples, stats, prompt).values


def emit_style_histogram(
    episode: Episode,
    stats: TargetStats,
    prompt_before: StylePrompt | None,
    prompt_after: StylePrompt | None,
    bins: int = 20,
) -> pd.DataFrame:
    """
    Per-channel histograms of the episode's support and query samples under two
    prompts. Both columns share each channel's bin edges, so rows are directly
    comparable. A prompt of None means the raw input.

    Returns:
        pd.DataFrame: channels x bins rows of channel, bin_left, count_before, count_after.
    """
    if bins < 2:
        raise ContractError(f"histograms need at least 2 bins, got {bins}")
    samples = episode.samples
    before = _prompted(samples, stats, prompt_before)
    after = _prompted(samples, stats, prompt_after)

    frames = []
    for channel in range(samples.shape[1]):
        low = min(before[:, channel].min(), after[:, channel].min())
        high = max(before[:, channel].max(), after[:, channel].max())
        if high <= low:
            high = low + 1.0
        edges = np.linspace(low, high, bins + 1)
        count_before, _ = np.histogram(before[:, channel], bins=edges)
        count_after, _ = np.histogram(after[:, channel], bins=edges)
        frames.append(
            pd.DataFrame(
                {
                    "channel": channel,
                    "bin_left": edges[:-1],
                    "count_before": count_before,
                    "count_after": count_after,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)[HISTOGRAM_COLUMNS]
