import logging

import numpy as np
from django.conf import settings
from scipy.special import softmax

from dynreg.exceptions import InsufficientDataError, ShapeError

logger = logging.getLogger(__name__)


def sampling_probabilities(values, temperature=settings.UHC_TEMPERATURE):
    """P(j) = exp(−v_j/τ) / Σ exp(−v_i/τ): frames the value function rates poorly come up more often."""
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise InsufficientDataError("no frames to sample from")
    return softmax(-values / temperature)


class ValueGuidedSampler:
    """Start frames for training windows, weighted by the value of starting there.

    Every frame with a successor is a candidate. `refresh` scores all candidates
    once; `sample` then draws as many windows as needed from those scores.
    """

    def __init__(self, clips, temperature=settings.UHC_TEMPERATURE, window=settings.UHC_EPISODE_LEN):
        self.clips = list(clips)
        self.temperature = float(temperature)
        self.window = int(window)
        self.frames = [(c, j) for c, clip in enumerate(self.clips) for j in range(clip.num_frames - 1)]
        if not self.frames:
            raise InsufficientDataError("value-guided sampling needs a clip with at least two frames")
        self.values = np.zeros(len(self.frames))
        self.probabilities = np.full(len(self.frames), 1.0 / len(self.frames))

    def refresh(self, clip_values):
        """Rescore every candidate; clip_values(clip) returns the values of frames 0..T−2 of that clip."""
        values = []
        for clip in self.clips:
            scored = np.asarray(clip_values(clip), dtype=float).reshape(-1)
            if scored.size != max(clip.num_frames - 1, 0):
                raise ShapeError(f"got {scored.size} frame values for clip {clip.name!r} of {clip.num_frames} frames")
            values.append(scored)
        return self.set_values(np.concatenate(values))

    def set_values(self, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != len(self.frames):
            raise ShapeError(f"got {values.size} values for {len(self.frames)} candidate frames")
        self.values = values
        self.probabilities = sampling_probabilities(values, self.temperature)
        logger.debug("sampler refreshed: %d frames, max probability %.4g", values.size, self.probabilities.max())
        return self.probabilities

    def sample_indices(self, rng, size=None):
        return rng.choice(len(self.frames), size=size, p=self.probabilities)

    def sample(self, rng):
        """(clip index, start frame)."""
        return self.frames[int(self.sample_indices(rng))]

    def window_of(self, clip_index, start):
        return self.clips[clip_index].window(start, self.window)


def value_guided_sample(clips, clip_values, rng, temperature=settings.UHC_TEMPERATURE,
                        window=settings.UHC_EPISODE_LEN):
    """(clip name, start frame) for one draw with freshly scored frames."""
    sampler = ValueGuidedSampler(clips, temperature, window)
    sampler.refresh(clip_values)
    clip_index, start = sampler.sample(rng)
    return sampler.clips[clip_index].name, start
