from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from dynreg.exceptions import DomainError, EmptyBufferError, ShapeError


@dataclass(eq=False)
class PolicyParams:
    """Flat parameter store of one network.

    `shapes` maps block names to array shapes in storage order; `view(name)`
    returns a writable reshape of the matching slice of `flat`. `log_std` is
    the fixed exploration scale of a policy head and stays empty for value
    functions. It is never trained.
    """

    shapes: dict
    flat: np.ndarray
    log_std: np.ndarray = field(default_factory=lambda: np.zeros(0))
    format_version: str = settings.FORMAT_VERSION

    def __post_init__(self):
        self.shapes = {name: tuple(int(n) for n in shape) for name, shape in self.shapes.items()}
        self.flat = np.array(self.flat, dtype=float).reshape(-1)
        self.log_std = np.array(self.log_std, dtype=float).reshape(-1)
        expected = sum(int(np.prod(shape)) for shape in self.shapes.values())
        if self.flat.size != expected:
            raise ShapeError(f"parameter vector has {self.flat.size} entries, shapes imply {expected}")
        offsets, start = {}, 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            offsets[name] = (start, start + size)
            start += size
        self._offsets = offsets

    @classmethod
    def zeros(cls, shapes, log_std=()):
        return cls(shapes, np.zeros(sum(int(np.prod(s)) for s in shapes.values())), np.asarray(log_std, dtype=float))

    @property
    def size(self):
        return self.flat.size

    def view(self, name):
        start, stop = self._offsets[name]
        return self.flat[start:stop].reshape(self.shapes[name])

    def views(self, prefix):
        """{suffix: view} for every block whose name starts with `prefix.`."""
        head = prefix + "."
        return {name[len(head):]: self.view(name) for name in self.shapes if name.startswith(head)}

    def pack(self, blocks):
        """Flat vector in storage order from a {name: array} dict; missing blocks are zero."""
        out = np.zeros_like(self.flat)
        for name, value in blocks.items():
            start, stop = self._offsets[name]
            out[start:stop] += np.asarray(value, dtype=float).reshape(-1)
        return out

    def copy(self):
        return PolicyParams(dict(self.shapes), self.flat.copy(), self.log_std.copy(), self.format_version)

    def with_flat(self, flat):
        return PolicyParams(dict(self.shapes), flat, self.log_std.copy(), self.format_version)


@dataclass(frozen=True, eq=False)
class Transition:
    """One step of experience.

    `aux` carries targets for the supervised phase of joint training, such as the
    ground-truth pose and the kinematic target of the step.
    """

    state: np.ndarray
    action: np.ndarray
    log_prob: float
    reward: float
    done: bool
    value: float
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        state = np.array(self.state, dtype=float).reshape(-1)
        action = np.array(self.action, dtype=float).reshape(-1)
        scalars = np.array([self.log_prob, self.reward, self.value], dtype=float)
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action)) and np.all(np.isfinite(scalars))):
            raise DomainError("transition has non-finite entries")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "action", action)
        object.__setattr__(self, "log_prob", float(self.log_prob))
        object.__setattr__(self, "reward", float(self.reward))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "done", bool(self.done))


class TrajectoryBuffer:
    """Transitions grouped into contiguous episodes, filled up to `capacity` samples.

    No episode may start once the buffer holds `capacity` samples; the episode
    in progress is kept whole, so the last one can run past it. An episode
    that ends without `done` is truncated: `bootstrap` holds the value
    estimate of the state after its last transition.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise DomainError(f"buffer capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.episodes = []
        self.bootstrap = []
        self._open = None

    def __len__(self):
        return sum(len(e) for e in self.episodes) + (len(self._open) if self._open else 0)

    @property
    def is_full(self):
        return len(self) >= self.capacity

    def add(self, transition):
        if self._open is None:
            if self.is_full:
                raise DomainError(f"buffer already holds {len(self)} of {self.capacity} samples")
            self._open = []
        self._open.append(transition)

    def end_episode(self, bootstrap_value=0.0):
        if self._open:
            self.episodes.append(self._open)
            self.bootstrap.append(0.0 if self._open[-1].done else float(bootstrap_value))
        self._open = None

    def add_episode(self, transitions, bootstrap_value=0.0):
        for transition in transitions:
            self.add(transition)
        self.end_episode(bootstrap_value)

    def clear(self):
        self.episodes, self.bootstrap, self._open = [], [], None

    @classmethod
    def merge(cls, buffers, capacity=None):
        """Concatenate finished episodes of several buffers in the given order."""
        capacity = capacity or sum(b.capacity for b in buffers)
        merged = cls(capacity)
        for buffer in buffers:
            merged.episodes.extend(buffer.episodes)
            merged.bootstrap.extend(buffer.bootstrap)
        return merged

    def transitions(self):
        return [t for episode in self.episodes for t in episode]

    def arrays(self):
        """Stacked (states, actions, log_probs, rewards, dones, values) over finished episodes."""
        flat = self.transitions()
        if not flat:
            raise EmptyBufferError("trajectory buffer holds no finished episodes")
        return (
            np.stack([t.state for t in flat]),
            np.stack([t.action for t in flat]),
            np.array([t.log_prob for t in flat]),
            np.array([t.reward for t in flat]),
            np.array([t.done for t in flat], dtype=bool),
            np.array([t.value for t in flat]),
        )

    def episode_lengths(self):
        return [len(e) for e in self.episodes]

    def mean_reward(self):
        flat = self.transitions()
        return float(np.mean([t.reward for t in flat])) if flat else 0.0
