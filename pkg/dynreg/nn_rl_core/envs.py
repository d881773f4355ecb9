"""A one-joint imitation task for exercising the PPO trainer end to end."""

import numpy as np

from dynreg.exceptions import DomainError

from .models import Transition, TrajectoryBuffer


class PendulumImitation:
    """Pendulum driven by a PD servo that should follow a sinusoidal reference.

    Like the humanoid controller, the action is a residual added to the next
    reference angle before it becomes the PD target. With a zero residual,
    gravity sag leaves a tracking error that the policy has to learn to cancel.
    Reward is exp(−k·(θ − θ̂)²), so its per-step upper bound is 1.
    """

    reward_upper_bound = 1.0

    def __init__(self, episode_len=60, dt=1.0 / 30.0, substeps=10, kp=20.0, kd=2.0, amplitude=0.6,
                 frequency=0.5, gravity=9.81, action_scale=0.5, reward_scale=5.0, fall_error=1.0):
        if episode_len < 1:
            raise DomainError(f"episode length must be positive, got {episode_len}")
        self.episode_len = episode_len
        self.dt = dt
        self.substeps = substeps
        self.kp, self.kd = kp, kd
        self.amplitude, self.frequency = amplitude, frequency
        self.gravity = gravity
        self.action_scale = action_scale
        self.reward_scale = reward_scale
        self.fall_error = fall_error
        self.observation_size, self.action_size = 5, 1

    def reference(self, step):
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * (step * self.dt) + self.phase)

    def observe(self):
        target = self.reference(self.step_index + 1)
        return np.array([np.sin(self.theta), np.cos(self.theta), 0.1 * self.theta_dot, target, target - self.theta])

    def reset(self, rng):
        self.phase = rng.uniform(0.0, 2.0 * np.pi)
        self.step_index = 0
        self.theta = self.reference(0)
        self.theta_dot = 0.0
        return self.observe()

    def step(self, action):
        target = self.reference(self.step_index + 1) + self.action_scale * float(np.asarray(action).reshape(-1)[0])
        h = self.dt / self.substeps
        for _ in range(self.substeps):
            torque = self.kp * (target - self.theta) - self.kd * self.theta_dot
            self.theta_dot += h * (torque - self.gravity * np.sin(self.theta))
            self.theta += h * self.theta_dot
        self.step_index += 1
        error = self.theta - self.reference(self.step_index)
        reward = float(np.exp(-self.reward_scale * error**2))
        done = abs(error) > self.fall_error
        return self.observe(), reward, done


def collect(env, learner, rng, num_samples, capacity=None):
    """Fill a buffer with whole episodes until it holds at least num_samples transitions."""
    buffer = TrajectoryBuffer(capacity or num_samples)
    while len(buffer) < num_samples:
        obs = env.reset(rng)
        done = False
        for t in range(env.episode_len):
            action, log_prob, _ = learner.act(obs, rng)
            value = float(learner.value(obs))
            next_obs, reward, done = env.step(action)
            buffer.add(Transition(obs, action, log_prob, reward, done, value))
            obs = next_obs
            if done:
                break
        buffer.end_episode(0.0 if done else float(learner.value(obs)))
    return buffer
