"""Episodic pruning environment.

An episode walks the network input->output, one action per layer: the
action picks a threshold multiplier (or a direct sparsity target), the
layer is pruned, and - in dense mode - the net is retrained on a small
fixed subset and re-evaluated so every step carries an informative reward.
In sparse mode the single retrain/evaluate/reward happens at the terminal
step only; intermediate transitions carry reward 0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EpisodeDoneError
from .nn_core import Dataset, Network, evaluate_accuracy, retrain
from .pruning import prune_by_magnitude_target, prune_by_std, sparsity_report

REWARD_VARIANTS = ("r1", "r2", "r3")
SIGN_CONVENTIONS = ("as_printed", "prose_corrected")
REWARD_MODES = ("dense", "sparse")
STATE_KINDS = ("low", "high")
PRUNE_RULES = ("std", "magnitude_target")


def _grid(step: float, stop: float) -> tuple[float, ...]:
    return tuple(round(i * step, 10) for i in range(int(round(stop / step)) + 1))


ALPHA_GRID_01 = _grid(0.1, 2.2)  # 23 actions
ALPHA_GRID_02 = _grid(0.2, 2.2)  # 12 actions
SPARSITY_GRID = _grid(0.1, 1.0)  # targets for the magnitude rule


@dataclass
class EnvConfig:
    """Everything that defines the pruning MDP for one run."""

    target_accuracy: float | None = None  # resolved from the baseline when None
    target_accuracy_ratio: float = 0.95
    target_sparsity: float = 0.6
    beta: float = 5.0
    action_grid: tuple[float, ...] = ALPHA_GRID_01
    reward_variant: str = "r1"
    r2r3_sign: str = "prose_corrected"
    reward_mode: str = "dense"
    state_kind: str = "low"
    prune_rule: str = "std"
    retrain_subset_size: int = 256
    retrain_epochs: int = 1
    retrain_lr: float = 0.05
    retrain_batch: int = 32
    early_stop_threshold: float | None = 0.001

    def __post_init__(self) -> None:
        self.action_grid = tuple(float(a) for a in self.action_grid)
        if self.beta <= 0.0:
            raise ConfigError("beta must be positive")
        if not 0.0 < self.target_sparsity <= 1.0:
            raise ConfigError("target sparsity must be in (0, 1]")
        if self.target_accuracy is not None and not 0.0 < self.target_accuracy <= 1.0:
            raise ConfigError("target accuracy must be in (0, 1]")
        if self.target_accuracy_ratio <= 0.0:
            raise ConfigError("target accuracy ratio must be positive")
        if len(self.action_grid) < 2:
            raise ConfigError("action grid needs at least two entries")
        if self.action_grid[0] != 0.0:
            raise ConfigError("action grid must start at 0.0")
        if any(b <= a for a, b in zip(self.action_grid, self.action_grid[1:])):
            raise ConfigError("action grid must be strictly increasing")
        if self.reward_variant not in REWARD_VARIANTS:
            raise ConfigError(f"reward variant must be one of {REWARD_VARIANTS}")
        if self.r2r3_sign not in SIGN_CONVENTIONS:
            raise ConfigError(f"r2r3 sign must be one of {SIGN_CONVENTIONS}")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward mode must be one of {REWARD_MODES}")
        if self.state_kind not in STATE_KINDS:
            raise ConfigError(f"state kind must be one of {STATE_KINDS}")
        if self.prune_rule not in PRUNE_RULES:
            raise ConfigError(f"prune rule must be one of {PRUNE_RULES}")
        if self.prune_rule == "magnitude_target" and self.action_grid[-1] > 1.0:
            raise ConfigError("magnitude-target grid entries are sparsities and must be <= 1")
        if self.retrain_subset_size < 1 or self.retrain_epochs < 1:
            raise ConfigError("retrain subset size and epochs must be >= 1")
        if self.early_stop_threshold is not None and not 0.0 <= self.early_stop_threshold < 1.0:
            raise ConfigError("early stop threshold must be in [0, 1) or null")


@dataclass
class StepInfo:
    layer: int
    alpha: float
    accuracy: float
    sparsity: float
    early_stopped: bool


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    done: bool
    info: StepInfo


# ---------------------------------------------------------------------------
# reward functions


def _require_target(cfg: EnvConfig) -> float:
    if cfg.target_accuracy is None:
        raise ConfigError("target accuracy unresolved; construct a PruneEnv or set it explicitly")
    return cfg.target_accuracy


def reward_r1(accuracy: float, sparsity: float, cfg: EnvConfig) -> float:
    """Capped-at-zero shortfall penalty on both accuracy and sparsity."""
    t_a = _require_target(cfg)
    acc_pen = max(1.0 - accuracy / t_a, 0.0)
    prune_pen = max(1.0 - sparsity / cfg.target_sparsity, 0.0)
    return -cfg.beta * (acc_pen + prune_pen)


def _shaped_reward(acc_term: float, sparsity: float, cfg: EnvConfig) -> float:
    prune_pen = max(1.0 - sparsity / cfg.target_sparsity, 0.0)
    if cfg.r2r3_sign == "as_printed":
        return -cfg.beta * (acc_term + prune_pen)
    return cfg.beta * acc_term - cfg.beta * prune_pen


def reward_r2(accuracy: float, sparsity: float, cfg: EnvConfig) -> float:
    """Linear accuracy upside: uncapped accuracy term, capped prune penalty."""
    return _shaped_reward(accuracy / _require_target(cfg) - 1.0, sparsity, cfg)


def reward_r3(accuracy: float, sparsity: float, cfg: EnvConfig) -> float:
    """Cubic accuracy upside variant of reward_r2."""
    return _shaped_reward((accuracy / _require_target(cfg)) ** 3 - 1.0, sparsity, cfg)


_REWARD_FNS = {"r1": reward_r1, "r2": reward_r2, "r3": reward_r3}


def compute_reward(accuracy: float, sparsity: float, cfg: EnvConfig) -> float:
    return _REWARD_FNS[cfg.reward_variant](accuracy, sparsity, cfg)


# ---------------------------------------------------------------------------
# the environment


class PruneEnv:
    """One network + dataset + config, stepped layer by layer.

    Single-writer: each trial owns its own instance. The pristine
    checkpoint is copied at construction and every reset restores it
    bit-exactly.
    """

    def __init__(self, network: Network, dataset: Dataset, config: EnvConfig, rng: np.random.Generator):
        network.validate()
        dataset.validate()
        if dataset.retrain_indices.size == 0:
            raise ConfigError("dataset has no retrain subset; call draw_retrain_subset first")
        self._pristine = network.copy()
        self.dataset = dataset
        self.rng = rng
        self.net = network.copy()
        self.n_layers = network.n_prunable
        self.baseline_accuracy = evaluate_accuracy(self.net, dataset, "test")
        if config.target_accuracy is None:
            resolved = config.target_accuracy_ratio * self.baseline_accuracy
            if not 0.0 < resolved <= 1.0:
                raise ConfigError(f"resolved target accuracy {resolved:.4f} outside (0, 1]")
            config = dataclasses.replace(config, target_accuracy=resolved)
        self.cfg = config
        # episode state; reset() must run before step()
        self._cursor = 0
        self._done = True
        self._layer_accuracy = np.zeros(self.n_layers)
        self._layer_sparsity = np.zeros(self.n_layers)
        self._last_accuracy = self.baseline_accuracy
        # instrumentation
        self.retrain_passes = 0
        self.episodes_started = 0

    @property
    def state_dim(self) -> int:
        return 3 if self.cfg.state_kind == "low" else 2 * self.n_layers

    @property
    def n_actions(self) -> int:
        return len(self.cfg.action_grid)

    @property
    def done(self) -> bool:
        return self._done

    def pristine_network(self) -> Network:
        return self._pristine.copy()

    def dense_clone(self) -> "PruneEnv":
        """Independent copy of this environment forced into dense mode."""
        cfg = dataclasses.replace(self.cfg, reward_mode="dense")
        return PruneEnv(self._pristine.copy(), self.dataset, cfg, self.rng.spawn(1)[0])

    def reset(self) -> np.ndarray:
        self.net = self._pristine.copy()
        self._cursor = 0
        self._done = False
        self._layer_accuracy[:] = 0.0
        self._layer_sparsity[:] = 0.0
        self._last_accuracy = self.baseline_accuracy
        self.episodes_started += 1
        return self.build_state()

    def build_state(self) -> np.ndarray:
        if self.cfg.state_kind == "low":
            global_sp = sparsity_report(self.net).global_sparsity
            return np.array([self._cursor / self.n_layers, self._last_accuracy, global_sp])
        state = np.zeros(2 * self.n_layers)
        state[0::2] = self._layer_accuracy
        state[1::2] = self._layer_sparsity
        return state

    def step(self, action_index: int) -> StepOutcome:
        if self._done:
            raise EpisodeDoneError("episode finished; call reset()")
        if not 0 <= action_index < self.n_actions:
            raise ConfigError(f"action index {action_index} outside grid of {self.n_actions}")
        layer_i = self._cursor
        alpha = self.cfg.action_grid[action_index]
        layer = self.net.layers[layer_i]
        if self.cfg.prune_rule == "std":
            prune_by_std(layer, alpha, layer_i)
        else:
            prune_by_magnitude_target(layer, alpha, layer_i)

        terminal_layer = layer_i == self.n_layers - 1
        measured = self.cfg.reward_mode == "dense" or terminal_layer
        if measured:
            retrain(
                self.net,
                self.dataset,
                "retrain_subset",
                self.cfg.retrain_epochs,
                self.cfg.retrain_lr,
                self.cfg.retrain_batch,
                self.rng,
            )
            self.retrain_passes += 1
            self._last_accuracy = evaluate_accuracy(self.net, self.dataset, "test")

        report = sparsity_report(self.net)
        accuracy = self._last_accuracy
        global_sp = report.global_sparsity
        reward = compute_reward(accuracy, global_sp, self.cfg) if measured else 0.0

        self._layer_accuracy[layer_i] = accuracy
        self._layer_sparsity[layer_i] = report.per_layer[layer_i]
        self._cursor += 1
        early = (
            measured
            and self.cfg.early_stop_threshold is not None
            and accuracy < self.cfg.early_stop_threshold
            and self._cursor < self.n_layers
        )
        self._done = early or self._cursor == self.n_layers
        return StepOutcome(
            next_state=self.build_state(),
            reward=reward,
            done=self._done,
            info=StepInfo(layer=layer_i, alpha=alpha, accuracy=accuracy, sparsity=global_sp, early_stopped=early),
        )
