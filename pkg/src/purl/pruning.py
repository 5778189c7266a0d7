"""Mask construction from weight statistics, plus sparsity accounting.

Two rules: threshold pruning at a multiple of the layer's weight standard
deviation, and direct pruning of the smallest-magnitude weights down to a
target sparsity. Both only ever grow the mask; episodes undo pruning by
reloading a checkpoint, never by flipping mask bits back.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateLayerError
from .nn_core import DenseLayer, Network

log = logging.getLogger(__name__)


@dataclass
class LayerStats:
    """Population statistics over a layer's currently unmasked weights."""

    layer_index: int
    sigma: float
    unmasked: int
    total: int


@dataclass
class SparsityReport:
    """Pruned/total counts per layer; fractions derived exactly from counts."""

    pruned: list[int]
    totals: list[int]

    @property
    def per_layer(self) -> list[float]:
        return [p / t for p, t in zip(self.pruned, self.totals)]

    @property
    def global_sparsity(self) -> float:
        return sum(self.pruned) / sum(self.totals)


def layer_std(layer: DenseLayer, layer_index: int = 0) -> LayerStats:
    """Population standard deviation over unmasked weights only."""
    unmasked = layer.mask == 1.0
    count = int(unmasked.sum())
    if count == 0:
        raise DegenerateLayerError(f"layer {layer_index} has no unmasked weights")
    sigma = float(np.std(layer.weights[unmasked]))
    return LayerStats(layer_index=layer_index, sigma=sigma, unmasked=count, total=layer.mask.size)


def prune_by_std(layer: DenseLayer, alpha: float, layer_index: int = 0) -> int:
    """Mask every unmasked weight with |w| < alpha * sigma; returns count pruned.

    Sigma is computed over the weights unmasked *before* this call, and the
    comparison is strict, so alpha = 0 never prunes.
    """
    if alpha < 0.0:
        raise ConfigError("alpha must be nonnegative")
    stats = layer_std(layer, layer_index)
    threshold = alpha * stats.sigma
    to_prune = (layer.mask == 1.0) & (np.abs(layer.weights) < threshold)
    layer.mask[to_prune] = 0.0
    layer.weights[to_prune] = 0.0
    return int(to_prune.sum())


def prune_by_magnitude_target(layer: DenseLayer, target_sparsity: float, layer_index: int = 0) -> int:
    """Prune smallest-|w| unmasked weights until layer sparsity >= target.

    Ties break toward the lowest flat index; the resulting sparsity is the
    smallest achievable value >= target. A target below the current
    sparsity is a no-op (logged, not an error).
    """
    if not 0.0 <= target_sparsity <= 1.0:
        raise ConfigError("target sparsity must be in [0, 1]")
    total = layer.mask.size
    already = total - int(layer.mask.sum())
    # ceil with a small slack so float noise in target*total cannot overshoot
    needed = max(already, math.ceil(target_sparsity * total - 1e-9))
    if needed == already:
        if target_sparsity * total < already - 1e-9:
            log.warning(
                "layer %d: magnitude target %.3f below current sparsity %.3f; no-op",
                layer_index,
                target_sparsity,
                already / total,
            )
        return 0
    flat_mask = layer.mask.reshape(-1)
    flat_weights = layer.weights.reshape(-1)
    candidates = np.flatnonzero(flat_mask == 1.0)
    # stable sort on |w| keeps lowest flat index first among ties
    order = candidates[np.argsort(np.abs(flat_weights[candidates]), kind="stable")]
    chosen = order[: needed - already]
    flat_mask[chosen] = 0.0
    flat_weights[chosen] = 0.0
    return int(chosen.size)


def sparsity_report(net: Network) -> SparsityReport:
    """Exact pruned/total counts over prunable weights (biases excluded)."""
    pruned = [int((layer.mask == 0.0).sum()) for layer in net.layers]
    totals = [layer.mask.size for layer in net.layers]
    return SparsityReport(pruned=pruned, totals=totals)
