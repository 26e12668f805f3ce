"""Randomized agreement checks between the fast layers and the oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradcheck import GradCheckReport, finite_diff_check
from .losses import cross_entropy
from .model import MorphMLP, build_model
from .morphfc import MorphFC, TemporalFC
from .oracle import naive_morphfc, naive_morphfc_t
from .tensor import Tensor, no_grad


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


@dataclass(frozen=True)
class SpatialCase:
    height: int
    width: int
    channels: int
    length: int
    group: int
    gate: bool

    @property
    def padded(self) -> bool:
        return (self.height * self.width) % self.length != 0


def random_spatial_case(rng: np.random.Generator, max_extent: int = 16) -> SpatialCase:
    h = int(rng.integers(2, max_extent + 1))
    w = int(rng.integers(2, max_extent + 1))
    c = int(rng.choice([4, 8, 12]))
    length = int(rng.integers(1, min(h * w, 16) + 1))
    d = int(rng.choice(_divisors(c)))
    return SpatialCase(h, w, c, length, d, bool(rng.integers(2)))


def spatial_oracle_diff(case: SpatialCase, rng: np.random.Generator) -> float:
    layer = MorphFC(case.channels, case.length, case.group, gate=case.gate, rng=rng,
                    dtype=np.float64)
    if layer.gate is not None:
        layer.gate.data = rng.standard_normal(layer.gate.shape)
    layer.channel.bias.data = rng.standard_normal(case.channels) * 0.1
    x = rng.standard_normal((case.height, case.width, case.channels))
    with no_grad():
        fast = layer(Tensor(x)).data
    ref = naive_morphfc(x, layer.weight_h.data, layer.weight_v.data, layer.channel.weight.data,
                        layer.channel.bias.data, case.length, case.group,
                        None if layer.gate is None else layer.gate.data)
    return float(np.max(np.abs(fast - ref)))


def temporal_oracle_diff(rng: np.random.Generator, max_extent: int = 8) -> tuple[tuple, float]:
    h = int(rng.integers(1, max_extent + 1))
    w = int(rng.integers(1, max_extent + 1))
    t = int(rng.integers(1, 9))
    c = int(rng.choice([4, 6, 8, 12]))
    d = int(rng.choice(_divisors(c)))
    layer = TemporalFC(c, t, d, rng=rng, dtype=np.float64)
    layer.weight_t.data = rng.standard_normal(layer.weight_t.shape) / np.sqrt(t * d)
    x = rng.standard_normal((h, w, t, c))
    with no_grad():
        fast = layer(Tensor(x)).data
    ref = naive_morphfc_t(x, layer.weight_t.data, d)
    return (h, w, t, c, d), float(np.max(np.abs(fast - ref)))


def oracle_diff(trials: int = 50, seed: int = 0) -> dict[str, float]:
    """Max abs difference fast vs naive over ``trials`` random configs per layer.

    The first spatial trial is forced to a padded (``L`` not dividing ``H*W``) case.
    """
    rng = np.random.default_rng(seed)
    spatial = []
    for i in range(trials):
        case = random_spatial_case(rng)
        if i == 0:
            case = SpatialCase(5, 5, 4, 4, 2, True)
        spatial.append(spatial_oracle_diff(case, rng))
    temporal = [temporal_oracle_diff(rng)[1] for _ in range(trials)]
    return {"morphfc": max(spatial), "morphfc_t": max(temporal)}


def gradcheck_model(model: MorphMLP, batch: int = 2, seed: int = 0, h: float = 1e-5,
                    tol: float = 1e-5, max_entries: int | None = None) -> GradCheckReport:
    """End-to-end check of cross-entropy on a random batch (eval mode, float64)."""
    rng = np.random.default_rng(seed)
    cfg = model.cfg
    shape = (batch, cfg.height, cfg.width)
    shape += (cfg.frames, 3) if cfg.input_kind == "video" else (3,)
    x = Tensor(rng.standard_normal(shape))
    y = rng.integers(0, cfg.num_classes, size=batch)
    model.eval()
    # perturb away from the all-ones/zeros norm init so every parameter gets signal
    for name, p in model.named_parameters():
        if p.data.ndim == 1:
            p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    params = dict(model.named_parameters())
    return finite_diff_check(lambda: cross_entropy(model(x), y), params, h=h, tol=tol,
                             max_entries=max_entries, rng=rng)


def toy_gradcheck_model(seed: int = 0) -> MorphMLP:
    from .model import custom_config

    cfg = custom_config([2], [12], [4], num_classes=3, height=8, width=8, dtype="float64")
    return build_model(cfg, seed=seed)


def _scan_order(h: int, w: int, direction: str) -> list[tuple[int, int]]:
    if direction == "horizontal":
        return [(s // w, s % w) for s in range(h * w)]
    return [(s % h, s // h) for s in range(h * w)]


def spatial_locality_trial(direction: str, rng: np.random.Generator) -> bool:
    """Perturb every token outside one chunk; the pathway output inside it must not move."""
    from .morphfc import chunk_fc

    h, w = (int(v) for v in rng.integers(2, 10, size=2))
    c = int(rng.choice([2, 4, 6]))
    length = int(rng.integers(1, h * w))  # at least two chunks
    d = int(rng.choice(_divisors(c)))
    weight = Tensor(rng.standard_normal((length * d, length * d)))
    x = rng.standard_normal((h, w, c))
    order = _scan_order(h, w, direction)
    i = int(rng.integers(0, -(-h * w // length)))
    inside = order[i * length:(i + 1) * length]
    x2 = x.copy()
    for r, col in order:
        if (r, col) not in inside:
            x2[r, col] += rng.standard_normal(c)
    with no_grad():
        base = chunk_fc(Tensor(x), weight, direction, length, d).data
        out = chunk_fc(Tensor(x2), weight, direction, length, d).data
    rows, cols = zip(*inside)
    return bool(np.array_equal(out[rows, cols], base[rows, cols]))


def temporal_locality_trial(rng: np.random.Generator) -> bool:
    """Perturb one spatial position; every other position must be bitwise unchanged."""
    h, w, t = (int(v) for v in rng.integers(1, 6, size=3))
    c = int(rng.choice([2, 4, 6]))
    layer = TemporalFC(c, t, int(rng.choice(_divisors(c))), rng=rng, dtype=np.float64)
    x = rng.standard_normal((h, w, t, c))
    r, col = int(rng.integers(h)), int(rng.integers(w))
    x2 = x.copy()
    x2[r, col] += rng.standard_normal((t, c))
    with no_grad():
        base, out = layer(Tensor(x)).data, layer(Tensor(x2)).data
    mask = np.ones((h, w), bool)
    mask[r, col] = False
    return bool(np.array_equal(out[mask], base[mask]))


def locality_check(direction: str, trials: int = 20, seed: int = 0) -> int:
    """Number of passing trials out of ``trials``."""
    rng = np.random.default_rng(seed)
    if direction == "temporal":
        return sum(temporal_locality_trial(rng) for _ in range(trials))
    return sum(spatial_locality_trial(direction, rng) for _ in range(trials))
