"""Deterministic synthetic compositional datasets for desk-scale runs.

Each state and object gets a latent prototype. A pair's sample features are
a fixed random projection of [a_s ; b_o ; a_s * b_o] squashed by tanh, plus
Gaussian noise. The multiplicative term makes states genuinely modulate
objects, so unseen pairs are predictable from seen prototypes but not from
additive structure alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Pair, Sample, SplitSpec, validate_splits
from .embeddings import EmbeddingTable
from .errors import CzslError


@dataclass(frozen=True)
class SynthConfig:
    n_states: int = 8
    n_objects: int = 8
    seen_fraction: float = 0.625
    val_unseen: int = 6
    test_unseen: int = 6
    samples_per_pair: int = 10
    latent_dim: int = 8
    feature_dim: int = 32
    noise_sigma: float = 0.05
    embed_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_states, self.n_objects, self.samples_per_pair,
               self.latent_dim, self.feature_dim, self.val_unseen, self.test_unseen) < 1:
            raise CzslError("all synthetic counts must be >= 1")
        if not 0.0 < self.seen_fraction < 1.0:
            raise CzslError("seen_fraction must be in (0, 1)")
        if self.noise_sigma < 0 or self.embed_noise_sigma < 0:
            raise CzslError("noise levels must be >= 0")
        total = self.n_states * self.n_objects
        if self.n_seen + self.val_unseen + self.test_unseen > total:
            raise CzslError(
                f"infeasible split: {self.n_seen} seen + {self.val_unseen}+{self.test_unseen} "
                f"unseen pairs > {total} total"
            )

    @property
    def n_seen(self) -> int:
        return round(self.seen_fraction * self.n_states * self.n_objects)


def _pick_pairs(config: SynthConfig, rng: np.random.Generator):
    """Seeded partition of the pair universe honoring seen_fraction.

    Re-shuffles (deterministically) until every state and object occurs in at
    least one seen pair, so unseen primitives are individually trainable.
    """
    universe = [Pair(s, o) for s, o in itertools.product(range(config.n_states),
                                                         range(config.n_objects))]
    if config.n_seen < max(config.n_states, config.n_objects):
        raise CzslError("too few seen pairs to cover every state and object")
    for _ in range(1000):
        perm = rng.permutation(len(universe))
        seen = [universe[i] for i in perm[: config.n_seen]]
        if (
            len({p.state for p in seen}) == config.n_states
            and len({p.object for p in seen}) == config.n_objects
        ):
            rest = perm[config.n_seen :]
            val_u = [universe[i] for i in rest[: config.val_unseen]]
            test_u = [universe[i] for i in rest[config.val_unseen : config.val_unseen + config.test_unseen]]
            return sorted(seen), sorted(val_u), sorted(test_u)
    raise CzslError("could not cover every primitive with seen pairs; increase seen_fraction")


def generate(config: SynthConfig):
    """Returns (SplitSpec, {phase: Dataset}, EmbeddingTable), all seeded."""
    rng = np.random.default_rng(config.seed)
    a = rng.standard_normal((config.n_states, config.latent_dim))
    b = rng.standard_normal((config.n_objects, config.latent_dim))
    mix = rng.standard_normal((config.feature_dim, 3 * config.latent_dim))
    mix /= np.sqrt(3 * config.latent_dim)

    seen, val_u, test_u = _pick_pairs(config, rng)
    split = SplitSpec(
        states=tuple(f"s{i}" for i in range(config.n_states)),
        objects=tuple(f"o{i}" for i in range(config.n_objects)),
        seen_pairs=tuple(seen),
        val_seen=tuple(seen),
        val_unseen=tuple(val_u),
        test_seen=tuple(seen),
        test_unseen=tuple(test_u),
    )
    violations = validate_splits(split)
    if violations:  # defensive: _pick_pairs draws disjoint slices
        raise CzslError("generator produced an invalid split: " + "; ".join(violations))

    def clean_feature(pair: Pair) -> np.ndarray:
        u = np.concatenate([a[pair.state], b[pair.object], a[pair.state] * b[pair.object]])
        return np.tanh(mix @ u)

    datasets: dict[str, Dataset] = {}
    for phase, pairs in (
        ("train", split.seen_pairs),
        ("val", split.val_seen + split.val_unseen),
        ("test", split.test_seen + split.test_unseen),
    ):
        samples = []
        for pair in pairs:
            base = clean_feature(pair)
            for j in range(config.samples_per_pair):
                noise = config.noise_sigma * rng.standard_normal(config.feature_dim)
                samples.append(
                    Sample(
                        id=f"{phase}-s{pair.state}-o{pair.object}-{j}",
                        label=pair,
                        feature=base + noise,
                    )
                )
        datasets[phase] = Dataset(phase=phase, samples=tuple(samples), split=split)

    vectors: dict[str, np.ndarray] = {}
    for i in range(config.n_states):
        vectors[f"s{i}"] = a[i] + config.embed_noise_sigma * rng.standard_normal(config.latent_dim)
    for j in range(config.n_objects):
        vectors[f"o{j}"] = b[j] + config.embed_noise_sigma * rng.standard_normal(config.latent_dim)
    table = EmbeddingTable(dim=config.latent_dim, vectors=vectors, source_name="synthetic")
    return split, datasets, table
