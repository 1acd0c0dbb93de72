"""Synthetic class-conditional Gaussian shift benchmark.

Features are ``mu * e_y + noise`` with isotropic Gaussian noise of scale
``sigma``; the first ``C`` coordinates serve as logits. Shifted splits only
inflate ``sigma``: accuracy drops while a calibrator fitted on ID data keeps
its confidence, which makes it overconfident under shift. Outlier rows are
pure noise with scale ``sigma_ood`` and no label.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..data import EvalSet, Role

_CALIB, _TEST, _OOD, _TRAIN, _SHIFT0 = 0, 1, 2, 3, 10


@dataclass(frozen=True)
class SynthConfig:
    class_count: int = 5
    feature_dim: Optional[int] = None
    n_per_split: int = 2000
    n_ood: int = 1000
    mu: float = 2.5
    sigma_id: float = 1.0
    sigma_shift: tuple = (3.0,)
    sigma_ood: float = 1.0
    prevalence: Optional[tuple] = None
    embed_noise: float = 0.1
    seed: int = 0
    name: str = "synth"

    def __post_init__(self):
        object.__setattr__(self, "sigma_shift", tuple(float(s) for s in self.sigma_shift))
        if self.prevalence is not None:
            object.__setattr__(self, "prevalence", tuple(float(p) for p in self.prevalence))
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.dim < self.class_count:
            raise ValueError("feature_dim must be >= class_count")
        if self.n_per_split < 1 or self.n_ood < 1:
            raise ValueError("split sizes must be positive")
        for s in (self.sigma_id, self.sigma_ood, self.embed_noise, *self.sigma_shift):
            if not s > 0:
                raise ValueError(f"noise scales must be > 0, got {s}")
        if self.prevalence is not None:
            p = np.asarray(self.prevalence)
            if p.shape != (self.class_count,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("prevalence must be a probability vector over the classes")

    @property
    def dim(self):
        return self.class_count if self.feature_dim is None else int(self.feature_dim)

    def replace(self, **changes) -> "SynthConfig":
        d = asdict(self)
        d.update(changes)
        return SynthConfig(**d)

    @classmethod
    def from_dict(cls, d) -> "SynthConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "sigma_shift" in known and np.isscalar(known["sigma_shift"]):
            known["sigma_shift"] = (known["sigma_shift"],)
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _rng(config, *key):
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=tuple(key)))


def _labels(rng, config, n):
    probs = None if config.prevalence is None else np.asarray(config.prevalence)
    return rng.choice(config.class_count, size=n, p=probs)


def _class_means(config, y):
    means = np.zeros((y.shape[0], config.dim))
    means[np.arange(y.shape[0]), y] = config.mu
    return means


def _to_set(features, labels, role, name, config, rng):
    emb = features + rng.normal(0.0, config.embed_noise, features.shape)
    return EvalSet.from_arrays(features[:, :config.class_count], labels, role, name, emb)


def split_names(config: SynthConfig):
    names = [f"{config.name}-id_calib", f"{config.name}-id_test"]
    names += [f"{config.name}-shifted{j}" for j in range(len(config.sigma_shift))]
    return names + [f"{config.name}-ood_pool"]


def _labeled_split(config, key, sigma, role, name, n=None):
    rng = _rng(config, key)
    n = config.n_per_split if n is None else n
    y = _labels(rng, config, n)
    x = _class_means(config, y) + rng.normal(0.0, sigma, (n, config.dim))
    return _to_set(x, y, role, name, config, rng)


def _ood_split(config, key, name):
    rng = _rng(config, key)
    x = rng.normal(0.0, config.sigma_ood, (config.n_ood, config.dim))
    return _to_set(x, None, Role.OOD_POOL, name, config, rng)


def synth_generate(config: SynthConfig):
    """Return ``[id_calib, id_test, shifted_0, ..., ood_pool]`` as EvalSets."""
    names = split_names(config)
    sets = [
        _labeled_split(config, _CALIB, config.sigma_id, Role.ID_CALIB, names[0]),
        _labeled_split(config, _TEST, config.sigma_id, Role.ID_TEST, names[1]),
    ]
    for j, s in enumerate(config.sigma_shift):
        sets.append(_labeled_split(config, _SHIFT0 + j, s, Role.SHIFTED_TEST, names[2 + j]))
    sets.append(_ood_split(config, _OOD, names[-1]))
    return sets


def synth_train_set(config: SynthConfig, member: int = 0):
    """A labeled ID split reserved for training; returns ``(embeddings, labels)``."""
    s = _labeled_split(config, _TRAIN + 1000 * member, config.sigma_id, Role.ID_CALIB, f"{config.name}-train")
    return s.embeddings, s.labels


def synth_members(config: SynthConfig, n_members: int = 3, correlation: float = 0.5):
    """Per-member copies of every split with partially shared noise.

    Member ``m`` sees ``mu * e_y + sigma * (sqrt(rho) * shared + sqrt(1 - rho) * own_m)``,
    so each member on its own has the single-model distribution while members
    disagree on the private part. Labels are shared. Returns a list (one per
    member) of split lists ordered like :func:`synth_generate`.
    """
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    if not 0 <= correlation <= 1:
        raise ValueError("correlation must lie in [0, 1]")
    a, b = np.sqrt(correlation), np.sqrt(1.0 - correlation)
    names = split_names(config)
    specs = [(_CALIB, config.sigma_id, Role.ID_CALIB), (_TEST, config.sigma_id, Role.ID_TEST)]
    specs += [(_SHIFT0 + j, s, Role.SHIFTED_TEST) for j, s in enumerate(config.sigma_shift)]
    specs += [(_OOD, config.sigma_ood, Role.OOD_POOL)]
    out = [[] for _ in range(n_members)]
    for (key, sigma, role), name in zip(specs, names):
        rng = _rng(config, key, 0)
        if role is Role.OOD_POOL:
            n, y, base = config.n_ood, None, np.zeros((config.n_ood, config.dim))
        else:
            n = config.n_per_split
            y = _labels(rng, config, n)
            base = _class_means(config, y)
        shared = rng.normal(0.0, sigma, (n, config.dim))
        for m in range(n_members):
            mrng = _rng(config, key, m + 1)
            x = base + a * shared + b * mrng.normal(0.0, sigma, (n, config.dim))
            out[m].append(_to_set(x, y, role, f"{name}-m{m}", config, mrng))
    return out


def synth_member_train_sets(config: SynthConfig, n_members: int):
    return [synth_train_set(config, m) for m in range(n_members)]
