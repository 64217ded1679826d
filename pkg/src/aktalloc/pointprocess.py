"""Seeded Poisson and binomial point configurations and their Palm variants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Cuboid

__all__ = [
    "Configuration",
    "load_configuration",
    "palm",
    "sample_binomial",
    "sample_poisson",
    "save_configuration",
]

_MAX_RESAMPLE_ROUNDS = 64


@dataclass
class Configuration:
    """A finite point set inside a box, with the seed that produced it.

    ``is_palm`` means the origin has been adjoined as an extra point (it is
    then required to sit in the domain interior).
    """

    domain: Cuboid
    points: np.ndarray
    seed: int | None = None
    is_palm: bool = False
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.domain.dim)
        if pts.ndim != 2 or pts.shape[1] != self.domain.dim:
            raise ValueError(f"points must have shape (n, {self.domain.dim})")
        self.points = pts
        if self.validate:
            self._check()

    def _check(self):
        pts = self.points
        if not np.all(np.isfinite(pts)):
            raise ValueError("configuration has non-finite points")
        inside = np.all(pts >= self.domain.lower, axis=1) & np.all(
            pts <= self.domain.upper, axis=1
        )
        if not np.all(inside):
            raise ValueError(f"{np.count_nonzero(~inside)} point(s) outside the domain")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("configuration has coincident points")
        if self.is_palm:
            origin = np.zeros(self.dim)
            if not np.any(np.all(pts == origin, axis=1)):
                raise ValueError("palm configuration must contain the origin")
            if not (np.all(self.domain.lower < origin) and np.all(origin < self.domain.upper)):
                raise ValueError("palm origin must lie in the domain interior")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def origin_index(self) -> int | None:
        if not self.is_palm:
            return None
        hits = np.flatnonzero(np.all(self.points == 0.0, axis=1))
        return int(hits[0]) if hits.size else None

    def to_json(self) -> dict:
        return {
            "d": self.dim,
            "domain": self.domain.to_json(),
            "seed": self.seed,
            "is_palm": self.is_palm,
            "points": self.points.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Configuration":
        domain = Cuboid.from_json(obj["domain"])
        if domain.dim != obj["d"]:
            raise ValueError("declared dimension does not match domain")
        return cls(
            domain=domain,
            points=np.asarray(obj["points"], float).reshape(-1, domain.dim),
            seed=obj.get("seed"),
            is_palm=bool(obj.get("is_palm", False)),
        )


def _uniform_points(rng: np.random.Generator, domain: Cuboid, n: int) -> np.ndarray:
    return domain.lower + rng.random((n, domain.dim)) * domain.sides


def _dedupe(rng: np.random.Generator, domain: Cuboid, pts: np.ndarray) -> np.ndarray:
    # Coincident draws have probability zero but would make the dyadic
    # refinement depth infinite, so duplicates are resampled in place.
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        _, first = np.unique(pts, axis=0, return_index=True)
        if first.size == len(pts):
            return pts
        dup = np.setdiff1d(np.arange(len(pts)), first)
        pts[dup] = _uniform_points(rng, domain, dup.size)
    raise RuntimeError("could not resolve coincident points by resampling")


def sample_poisson(domain: Cuboid, intensity: float, seed: int) -> Configuration:
    """Poisson(intensity * volume) many i.i.d. uniform points in ``domain``."""
    if not np.isfinite(intensity) or intensity < 0:
        raise ValueError(f"intensity must be finite and >= 0, got {intensity}")
    if domain.volume() <= 0:
        raise ValueError("domain must be non-degenerate")
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(intensity * domain.volume()))
    pts = _dedupe(rng, domain, _uniform_points(rng, domain, count))
    return Configuration(domain=domain, points=pts, seed=seed)


def sample_binomial(domain: Cuboid, n: int, seed: int) -> Configuration:
    """Exactly ``n`` i.i.d. uniform points in ``domain``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    pts = _dedupe(rng, domain, _uniform_points(rng, domain, int(n)))
    return Configuration(domain=domain, points=pts, seed=seed)


def palm(config: Configuration) -> Configuration:
    """Adjoin the origin to ``config`` (the Palm re-rooting of the sample)."""
    origin = np.zeros(config.dim)
    if np.any(np.all(config.points == origin, axis=1)):
        raise ValueError("origin already present; cannot take the palm version twice")
    if not (np.all(config.domain.lower < origin) and np.all(origin < config.domain.upper)):
        raise ValueError("origin is not in the domain interior")
    pts = np.vstack([config.points, origin[None, :]])
    return Configuration(
        domain=config.domain, points=pts, seed=config.seed, is_palm=True, validate=False
    )


def save_configuration(config: Configuration, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_json(), indent=2, sort_keys=True))


def load_configuration(path: str | Path) -> Configuration:
    return Configuration.from_json(json.loads(Path(path).read_text()))
