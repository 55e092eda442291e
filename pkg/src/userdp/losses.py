"""Loss oracles, the Euclidean-ball domain, and synthetic populations.

Oracles are vectorised: ``value(theta, z)`` and ``subgradient(theta, z)``
broadcast over leading axes, so ``theta`` of shape ``(..., d)`` can be paired
with a batch of items ``z`` of shape ``(..., d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import InvalidParameterError, RngStream, UserDataset


class MCEstimate(NamedTuple):
    value: float
    stderr: float


@dataclass
class BallDomain:
    """Closed Euclidean ball. ``diameter`` is the ``R`` used by every schedule formula."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=np.float64))
        if not self.radius > 0:
            raise InvalidParameterError(f"domain radius must be positive, got {self.radius}")
        self.radius = float(self.radius)

    @classmethod
    def centered(cls, d: int, radius: float = 1.0) -> "BallDomain":
        return cls(np.zeros(d), radius)

    @property
    def d(self) -> int:
        return self.center.shape[0]

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, theta, tol: float = 1e-12) -> bool:
        dist = np.linalg.norm(np.asarray(theta) - self.center, axis=-1)
        return bool(np.all(dist <= self.radius * (1.0 + tol)))

    def project(self, theta) -> np.ndarray:
        return project(self, theta)


def project(domain: BallDomain, theta) -> np.ndarray:
    """Euclidean projection onto the ball; identity on interior points."""
    theta = np.asarray(theta, dtype=np.float64)
    diff = theta - domain.center
    dist = np.linalg.norm(diff, axis=-1, keepdims=True)
    scale = np.where(dist > domain.radius, domain.radius / np.where(dist > 0, dist, 1.0), 1.0)
    return domain.center + diff * scale


# ---------------------------------------------------------------------------
# closed-form losses
# ---------------------------------------------------------------------------


def norm_loss(theta, z):
    """``||theta - z||`` and its subgradient (zero at ``theta == z``)."""
    diff = np.asarray(theta, dtype=np.float64) - np.asarray(z, dtype=np.float64)
    val = np.linalg.norm(diff, axis=-1)
    safe = np.where(val > 0, val, 1.0)
    grad = np.where((val > 0)[..., None], diff / safe[..., None], 0.0)
    return val, grad


def strongly_convex_loss(theta, z, mu: float):
    """``(mu/2) ||theta - z||^2`` and its gradient ``mu (theta - z)``."""
    diff = np.asarray(theta, dtype=np.float64) - np.asarray(z, dtype=np.float64)
    return 0.5 * mu * np.sum(diff * diff, axis=-1), mu * diff


class LossOracle:
    """A convex, ``G``-Lipschitz loss family over a ball domain.

    ``extended_radius`` is the radius (about the domain centre) of the region on
    which the Lipschitz bound holds; smoothing perturbations must stay inside it.
    """

    name = "loss"
    G: float
    mu: float = 0.0

    def __init__(self, domain: BallDomain, G: float, mu: float = 0.0,
                 extended_radius: float = math.inf):
        self.domain = domain
        self.G = float(G)
        self.mu = float(mu)
        self.extended_radius = float(extended_radius)

    @property
    def d(self) -> int:
        return self.domain.d

    def evaluate(self, theta, z):
        raise NotImplementedError

    def value(self, theta, z):
        return self.evaluate(theta, z)[0]

    def subgradient(self, theta, z):
        return self.evaluate(theta, z)[1]

    def is_kink(self, theta, z, h: float) -> bool:
        """True when ``theta`` is within ``h`` of a non-differentiable point."""
        return False

    def check_extended(self, theta, r: float) -> None:
        """Raise unless the ``r``-ball around every ``theta`` stays in the extended domain."""
        if math.isinf(self.extended_radius):
            return
        dist = np.linalg.norm(np.asarray(theta) - self.domain.center, axis=-1)
        if np.any(dist + r > self.extended_radius * (1.0 + 1e-12)):
            raise InvalidParameterError(
                f"smoothing ball of radius {r} leaves the extended domain "
                f"(radius {self.extended_radius}) of {self.name}"
            )

    def params(self) -> dict:
        return {"id": self.name, "G": self.G, "mu": self.mu,
                "domain_radius": self.domain.radius,
                "domain_center": self.domain.center.tolist()}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(d={self.d}, G={self.G:g}, mu={self.mu:g})"


class NormLoss(LossOracle):
    """``||theta - z||``: 1-Lipschitz on all of ``R^d``, non-smooth at ``theta == z``."""

    name = "norm"

    def __init__(self, domain: BallDomain):
        super().__init__(domain, G=1.0)

    def evaluate(self, theta, z):
        return norm_loss(theta, z)

    def is_kink(self, theta, z, h: float) -> bool:
        return bool(np.linalg.norm(np.asarray(theta) - np.asarray(z)) <= 10.0 * h)


class QuadraticLoss(LossOracle):
    """``(mu/2) ||theta - z||^2`` with items clipped to ``||z - center|| <= z_bound``.

    The gradient is bounded by ``G = mu (radius + slack + z_bound)`` on the
    ball of radius ``radius + slack``, which is the declared extended domain.
    """

    name = "quadratic"

    def __init__(self, domain: BallDomain, mu: float, z_bound: float, slack: float | None = None):
        if not mu > 0:
            raise InvalidParameterError(f"mu must be positive, got {mu}")
        if not z_bound >= 0:
            raise InvalidParameterError(f"z_bound must be non-negative, got {z_bound}")
        slack = domain.radius if slack is None else float(slack)
        ext = domain.radius + slack
        super().__init__(domain, G=mu * (ext + z_bound), mu=mu, extended_radius=ext)
        self.z_bound = float(z_bound)
        self.slack = slack

    def evaluate(self, theta, z):
        z = np.asarray(z, dtype=np.float64)
        if np.any(np.linalg.norm(z - self.domain.center, axis=-1) > self.z_bound * (1 + 1e-12)):
            raise InvalidParameterError("item outside the declared bound; clip the population")
        return strongly_convex_loss(theta, z, self.mu)

    def params(self) -> dict:
        return super().params() | {"z_bound": self.z_bound, "slack": self.slack}


class LinearLoss(LossOracle):
    """``<a, theta - z>``; used to test that smoothing leaves affine losses unchanged."""

    name = "linear"

    def __init__(self, domain: BallDomain, a):
        a = np.asarray(a, dtype=np.float64)
        super().__init__(domain, G=float(np.linalg.norm(a)))
        self.a = a

    def evaluate(self, theta, z):
        diff = np.asarray(theta, dtype=np.float64) - np.asarray(z, dtype=np.float64)
        return diff @ self.a, np.broadcast_to(self.a, diff.shape).copy()


# ---------------------------------------------------------------------------
# populations
# ---------------------------------------------------------------------------


@dataclass
class PopulationSpec:
    """Item distribution.

    ``kind="gaussian"``: ``N(mean, scale^2 I)``, optionally with the deviation
    from ``mean`` radially clipped to ``clip``. ``kind="atom"``: every item
    equals ``mean``.
    """

    mean: np.ndarray
    kind: str = "gaussian"
    scale: float = 1.0
    clip: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        if self.kind not in ("gaussian", "atom"):
            raise InvalidParameterError(f"unknown population kind {self.kind!r}")
        if self.clip is not None and not self.clip > 0:
            raise InvalidParameterError("clip must be positive")

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def max_deviation(self) -> float:
        if self.kind == "atom":
            return 0.0
        return math.inf if self.clip is None else self.clip

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean.tolist(), "scale": self.scale,
                "clip": self.clip}


def sample_items(spec: PopulationSpec, k: int, rng: RngStream) -> np.ndarray:
    """``k`` i.i.d. items, shape ``(k, d)``."""
    if spec.kind == "atom":
        return np.broadcast_to(spec.mean, (k, spec.d)).copy()
    dev = spec.scale * rng.generator.standard_normal((k, spec.d))
    if spec.clip is not None:
        norms = np.linalg.norm(dev, axis=1, keepdims=True)
        dev *= np.minimum(1.0, spec.clip / np.where(norms > 0, norms, 1.0))
    return spec.mean + dev


def sample_population(spec: PopulationSpec, n: int, m: int, rng: RngStream) -> UserDataset:
    return UserDataset(sample_items(spec, n * m, rng).reshape(n, m, spec.d))


def population_risk(loss: LossOracle, theta, spec: PopulationSpec, k_fresh: int,
                    rng: RngStream) -> MCEstimate:
    """Monte-Carlo estimate of ``E_z loss(theta, z)`` from ``k_fresh`` new items."""
    if k_fresh < 1000:
        raise InvalidParameterError("population_risk needs k_fresh >= 1000")
    vals = loss.value(np.asarray(theta), sample_items(spec, k_fresh, rng))
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(k_fresh)))


def excess_risk(loss: LossOracle, theta, theta_star, spec: PopulationSpec, k_fresh: int,
                rng: RngStream) -> MCEstimate:
    """Paired estimate of ``L(theta) - L(theta_star)`` on one shared fresh sample."""
    if k_fresh < 1000:
        raise InvalidParameterError("excess_risk needs k_fresh >= 1000")
    z = sample_items(spec, k_fresh, rng)
    diff = loss.value(np.asarray(theta), z) - loss.value(np.asarray(theta_star), z)
    return MCEstimate(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(k_fresh)))


def analytic_minimizer(loss: LossOracle, spec: PopulationSpec) -> np.ndarray | None:
    """Known population minimiser for the built-in benchmarks, else ``None``.

    For the norm and quadratic losses under a spherically symmetric population
    (Gaussian, radially clipped Gaussian, or an atom) the minimiser over the
    ball is the projection of the population centre.
    """
    if isinstance(loss, (NormLoss, QuadraticLoss)):
        return project(loss.domain, spec.mean)
    return None


# ---------------------------------------------------------------------------
# string-addressable registry for config files
# ---------------------------------------------------------------------------


def make_loss(cfg: dict, d: int) -> LossOracle:
    """Build a loss from a config mapping such as ``{"id": "norm", "radius": 1.0}``."""
    cfg = dict(cfg)
    kind = cfg.pop("id")
    center = np.asarray(cfg.pop("center", np.zeros(d)), dtype=np.float64)
    if center.shape != (d,):
        raise InvalidParameterError(f"domain centre must have dimension {d}")
    domain = BallDomain(center, float(cfg.pop("radius", 1.0)))
    if kind == "norm":
        loss = NormLoss(domain)
    elif kind == "quadratic":
        loss = QuadraticLoss(domain, mu=float(cfg.pop("mu", 1.0)),
                             z_bound=float(cfg.pop("z_bound")), slack=cfg.pop("slack", None))
    elif kind == "linear":
        loss = LinearLoss(domain, cfg.pop("a"))
    else:
        raise InvalidParameterError(f"unknown loss id {kind!r}")
    if cfg:
        raise InvalidParameterError(f"unused loss parameters: {sorted(cfg)}")
    return loss


def make_population(cfg: dict, d: int) -> PopulationSpec:
    cfg = dict(cfg)
    kind = cfg.pop("id", cfg.pop("kind", "gaussian"))
    mean = cfg.pop("mean", None)
    if mean is None:
        mean = np.zeros(d)
    elif np.isscalar(mean):
        mean = np.eye(1, d)[0] * float(mean)
    spec = PopulationSpec(mean=mean, kind=kind, scale=float(cfg.pop("scale", 1.0)),
                          clip=cfg.pop("clip", None))
    if spec.d != d:
        raise InvalidParameterError(f"population mean must have dimension {d}")
    if cfg:
        raise InvalidParameterError(f"unused population parameters: {sorted(cfg)}")
    return spec
