"""Data model, privacy parameters and randomness sources.

Every random draw in the package goes through an :class:`RngStream`. A stream
is a pure function of ``(seed, stream_id)`` and carries a :class:`NoiseHook`
that tests use to zero out or replay the noise samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class UsageError(RuntimeError):
    """An object was used in a state that does not allow the call."""


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


class UserDataset:
    """``n`` users, each holding ``m`` items in ``R^d``.

    Items are stored as a float64 array of shape ``(n, m, d)``. The unit of
    privacy is one user, i.e. one slice ``items[i]``.
    """

    def __init__(self, items):
        arr = np.asarray(items, dtype=np.float64)
        if arr.ndim != 3:
            raise InvalidParameterError(
                f"expected items of shape (n, m, d), got ndim={arr.ndim}"
            )
        n, m, d = arr.shape
        if n < 1 or m < 1 or d < 1:
            raise InvalidParameterError(f"need n, m, d >= 1, got {arr.shape}")
        self._items = arr

    @classmethod
    def from_users(cls, users) -> "UserDataset":
        """Build from a nested list ``users[i][j] -> vector``; rejects ragged input."""
        lengths = {len(u) for u in users}
        if len(lengths) > 1:
            raise InvalidParameterError("all users must hold the same number of items")
        dims = {len(np.atleast_1d(z)) for u in users for z in u}
        if len(dims) > 1:
            raise InvalidParameterError("all items must have the same dimension")
        return cls(np.array([[np.atleast_1d(z) for z in u] for u in users], dtype=np.float64))

    @property
    def items(self) -> np.ndarray:
        return self._items

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._items.shape

    @property
    def n(self) -> int:
        return self._items.shape[0]

    @property
    def m(self) -> int:
        return self._items.shape[1]

    @property
    def d(self) -> int:
        return self._items.shape[2]

    def user(self, i: int) -> np.ndarray:
        return self._items[i]

    def subset(self, indices) -> "UserDataset":
        return UserDataset(self._items[np.asarray(indices)])

    def replace_user(self, i: int, items) -> "UserDataset":
        """Neighbouring dataset with user ``i`` swapped for ``items``."""
        new = self._items.copy()
        new[i] = np.asarray(items, dtype=np.float64).reshape(self.m, self.d)
        return UserDataset(new)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"UserDataset(n={self.n}, m={self.m}, d={self.d})"


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` pair with ``0 < epsilon < 10`` and ``0 < delta < 1``."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (0.0 < self.epsilon < 10.0):
            raise InvalidParameterError(f"epsilon must lie in (0, 10), got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise InvalidParameterError(f"delta must lie in (0, 1), got {self.delta}")


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

NOISE_MODES = ("real", "zeroed", "replay")


@dataclass
class NoiseHook:
    """Test-time control over the noise samplers.

    ``real`` draws fresh noise (optionally appending the base uniforms and
    normals to ``tape`` when ``record`` is set), ``zeroed`` makes every noise
    sampler return exact zeros, and ``replay`` consumes base draws from
    ``tape`` in order instead of the generator.
    """

    mode: str = "real"
    record: bool = False
    tape: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise InvalidParameterError(f"unknown noise mode {self.mode!r}")

    @property
    def zeroed(self) -> bool:
        return self.mode == "zeroed"

    def replay(self) -> "NoiseHook":
        """A replaying hook over a copy of this hook's tape."""
        return NoiseHook(mode="replay", tape=list(self.tape))


class RngStream:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Distinct stream ids give independent streams via
    :class:`numpy.random.SeedSequence` spawn keys. ``child(k)`` derives a
    sub-stream that shares the hook, which keeps callers from having to
    coordinate stream ids by hand.
    """

    def __init__(self, seed: int, stream_id: int = 0, hook: NoiseHook | None = None,
                 _key: tuple = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.hook = hook if hook is not None else NoiseHook()
        self._key = (self.stream_id,) + tuple(_key)
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=self._key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.hook, _key=self._key[1:] + (int(k),))

    # base draws that the hook can record or replay

    def _base(self, kind: str, size):
        hook = self.hook
        if hook.mode == "replay":
            if not hook.tape:
                raise UsageError("noise replay tape exhausted")
            rec_kind, value = hook.tape.pop(0)
            want = 1 if size is None else int(np.prod(size))
            if rec_kind != kind or np.size(value) != want:
                raise UsageError(f"replay tape mismatch: wanted {kind} x{want}, "
                                 f"found {rec_kind} x{np.size(value)}")
            return np.array(value).reshape(() if size is None else size)[()]
        if kind == "uniform":
            value = self.generator.random(size)
        else:
            value = self.generator.standard_normal(size)
        if hook.record:
            hook.tape.append((kind, np.copy(value)))
        return value

    def uniform(self, size=None):
        return self._base("uniform", size)

    def normal(self, size=None):
        return self._base("normal", size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, mode={self.hook.mode})"


def _as_size(size, d=None):
    if size is None:
        return None if d is None else (d,)
    size = (size,) if np.isscalar(size) else tuple(size)
    return size if d is None else size + (d,)


def sample_laplace(scale: float, rng: RngStream, size=None):
    """Laplace(0, scale) draws by inverse-CDF transform of uniforms."""
    if not scale > 0:
        raise InvalidParameterError(f"Laplace scale must be positive, got {scale}")
    shape = _as_size(size)
    if rng.hook.zeroed:
        return 0.0 if shape is None else np.zeros(shape)
    u = np.asarray(rng.uniform(shape), dtype=np.float64)
    # u == 0 has probability 2**-53 and would map to -inf
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    v = u - 0.5
    x = -scale * np.sign(v) * np.log1p(-2.0 * np.abs(v))
    return float(x) if shape is None else x


def sample_gaussian_vector(variance: float, d: int, rng: RngStream, size=None) -> np.ndarray:
    """Isotropic Gaussian draws with per-coordinate ``variance``; shape ``size + (d,)``."""
    if not variance > 0:
        raise InvalidParameterError(f"variance must be positive, got {variance}")
    if int(d) < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    shape = _as_size(size, int(d))
    if rng.hook.zeroed:
        return np.zeros(shape)
    return math.sqrt(variance) * np.asarray(rng.normal(shape), dtype=np.float64)


def sample_uniform_ball(radius: float, d: int, rng: RngStream, size=None) -> np.ndarray:
    """Uniform draws from the Euclidean ball of ``radius`` in ``R^d``.

    Direction is a normalised standard normal; the radius is ``radius * U**(1/d)``.
    """
    if not radius > 0:
        raise InvalidParameterError(f"ball radius must be positive, got {radius}")
    d = int(d)
    if d < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    shape = _as_size(size, d)
    if rng.hook.zeroed:
        return np.zeros(shape)
    g = np.asarray(rng.normal(shape), dtype=np.float64)
    u = np.asarray(rng.uniform(shape[:-1] if len(shape) > 1 else None), dtype=np.float64)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    # a zero normal vector has probability zero; fall back to e_1
    g = np.where(norms > 0, g, np.eye(1, d)[0])
    norms = np.where(norms > 0, norms, 1.0)
    return radius * (g / norms) * (np.asarray(u)[..., None] ** (1.0 / d))
