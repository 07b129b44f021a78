"""System parameters, node geometry and random channel draws."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegenerateGeometryError",
    "SystemParams",
    "Geometry",
    "Layout",
    "ChannelInstance",
    "dbm_to_watts",
    "watts_to_dbm",
    "noise_power",
    "rician_power_samples",
    "generate_instance",
    "draw_instance",
]

# stream tags for per-link random generators
_TAG_SRC, _TAG_DST, _TAG_WPT, _TAG_SS, _TAG_H1, _TAG_H2, _TAG_H1F, _TAG_H2F = range(8)


class DegenerateGeometryError(ValueError):
    """Two nodes that share a link sit at the same point."""


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class SystemParams:
    """Global constants of one network.

    All powers are linear watts; with the unit block duration power and
    energy are interchangeable.
    """

    num_pairs: int = 4
    num_subcarriers: int = 64
    total_energy: float = 1.0
    peak_power: float = 2.0
    conversion_efficiency: float = 0.8
    noise_density: float = float(dbm_to_watts(-174.0))
    bandwidth: float = 10e6
    processing_cost: tuple = field(default=None)
    block_duration: float = 1.0

    def __post_init__(self):
        if self.processing_cost is None:
            object.__setattr__(self, "processing_cost", (1e-7,) * self.num_pairs)
        elif np.isscalar(self.processing_cost):
            object.__setattr__(
                self, "processing_cost", (float(self.processing_cost),) * self.num_pairs
            )
        else:
            object.__setattr__(
                self, "processing_cost", tuple(float(c) for c in self.processing_cost)
            )
        if int(self.num_pairs) != self.num_pairs or self.num_pairs < 1:
            raise ValueError(f"num_pairs must be a positive integer, got {self.num_pairs}")
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 1:
            raise ValueError(
                f"num_subcarriers must be a positive integer, got {self.num_subcarriers}"
            )
        if not 0.0 < self.conversion_efficiency < 1.0:
            raise ValueError(
                f"conversion_efficiency must lie in (0, 1), got {self.conversion_efficiency}"
            )
        if not self.total_energy > 0.0:
            raise ValueError(f"total_energy must be positive, got {self.total_energy}")
        if not self.peak_power >= self.total_energy:
            raise ValueError(
                f"peak_power ({self.peak_power}) must be at least total_energy ({self.total_energy})"
            )
        if not (self.noise_density > 0.0 and self.bandwidth > 0.0):
            raise ValueError("noise_density and bandwidth must be positive")
        if len(self.processing_cost) != self.num_pairs:
            raise ValueError("processing_cost needs one entry per pair")
        if any(c < 0.0 or not np.isfinite(c) for c in self.processing_cost):
            raise ValueError("processing costs must be finite and nonnegative")
        if self.block_duration != 1.0:
            raise ValueError("block_duration is normalized to 1.0")

    @property
    def costs(self) -> np.ndarray:
        return np.asarray(self.processing_cost, dtype=float)

    def replace(self, **changes) -> "SystemParams":
        """Copy with some fields changed; a new pair count resizes the costs."""
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if "num_pairs" in changes and "processing_cost" not in changes:
            costs = set(self.processing_cost)
            if len(costs) != 1:
                raise ValueError("cannot resize non-uniform processing costs")
            changes["processing_cost"] = costs.pop()
        values.update(changes)
        return SystemParams(**values)


def noise_power(params: SystemParams, per_subcarrier: bool = False) -> float:
    """Receiver noise power in watts: over the whole band, or one subcarrier."""
    sigma2 = params.noise_density * params.bandwidth
    if per_subcarrier:
        sigma2 /= params.num_subcarriers
    return sigma2


@dataclass(frozen=True)
class Geometry:
    source_positions: np.ndarray
    destination_positions: np.ndarray
    relay_position: np.ndarray
    pathloss_exponent: float = 3.0
    rician_factor: float = 3.0
    reference_distance: float = 1.0

    def __post_init__(self):
        if self.reference_distance < 0.0:
            raise ValueError("reference_distance must be nonnegative")
        src = np.atleast_2d(np.asarray(self.source_positions, dtype=float))
        dst = np.atleast_2d(np.asarray(self.destination_positions, dtype=float))
        relay = np.asarray(self.relay_position, dtype=float).reshape(2)
        if src.shape[1] != 2 or dst.shape[1] != 2:
            raise ValueError("positions must be 2-D points")
        if src.shape != dst.shape:
            raise ValueError("need one destination per source")
        if not (np.isfinite(src).all() and np.isfinite(dst).all() and np.isfinite(relay).all()):
            raise ValueError("positions must be finite")
        if self.rician_factor < 0.0 or self.pathloss_exponent < 0.0:
            raise ValueError("pathloss_exponent and rician_factor must be nonnegative")
        for name, arr in (("source_positions", src), ("destination_positions", dst),
                          ("relay_position", relay)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_pairs(self) -> int:
        return self.source_positions.shape[0]


@dataclass(frozen=True)
class Layout:
    """Template from which random node placements are drawn.

    Sources and destinations are uniform in axis-aligned squares; the relay
    sits on the x-axis.  Links shorter than ``reference_distance`` get the
    path loss of that distance, which keeps every gain at most 1.
    """

    relay_x: float = 0.0
    source_center: tuple = (-5.0, 0.0)
    destination_center: tuple = (5.0, 0.0)
    region_side: float = 2.0
    pathloss_exponent: float = 3.0
    rician_factor: float = 3.0
    reference_distance: float = 1.0

    def __post_init__(self):
        if not self.region_side > 0.0:
            raise ValueError("region_side must be positive")
        if self.rician_factor < 0.0 or self.pathloss_exponent < 0.0:
            raise ValueError("pathloss_exponent and rician_factor must be nonnegative")

    def sample(self, num_pairs: int, seed: int) -> Geometry:
        # one stream per node so that node k sits at the same place for any K
        def place(tag, center, k):
            rng = np.random.default_rng([seed, tag, k])
            return np.asarray(center) + rng.uniform(-0.5, 0.5, size=2) * self.region_side

        src = [place(_TAG_SRC, self.source_center, k) for k in range(num_pairs)]
        dst = [place(_TAG_DST, self.destination_center, k) for k in range(num_pairs)]
        return Geometry(np.array(src), np.array(dst), np.array([self.relay_x, 0.0]),
                        self.pathloss_exponent, self.rician_factor, self.reference_distance)


@dataclass(frozen=True)
class ChannelInstance:
    """Channel power gains of one fading block (linear scale)."""

    g_wpt: np.ndarray
    g_ss: np.ndarray
    h1_tdma: np.ndarray
    h2_tdma: np.ndarray
    h1_fdma: np.ndarray
    h2_fdma: np.ndarray
    noise_power_tdma: float
    noise_power_fdma: float

    def __post_init__(self):
        for name in ("g_wpt", "g_ss", "h1_tdma", "h2_tdma", "h1_fdma", "h2_fdma"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        K = self.g_wpt.shape[0]
        if self.g_ss.shape != (K, K) or self.h1_tdma.shape != (K,) or self.h2_tdma.shape != (K,):
            raise ValueError("inconsistent channel shapes")
        if self.h1_fdma.shape != self.h2_fdma.shape or self.h1_fdma.shape[0] != K:
            raise ValueError("inconsistent subcarrier channel shapes")
        off = ~np.eye(K, dtype=bool)
        gains = np.concatenate([self.g_wpt, self.g_ss[off], self.h1_tdma, self.h2_tdma,
                                self.h1_fdma.ravel(), self.h2_fdma.ravel()])
        if not (np.isfinite(gains).all() and (gains > 0.0).all()):
            raise ValueError("channel gains must be strictly positive and finite")
        if not np.array_equal(self.g_ss, self.g_ss.T):
            raise ValueError("source-to-source gains must be symmetric")

    @property
    def num_pairs(self) -> int:
        return self.g_wpt.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.h1_fdma.shape[1]

    @classmethod
    def from_gains(cls, params: SystemParams, g_wpt, h1, h2, g_ss=None, h1_fdma=None,
                   h2_fdma=None) -> "ChannelInstance":
        """Build an instance from explicit gains (flat subcarriers by default)."""
        g_wpt = np.asarray(g_wpt, dtype=float)
        K = g_wpt.shape[0]
        N = params.num_subcarriers
        h1 = np.asarray(h1, dtype=float)
        h2 = np.asarray(h2, dtype=float)
        if g_ss is None:
            g_ss = np.full((K, K), 1e-3)
        g_ss = np.array(g_ss, dtype=float)
        np.fill_diagonal(g_ss, 0.0)
        h1_fdma = np.tile(h1[:, None], (1, N)) if h1_fdma is None else h1_fdma
        h2_fdma = np.tile(h2[:, None], (1, N)) if h2_fdma is None else h2_fdma
        return cls(g_wpt, g_ss, h1, h2, h1_fdma, h2_fdma,
                   noise_power(params), noise_power(params, per_subcarrier=True))


def rician_power_samples(rng: np.random.Generator, k_factor: float, size) -> np.ndarray:
    """|h|^2 for Rician h with K-factor ``k_factor`` and E|h|^2 = 1."""
    los = np.sqrt(k_factor / (k_factor + 1.0))
    scatter = np.sqrt(1.0 / (2.0 * (k_factor + 1.0)))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=size)
    re = los * np.cos(phase) + scatter * rng.standard_normal(size)
    im = los * np.sin(phase) + scatter * rng.standard_normal(size)
    return re * re + im * im


def _pathloss(a, b, exponent, reference):
    d = float(np.hypot(*(np.asarray(a) - np.asarray(b))))
    if d == 0.0:
        raise DegenerateGeometryError(f"coincident nodes at {tuple(a)}")
    return max(d, reference) ** (-exponent)


def generate_instance(params: SystemParams, geom: Geometry, seed: int) -> ChannelInstance:
    """Draw one block of Rician-faded, path-loss-scaled channel power gains.

    Every link has its own random stream keyed by ``seed`` and the node
    indices, so the draws are reproducible and a link's gain does not depend
    on how many other pairs exist.
    """
    K = params.num_pairs
    N = params.num_subcarriers
    if geom.num_pairs != K:
        raise ValueError(f"geometry has {geom.num_pairs} pairs, params expect {K}")
    kf, ple, ref = geom.rician_factor, geom.pathloss_exponent, geom.reference_distance
    relay = geom.relay_position
    src, dst = geom.source_positions, geom.destination_positions

    def fade(tag, i, j=0, size=None):
        return rician_power_samples(np.random.default_rng([seed, tag, i, j]), kf, size)

    g_wpt = np.empty(K)
    h1 = np.empty(K)
    h2 = np.empty(K)
    h1f = np.empty((K, N))
    h2f = np.empty((K, N))
    g_ss = np.zeros((K, K))
    for k in range(K):
        up = _pathloss(src[k], relay, ple, ref)
        down = _pathloss(relay, dst[k], ple, ref)
        g_wpt[k] = up * fade(_TAG_WPT, k)
        h1[k] = up * fade(_TAG_H1, k)
        h2[k] = down * fade(_TAG_H2, k)
        h1f[k] = up * fade(_TAG_H1F, k, size=N)
        h2f[k] = down * fade(_TAG_H2F, k, size=N)
        for i in range(k):
            g_ss[i, k] = g_ss[k, i] = _pathloss(src[i], src[k], ple, ref) * fade(_TAG_SS, i, k)
    return ChannelInstance(g_wpt, g_ss, h1, h2, h1f, h2f,
                           noise_power(params), noise_power(params, per_subcarrier=True))


def draw_instance(params: SystemParams, layout: Layout, seed: int) -> ChannelInstance:
    """Random placement plus fading for one Monte-Carlo realization."""
    return generate_instance(params, layout.sample(params.num_pairs, seed), seed)
