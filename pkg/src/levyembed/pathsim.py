"""Lévy path sampling on a uniform grid, in blocks of paths with shared RNG streams.

A block of ``block_size`` paths owns one generator derived from
(seed, block index). Every fine draw fills full-block arrays in a fixed
order, so a path's increments never depend on which other paths in the
block are still running. Draws come in chunks of ``CHUNK`` fine steps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import integrate

from .density import DensitySpec, cms_standard
from .errors import ConfigError, UnsupportedKind
from .levy_core import LevyTriplet

CHUNK = 64


@dataclass
class PathConfig:
    """Time grid and randomness for simulated paths.

    ``refine`` sums that many fine draws of length dt_base/refine per step,
    which couples a run at dt with a run at dt/2.
    """

    dt_base: float = 1e-3
    t_max: float = 50.0
    seed: int = 0
    small_jump_cutoff: float = 0.1
    refine: int = 1
    block_size: int = 4096

    def __post_init__(self):
        if not (self.dt_base > 0 and self.t_max > 0):
            raise ConfigError("dt_base and t_max must be positive")
        if self.dt_base > self.t_max:
            raise ConfigError("dt_base must not exceed t_max")
        if not (0 < self.small_jump_cutoff <= 1):
            raise ConfigError("small_jump_cutoff must lie in (0, 1]")
        if self.refine < 1 or CHUNK % self.refine:
            raise ConfigError(f"refine must divide {CHUNK}")
        if self.block_size < 1:
            raise ConfigError("block_size must be positive")

    @property
    def n_steps(self):
        return int(math.ceil(self.t_max / self.dt_base - 1e-9))

    def to_dict(self):
        return asdict(self)


@dataclass
class SamplePath:
    times: np.ndarray
    states: np.ndarray
    jump_flags: np.ndarray
    cont: np.ndarray | None = None  # continuous part of each increment

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "L", "jump_flag"])
            for t, x, j in zip(self.times, self.states, self.jump_flags):
                w.writerow([repr(float(t)), repr(float(x)), int(bool(j))])


def block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


class IncrementSampler:
    """Vectorized increments of a Lévy process over a fixed fine step.

    ``draw(rng, n, k)`` returns arrays of shape (k, n): the continuous part,
    the jump part and a flag for compound-Poisson events.
    """

    def __init__(self, triplet: LevyTriplet, dt: float, cutoff: float = 0.1):
        self.triplet = triplet
        self.dt = float(dt)
        nu = triplet.nu
        self.kind = nu.kind
        self.sd = math.sqrt(triplet.alpha2 * dt)
        drift = triplet.gamma
        if nu.kind == "atoms":
            x = np.asarray(nu.locations, float)
            lam = np.asarray(nu.rates, float)
            drift -= float(np.sum(lam * x * (np.abs(x) <= 1.0)))
            self.loc, self.lam = x, lam
        elif nu.kind == "stable":
            a = nu.index
            if a == 1.0 and nu.left != nu.right:
                raise UnsupportedKind("asymmetric index-1 stable sampling is not implemented")
            kp, km = nu.stable_coefficients()
            self.a = a
            self.beta = nu.right - nu.left
            self.sscale = (nu.scale * dt) ** (1.0 / a)
            if a != 1.0:
                drift += (kp - km) / (a - 1.0)
        elif nu.kind == "tabulated":
            g = np.asarray(nu.grid, float)
            v = np.asarray(nu.values, float)
            c = cutoff
            fine = np.union1d(np.linspace(g[0], g[-1], 20001), [-c, c, -1.0, 1.0])
            fine = fine[(fine >= g[0]) & (fine <= g[-1])]
            d = np.interp(fine, g, v)
            big = np.abs(fine) > c
            small = ~big
            # variance of the small jumps, replaced by a Gaussian
            var = integrate.trapezoid(np.where(small, d * fine ** 2, 0.0), fine)
            self.sd = math.sqrt(triplet.alpha2 * dt + var * dt)
            mid = (np.abs(fine) > c) & (np.abs(fine) <= 1.0)
            drift -= integrate.trapezoid(np.where(mid, d * fine, 0.0), fine)
            dens = np.where(big, d, 0.0)
            cdf = integrate.cumulative_trapezoid(dens, fine, initial=0.0)
            self.rate = float(cdf[-1])
            if self.rate > 0:
                keep = np.concatenate([[True], np.diff(cdf) > 0])
                self.cdf_x, self.cdf_y = fine[keep], cdf[keep] / cdf[-1]
        elif nu.kind != "none":
            raise UnsupportedKind(f"no sampler for jump measure kind {nu.kind!r}")
        self.mu = drift * dt

    def draw(self, rng, n, k=1):
        shape = (k, n)
        cont = np.full(shape, self.mu)
        if self.sd > 0:
            cont += self.sd * rng.standard_normal(shape)
        jump = np.zeros(shape)
        flag = np.zeros(shape, bool)
        if self.kind == "atoms":
            counts = rng.poisson(self.lam * self.dt, size=shape + (self.lam.size,))
            jump = counts @ self.loc
            flag = counts.sum(axis=-1) > 0
        elif self.kind == "stable":
            u = rng.uniform(-math.pi / 2, math.pi / 2, shape)
            w = rng.standard_exponential(shape)
            jump = self.sscale * cms_standard(self.a, u, w, self.beta)
        elif self.kind == "tabulated" and self.rate > 0:
            counts = rng.poisson(self.rate * self.dt, size=shape)
            tot = int(counts.sum())
            if tot:
                sizes = np.interp(rng.uniform(size=tot), self.cdf_y, self.cdf_x)
                owner = np.repeat(np.arange(counts.size), counts.ravel())
                flat = np.zeros(counts.size)
                np.add.at(flat, owner, sizes)
                jump = flat.reshape(shape)
            flag = counts > 0
        return cont, jump, flag


def sample_initial(h0: DensitySpec, rng, n=None):
    """Draw(s) from h0; a scalar when ``n`` is None."""
    x = h0.sample(rng, 1 if n is None else n)
    return float(x[0]) if n is None else x


def sample_increment(triplet: LevyTriplet, dt, rng, cutoff=0.1):
    """One increment over dt: (increment, had_jump)."""
    c, j, f = IncrementSampler(triplet, dt, cutoff).draw(rng, 1)
    return float(c[0, 0] + j[0, 0]), bool(f[0, 0])


class BlockStream:
    """Steps of one block of paths: initial states, then (cont, jump, flag) per step."""

    def __init__(self, triplet, h0, cfg: PathConfig, block, n):
        self.cfg = cfg
        self.n = n
        self.rng = block_rng(cfg.seed, block)
        self.x0 = sample_initial(h0, self.rng, n)
        self.sampler = IncrementSampler(triplet, cfg.dt_base / cfg.refine, cfg.small_jump_cutoff)
        self._buf = None
        self._pos = CHUNK

    def _fine(self):
        if self._pos >= CHUNK:
            self._buf = self.sampler.draw(self.rng, self.n, CHUNK)
            self._pos = 0
        p = self._pos
        self._pos += 1
        return self._buf[0][p], self._buf[1][p], self._buf[2][p]

    def step(self):
        c, j, f = self._fine()
        for _ in range(self.cfg.refine - 1):
            c2, j2, f2 = self._fine()
            c, j, f = c + c2, j + j2, f | f2
        return c, j, f


def block_layout(n_paths, block_size):
    """[(block index, first path, count)] covering n_paths."""
    out = []
    b = 0
    for start in range(0, n_paths, block_size):
        out.append((b, start, min(block_size, n_paths - start)))
        b += 1
    return out


def simulate_path(triplet: LevyTriplet, h0: DensitySpec, cfg: PathConfig, index=0, t_end=None):
    """Path number ``index`` on [0, t_end] (default t_max), as in the block run."""
    block, pos = divmod(index, cfg.block_size)
    stream = BlockStream(triplet, h0, cfg, block, cfg.block_size)
    steps = int(math.ceil((cfg.t_max if t_end is None else t_end) / cfg.dt_base - 1e-9))
    states = np.empty(steps + 1)
    conts = np.zeros(steps + 1)
    flags = np.zeros(steps + 1, bool)
    states[0] = stream.x0[pos]
    for k in range(steps):
        c, j, f = stream.step()
        conts[k + 1] = c[pos]
        states[k + 1] = states[k] + c[pos] + j[pos]
        flags[k + 1] = f[pos]
    times = cfg.dt_base * np.arange(steps + 1)
    return SamplePath(times, states, flags, conts)
