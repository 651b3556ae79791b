"""The RHMC Markov chain: velocity refresh, direction coin, chains, diagnostics.

One step: resample the velocity w ~ N(0, g(x)^{-1}), flip a fair coin between
the forward and backward Hamiltonian flow over one step length, and accept
the endpoint unconditionally. There is no Metropolis filter; the only
rejections are numerical-failure guards (the position is kept and the
failure counted).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .constants import ELL_THRESHOLD
from .dynamics import _ell_total, ell_denominators
from .errors import SamplerError
from .metric import GibbsTarget, PointState, barrier_params
from .polytope import Polytope

__all__ = [
    "SamplerConfig",
    "ChainState",
    "SampleSet",
    "ChainReport",
    "hash64",
    "make_rng",
    "draw_velocity",
    "step_size",
    "rhmc_step",
    "run_chains",
    "split_rhat",
    "effective_sample_size",
]


def hash64(seed: int, stream: int) -> int:
    """SplitMix64 avalanche of (seed, stream) into one 64-bit key."""
    z = (seed & 0xFFFFFFFFFFFFFFFF) ^ ((stream * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator on an independently keyed stream."""
    return np.random.Generator(np.random.Philox(key=hash64(seed, stream)))


def step_size(n: int, m: int, alpha: float, c: float) -> float:
    """Step length c * min(n^-1/3, alpha^-1/3 m^-1/6 n^-1/6, alpha^-1/2 m^-1/4 n^-1/12).

    For alpha = 0 the alpha-terms are infinite and the first term binds.
    """
    t1 = n ** (-1.0 / 3.0)
    if alpha <= 0.0:
        return c * t1
    t2 = alpha ** (-1.0 / 3.0) * m ** (-1.0 / 6.0) * n ** (-1.0 / 6.0)
    t3 = alpha ** (-0.5) * m ** (-0.25) * n ** (-1.0 / 12.0)
    return c * min(t1, t2, t3)


def draw_velocity(state: PointState, rng: np.random.Generator) -> np.ndarray:
    """w = L^{-T} z with z standard normal, so Cov(w) = g^{-1}."""
    z = rng.standard_normal(state.n)
    return sla.solve_triangular(state.L.T, z, lower=False, check_finite=False)


@dataclass
class SamplerConfig:
    alpha: float = 0.0
    c: float = 0.1
    steps: int = 1000
    chains: int = 1
    seed: int = 0
    thinning: int = 1
    burnin: int | None = None
    record_diagnostics: bool = False
    n_substeps: int = 8
    fp_tol: float = 1e-12
    max_halvings: int = 20

    def __post_init__(self):
        if self.c <= 0 or self.steps < 1 or self.chains < 1 or self.thinning < 1:
            raise ValueError("invalid sampler configuration")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def effective_burnin(self) -> int:
        return self.steps // 5 if self.burnin is None else self.burnin


@dataclass
class ChainState:
    """Mutable per-chain state; owns its RNG stream."""

    x: np.ndarray
    chain_id: int
    rng: np.random.Generator
    delta: float
    steps: int = 0
    rejections: int = 0
    ell_exceed: int = 0
    energy_drift_max: float = 0.0
    halvings: int = 0
    trajectory_log: list = field(default_factory=list)
    stepper: object | None = None


def make_stepper(
    P: Polytope, target: GibbsTarget, config: SamplerConfig, delta: float | None = None
):
    """Kernel stepper bound to (polytope, target, step size); reusable across steps."""
    if delta is None:
        delta = step_size(P.n, P.m, target.alpha, config.c)
    M1, _, _ = barrier_params(P.n, P.m, target)
    dens = ell_denominators(M1, P.n, delta)
    return kernels.Stepper(
        P.A, P.b, target.alpha, delta, config.n_substeps, config.fp_tol,
        config.max_halvings, P.slack_floor, dens[0], dens[1], dens[2],
    )


@dataclass
class SampleSet:
    """Kept samples per chain, merged deterministically by chain id."""

    chain_samples: list[np.ndarray]
    thinning: int
    burnin: int

    @property
    def n_chains(self) -> int:
        return len(self.chain_samples)

    def merged(self) -> np.ndarray:
        return np.concatenate(self.chain_samples, axis=0)

    def rows(self):
        """Yield (chain, step, x) with `step` the chain step that produced x."""
        for cid, arr in enumerate(self.chain_samples):
            for k, x in enumerate(arr):
                yield cid, self.burnin + (k + 1) * self.thinning, x


@dataclass
class ChainReport:
    n: int
    m: int
    alpha: float
    delta: float
    steps: int
    chains: int
    thinning: int
    burnin: int
    seed: int
    kept_per_chain: int
    rejection_rate: float
    rejections: int
    ell_exceed_rate: float
    energy_drift_max: float
    halvings: int
    split_rhat: list[float]
    ess: list[float]
    backend: str = kernels.BACKEND

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["diagnostics_note"] = (
            "split_rhat and ess are standard MCMC plumbing, not part of the"
            " sampling guarantees"
        )
        return d


def _chain_context(P: Polytope, target: GibbsTarget, config: SamplerConfig):
    delta = step_size(P.n, P.m, target.alpha, config.c)
    M1, _, _ = barrier_params(P.n, P.m, target)
    dens = ell_denominators(M1, P.n, delta)
    return delta, dens


def rhmc_step(
    chain: ChainState,
    P: Polytope,
    target: GibbsTarget,
    config: SamplerConfig,
) -> ChainState:
    """Advance one RHMC step; numerical failures keep the position and count."""
    if chain.stepper is None:
        chain.stepper = make_stepper(P, target, config, chain.delta)
    rng = chain.rng
    z = rng.standard_normal(P.n)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    status, x_end, H0, H1, ell_tmax, s0_2, s0_4, s0_i, _, nhalv = chain.stepper.step(
        chain.x, z, sign
    )
    chain.steps += 1
    chain.halvings += nhalv
    if status != kernels.OK:
        chain.rejections += 1
        return chain
    chain.x = x_end
    drift = abs(H1 - H0) / (1.0 + abs(H0))
    if drift > chain.energy_drift_max:
        chain.energy_drift_max = drift
    ell = _ell_total(ell_tmax, (s0_2, s0_4, s0_i), P.n)
    if ell > ELL_THRESHOLD:
        chain.ell_exceed += 1
    if config.record_diagnostics:
        chain.trajectory_log.append(
            {"H0": H0, "H1": H1, "ell": ell, "halvings": nhalv}
        )
    return chain


def _run_one_chain(args):
    P, target, config, cid, start, delta = args
    chain = ChainState(
        x=np.array(start, dtype=np.float64),
        chain_id=cid,
        rng=make_rng(config.seed, cid),
        delta=delta,
        stepper=make_stepper(P, target, config, delta),
    )
    burnin = config.effective_burnin
    kept = []
    for k in range(1, config.steps + 1):
        rhmc_step(chain, P, target, config)
        if k > burnin and (k - burnin) % config.thinning == 0:
            kept.append(chain.x.copy())
    arr = np.array(kept) if kept else np.empty((0, P.n))
    return chain, arr


def run_chains(
    P: Polytope,
    target: GibbsTarget,
    config: SamplerConfig,
    warm_start: np.ndarray | None = None,
) -> tuple[SampleSet, ChainReport]:
    """Run independent chains; deterministic in (seed, config) per backend.

    Chains are embarrassingly parallel; each owns an independently keyed RNG
    stream, so the merged output does not depend on scheduling order.
    Raises SamplerError if any chain rejects more than half its steps.
    """
    delta, _ = _chain_context(P, target, config)
    if warm_start is not None:
        warm = np.atleast_2d(np.asarray(warm_start, dtype=np.float64))
        starts = [warm[i % warm.shape[0]] for i in range(config.chains)]
    else:
        starts = [P.x0 for _ in range(config.chains)]
    jobs = [
        (P, target, config, cid, starts[cid], delta)
        for cid in range(config.chains)
    ]
    n_threads = int(os.environ.get("RHMC_THREADS", os.cpu_count() or 1))
    if n_threads > 1 and config.chains > 1 and kernels.BACKEND == "cython":
        with ThreadPoolExecutor(max_workers=min(n_threads, config.chains)) as pool:
            results = list(pool.map(_run_one_chain, jobs))
    else:
        results = [_run_one_chain(j) for j in jobs]

    chains = [r[0] for r in results]
    samples = SampleSet(
        chain_samples=[r[1] for r in results],
        thinning=config.thinning,
        burnin=config.effective_burnin,
    )
    total_steps = sum(c.steps for c in chains)
    total_rej = sum(c.rejections for c in chains)
    rej_rate = total_rej / max(total_steps, 1)
    kept = samples.chain_samples[0].shape[0]
    stacked = (
        np.stack(samples.chain_samples) if kept > 0 else np.empty((config.chains, 0, P.n))
    )
    report = ChainReport(
        n=P.n,
        m=P.m,
        alpha=target.alpha,
        delta=delta,
        steps=config.steps,
        chains=config.chains,
        thinning=config.thinning,
        burnin=config.effective_burnin,
        seed=config.seed,
        kept_per_chain=kept,
        rejection_rate=rej_rate,
        rejections=total_rej,
        ell_exceed_rate=sum(c.ell_exceed for c in chains) / max(total_steps, 1),
        energy_drift_max=max(c.energy_drift_max for c in chains),
        halvings=sum(c.halvings for c in chains),
        split_rhat=split_rhat(stacked),
        ess=effective_sample_size(stacked),
    )
    for c in chains:
        if c.steps > 0 and c.rejections / c.steps > 0.5:
            raise SamplerError(
                f"chain {c.chain_id} rejected {c.rejections}/{c.steps} steps;"
                " configuration is unusable (see report)"
            )
    return samples, report


def split_rhat(stacked: np.ndarray) -> list[float]:
    """Split-Rhat per coordinate from (chains, kept, n) samples."""
    C, N, n = stacked.shape
    if N < 4:
        return [float("nan")] * n
    half = N // 2
    seqs = np.concatenate([stacked[:, :half, :], stacked[:, half : 2 * half, :]], axis=0)
    out = []
    for j in range(n):
        s = seqs[:, :, j]
        means = s.mean(axis=1)
        variances = s.var(axis=1, ddof=1)
        W = variances.mean()
        B = half * means.var(ddof=1)
        if W <= 0:
            out.append(float("nan"))
            continue
        var_plus = (half - 1) / half * W + B / half
        out.append(float(np.sqrt(var_plus / W)))
    return out


def effective_sample_size(stacked: np.ndarray) -> list[float]:
    """ESS per coordinate via Geyer's initial positive sequence."""
    C, N, n = stacked.shape
    if N < 8:
        return [float("nan")] * n
    out = []
    for j in range(n):
        acf = np.zeros(N // 2)
        for c in range(C):
            x = stacked[c, :, j] - stacked[c, :, j].mean()
            f = np.fft.rfft(x, 2 * N)
            ac = np.fft.irfft(f * np.conj(f))[: N // 2]
            if ac[0] <= 0:
                acf = None
                break
            acf += ac / ac[0]
        if acf is None:
            out.append(float("nan"))
            continue
        acf /= C
        # sum consecutive pairs until one goes negative
        tau = 1.0
        for k in range(1, len(acf) - 1, 2):
            pair = acf[k] + acf[k + 1]
            if pair < 0:
                break
            tau += 2.0 * pair
        out.append(float(C * N / tau))
    return out
