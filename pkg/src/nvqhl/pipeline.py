"""Frame loop: scan planning, adaptive window inference, aggregation and
temporal propagation.

One frame processes every window of the scan plan in order.  Each window
builds a joint prior from its persistent local particle set and the current
global coupling marginal, runs K_B field-sensitive then K_J coupling-sensitive
adaptive steps, and hands its posterior coupling marginal on to the next
window.  Window estimates are merged into a map with a positional weighting
profile, and all particle sets are diffused before the next frame.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import inference as inf
from .config import ExperimentConfig
from .metrics import FrameSummary, summarize_frame
from .metrology import CouplingBenchmark, FisherDiagnostics, coupling_benchmark, fisher_diagnostics_many
from .nv import Control, InitialState, NvModel, NvWindowConfig, ObservableSpec, Phase
from .rng import stream
from .world import TruthSequence, WindowIndex, generate_truth, measure

log = logging.getLogger(__name__)

THREADS_ENV = "NVQHL_THREADS"


class PipelineError(RuntimeError):
    """A module error with frame/window context attached."""


# -- scan plan --------------------------------------------------------------

@dataclass(frozen=True)
class ScanPlan:
    directions: tuple[str, ...]
    stride_row: int
    stride_col: int
    windows: tuple[WindowIndex, ...]

    def __len__(self) -> int:
        return len(self.windows)

    def coverage(self, H: int, W: int) -> np.ndarray:
        cov = np.zeros((H, W), dtype=int)
        for w in self.windows:
            cov[w.rows, w.cols] += 1
        return cov


def _offsets(length: int, M: int, stride: int) -> list[int]:
    offs = list(range(0, length - M + 1, stride))
    if offs[-1] != length - M:
        offs.append(length - M)
    return offs


def enumerate_windows(H: int, W: int, M: int, stride_row: int, stride_col: int,
                      directions: Sequence[str] = ("H", "V")) -> ScanPlan:
    """Horizontal windows row-major, then vertical windows column-major.

    H windows sit on rows 0, stride_row, ... at column offsets
    0, stride_col, ..., W - M (the last offset is always included).  V windows
    are the transpose: columns 0, stride_col, ... at row offsets
    0, stride_row, ..., H - M.
    """
    if M < 1 or M > min(H, W):
        raise ValueError(f"window length {M} does not fit a {H}x{W} grid")
    if stride_row < 1 or stride_col < 1:
        raise ValueError("strides must be positive")
    dirs = tuple(directions)
    if not dirs or not set(dirs) <= {"H", "V"}:
        raise ValueError("directions must be a non-empty subset of {H, V}")
    windows: list[WindowIndex] = []
    if "H" in dirs:
        for r in range(0, H, stride_row):
            for c in _offsets(W, M, stride_col):
                windows.append(WindowIndex.horizontal(r, c, M))
    if "V" in dirs:
        for c in range(0, W, stride_col):
            for r in _offsets(H, M, stride_row):
                windows.append(WindowIndex.vertical(c, r, M))
    return ScanPlan(dirs, stride_row, stride_col, tuple(windows))


# -- aggregation ------------------------------------------------------------

@dataclass(frozen=True)
class AggregationProfile:
    kind: str
    weights: np.ndarray

    @classmethod
    def make(cls, kind: str, M: int) -> "AggregationProfile":
        if kind == "Uniform":
            w = np.ones(M)
        elif kind == "Triangular":
            k = np.arange(1, M + 1)
            w = np.minimum(k, M + 1 - k).astype(float)
        else:
            raise ValueError(f"unknown aggregation profile {kind!r}")
        return cls(kind, w / w.max())


UNCOVERED_POLICIES = ("neighbors", "carry")


def _neighbor_fill(est: np.ndarray, covered: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of covered 4-neighbours for uncovered sites; returns (values, ok)."""
    pad_v = np.pad(np.where(covered, est, 0.0), 1)
    pad_c = np.pad(covered.astype(float), 1)
    tot = pad_v[:-2, 1:-1] + pad_v[2:, 1:-1] + pad_v[1:-1, :-2] + pad_v[1:-1, 2:]
    cnt = pad_c[:-2, 1:-1] + pad_c[2:, 1:-1] + pad_c[1:-1, :-2] + pad_c[1:-1, 2:]
    ok = (cnt > 0) & ~covered
    vals = np.divide(tot, cnt, out=np.zeros_like(tot), where=cnt > 0)
    return vals, ok


def aggregate(records: Sequence["WindowRecord"], profile: AggregationProfile, H: int, W: int,
              previous: np.ndarray, uncovered: str = "neighbors") -> tuple[np.ndarray, np.ndarray]:
    """Profile-weighted average of window estimates.

    Returns (map, weight accumulator).  Sites without any window take the
    mean of their covered 4-neighbours (``uncovered="neighbors"``) or the
    ``previous`` map (``"carry"``, also the fallback when no neighbour is
    covered).
    """
    if uncovered not in UNCOVERED_POLICIES:
        raise ValueError(f"unknown uncovered-site policy {uncovered!r}")
    num = np.zeros((H, W))
    den = np.zeros((H, W))
    for rec in records:
        w = rec.window
        np.add.at(num, (w.rows, w.cols), profile.weights * rec.b_hat)
        np.add.at(den, (w.rows, w.cols), profile.weights)
    covered = den > 0
    out = np.array(previous, dtype=float, copy=True)
    out[covered] = num[covered] / den[covered]
    if uncovered == "neighbors" and not covered.all():
        vals, ok = _neighbor_fill(out, covered)
        out[ok] = vals[ok]
    return out, den


# -- window inference -------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    k: int
    phase: Phase
    control: Control
    candidate: int
    z: int
    eig: float
    eigs: np.ndarray
    diagnostics: FisherDiagnostics


@dataclass
class WindowRecord:
    window: WindowIndex
    window_id: int
    steps: list[StepRecord]
    b_hat: np.ndarray
    b_std: np.ndarray
    J_hat: float
    J_std: float
    resampled_local: bool = False
    resampled_global: bool = False


@dataclass
class FrameState:
    frame: int
    map_estimate: np.ndarray
    weights: np.ndarray
    global_set: inf.ParticleSet
    local_sets: dict[int, inf.ParticleSet] = field(default_factory=dict)


def build_candidates(cfg: ExperimentConfig) -> dict[Phase, list[Control]]:
    """Phase-tagged candidate controls in a fixed, documented order.

    Order: evolution time, then drive amplitude, then observable site.  A
    one-site window has no adjacent pair, so its coupling phase falls back to
    single-site readout.
    """
    c, M = cfg.controls, cfg.grid.window
    out: dict[Phase, list[Control]] = {Phase.B: [], Phase.J: []}
    for T, n in zip(c.b_times, c.b_shots):
        for om in c.omegas:
            for q in range(1, M + 1):
                out[Phase.B].append(Control(T, om, ObservableSpec.single(q), n, Phase.B))
    pair_obs = ([ObservableSpec.pair(q) for q in range(1, M)] if M >= 2
                else [ObservableSpec.single(1)])
    for T, n in zip(c.j_times, c.j_shots):
        for om in c.omegas:
            for obs in pair_obs:
                out[Phase.J].append(Control(T, om, obs, n, Phase.J))
    return out


def resolve_threads(configured: int = 1) -> int:
    env = os.environ.get(THREADS_ENV)
    n = configured
    if env is not None and env.strip():
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n == 0:
        n = os.cpu_count() or 1
    return max(1, n)


def probability_tables(model: NvModel, b_particles: np.ndarray, J_particles: np.ndarray,
                       groups: Sequence[tuple[Sequence[Control], InitialState]],
                       threads: int = 1) -> list[np.ndarray]:
    """Success probabilities for every (candidate, local particle, J particle).

    ``groups`` pairs candidate lists with their initial state; all groups
    share one diagonalisation per drive amplitude.  Returns one array of
    shape (n_candidates, N_L, N_G) per group.  The pair grid is cut into
    chunks that are evaluated independently (optionally on a thread pool);
    each chunk fills its own slice, so the result does not depend on the
    thread count.
    """
    nl, ng = b_particles.shape[0], J_particles.shape[0]
    npair = nl * ng
    b_all = np.repeat(b_particles, ng, axis=0)
    J_all = np.tile(J_particles, nl)
    outs = [np.empty((len(cands), npair)) for cands, _ in groups]
    omegas = sorted({u.omega for cands, _ in groups for u in cands})
    chunk = max(1, model.chunk)
    spans = [(s, min(npair, s + chunk)) for s in range(0, npair, chunk)]

    def work(span):
        s, e = span
        for omega in omegas:
            eig = model.eigen(b_all[s:e], J_all[s:e], omega)
            for (cands, init), out in zip(groups, outs):
                idxs = [i for i, u in enumerate(cands) if u.omega == omega]
                if not idxs:
                    continue
                times = sorted({cands[i].T for i in idxs})
                psi = model.evolved(eig, init, times)
                for i in idxs:
                    u = cands[i]
                    out[i, s:e] = model.probability_of(psi[times.index(u.T)], u.observable)

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)
    return [out.reshape(-1, nl, ng) for out in outs]


class Experiment:
    """Holds the models, candidates and random streams of one run."""

    def __init__(self, cfg: ExperimentConfig, truth: TruthSequence | None = None,
                 progress: Callable[[str], None] | None = None):
        self.cfg = cfg
        self.seed = cfg.run.seed
        self.threads = resolve_threads(cfg.run.threads)
        g, nv = cfg.grid, cfg.nv
        self.M = g.window
        self.window_cfg = window_config(cfg)
        self.strain = self.window_cfg.strain
        self.model = NvModel(self.window_cfg, threads=1)
        self.plan = enumerate_windows(g.height, g.width, self.M, g.stride_row, g.stride_col,
                                      g.directions)
        self.profile = AggregationProfile.make(cfg.aggregation.profile, self.M)
        self.candidates = build_candidates(cfg)
        self.inits = {Phase.B: InitialState(cfg.controls.b_init),
                      Phase.J: InitialState(cfg.controls.j_init)}
        self.box = (nv.B_lo, nv.B_hi)
        self.j_range = (cfg.particles.J_min, cfg.particles.J_max)
        self.truth = truth if truth is not None else make_truth(cfg)
        if self.truth.shape != (g.height, g.width):
            raise ValueError(f"truth shape {self.truth.shape} does not match grid "
                             f"{(g.height, g.width)}")
        if len(self.truth.frames) < cfg.run.frames:
            raise ValueError("truth sequence has fewer frames than requested")
        self.progress = progress

    # -- particle initialisation ------------------------------------------

    def initial_global(self) -> inf.ParticleSet:
        p = self.cfg.particles
        rng = stream(self.seed, "particle-init", 0, 0)
        return inf.ParticleSet.uniform(rng.uniform(p.J_min, p.J_max, p.n_global))

    def level_draws(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Sites drawn independently from the two field levels, plus jitter."""
        p, t = self.cfg.particles, self.cfg.truth
        levels = np.where(rng.random((n, self.M)) < 0.5, t.B_base, t.B_base + t.B_amp)
        parts = levels + p.init_jitter * rng.standard_normal(levels.shape)
        return np.clip(parts, *self.box)

    def level_flips(self, pset: inf.ParticleSet, k: int, rng: np.random.Generator) -> np.ndarray:
        """``k`` copies of weight-drawn particles with one site moved to the
        other field level.  A window whose particles all share a wrong level
        on some site can only recover through such proposals."""
        t = self.cfg.truth
        parents = pset.particles[rng.choice(len(pset), size=k, p=pset.weights)].copy()
        sites = rng.integers(0, self.M, size=k)
        rows = np.arange(k)
        upper = parents[rows, sites] > t.B_base + t.B_amp / 2
        parents[rows, sites] += np.where(upper, -t.B_amp, t.B_amp)
        return np.clip(parents, *self.box)

    def initial_local(self, window_id: int) -> inf.ParticleSet:
        rng = stream(self.seed, "particle-init", 1, window_id)
        return inf.ParticleSet.uniform(self.level_draws(self.cfg.particles.n_local, rng))

    def initial_state(self) -> FrameState:
        g, t = self.cfg.grid, self.cfg.truth
        mid = np.full((g.height, g.width), t.B_base + t.B_amp / 2)
        return FrameState(0, mid, np.zeros((g.height, g.width)), self.initial_global())

    # -- one window --------------------------------------------------------

    def _eig_fn(self):
        if not self.cfg.controls.binomial_eig:
            return None

        def fn(rho, P, controls):
            return np.array([inf.expected_information_gain_binomial(rho, P[i], u.n_shots)
                             for i, u in enumerate(controls)])
        return fn

    def process_window(self, t: int, wid: int, window: WindowIndex,
                       state: FrameState) -> WindowRecord:
        cfg = self.cfg
        c = cfg.controls
        local = state.local_sets.get(wid)
        if local is None:
            local = self.initial_local(wid)
        glob = state.global_set
        rho = inf.joint_prior(local, glob)
        phases = [ph for ph, K in ((Phase.B, c.K_B), (Phase.J, c.K_J)) if K > 0]
        tabs = probability_tables(self.model, local.particles, glob.particles,
                                  [(self.candidates[ph], self.inits[ph]) for ph in phases],
                                  self.threads)
        tables = dict(zip(phases, tabs))
        meas_rng = stream(self.seed, "measurement", t, wid)
        eig_fn = self._eig_fn()
        steps: list[StepRecord] = []
        for k in range(1, c.K_B + c.K_J + 1):
            phase = Phase.B if k <= c.K_B else Phase.J
            cands = self.candidates[phase]
            init = self.inits[phase]
            P = tables[phase]
            w_marg, v_marg = inf.marginals(rho)
            b_pt = w_marg @ local.particles
            J_pt = float(v_marg @ glob.particles)

            def diagnostics(idxs, b_pt=b_pt, J_pt=J_pt, cands=cands, init=init):
                return fisher_diagnostics_many(self.model, b_pt, J_pt, [cands[i] for i in idxs],
                                               [init] * len(idxs), cfg.fd)

            eigs = eig_fn(rho, P, cands) if eig_fn else None
            idx, eigs, fds = inf.select_control(list(zip(cands, P)), rho, phase, cfg.score,
                                                diagnostics, eigs=eigs)
            u = cands[idx]
            z = measure(self.truth, t, window, u, init, self.model, meas_rng)
            try:
                rho = inf.update_pair_weights(rho, P[idx], z, u.n_shots)
            except inf.DegeneracyError as exc:
                raise inf.DegeneracyError(f"frame {t}, window {wid}, step {k}: {exc}") from exc
            steps.append(StepRecord(k, phase, u, idx, z, float(eigs[idx]), eigs, fds[0]))

        w_marg, v_marg = inf.marginals(rho)
        local_post = inf.ParticleSet(local.particles, w_marg)
        glob_post = inf.ParticleSet(glob.particles, v_marg)
        b_hat, b_std = local_post.mean(), local_post.std()
        J_hat, J_std = float(glob_post.mean()), float(glob_post.std())

        p = cfg.particles
        rj = stream(self.seed, "rejuvenation", t, 0, wid)
        local_new, res_l = inf.resample_if_degenerate(local_post, p.ess_threshold, rj)
        glob_new, res_g = inf.resample_if_degenerate(glob_post, p.ess_threshold, rj)
        if res_l:
            local_new = inf.jitter(local_new, p.local_jitter, *self.box, rj)
        if res_g:
            glob_new = inf.jitter(glob_new, p.J_rejuvenation, *self.j_range, rj)
        state.local_sets[wid] = local_new
        state.global_set = glob_new
        return WindowRecord(window, wid, steps, b_hat, b_std, J_hat, J_std, res_l, res_g)

    # -- frames ------------------------------------------------------------

    def run_frame(self, t: int, state: FrameState) -> tuple[list[WindowRecord], FrameState]:
        records = []
        for wid, window in enumerate(self.plan.windows):
            try:
                records.append(self.process_window(t, wid, window, state))
            except inf.DegeneracyError:
                raise
            except Exception as exc:
                raise PipelineError(f"frame {t}, window {wid} {window.sites[0]}: {exc}") from exc
        g = self.cfg.grid
        est, den = aggregate(records, self.profile, g.height, g.width, state.map_estimate,
                             self.cfg.aggregation.uncovered)
        state.map_estimate = est
        state.weights = den
        state.frame = t
        return records, state

    def propagate(self, state: FrameState, t: int) -> FrameState:
        p = self.cfg.particles
        rng = stream(self.seed, "rejuvenation", t, 1)
        state = propagate_frame(state, p.sigma_dyn, p.J_jitter, rng, self.box, self.j_range)
        k = int(round(p.refresh_fraction * p.n_local))
        if k > 0:
            rng = stream(self.seed, "rejuvenation", t, 2)
            for wid in sorted(state.local_sets):
                pset = state.local_sets[wid]
                state.local_sets[wid] = inf.mix_in(pset, self.level_flips(pset, k, rng),
                                                   p.refresh_fraction, rng)
        return state

    def run(self) -> "RunResult":
        cfg = self.cfg
        state = self.initial_state()
        maps, summaries, log_entries = [], [], []
        for t in range(cfg.run.frames):
            records, state = self.run_frame(t, state)
            maps.append(state.map_estimate.copy())
            glob = state.global_set
            summaries.append(summarize_frame(t, state.map_estimate, self.truth.frames[t],
                                             cfg.dice_threshold, float(glob.mean()),
                                             float(glob.std()), cfg.truth.J_true))
            log_entries.extend(control_log_entries(t, records))
            if self.progress:
                s = summaries[-1]
                self.progress(f"frame {t}: rmse={s.rmse_T:.3e} T dice={s.dice:.3f} "
                              f"J={s.J_mean_Hz:.1f}+-{s.J_std_Hz:.1f} Hz")
            if t + 1 < cfg.run.frames:
                state = self.propagate(state, t)
        bench = self.benchmark() if self.M >= 2 else None
        return RunResult(cfg, self.truth, maps, summaries, log_entries, bench, self.strain,
                         self.plan.coverage(cfg.grid.height, cfg.grid.width), len(self.plan))

    def benchmark(self) -> CouplingBenchmark:
        return benchmark_for_config(self.cfg, self.model)


def window_config(cfg: ExperimentConfig) -> NvWindowConfig:
    """Window model settings; strain is drawn once per experiment seed."""
    nv, M = cfg.nv, cfg.grid.window
    strain = (0.0,) * M
    if nv.strain_std > 0:
        strain = tuple(float(x) for x in stream(cfg.run.seed, "strain").normal(0.0, nv.strain_std, M))
    return NvWindowConfig(M=M, gamma_abs=nv.gamma_abs, B_ref=nv.B_ref,
                          angular_factor=nv.angular_factor, strain=strain,
                          dipolar_exponent=nv.dipolar_exponent, drive_form=nv.drive_form)


def benchmark_for_config(cfg: ExperimentConfig, model: NvModel | None = None) -> CouplingBenchmark:
    """Coupling benchmark at b = B_ref on every site and J = J_true, Omega = 0."""
    wcfg = model.cfg if model is not None else window_config(cfg)
    b = np.full(wcfg.M, cfg.nv.B_ref)
    return coupling_benchmark(wcfg, b, cfg.truth.J_true, cfg.benchmark.T_ref,
                              cfg.benchmark.N_ref, omega=0.0, steps=cfg.fd, model=model)


def propagate_frame(state: FrameState, sigma_B_dyn: float, sigma_J: float,
                    rng: np.random.Generator, box: tuple[float, float],
                    j_range: tuple[float, float]) -> FrameState:
    """Diffuse every persistent local set and the global J set; weights kept."""
    for wid in sorted(state.local_sets):
        state.local_sets[wid] = inf.jitter(state.local_sets[wid], sigma_B_dyn, *box, rng)
    state.global_set = inf.jitter(state.global_set, sigma_J, *j_range, rng)
    return state


def control_log_entries(t: int, records: Sequence[WindowRecord]) -> list[dict]:
    out = []
    for rec in records:
        for s in rec.steps:
            u, fd = s.control, s.diagnostics
            out.append({
                "frame": t, "window": rec.window_id, "direction": rec.window.direction,
                "k": s.k, "phase": s.phase.value, "T_us": u.T * 1e6, "omega_Hz": u.omega,
                "observable": u.observable.label, "eig": s.eig, "F_B_sum": fd.F_B_sum,
                "F_J": fd.F_J, "QFI_B_sum": fd.QFI_B_sum, "QFI_J": fd.QFI_J,
                "leakage": fd.leakage, "z": s.z, "n_shots": u.n_shots,
            })
    return out


@dataclass
class RunResult:
    config: ExperimentConfig
    truth: TruthSequence
    reconstructions: list[np.ndarray]
    summaries: list[FrameSummary]
    control_log: list[dict]
    benchmark: CouplingBenchmark | None
    strain: tuple[float, ...]
    coverage: np.ndarray
    window_count: int = 0


def make_truth(cfg: ExperimentConfig, frames: int | None = None) -> TruthSequence:
    g, t = cfg.grid, cfg.truth
    seed = cfg.run.seed
    return generate_truth(g.height, g.width, frames or cfg.run.frames, t.B_base, t.B_amp,
                          t.J_true, t.sigma_true, seed,
                          stream(seed, "truth-generation"), stream(seed, "truth-drift"))


def run_experiment(cfg: ExperimentConfig, truth: TruthSequence | None = None,
                   progress: Callable[[str], None] | None = None) -> RunResult:
    return Experiment(cfg, truth, progress).run()
