"""Variational loop: energies, exact gradients, BFGS, depth ladder and TAE schedules."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels, metrics, sim
from .pipeline import CompiledModel, exact_optimum

__all__ = [
    "Schedule",
    "OptimizerSettings",
    "RunReport",
    "Evaluator",
    "qaoa_energy",
    "optimize_at_depth",
    "interp_extend",
    "run_ladder",
    "tae_schedule",
    "evaluate_schedule",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    gammas: tuple[float, ...] = ()
    betas: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != len(self.betas):
            raise ValueError("gammas and betas must have equal length")

    @property
    def p(self) -> int:
        return len(self.gammas)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas]).astype(float)

    @classmethod
    def from_vector(cls, v) -> "Schedule":
        v = np.asarray(v, dtype=float)
        p = len(v) // 2
        return cls(tuple(v[:p]), tuple(v[p:]))


@dataclass(frozen=True)
class OptimizerSettings:
    max_iterations: int = 100
    gradient: str = "adjoint"  # or "fd": central differences
    fd_step: float = 1e-6
    gtol: float = 1e-6
    init: tuple[float, float] = (0.1, 0.4)
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.gradient not in ("adjoint", "fd"):
            raise ValueError("gradient must be 'adjoint' or 'fd'")


class Evaluator:
    """Simulates one compiled model on flat state vectors with in-place kernels."""

    def __init__(self, model: CompiledModel, normalize: bool = True):
        self.model = model
        self.shape = model.shape
        sim.check_size(self.shape, model.mem_cap)
        # gamma is measured in units of the objective scale so one convention fits every method
        cost = model.phase_cost / model.phase_scale if normalize else model.phase_cost
        self.phase_cost = np.ascontiguousarray(np.broadcast_to(cost, self.shape), dtype=float).reshape(-1)
        self.eval_cost = np.ascontiguousarray(np.broadcast_to(model.eval_cost, self.shape), dtype=float).reshape(-1)
        self.qubit_axes = model.layout.qubit_axes
        self.qudit_axes = model.layout.qudit_axes
        self._qubit_strides = sim.axis_strides(self.shape, self.qubit_axes)
        self._qudit = [(self.shape[a], int(sim.axis_strides(self.shape, [a])[0])) for a in self.qudit_axes]
        self._ring_cache: dict = {}
        self.nfev = 0

    def initial_state(self) -> np.ndarray:
        return sim.init_state(self.shape, self.model.mem_cap).reshape(-1)

    def _ring(self, d: int, beta: float):
        key = (d, beta)
        if key not in self._ring_cache:
            if len(self._ring_cache) > 64:
                self._ring_cache.clear()
            u = sim.build_ring_mixer(d, beta)
            gen = sim.ring_mixer_derivative(d, beta) @ u.conj().T
            self._ring_cache[key] = (u, np.ascontiguousarray(u.conj().T), gen)
        return self._ring_cache[key]

    def mixer(self, psi: np.ndarray, beta: float, adjoint: bool = False) -> np.ndarray:
        """Apply the mixer (or its adjoint) in place to a flat state."""
        _kernels.rx_axes(psi, self._qubit_strides, -beta if adjoint else beta)
        for d, stride in self._qudit:
            u, u_dag, _ = self._ring(d, beta)
            _kernels.matrix_axis(psi, d, stride, u_dag if adjoint else u)
        return psi

    def _phase(self, psi: np.ndarray, gamma: float) -> np.ndarray:
        _kernels.phase(psi, self.phase_cost, gamma)
        return psi

    def state(self, schedule: Schedule) -> np.ndarray:
        """Final state, shaped like the layout."""
        return self._flat_state(schedule).reshape(self.shape)

    def _flat_state(self, schedule: Schedule) -> np.ndarray:
        psi = self.initial_state()
        for g, b in zip(schedule.gammas, schedule.betas):
            self._phase(psi, g)
            self.mixer(psi, b)
        return psi

    def energy(self, schedule: Schedule) -> float:
        self.nfev += 1
        psi = self._flat_state(schedule)
        return float(np.dot(psi.real**2 + psi.imag**2, self.eval_cost))

    def energy_and_grad(self, schedule: Schedule) -> tuple[float, np.ndarray]:
        """Energy and exact gradient by reverse propagation through the circuit."""
        self.nfev += 1
        p = schedule.p
        psi = self._flat_state(schedule)
        lam = self.eval_cost * psi
        energy = float(np.real(np.vdot(psi, lam)))
        g_gamma, g_beta = np.zeros(p), np.zeros(p)
        for k in reversed(range(p)):
            gamma, beta = schedule.gammas[k], schedule.betas[k]
            total = 0j
            for stride in self._qubit_strides:
                total += -1j * _kernels.flip_overlap(lam, psi, stride)
            for d, stride in self._qudit:
                total += _kernels.matrix_overlap(lam, psi, d, stride, self._ring(d, beta)[2])
            g_beta[k] = 2 * total.real
            self.mixer(psi, beta, adjoint=True)
            self.mixer(lam, beta, adjoint=True)
            g_gamma[k] = 2 * _kernels.weighted_overlap(lam, psi, self.phase_cost).imag
            self._phase(psi, -gamma)
            self._phase(lam, -gamma)
        return energy, np.concatenate([g_gamma, g_beta])

    def fd_gradient(self, schedule: Schedule, h: float = 1e-6) -> np.ndarray:
        v = schedule.to_vector()
        out = np.zeros_like(v)
        for i in range(len(v)):
            e = np.zeros_like(v)
            e[i] = h
            out[i] = (self.energy(Schedule.from_vector(v + e)) - self.energy(Schedule.from_vector(v - e))) / (2 * h)
        return out


def qaoa_energy(model: CompiledModel, schedule: Schedule) -> float:
    return Evaluator(model).energy(schedule)


def optimize_at_depth(
    model: CompiledModel | Evaluator,
    schedule_init: Schedule,
    settings: OptimizerSettings | None = None,
) -> tuple[Schedule, float, dict]:
    """BFGS from ``schedule_init``; never returns a worse point than the start."""
    settings = settings or OptimizerSettings()
    ev = model if isinstance(model, Evaluator) else Evaluator(model)

    if settings.gradient == "adjoint":
        def fun(v):
            return ev.energy_and_grad(Schedule.from_vector(v))
    else:
        def fun(v):
            s = Schedule.from_vector(v)
            return ev.energy(s), ev.fd_gradient(s, settings.fd_step)

    x0 = schedule_init.to_vector()
    e0, _ = fun(x0)
    res = minimize(fun, x0, jac=True, method="BFGS", options={"maxiter": settings.max_iterations, "gtol": settings.gtol})
    info = {"nit": int(res.nit), "nfev": int(res.nfev), "message": str(res.message)}
    if res.fun <= e0:
        return Schedule.from_vector(res.x), float(res.fun), info
    return schedule_init, float(e0), info


def interp_extend(schedule: Schedule) -> Schedule:
    """Linear interpolation of a depth-``p`` schedule to depth ``p + 1``."""
    p = schedule.p
    if p < 1:
        raise ValueError("need p >= 1 to interpolate")

    def extend(v):
        padded = [0.0, *v, 0.0]
        return [((i - 1) / p) * padded[i - 1] + ((p - i + 1) / p) * padded[i] for i in range(1, p + 2)]

    return Schedule(tuple(extend(schedule.gammas)), tuple(extend(schedule.betas)))


def tae_schedule(p: int, delta: float = 0.75) -> Schedule:
    """Fixed sinusoidal annealing schedule."""
    if p < 1:
        raise ValueError("p must be positive")
    i = np.arange(1, p + 1)
    s = np.sin(np.pi / 2 * np.sin(np.pi * i / (2 * p)) ** 2) ** 2
    return Schedule(tuple(delta * s), tuple(delta * (1 - s)))


@dataclass
class RunReport:
    p: int
    gammas: list[float]
    betas: list[float]
    expectation: float
    raar: float
    p_opt: float
    p90: float
    layers: int
    tts: float
    search_space: int
    n_entries: int
    wall_ms: float
    nit: int = 0
    method: str = ""
    instance: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tts"] = None if not np.isfinite(self.tts) else self.tts
        return out


@dataclass
class _Context:
    evaluator: Evaluator
    optimum: float
    random_avg: float
    layers: metrics.LayerCounts


def _context(model: CompiledModel) -> _Context:
    optimum = model.optimum
    if optimum is None:
        optimum, _ = exact_optimum(model.problem, model.mem_cap)
    return _Context(
        Evaluator(model),
        float(optimum),
        metrics.random_average(model.problem, model.eta),
        metrics.circuit_layers(model),
    )


def _report(ctx: _Context, schedule: Schedule, energy: float, t0: float, nit: int = 0) -> RunReport:
    model = ctx.evaluator.model
    state = ctx.evaluator.state(schedule)
    stats = sim.measurement_stats(
        state, model.objective_tensor, model.feasible_tensor, ctx.optimum, model.layout.slack_axes
    )
    layers = ctx.layers.total(schedule.p)
    try:
        r = metrics.raar(energy, ctx.random_avg, ctx.optimum)
    except ZeroDivisionError:
        r = float("nan")
    return RunReport(
        p=schedule.p,
        gammas=list(schedule.gammas),
        betas=list(schedule.betas),
        expectation=energy,
        raar=r,
        p_opt=stats["p_opt"],
        p90=stats["p90"],
        layers=layers,
        tts=metrics.tts(stats["p_opt"], layers),
        search_space=model.search_space,
        n_entries=model.n_entries,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        nit=nit,
        method=model.method,
        instance=model.problem.name,
    )


def evaluate_schedule(model: CompiledModel, schedule: Schedule) -> RunReport:
    """Metrics for a fixed schedule (e.g. TAE) without optimization."""
    t0 = time.perf_counter()
    ctx = _context(model)
    return _report(ctx, schedule, ctx.evaluator.energy(schedule), t0)


def _initial_schedule(ev: Evaluator, settings: OptimizerSettings) -> Schedule:
    start = Schedule((settings.init[0],), (settings.init[1],))
    _, grad = ev.energy_and_grad(start)
    if np.linalg.norm(grad) >= settings.gtol:
        return start
    rng = np.random.default_rng(settings.seed)
    candidates = [Schedule((g,), (b,)) for g, b in rng.uniform(0, np.pi, size=(settings.restarts, 2))]
    return min(candidates, key=ev.energy)


def run_ladder(
    model: CompiledModel,
    p_max: int = 12,
    settings: OptimizerSettings | None = None,
    callback: Callable[[RunReport], None] | None = None,
) -> list[RunReport]:
    """Optimize at p = 1, interpolate to p + 1, re-optimize, up to ``p_max``."""
    settings = settings or OptimizerSettings()
    ctx = _context(model)
    ev = ctx.evaluator
    reports = []
    schedule = _initial_schedule(ev, settings)
    for p in range(1, p_max + 1):
        t0 = time.perf_counter()
        if p > 1:
            schedule = interp_extend(schedule)
        schedule, energy, info = optimize_at_depth(ev, schedule, settings)
        rep = _report(ctx, schedule, energy, t0, info["nit"])
        logger.info("%s %s p=%d E=%.6g raar=%.4f p*=%.4g", rep.instance, rep.method, p, energy, rep.raar, rep.p_opt)
        reports.append(rep)
        if callback is not None:
            callback(rep)
    return reports
