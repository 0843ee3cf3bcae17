"""Ground-state drivers (ITP-ITP-GS, A-RTP, ITP-IEV-1D/3D) and the trap-release run.

All drivers share :class:`ConvergenceCriteria` and return a :class:`RunReport`.
Runs can be checkpointed and resumed through a small hook protocol: pass
``checkpoint`` (an object with ``every`` and ``save(step, state, trace,
extra)``) and/or ``resume`` (a dict with ``step``, ``state``, ``trace`` and
``extra``).
"""

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import boundary_ratio, check_boundary, integrate
from .hobasis import CACHED_3D, HermiteBasis1D, build_basis, iev_fermion_loop, shell_size, shell_triples
from .orthonorm import OrbitalSet, gram_schmidt
from .physics import total_energy
from .propagator import IMAGINARY, REAL, RampSchedule, evolve_mixture_step, ramp_value, renormalize

log = logging.getLogger(__name__)


class MethodKind(str, enum.Enum):
    ITP_ITP_GS = "ITP_ITP_GS"
    A_RTP = "A_RTP"
    ITP_IEV_1D = "ITP_IEV_1D"
    ITP_IEV_3D = "ITP_IEV_3D"


DEFAULT_DT = {
    MethodKind.ITP_ITP_GS: 0.05,
    MethodKind.A_RTP: 0.05,
    MethodKind.ITP_IEV_1D: 0.01,
    MethodKind.ITP_IEV_3D: 0.01,
}


class StepCapExceeded(RuntimeError):
    pass


class InstabilityError(RuntimeError):
    pass


class BoxTooSmallError(RuntimeError):
    """Raised by the release run; ``series`` holds the snapshots taken so far."""

    def __init__(self, message, series=()):
        super().__init__(message)
        self.series = list(series)


@dataclass(frozen=True)
class ConvergenceCriteria:
    energy_tol: float = 1e-7
    density_tol: float = 1e-8
    window: int = 2000
    max_steps: int = 10**6

    def __post_init__(self):
        if not (self.energy_tol > 0 and self.density_tol > 0):
            raise ValueError("convergence tolerances must be positive")
        if self.window < 1 or self.max_steps < 1:
            raise ValueError("window and step cap must be at least 1")


class MemoryAccountant:
    """Tracks bytes held by fields and bases; reports the peak."""

    def __init__(self):
        self.current = 0
        self.peak = 0
        self._items = {}

    def hold(self, name, nbytes):
        self.current += int(nbytes) - self._items.get(name, 0)
        self._items[name] = int(nbytes)
        self.peak = max(self.peak, self.current)

    def release(self, name):
        self.current -= self._items.pop(name, 0)


@dataclass
class TracePoint:
    step: int
    time: float
    energy: object  # EnergyBreakdown


@dataclass
class RunReport:
    method: str
    energy: object
    steps: int
    wall_seconds: float
    peak_memory_bytes: int
    trace: list
    state: OrbitalSet
    converged: bool = True
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.energy.total


def boson_seed(grid, params):
    """Gaussian of the boson trap oscillator length, unit norm."""
    om = np.broadcast_to(np.asarray(params.omega_B, dtype=float), (3,))
    om = np.where(om > 0, om, 1.0)
    x, y, z = grid.coords
    g = np.exp(-0.5 * params.mass_B * (om[0] * x**2 + om[1] * y**2 + om[2] * z**2))
    return renormalize(g.astype(complex), grid)


def oscillator_orbitals(grid, params):
    """Lowest N_F non-interacting oscillator states of the fermion trap (shell order)."""
    n_shell = 0
    while shell_size(n_shell) < params.N_F:
        n_shell += 1
    triples = shell_triples(n_shell)[: params.N_F]
    om = np.broadcast_to(np.asarray(params.omega_F, dtype=float), (3,))
    tabs = [HermiteBasis1D(grid.axis(i), om[i], params.mass_F, n_shell).values for i in range(3)]
    f = (tabs[0][triples[:, 0]][:, :, None, None] * tabs[1][triples[:, 1]][:, None, :, None]
         * tabs[2][triples[:, 2]][:, None, None, :])
    return gram_schmidt(f.astype(complex), grid)


def _energy(state, params, table, grid, traps=True):
    return total_energy(state.psi_B, state.fermions, params, table, grid, traps=traps)


def boson_ground_state(params, table, grid, criteria, dt, psi=None):
    """ITP of the condensate alone (g_BF = 0) from a Gaussian seed."""
    bare = params.with_coupling(0.0)
    psi = boson_seed(grid, params) if psi is None else psi
    dummy = np.zeros((1,) + grid.shape, dtype=complex)
    state = OrbitalSet(psi, dummy)
    prev = None
    steps = 0
    while True:
        for _ in range(criteria.window):
            state = evolve_mixture_step(state, bare, table, grid, dt, IMAGINARY, evolve_fermions=False)
        steps += criteria.window
        e = _energy(state, bare, table, grid).boson
        if prev is not None and abs(e - prev) < criteria.energy_tol:
            return state.psi_B, steps
        if steps >= criteria.max_steps:
            raise StepCapExceeded(f"boson seed ITP exceeded {criteria.max_steps} steps")
        prev = e


def _max_density_change(a, b, N_B):
    nb_a, nf_a = a.densities(N_B)
    nb_b, nf_b = b.densities(N_B)
    return float(max(np.max(np.abs(nb_a - nb_b)), np.max(np.abs(nf_a - nf_b))))


def _resume(resume):
    if resume is None:
        return None, 0, [], {}
    return resume["state"], int(resume["step"]), list(resume["trace"]), dict(resume.get("extra", {}))


def run_itp_itp_gs(params, grid, criteria=ConvergenceCriteria(), table=None, dt=0.05, initial=None,
                   checkpoint=None, resume=None):
    """Imaginary-time propagation of all fields with Gram-Schmidt after every step.

    Stops when two checkpoint energies ``window`` steps apart differ by less
    than ``energy_tol`` and the maximum density change is below ``density_tol``.
    """
    t0 = time.perf_counter()
    mem = MemoryAccountant()
    state, step, trace, extra = _resume(resume)
    if state is None:
        if initial is not None:
            state = initial.copy()
        else:
            psi_B, seed_steps = boson_ground_state(params, table, grid, criteria, dt)
            state = OrbitalSet(psi_B, oscillator_orbitals(grid, params))
            extra["seed_steps"] = seed_steps
        state = OrbitalSet(renormalize(state.psi_B, grid), gram_schmidt(state.fermions, grid), True)
        trace.append(TracePoint(0, 0.0, _energy(state, params, table, grid)))
    mem.hold("fields", 2 * (state.psi_B.nbytes + state.fermions.nbytes))
    converged = False
    while not converged:
        if step >= criteria.max_steps:
            raise StepCapExceeded(f"ITP-ITP-GS exceeded {criteria.max_steps} steps")
        before = state
        for _ in range(criteria.window):
            state = evolve_mixture_step(state, params, table, grid, dt, IMAGINARY)
        step += criteria.window
        e = _energy(state, params, table, grid)
        de = abs(e.total - trace[-1].energy.total)
        dn = _max_density_change(state, before, params.N_B)
        trace.append(TracePoint(step, step * dt, e))
        log.info("ITP-ITP-GS step %d: E=%.10f dE=%.2e dn=%.2e", step, e.total, de, dn)
        converged = de < criteria.energy_tol and dn < criteria.density_tol
        if checkpoint is not None and step % checkpoint.every == 0 and not converged:
            checkpoint.save(step, state, trace, extra)
    check_boundary(state.densities(params.N_B)[0], grid, what="boson density")
    return RunReport(MethodKind.ITP_ITP_GS.value, trace[-1].energy, step, time.perf_counter() - t0,
                     mem.peak, trace, state, True, len(trace) - 1, extra)


def run_a_rtp(params, grid, criteria=ConvergenceCriteria(), table=None, dt=0.05, t_f=2e4,
              max_post_ramp_windows=20, initial_boson=None, checkpoint=None, resume=None):
    """Adiabatic real-time ramp of g_BF from 0 to its target along sin^2.

    After the ramp the run continues until two successive checkpoint energies
    differ by less than ``energy_tol`` or ``max_post_ramp_windows`` windows
    have elapsed (``converged`` is False in the latter case).
    """
    t0 = time.perf_counter()
    mem = MemoryAccountant()
    ramp = RampSchedule(params.g_BF_over_gB, t_f)
    state, step, trace, extra = _resume(resume)
    if state is None:
        psi_B = initial_boson
        if psi_B is None:
            psi_B, extra["seed_steps"] = boson_ground_state(params, table, grid, criteria, dt)
        state = OrbitalSet(psi_B, oscillator_orbitals(grid, params), True)
        trace.append(TracePoint(0, 0.0, _energy(state, params.with_coupling(0.0), table, grid)))
    mem.hold("fields", 2 * (state.psi_B.nbytes + state.fermions.nbytes))
    ramp_steps = int(np.ceil(t_f / dt))
    converged = False
    post = extra.get("post_ramp_windows", 0)
    while True:
        if step >= criteria.max_steps:
            raise StepCapExceeded(f"A-RTP exceeded {criteria.max_steps} steps")
        n = criteria.window
        for _ in range(n):
            state = evolve_mixture_step(state, params, table, grid, dt, REAL, ramp=ramp, t=step * dt)
            step += 1
        g_now = ramp_value(step * dt, ramp)
        e = _energy(state, params.with_coupling(g_now), table, grid)
        trace.append(TracePoint(step, step * dt, e))
        log.info("A-RTP step %d t=%.1f g=%.4f E=%.10f", step, step * dt, g_now, e.total)
        if step - n >= ramp_steps:
            # previous checkpoint was already at full coupling
            post += 1
            extra["post_ramp_windows"] = post
            ref = extra.setdefault("post_ramp_reference", trace[-2].energy.total)
            if abs(e.total - ref) > 0.1 * abs(ref):
                raise InstabilityError(f"energy drifted from {ref:.6g} to {e.total:.6g} after the ramp")
            if abs(e.total - trace[-2].energy.total) < criteria.energy_tol:
                converged = True
                break
            if post >= max_post_ramp_windows:
                break
        if checkpoint is not None and step % checkpoint.every == 0:
            checkpoint.save(step, state, trace, extra)
    return RunReport(MethodKind.A_RTP.value, trace[-1].energy, step, time.perf_counter() - t0,
                     mem.peak, trace, state, converged, len(trace) - 1, extra)


def run_itp_iev(params, grid, criteria=ConvergenceCriteria(), table=None, strategy=CACHED_3D, n_shell=16,
                dt=0.01, memory_cap=None, max_outer=200, initial_boson=None, checkpoint=None, resume=None,
                basis=None):
    """Alternate the fermion IEV at frozen n_B with boson ITP blocks at frozen n_F.

    The outer loop ends when successive total energies differ by less than
    ``energy_tol``.  Checkpoints are taken at the end of outer iterations.
    """
    t0 = time.perf_counter()
    mem = MemoryAccountant()
    kind = MethodKind.ITP_IEV_3D if strategy == CACHED_3D else MethodKind.ITP_IEV_1D
    if basis is None:
        basis = build_basis(grid, params.omega_F, params.mass_F, n_shell, strategy, memory_cap)
    mem.hold("basis", basis.stored_bytes)
    state, step, trace, extra = _resume(resume)
    n_F = None
    if state is None:
        psi_B = initial_boson
        if psi_B is None:
            psi_B, extra["seed_steps"] = boson_ground_state(params, table, grid, criteria, dt)
        psi_B = renormalize(psi_B, grid)
    else:
        psi_B = state.psi_B
        n_F = state.densities(params.N_B)[1]
    outer = extra.get("outer", 0)
    iev_total = extra.get("iev_iterations", 0)
    while True:
        if outer >= max_outer:
            raise StepCapExceeded(f"ITP-IEV outer loop exceeded {max_outer} iterations")
        outer += 1
        n_B = params.N_B * np.abs(psi_B) ** 2
        iev = iev_fermion_loop(n_B, params, table, basis, criteria.energy_tol, n_F=n_F)
        iev_total += iev.iterations
        state = OrbitalSet(psi_B, iev.orbitals, True)
        mem.hold("fields", 2 * (state.psi_B.nbytes + state.fermions.nbytes))
        prev_b = _energy(state, params, table, grid).total
        while True:
            for _ in range(criteria.window):
                state = evolve_mixture_step(state, params, table, grid, dt, IMAGINARY, evolve_fermions=False)
            step += criteria.window
            if step >= criteria.max_steps:
                raise StepCapExceeded(f"ITP-IEV exceeded {criteria.max_steps} boson steps")
            e = _energy(state, params, table, grid)
            if abs(e.total - prev_b) < criteria.energy_tol:
                break
            prev_b = e.total
        psi_B = state.psi_B
        n_F = state.densities(params.N_B)[1]
        trace.append(TracePoint(step, step * dt, e))
        log.info("%s outer %d: E=%.10f (IEV its %d)", kind.value, outer, e.total, iev.iterations)
        extra.update(outer=outer, iev_iterations=iev_total)
        if len(trace) >= 2 and abs(trace[-1].energy.total - trace[-2].energy.total) < criteria.energy_tol:
            break
        if params.g_BF == 0.0:
            break
        if checkpoint is not None:
            checkpoint.save(step, state, trace, extra)
    extra["basis_size"] = basis.size
    return RunReport(kind.value, trace[-1].energy, step, time.perf_counter() - t0, mem.peak, trace, state,
                     True, outer, extra)


def observables(state, params, grid):
    """rms radii, peak densities, norms and shell-averaged radial profiles."""
    n_B, n_F = state.densities(params.N_B)
    r2 = grid.r2
    out = {}
    for name, n, count in (("B", n_B, params.N_B), ("F", n_F, state.n_fermions)):
        mass = float(integrate(n, grid))
        out[f"norm_{name}"] = mass / count
        out[f"rms_{name}"] = float(np.sqrt(integrate(r2 * n, grid) / mass)) if mass > 0 else 0.0
        out[f"peak_{name}"] = float(n.max())
    r, prof_B = radial_profile(n_B, grid)
    _, prof_F = radial_profile(n_F, grid)
    out["radius"] = r
    out["profile_B"] = prof_B
    out["profile_F"] = prof_F
    return out


def radial_profile(n, grid):
    """Average ``n`` over spherical shells of width dx; returns (bin centres, means)."""
    r = np.sqrt(grid.r2).ravel()
    idx = np.floor(r / grid.dx).astype(int)
    nbins = int(min(grid.n) // 2)
    keep = idx < nbins
    sums = np.bincount(idx[keep], weights=n.ravel()[keep], minlength=nbins)
    counts = np.bincount(idx[keep], minlength=nbins)
    prof = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    centres = (np.arange(nbins) + 0.5) * grid.dx
    return centres, prof


def release_trap_and_evolve(state, params, table, grid, duration, dt=0.05, snapshot_every=100,
                            on_snapshot=None, boundary_limit=1e-6):
    """Switch the traps off and evolve in real time; returns a list of observable snapshots.

    ``on_snapshot(step, time, state, obs)`` is called for every snapshot.
    Aborts with :class:`BoxTooSmallError` once the density on the box
    boundary exceeds ``boundary_limit`` of its peak.
    """
    steps = int(round(duration / dt))
    series = []

    def snap(step, st):
        obs = observables(st, params, grid)
        obs["step"] = step
        obs["time"] = step * dt
        n_B, n_F = st.densities(params.N_B)
        ratio = max(boundary_ratio(n_B, grid), boundary_ratio(n_F, grid))
        obs["boundary_ratio"] = ratio
        series.append(obs)
        if on_snapshot is not None:
            on_snapshot(step, step * dt, st, obs)
        if ratio > boundary_limit:
            raise BoxTooSmallError(
                f"density on the box boundary reached {ratio:.2e} of its peak at t={step * dt:g}; "
                "enlarge the box for the expansion",
                series,
            )

    snap(0, state)
    for step in range(1, steps + 1):
        state = evolve_mixture_step(state, params, table, grid, dt, REAL, traps=False)
        if step % snapshot_every == 0 or step == steps:
            snap(step, state)
    return series, state
