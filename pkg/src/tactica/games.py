"""Differential interactive systems with hidden feedback parameters.

A system couples each player's independent (pure) control with the state
through a known coupling form and a hidden parameter process.  Simulation
evaluates the chain pure control -> hidden parameter -> interactive control ->
vector field consistently at every integrator stage and records all four
traces.  A fixed-step classical 4th-order scheme is used throughout so that
recorded runs can be replayed bit-identically.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """A system, scenario or argument is malformed."""


class SimulationError(RuntimeError):
    """Raised when a run cannot be completed."""


class DivergenceError(SimulationError):
    """State became non-finite; carries the last time with a finite state."""

    def __init__(self, last_valid_time: float):
        super().__init__(f"state diverged; last finite state at t={last_valid_time!r}")
        self.last_valid_time = last_valid_time


_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class PureControlPolicy:
    """Independent control signal of one player."""

    player_index: int
    signal: Callable[[float], Sequence[float]]
    description: str = ""

    def __call__(self, t: float):
        return self.signal(t)


@dataclass(frozen=True)
class EpsilonProcess:
    """Hidden feedback parameter as a function of pure control and state.

    ``form(t, u0, phi, derivs)`` returns the parameter vector; for coalition
    slots ``u0`` is the tuple of member pure controls.  ``ground_truth``
    distinguishes the simulation truth from fitted estimates, which must not
    drive a truth run.
    """

    form: Callable
    dim: int
    ground_truth: bool = True
    description: str = ""


def zero_epsilon() -> EpsilonProcess:
    return EpsilonProcess(form=lambda t, u0, phi, derivs: _EMPTY, dim=0,
                          description="no hidden parameter")


@dataclass(frozen=True)
class FeedbackCoupling:
    """Known coupling producing the interactive control.

    ``known_form(t, u0, phi, derivs, eps, lam)`` -> control vector.
    ``derivative_order`` 0 or 1; order 1 is evaluated by substituting the
    vector field for the state derivative (one substitution pass, seeded with
    a zero derivative).  ``inverse_form(t, u, phi, derivs)`` recovers the pure
    control for couplings declared with the inverse direction; it must be a
    closed form supplied by the scenario author.
    """

    known_form: Callable
    derivative_order: int = 0
    direction: str = "forward"
    inverse_form: Callable | None = None

    def __post_init__(self):
        if self.derivative_order not in (0, 1):
            raise ConfigurationError(
                f"derivative order {self.derivative_order} exceeds the supported "
                "substitution depth (max 1)")
        if self.direction not in ("forward", "inverse"):
            raise ConfigurationError(f"unknown coupling direction {self.direction!r}")
        if self.direction == "inverse" and self.inverse_form is None:
            raise ConfigurationError("inverse-direction coupling requires inverse_form")


def identity_coupling() -> FeedbackCoupling:
    return FeedbackCoupling(known_form=lambda t, u0, phi, derivs, eps, lam: u0)


@dataclass(frozen=True)
class Player:
    policy: PureControlPolicy
    coupling: FeedbackCoupling
    epsilon: EpsilonProcess


@dataclass(frozen=True)
class Coalition:
    """Subset of players whose pure controls feed one coupled control slot.

    ``coupling(t, u0_members, phi, derivs, eps, lam)`` consumes the tuple of
    member pure controls in member order.
    """

    members: tuple[int, ...]
    coupling: Callable
    epsilon: EpsilonProcess = field(default_factory=zero_epsilon)
    derivative_order: int = 0


@dataclass(frozen=True)
class InvariantConstraint:
    """Time-independent quantity of the indeterminate game variant.

    ``fn(t, u, u0, eps, phi, dphi)`` -> scalar, with flat concatenated control
    rows.  ``required_order`` > 1 cannot be served by recorded trajectories.
    """

    fn: Callable
    label: str = ""
    required_order: int = 0


@dataclass(frozen=True)
class InteractiveSystem:
    """Evolution law with per-player feedback couplings.

    ``dynamics(t, phi, controls, lam, omega)`` maps the state and the list of
    per-slot interactive control vectors to the state derivative.  ``lam`` is
    the slow-parameter vector (empty when absent) and ``omega`` the window tag
    of the enclosing verbalization window (empty outside windowed runs).
    """

    dim: int
    dynamics: Callable
    players: tuple[Player, ...]
    coalitions: tuple[Coalition, ...] = ()
    invariant_constraints: tuple[InvariantConstraint, ...] = ()

    def __post_init__(self):
        n = len(self.players)
        if n == 0:
            raise ConfigurationError("a system needs at least one player")
        for c in self.coalitions:
            if not c.members:
                raise ConfigurationError("coalition member set must be nonempty")
            for m in c.members:
                if not 1 <= m <= n:
                    raise ConfigurationError(
                        f"coalition member index {m} outside [1..{n}]")

    @property
    def n_players(self) -> int:
        return len(self.players)


@dataclass(frozen=True)
class SlowControl:
    """External slow parameter; continuous map of time or a held step schedule."""

    schedule: Callable[[float], Sequence[float]] | tuple[tuple[int, tuple], ...]
    owner: str = "external"

    def __post_init__(self):
        if not callable(self.schedule):
            steps = [s for s, _ in self.schedule]
            if any(b <= a for a, b in zip(steps, steps[1:])):
                raise ConfigurationError("discrete schedule step indices must be strictly increasing")

    def value(self, t: float, step: int) -> np.ndarray:
        if callable(self.schedule):
            return np.asarray(self.schedule(t), dtype=float)
        steps = [s for s, _ in self.schedule]
        pos = bisect.bisect_right(steps, step) - 1
        if pos < 0:
            pos = 0
        return np.asarray(self.schedule[pos][1], dtype=float)


@dataclass
class StageTape:
    """Hidden-parameter values at every integrator stage, in evaluation order."""

    times: list[float] = field(default_factory=list)
    values: list[tuple[np.ndarray, ...]] = field(default_factory=list)

    def __len__(self):
        return len(self.times)


class TapeSignal:
    """Single-shot policy replaying one slot of a recorded stage tape."""

    def __init__(self, tape: StageTape, slot: int):
        self._tape = tape
        self._slot = slot
        self._cursor = 0

    def __call__(self, t: float):
        if self._cursor >= len(self._tape):
            raise SimulationError("stage tape exhausted; replay must use the same grid")
        recorded_t = self._tape.times[self._cursor]
        if abs(recorded_t - t) > 1e-9 * max(1.0, abs(t)):
            raise SimulationError(
                f"stage tape misaligned: expected t={recorded_t!r}, got t={t!r}")
        value = self._tape.values[self._cursor][self._slot]
        self._cursor += 1
        return value


@dataclass(frozen=True)
class StateTrajectory:
    """Uniformly sampled run: state, controls, hidden parameters, derivatives."""

    t: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    u0: np.ndarray
    eps: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    u0_dims: tuple[int, ...]
    eps_dims: tuple[int, ...]
    u_dims: tuple[int, ...]
    stage_tape: StageTape | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def index_of(self, time: float) -> int:
        """Grid index of ``time``; raises if it is not a sample point."""
        if len(self.t) == 1:
            idx = 0
        else:
            idx = int(round((time - self.t[0]) / self.dt))
        if idx < 0 or idx >= len(self.t) or abs(self.t[idx] - time) > 1e-9 * max(1.0, abs(time)):
            raise ConfigurationError(f"time {time!r} is not on the sample grid")
        return idx

    def _block(self, data: np.ndarray, dims: tuple[int, ...], slot: int) -> np.ndarray:
        start = sum(dims[:slot])
        return data[:, start:start + dims[slot]]

    def u0_of(self, player: int) -> np.ndarray:
        """Pure-control trace of a player (0-based)."""
        return self._block(self.u0, self.u0_dims, player)

    def eps_of(self, slot: int) -> np.ndarray:
        return self._block(self.eps, self.eps_dims, slot)

    def u_of(self, slot: int) -> np.ndarray:
        return self._block(self.u, self.u_dims, slot)


@dataclass(frozen=True)
class _Slot:
    """Internal control slot: shared evaluation path for players and coalitions."""

    member_players: tuple[int, ...]
    coupling: Callable
    epsilon: EpsilonProcess
    derivative_order: int
    single_member: bool

    def u0_argument(self, u0s: list):
        if self.single_member:
            return u0s[self.member_players[0]]
        return tuple(u0s[i] for i in self.member_players)


def _player_slots(system: InteractiveSystem) -> list[_Slot]:
    return [
        _Slot(member_players=(i,), coupling=p.coupling.known_form, epsilon=p.epsilon,
              derivative_order=p.coupling.derivative_order, single_member=True)
        for i, p in enumerate(system.players)
    ]


def _coalition_slots(system: InteractiveSystem) -> list[_Slot]:
    return [
        _Slot(member_players=tuple(m - 1 for m in c.members), coupling=c.coupling,
              epsilon=c.epsilon, derivative_order=c.derivative_order,
              single_member=False)
        for c in system.coalitions
    ]


def _check_ground_truth(slots: Sequence[_Slot]):
    for k, slot in enumerate(slots):
        if not slot.epsilon.ground_truth:
            raise ConfigurationError(
                f"slot {k}: hidden-parameter process is an estimate, not simulation truth")


def _integrate(system: InteractiveSystem, slots: list[_Slot], initial, t0, t1, dt,
               slow: SlowControl | None, omega, record_tape: bool) -> StateTrajectory:
    if not t0 < t1:
        raise ConfigurationError("t0 must be strictly below t1")
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    n_steps = int(round((t1 - t0) / dt))
    if n_steps < 1 or abs(t0 + n_steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ConfigurationError("t1 - t0 must be an integer number of steps")

    phi = np.asarray(initial, dtype=float)
    if phi.shape != (system.dim,):
        raise ConfigurationError(f"initial state must have dimension {system.dim}")
    if not np.all(np.isfinite(phi)):
        raise ConfigurationError("initial state must be finite")

    policies = [p.policy for p in system.players]
    dynamics = system.dynamics
    max_k = max(s.derivative_order for s in slots)
    omega_vec = _EMPTY if omega is None else np.asarray(omega, dtype=float)
    zero_deriv = np.zeros(system.dim)
    tape = StageTape() if record_tape else None

    def lam_at(t: float, step: int) -> np.ndarray:
        if slow is None:
            return _EMPTY
        return slow.value(t, step)

    def stage(t: float, state: np.ndarray, lam: np.ndarray):
        u0s = [pol(t) for pol in policies]
        if max_k == 0:
            derivs: tuple = ()
        else:
            pre_derivs = (zero_deriv,)
            eps_pre = [s.epsilon.form(t, s.u0_argument(u0s), state, pre_derivs) for s in slots]
            u_pre = [s.coupling(t, s.u0_argument(u0s), state, pre_derivs, eps_pre[k], lam)
                     for k, s in enumerate(slots)]
            dphi_pre = np.asarray(dynamics(t, state, u_pre, lam, omega_vec), dtype=float)
            derivs = (dphi_pre,)
        eps = [s.epsilon.form(t, s.u0_argument(u0s), state, derivs) for s in slots]
        u = [s.coupling(t, s.u0_argument(u0s), state, derivs, eps[k], lam)
             for k, s in enumerate(slots)]
        dphi = np.asarray(dynamics(t, state, u, lam, omega_vec), dtype=float)
        if tape is not None:
            tape.times.append(t)
            tape.values.append(tuple(np.asarray(e, dtype=float) for e in eps))
        return u0s, eps, u, dphi

    # Size the record arrays from a probe evaluation at the initial point.
    # The probe stays on the tape: replay runs perform the same probe, so the
    # stage sequences of the two runs line up one to one.
    lam0 = lam_at(t0, 0)
    u0s, eps, u, dphi = stage(t0, phi, lam0)
    u0_dims = tuple(len(np.atleast_1d(np.asarray(x, dtype=float))) for x in u0s)
    eps_dims = tuple(len(np.atleast_1d(np.asarray(x, dtype=float))) for x in eps)
    u_dims = tuple(len(np.atleast_1d(np.asarray(x, dtype=float))) for x in u)

    n_samples = n_steps + 1
    rec_t = np.empty(n_samples)
    rec_phi = np.empty((n_samples, system.dim))
    rec_dphi = np.empty((n_samples, system.dim))
    rec_u0 = np.empty((n_samples, sum(u0_dims)))
    rec_eps = np.empty((n_samples, sum(eps_dims)))
    rec_u = np.empty((n_samples, sum(u_dims)))
    rec_lam = np.empty((n_samples, len(lam0)))

    def record(k, t, state, u0s, eps, u, dphi, lam):
        rec_t[k] = t
        rec_phi[k] = state
        rec_dphi[k] = dphi
        rec_u0[k] = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in u0s]) \
            if u0_dims else _EMPTY
        rec_eps[k] = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in eps]) \
            if sum(eps_dims) else np.zeros(0)
        rec_u[k] = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in u])
        rec_lam[k] = lam

    half = dt / 2.0
    sixth = dt / 6.0
    for k in range(n_steps):
        t = t0 + k * dt
        lam = lam_at(t, k)
        u0s, eps, u, k1 = stage(t, phi, lam)
        record(k, t, phi, u0s, eps, u, k1, lam)
        lam_mid = lam_at(t + half, k)
        _, _, _, k2 = stage(t + half, phi + half * k1, lam_mid)
        _, _, _, k3 = stage(t + half, phi + half * k2, lam_mid)
        lam_end = lam_at(t + dt, k)
        _, _, _, k4 = stage(t + dt, phi + dt * k3, lam_end)
        phi = phi + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(phi)):
            raise DivergenceError(last_valid_time=t)

    t_end = t0 + n_steps * dt
    lam = lam_at(t_end, n_steps)
    u0s, eps, u, dphi = stage(t_end, phi, lam)
    record(n_steps, t_end, phi, u0s, eps, u, dphi, lam)

    return StateTrajectory(t=rec_t, phi=rec_phi, dphi=rec_dphi, u0=rec_u0, eps=rec_eps,
                           u=rec_u, lam=rec_lam, u0_dims=u0_dims, eps_dims=eps_dims,
                           u_dims=u_dims, stage_tape=tape)


def simulate(system: InteractiveSystem, initial, t0: float, t1: float, dt: float,
             slow: SlowControl | None = None, omega=None,
             record_tape: bool = True) -> StateTrajectory:
    """Integrate the interactive system, recording phi, u0, eps and u traces."""
    slots = _player_slots(system)
    _check_ground_truth(slots)
    return _integrate(system, slots, initial, t0, t1, dt, slow, omega, record_tape)


def coalition_simulate(system: InteractiveSystem, initial, t0: float, t1: float,
                       dt: float, slow: SlowControl | None = None, omega=None,
                       record_tape: bool = True) -> StateTrajectory:
    """As :func:`simulate`, with control slots filled by the coalition couplings."""
    if not system.coalitions:
        raise ConfigurationError("system declares no coalitions")
    slots = _coalition_slots(system)
    _check_ground_truth(slots)
    return _integrate(system, slots, initial, t0, t1, dt, slow, omega, record_tape)


def associated_ordinary_game(system: InteractiveSystem,
                             eps_policies: Sequence[Callable] | None = None,
                             use_coalitions: bool = False) -> InteractiveSystem:
    """Promote every hidden parameter to an independent control slot.

    The result is an ordinary game: couplings are identities, the original
    coupling forms move into the dynamics, and each former hidden parameter is
    driven by a free policy (zero unless ``eps_policies`` is given).
    Couplings involving state derivatives are not representable this way.
    """
    slots = _coalition_slots(system) if use_coalitions else _player_slots(system)
    for k, slot in enumerate(slots):
        if slot.derivative_order != 0:
            raise ConfigurationError(
                f"slot {k}: derivatives must be excluded from feedbacks to form "
                "the associated ordinary game")

    n_policies = system.n_players
    n_slots = len(slots)
    old_dynamics = system.dynamics

    def assoc_dynamics(t, phi, controls, lam, omega):
        u0s = controls[:n_policies]
        u = [slot.coupling(t, slot.u0_argument(u0s), phi, (), controls[n_policies + j], lam)
             for j, slot in enumerate(slots)]
        return old_dynamics(t, phi, u, lam, omega)

    players = [
        Player(policy=p.policy, coupling=identity_coupling(), epsilon=zero_epsilon())
        for p in system.players
    ]
    for j, slot in enumerate(slots):
        if eps_policies is not None:
            signal = eps_policies[j]
        else:
            dim_j = slot.epsilon.dim
            signal = (lambda d: (lambda t: np.zeros(d)))(dim_j)
        players.append(Player(
            policy=PureControlPolicy(player_index=n_policies + j + 1, signal=signal,
                                     description=f"promoted hidden parameter of slot {j}"),
            coupling=identity_coupling(),
            epsilon=zero_epsilon()))

    return InteractiveSystem(dim=system.dim, dynamics=assoc_dynamics,
                             players=tuple(players),
                             invariant_constraints=system.invariant_constraints)


def replay_with_recorded_eps(system: InteractiveSystem, recorded: StateTrajectory,
                             t0: float, t1: float, dt: float,
                             slow: SlowControl | None = None,
                             use_coalitions: bool = False) -> StateTrajectory:
    """Re-run the associated ordinary game with the recorded hidden parameters.

    Stage-tape playback aligns every integrator stage with the original run,
    so the state trace is reproduced bit-identically on the same grid.
    """
    if recorded.stage_tape is None:
        raise ConfigurationError("recorded run carries no stage tape; "
                                 "simulate with record_tape=True")
    n_slots = len(recorded.eps_dims)
    policies = [TapeSignal(recorded.stage_tape, j) for j in range(n_slots)]
    ordinary = associated_ordinary_game(system, eps_policies=policies,
                                        use_coalitions=use_coalitions)
    return simulate(ordinary, recorded.phi[0], t0, t1, dt, slow=slow, record_tape=False)


@dataclass(frozen=True)
class InvariantDrift:
    label: str
    drift: float
    violated: bool


def check_indeterminate_invariants(trajectory: StateTrajectory,
                                   constraints: Sequence[InvariantConstraint],
                                   tol: float = 1e-9) -> list[InvariantDrift]:
    """Maximum drift of each declared time-independent quantity over the run."""
    results = []
    for c in constraints:
        if c.required_order > 1:
            raise ConfigurationError(
                f"constraint {c.label!r} needs derivative order {c.required_order}, "
                "but trajectories record order 1 only")
        values = np.array([
            c.fn(trajectory.t[k], trajectory.u[k], trajectory.u0[k],
                 trajectory.eps[k], trajectory.phi[k],
                 trajectory.dphi[k] if c.required_order >= 1 else None)
            for k in range(len(trajectory.t))
        ], dtype=float)
        drift = float(np.max(np.abs(values - values[0])))
        results.append(InvariantDrift(label=c.label, drift=drift, violated=drift > tol))
    return results
