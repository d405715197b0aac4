"""Comment recursions over verbalized games.

A commented game feeds its window comments back into the dynamics and the
feedback couplings as the slow parameter of the next window.  Comments of
several games can be coupled by additive interaction terms, unified by a
synthesis rule, or checked to be a conservative extension of a single game's
recursion.  Dialectical objects are configured class-transition tables that
may enter the comment recursion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .games import (ConfigurationError, InteractiveSystem, SlowControl,
                    StateTrajectory, simulate)
from .verbalization import WindowFunctional, WindowRecord, evaluate_functionals


@dataclass(frozen=True)
class CommentState:
    """One element of a comment stream: a vector or a (class label, eta) pair."""

    index: int
    vector: np.ndarray | None = None
    class_label: str | None = None
    eta: np.ndarray | None = None

    @property
    def is_labeled(self) -> bool:
        return self.class_label is not None

    def as_parameter(self) -> np.ndarray:
        if self.vector is None:
            raise ConfigurationError(
                "a labeled comment has no vector value to feed as a parameter")
        return self.vector


@dataclass(frozen=True)
class CommentRule:
    """Recurrence for the comment stream.

    ``update(theta_prev, omega, v)`` is the plain recursion; when the
    ``dialectical`` slot is present it replaces the plain form for every step
    and additionally receives the window's dialectical object.
    """

    update: Callable
    dialectical: Callable | None = None

    def step(self, theta_prev, delta, omega, v) -> np.ndarray:
        if self.dialectical is not None:
            if delta is None:
                raise ConfigurationError(
                    "comment rule has a dialectical slot; a dialectical object is "
                    "required at every step")
            return np.atleast_1d(np.asarray(
                self.dialectical(theta_prev, delta, omega, v), dtype=float))
        return np.atleast_1d(np.asarray(self.update(theta_prev, omega, v), dtype=float))


@dataclass(frozen=True)
class TransitionRule:
    """One row of a dialectical object's transition table."""

    from_class: str
    trigger: str | Callable  # "insolvable" or predicate (eta, omega, v, diagnostics)
    to_class: str
    eta_update: Callable | None = None      # (eta, diagnostics) -> eta'
    tuple_map: str | Callable | None = None  # representation embedding, used by repdyn

    def trigger_key(self) -> str:
        return self.trigger if isinstance(self.trigger, str) else f"<fn {id(self.trigger)}>"


@dataclass(frozen=True)
class DialecticalObject:
    """Class-transition rules standing in for a self-describing object."""

    label: str
    transitions: tuple[TransitionRule, ...] = ()

    def __post_init__(self):
        keys = [(t.from_class, t.trigger_key()) for t in self.transitions]
        if len(set(keys)) != len(keys):
            raise ConfigurationError(
                f"dialectical object {self.label!r}: transition table keys must be unique")

    def referenced_classes(self) -> set[str]:
        out = set()
        for t in self.transitions:
            out.add(t.from_class)
            out.add(t.to_class)
        return out

    def find(self, from_class: str, trigger_name: str) -> TransitionRule | None:
        for t in self.transitions:
            if t.from_class == from_class and t.trigger == trigger_name:
                return t
        return None


@dataclass(frozen=True)
class InteractionTerm:
    """Additive correction coupling one comment stream to another."""

    form: Callable  # (own_theta_prev, other_theta_prev, omega, v) -> correction

    @staticmethod
    def zero() -> "InteractionTerm":
        return InteractionTerm(form=lambda own, other, omega, v: np.zeros_like(own))


class _MaskedView:
    """Sequence view that only exposes the indices of a synthesis mask."""

    def __init__(self, items: Sequence, mask: frozenset[int], what: str):
        self._items = items
        self._mask = mask
        self._what = what

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index: int):
        if index not in self._mask:
            raise ConfigurationError(
                f"synthesis form reads {self._what} of game {index}, which is outside "
                f"its declared argument mask {sorted(self._mask)}")
        return self._items[index]


@dataclass(frozen=True)
class SynthesisRule:
    """Unified comment recursion over several games.

    ``forms[j](thetas, omegas, vs)`` produces game j's next comment from the
    previous comments and current window summaries of all games; each form may
    only read the indices in its mask.
    """

    forms: tuple[Callable, ...]
    masks: tuple[frozenset[int], ...]

    def __post_init__(self):
        if len(self.forms) != len(self.masks):
            raise ConfigurationError("one argument mask per synthesis form is required")
        n = len(self.forms)
        for j, mask in enumerate(self.masks):
            for idx in mask:
                if not 0 <= idx < n:
                    raise ConfigurationError(
                        f"synthesis form {j}: mask references absent game index {idx}")

    def step(self, thetas: Sequence[np.ndarray], omegas: Sequence[np.ndarray],
             vs: Sequence[np.ndarray]) -> list[np.ndarray]:
        out = []
        for j, form in enumerate(self.forms):
            mask = self.masks[j]
            value = form(_MaskedView(thetas, mask, "comment"),
                         _MaskedView(omegas, mask, "window state"),
                         _MaskedView(vs, mask, "window control"))
            out.append(np.atleast_1d(np.asarray(value, dtype=float)))
        return out


# ---------------------------------------------------------------------------
# Commented runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommentedGame:
    """Verbalizable parametric scenario whose slow parameter is its comment."""

    system: InteractiveSystem
    initial: np.ndarray
    dt: float
    omega_functionals: tuple[WindowFunctional, ...]
    v_functionals: tuple[WindowFunctional, ...]
    rule: CommentRule
    theta0: np.ndarray
    window_grid: tuple[float, ...] | None = None
    feed_omega: bool = False


@dataclass
class CommentedRun:
    trajectory: StateTrajectory
    windows: list[WindowRecord]
    comments: list[CommentState]
    theta0: np.ndarray

    @property
    def theta_values(self) -> np.ndarray:
        return np.array([c.vector for c in self.comments])


def concat_trajectories(segments: Sequence[StateTrajectory]) -> StateTrajectory:
    """Stitch abutting window segments, dropping duplicated boundary samples."""
    first = segments[0]

    def merge(attr):
        arrays = [getattr(first, attr)]
        arrays += [getattr(seg, attr)[1:] for seg in segments[1:]]
        return np.concatenate(arrays, axis=0)

    return StateTrajectory(t=merge("t"), phi=merge("phi"), dphi=merge("dphi"),
                           u0=merge("u0"), eps=merge("eps"), u=merge("u"),
                           lam=merge("lam"), u0_dims=first.u0_dims,
                           eps_dims=first.eps_dims, u_dims=first.u_dims,
                           stage_tape=None)


def _resolve_grid(games: Sequence[CommentedGame],
                  t_grid: Sequence[float] | None) -> tuple[float, ...]:
    declared = [g.window_grid for g in games if g.window_grid is not None]
    for a, b in itertools.combinations(declared, 2):
        if len(a) != len(b) or any(x != y for x, y in zip(a, b)):
            raise ConfigurationError(
                "games declare mismatched window grids; a shared grid is required "
                "(no resampling is performed)")
    if t_grid is not None:
        grid = tuple(float(x) for x in t_grid)
        if declared and (len(declared[0]) != len(grid)
                         or any(x != y for x, y in zip(declared[0], grid))):
            raise ConfigurationError("explicit grid differs from the declared window grid")
        return grid
    if declared:
        return tuple(declared[0])
    raise ConfigurationError("no window grid declared or given")


def _window_segment(game: CommentedGame, phi, theta, omega_prev, t_a, t_b):
    slow = SlowControl(schedule=lambda t, _theta=theta: _theta)
    omega = omega_prev if game.feed_omega else None
    return simulate(game.system, phi, t_a, t_b, game.dt, slow=slow, omega=omega,
                    record_tape=False)


def run_commented_game(game: CommentedGame, t_grid: Sequence[float] | None = None,
                       deltas: Sequence[DialecticalObject] | None = None) -> CommentedRun:
    """Roll the window loop: integrate, summarize, update the comment.

    Window n runs under the parameter value of comment n-1; the new comment is
    produced by the rule (with the window's dialectical object when the rule
    has a dialectical slot).
    """
    grid = _resolve_grid([game], t_grid)
    theta = np.atleast_1d(np.asarray(game.theta0, dtype=float))
    phi = np.asarray(game.initial, dtype=float)
    omega_prev: np.ndarray | None = None
    segments = []
    windows = []
    comments = []
    for n in range(1, len(grid)):
        seg = _window_segment(game, phi, theta, omega_prev, grid[n - 1], grid[n])
        omega_n = evaluate_functionals(game.omega_functionals, seg, 0, len(seg.t) - 1)
        v_n = evaluate_functionals(game.v_functionals, seg, 0, len(seg.t) - 1)
        delta = deltas[n - 1] if deltas is not None else None
        theta = game.rule.step(theta, delta, omega_n, v_n)
        segments.append(seg)
        windows.append(WindowRecord(index=n, t_start=grid[n - 1], t_end=grid[n],
                                    omega=omega_n, v=v_n))
        comments.append(CommentState(index=n, vector=theta))
        phi = seg.phi[-1]
        omega_prev = omega_n
    return CommentedRun(trajectory=concat_trajectories(segments), windows=windows,
                        comments=comments, theta0=np.atleast_1d(game.theta0))


@dataclass(frozen=True)
class CoupledTacticalGame:
    """Two commented games with interdetermined comments."""

    games: tuple[CommentedGame, CommentedGame]
    terms: tuple[InteractionTerm, InteractionTerm]

    def run(self, t_grid: Sequence[float] | None = None,
            deltas: Sequence[Sequence[DialecticalObject]] | None = None) -> list[CommentedRun]:
        synthesis = interaction_as_synthesis(self.games[0].rule, self.games[1].rule,
                                             self.terms[0], self.terms[1])
        return run_synthesized(list(self.games), synthesis, t_grid, deltas)


def tactical_interaction(game1: CommentedGame, game2: CommentedGame,
                         term12: InteractionTerm,
                         term21: InteractionTerm) -> CoupledTacticalGame:
    return CoupledTacticalGame(games=(game1, game2), terms=(term12, term21))


def interaction_as_synthesis(rule1: CommentRule, rule2: CommentRule,
                             term12: InteractionTerm,
                             term21: InteractionTerm) -> SynthesisRule:
    """The synthesis rule whose forms are the interaction-coupled recursions."""
    if rule1.dialectical is not None or rule2.dialectical is not None:
        raise ConfigurationError(
            "interaction couples plain comment recursions; dialectical slots are "
            "not part of the interaction form")

    def form1(thetas, omegas, vs):
        return (np.atleast_1d(np.asarray(rule1.update(thetas[0], omegas[0], vs[0]), dtype=float))
                + np.atleast_1d(np.asarray(term12.form(thetas[0], thetas[1], omegas[0], vs[0]),
                                           dtype=float)))

    def form2(thetas, omegas, vs):
        return (np.atleast_1d(np.asarray(rule2.update(thetas[1], omegas[1], vs[1]), dtype=float))
                + np.atleast_1d(np.asarray(term21.form(thetas[1], thetas[0], omegas[1], vs[1]),
                                           dtype=float)))

    return SynthesisRule(forms=(form1, form2),
                         masks=(frozenset({0, 1}), frozenset({0, 1})))


@dataclass(frozen=True)
class SynthesizedTacticalGame:
    games: tuple[CommentedGame, ...]
    rule: SynthesisRule

    def run(self, t_grid: Sequence[float] | None = None) -> list[CommentedRun]:
        return run_synthesized(list(self.games), self.rule, t_grid, None)


def tactical_synthesis(games: Sequence[CommentedGame],
                       rule: SynthesisRule) -> SynthesizedTacticalGame:
    if len(games) != len(rule.forms):
        raise ConfigurationError(
            f"synthesis rule has {len(rule.forms)} forms for {len(games)} games")
    return SynthesizedTacticalGame(games=tuple(games), rule=rule)


def run_synthesized(games: list[CommentedGame], rule: SynthesisRule,
                    t_grid: Sequence[float] | None,
                    deltas: Sequence[Sequence[DialecticalObject]] | None) -> list[CommentedRun]:
    """Advance all games on a shared window grid under a unified recursion."""
    if len(games) != len(rule.forms):
        raise ConfigurationError("one synthesis form per game is required")
    grid = _resolve_grid(games, t_grid)
    thetas = [np.atleast_1d(np.asarray(g.theta0, dtype=float)) for g in games]
    phis = [np.asarray(g.initial, dtype=float) for g in games]
    omegas_prev: list[np.ndarray | None] = [None] * len(games)
    segments: list[list[StateTrajectory]] = [[] for _ in games]
    windows: list[list[WindowRecord]] = [[] for _ in games]
    comments: list[list[CommentState]] = [[] for _ in games]

    for n in range(1, len(grid)):
        omegas_n = []
        vs_n = []
        for j, game in enumerate(games):
            seg = _window_segment(game, phis[j], thetas[j], omegas_prev[j],
                                  grid[n - 1], grid[n])
            omegas_n.append(evaluate_functionals(game.omega_functionals, seg, 0,
                                                 len(seg.t) - 1))
            vs_n.append(evaluate_functionals(game.v_functionals, seg, 0, len(seg.t) - 1))
            segments[j].append(seg)
            phis[j] = seg.phi[-1]
        new_thetas = rule.step(thetas, omegas_n, vs_n)
        for j in range(len(games)):
            windows[j].append(WindowRecord(index=n, t_start=grid[n - 1], t_end=grid[n],
                                           omega=omegas_n[j], v=vs_n[j]))
            comments[j].append(CommentState(index=n, vector=new_thetas[j]))
        thetas = new_thetas
        omegas_prev = omegas_n

    return [CommentedRun(trajectory=concat_trajectories(segments[j]),
                         windows=windows[j], comments=comments[j],
                         theta0=np.atleast_1d(games[j].theta0))
            for j in range(len(games))]


# ---------------------------------------------------------------------------
# Tactical extension
# ---------------------------------------------------------------------------

def probe_grid(theta_dims: Sequence[int], omega_dims: Sequence[int],
               v_dims: Sequence[int], low: float = -1.0, high: float = 1.0,
               points: int = 3, extra: Sequence = (),
               max_probes: int = 20000) -> list[tuple]:
    """Deterministic grid of (thetas, omegas, vs) probe tuples."""
    dims = list(theta_dims) + list(omega_dims) + list(v_dims)
    total = sum(dims)
    if points ** total > max_probes:
        raise ConfigurationError(
            f"probe grid of {points}**{total} points exceeds the cap {max_probes}")
    axis = np.linspace(low, high, points)
    probes = []
    for combo in itertools.product(axis, repeat=total):
        values = list(combo)
        cursor = 0

        def take(dim_list):
            nonlocal cursor
            out = []
            for d in dim_list:
                out.append(np.array(values[cursor:cursor + d]))
                cursor += d
            return out

        probes.append((take(theta_dims), take(omega_dims), take(v_dims)))
    probes.extend(extra)
    return probes


def is_tactical_extension(synth: SynthesisRule, original: Callable,
                          probes: Sequence[tuple], game_index: int = 0,
                          tol: float = 1e-12) -> tuple[bool, tuple | None]:
    """Whether the synthesis leaves game ``game_index``'s recursion unchanged.

    Compares the synthesis form against the original recursion on every probe
    tuple; returns (True, None) on agreement within ``tol``, otherwise
    (False, witness probe).
    """
    form = synth.forms[game_index]
    mask = synth.masks[game_index]
    for probe in probes:
        thetas, omegas, vs = probe
        unified = np.atleast_1d(np.asarray(
            form(_MaskedView(thetas, mask, "comment"),
                 _MaskedView(omegas, mask, "window state"),
                 _MaskedView(vs, mask, "window control")), dtype=float))
        plain = np.atleast_1d(np.asarray(
            original(thetas[game_index], omegas[game_index], vs[game_index]), dtype=float))
        if unified.shape != plain.shape or np.max(np.abs(unified - plain)) > tol:
            return False, probe
    return True, None
