"""Representative dynamics: constrained matrix ODE integration and its inverses.

The matrix tuple evolves under Weyl-symbol dynamics while a Gauss-Newton
projection holds it on the relation variety of the current algebra
presentation after every step.  The run raises the "insolvable in current
class" signal when a raw step leaves the variety beyond the declared
consistency threshold or when the projection stalls; in the tactical variant
that signal drives class transitions through a configured dialectical object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .algebra import (AlgebraClassRegistry, AlgebraPresentation, MatrixTuple,
                      WeylSymbol, WeylTerm, commutative_presentation, poly_eval,
                      relation_residual, weyl_eval_tuple)
from .expr import NCPoly, nc_evaluate
from .games import ConfigurationError, SimulationError
from .tactics import CommentState, DialecticalObject, TransitionRule
from .verbalization import WindowRecord


class StrandedClassError(SimulationError):
    """Insolvable signal with no transition entry for the current class."""

    def __init__(self, class_label: str, window_index: int, time: float):
        super().__init__(
            f"integration insolvable in class {class_label!r} during window "
            f"{window_index} (t={time!r}) and the transition table has no entry")
        self.class_label = class_label
        self.window_index = window_index
        self.time = time


@dataclass(frozen=True)
class InsolvableSignal:
    time: float
    residual: float
    reason: str


@dataclass(frozen=True)
class RepDynSpec:
    """Dynamics symbols, initial tuple and the representation constraint.

    ``insolvable_threshold`` bounds the raw (pre-projection) residual a step
    may produce before the run is declared insolvable in the current class;
    the projection itself must reach ``tolerance``.
    """

    symbols: tuple[WeylSymbol, ...]
    initial: MatrixTuple
    presentation: AlgebraPresentation
    constants: Mapping[str, np.ndarray] = field(default_factory=dict)
    control_dim: int = 0
    tolerance: float = 1e-9
    insolvable_threshold: float = 1e-5
    projection_cap: int = 50

    def __post_init__(self):
        object.__setattr__(self, "constants",
                           {k: np.asarray(v, dtype=complex)
                            for k, v in dict(self.constants).items()})
        if len(self.symbols) != self.initial.m:
            raise ConfigurationError(
                f"{len(self.symbols)} symbols declared for a tuple of {self.initial.m}")
        if self.presentation.generators != self.initial.m:
            raise ConfigurationError("constraint presentation and tuple size differ")
        n = self.initial.n
        for sym in self.symbols:
            if sym.max_slot() >= self.initial.m:
                raise ConfigurationError("symbol references a slot beyond the tuple")
            if sym.max_control() >= self.control_dim:
                if sym.max_control() >= 0:
                    raise ConfigurationError(
                        f"symbol needs control component {sym.max_control()}, "
                        f"declared control dimension is {self.control_dim}")
            for name in sym.constant_names():
                if name not in self.constants:
                    raise ConfigurationError(f"undeclared constant matrix {name!r}")
                if self.constants[name].shape != (n, n):
                    raise ConfigurationError(
                        f"constant {name!r} must have the ambient dimension {n}")
        initial_residual = relation_residual(self.presentation, self.initial)
        if initial_residual > self.tolerance:
            raise ConfigurationError(
                f"initial tuple violates the constraint: residual "
                f"{initial_residual:.3e} > tolerance {self.tolerance:.3e}")


@dataclass
class RepDynResult:
    times: np.ndarray
    tuples: list[MatrixTuple]
    residuals: np.ndarray
    insolvable: InsolvableSignal | None = None

    @property
    def final(self) -> MatrixTuple:
        return self.tuples[-1]


def _relation_stack(pres: AlgebraPresentation, stacked: np.ndarray,
                    n: int) -> tuple[np.ndarray, float]:
    values = []
    worst = 0.0
    for rel in pres.relations:
        value = poly_eval(rel, stacked, n)
        values.append(value.reshape(-1))
        worst = max(worst, float(np.linalg.norm(value)))
    if not values:
        return np.zeros(0, dtype=complex), 0.0
    return np.concatenate(values), worst


def _relation_jacobian(pres: AlgebraPresentation, stacked: np.ndarray,
                       m: int, n: int) -> np.ndarray:
    """Complex Jacobian of the stacked relation entries w.r.t. tuple entries.

    Relations are holomorphic in the entries, so complex least squares on this
    Jacobian is equivalent to the stacked real/imaginary problem.
    """
    n2 = n * n
    rows = len(pres.relations) * n2
    jac = np.zeros((rows, m * n2), dtype=complex)
    eye = np.eye(n, dtype=complex)
    for r, rel in enumerate(pres.relations):
        block = jac[r * n2:(r + 1) * n2]
        for word, coeff in rel.terms.items():
            if not word:
                continue
            mats = [stacked[letter] for letter in word]
            prefixes = [eye]
            for mat in mats[:-1]:
                prefixes.append(prefixes[-1] @ mat)
            suffixes = [eye]
            for mat in reversed(mats[1:]):
                suffixes.append(mat @ suffixes[-1])
            suffixes.reverse()
            for j, letter in enumerate(word):
                block[:, letter * n2:(letter + 1) * n2] += coeff * np.kron(
                    prefixes[j], suffixes[j].T)
    return jac


def project_to_variety(pres: AlgebraPresentation, X: MatrixTuple, tolerance: float,
                       cap: int = 50) -> tuple[MatrixTuple, float, bool]:
    """Gauss-Newton projection of the tuple onto the relation variety.

    Returns (projected tuple, residual, converged).  Each iteration takes the
    minimum-norm least-squares step of the linearized relations in all tuple
    entries.
    """
    stacked = X.stacked()
    m, n = X.m, X.n
    scale = max(1.0, float(np.max(np.abs(stacked))))
    residual_vec, residual = _relation_stack(pres, stacked, n)
    for _ in range(cap):
        if residual <= tolerance:
            return MatrixTuple.from_stacked(stacked, time=X.time), residual, True
        jac = _relation_jacobian(pres, stacked, m, n)
        delta, _, _, _ = np.linalg.lstsq(jac, -residual_vec, rcond=None)
        if float(np.max(np.abs(delta))) < 1e-16 * scale:
            break
        stacked = stacked + delta.reshape(m, n, n)
        residual_vec, residual = _relation_stack(pres, stacked, n)
    converged = residual <= tolerance
    return MatrixTuple.from_stacked(stacked, time=X.time), residual, converged


def integrate_repdyn(spec: RepDynSpec, control: Callable[[float], Sequence[float]] | None,
                     t0: float, t1: float, dt: float) -> RepDynResult:
    """Fixed-step 4th-order integration with per-step projection.

    On an insolvable step the result carries the samples accepted so far plus
    the signal; the failing step is not applied.
    """
    if not t0 < t1:
        raise ConfigurationError("t0 must be strictly below t1")
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    n_steps = int(round((t1 - t0) / dt))
    if n_steps < 1 or abs(t0 + n_steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ConfigurationError("t1 - t0 must be an integer number of steps")

    def a_at(t: float) -> np.ndarray | None:
        if control is None:
            if spec.control_dim:
                raise ConfigurationError("spec declares controls but no schedule given")
            return None
        value = np.asarray(control(t), dtype=complex)
        if len(value) != spec.control_dim:
            raise ConfigurationError(
                f"control schedule returns {len(value)} components, spec declares "
                f"{spec.control_dim}")
        return value

    m, n = spec.initial.m, spec.initial.n

    def rhs(t: float, stacked: np.ndarray) -> np.ndarray:
        return weyl_eval_tuple(spec.symbols, MatrixTuple.from_stacked(stacked, time=t),
                               spec.constants, a_at(t))

    stacked = spec.initial.stacked()
    times = [t0]
    tuples = [MatrixTuple.from_stacked(stacked, time=t0)]
    residuals = [relation_residual(spec.presentation, tuples[0])]
    half = dt / 2.0
    sixth = dt / 6.0
    for k in range(n_steps):
        t = t0 + k * dt
        k1 = rhs(t, stacked)
        k2 = rhs(t + half, stacked + half * k1)
        k3 = rhs(t + half, stacked + half * k2)
        k4 = rhs(t + dt, stacked + dt * k3)
        candidate = stacked + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = t0 + (k + 1) * dt
        if not np.all(np.isfinite(candidate.real)) or not np.all(np.isfinite(candidate.imag)):
            raise SimulationError(f"matrix tuple diverged at t={t_next!r}")
        _, raw_residual = _relation_stack(spec.presentation, candidate, n)
        if raw_residual > spec.insolvable_threshold:
            return RepDynResult(times=np.array(times), tuples=tuples,
                                residuals=np.array(residuals),
                                insolvable=InsolvableSignal(
                                    time=t_next, residual=raw_residual,
                                    reason="raw step residual exceeded the "
                                           "insolvability threshold"))
        if raw_residual > spec.tolerance:
            projected, residual, converged = project_to_variety(
                spec.presentation, MatrixTuple.from_stacked(candidate, time=t_next),
                spec.tolerance, spec.projection_cap)
            if not converged:
                return RepDynResult(times=np.array(times), tuples=tuples,
                                    residuals=np.array(residuals),
                                    insolvable=InsolvableSignal(
                                        time=t_next, residual=residual,
                                        reason="projection did not converge within "
                                               "the iteration cap"))
            stacked = projected.stacked()
            residual_now = residual
        else:
            stacked = candidate
            residual_now = raw_residual
        times.append(t_next)
        tuples.append(MatrixTuple.from_stacked(stacked, time=t_next))
        residuals.append(residual_now)
    return RepDynResult(times=np.array(times), tuples=tuples,
                        residuals=np.array(residuals), insolvable=None)


# ---------------------------------------------------------------------------
# Dynamical inverse problem (commutative-diagonal mode)
# ---------------------------------------------------------------------------

def _x_letter(i: int) -> tuple:
    return ("x", i)


def _u_letter(j: int) -> tuple:
    return ("u", j)


def _parse_polynomial_rhs(sources: Sequence[str], state_dim: int,
                          control_dim: int) -> list[dict[tuple, list[tuple[complex, tuple]]]]:
    """Expand each rhs into x-monomials with u-dependent coefficients.

    Returns one mapping per state slot: sorted x-word -> list of
    (coefficient, sorted u-word).
    """
    letters: dict[str, NCPoly] = {}
    for i in range(state_dim):
        letters[f"x{i + 1}"] = NCPoly.letter(_x_letter(i))
    for j in range(control_dim):
        letters[f"u{j + 1}"] = NCPoly.letter(_u_letter(j))
    out = []
    for src in sources:
        poly = nc_evaluate(src, letters)
        slots: dict[tuple, list[tuple[complex, tuple]]] = {}
        for word, coeff in poly.terms.items():
            x_word = tuple(sorted(l[1] for l in word if l[0] == "x"))
            u_word = tuple(sorted(l[1] for l in word if l[0] == "u"))
            if len(x_word) > 3:
                raise ConfigurationError(
                    f"rhs {src!r} has degree {len(x_word)} in the state; cap is 3")
            slots.setdefault(x_word, []).append((coeff, u_word))
        out.append(slots)
    return out


@dataclass(frozen=True)
class InverseConstruction:
    """Representative dynamics realizing a polynomial controlled system."""

    spec: RepDynSpec
    control_names: tuple[str, ...]
    coefficient_map: Callable  # a(u, x) -> control vector for the symbols
    designated_slot: int
    symbolic_match: bool
    rhs_sources: tuple[str, ...]

    def control_schedule(self, u_schedule: Callable[[float], Sequence[float]],
                         x_schedule: Callable[[float], Sequence[float]] | None = None
                         ) -> Callable[[float], np.ndarray]:
        def schedule(t: float) -> np.ndarray:
            u = np.atleast_1d(np.asarray(u_schedule(t), dtype=complex))
            x = None if x_schedule is None else np.atleast_1d(np.asarray(x_schedule(t)))
            return self.coefficient_map(u, x)
        return schedule


def solve_inverse_problem(rhs: Sequence[str], x0: Sequence[float], control_dim: int = 1,
                          matrix_dim: int = 2, designated_slot: int = 0,
                          parallel_initial: Sequence[Sequence[float]] | None = None,
                          lift_constants: bool = False,
                          constant_matrices: Mapping[str, np.ndarray] | None = None,
                          tolerance: float = 1e-9) -> InverseConstruction:
    """Construct the commutative-diagonal representative dynamics of a system.

    Each state component rides the designated diagonal slot of one diagonal
    matrix; the symbol coefficients are the (control-dependent) polynomial
    coefficients of the right-hand side, exposed through ``coefficient_map``.
    With ``lift_constants`` the control-free constant term of each component
    becomes a constant matrix letter instead of a coefficient.
    """
    state_dim = len(rhs)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (state_dim,):
        raise ConfigurationError("initial state must match the number of rhs components")
    if not 0 <= designated_slot < matrix_dim:
        raise ConfigurationError("designated slot outside the matrix dimension")
    parsed = _parse_polynomial_rhs(rhs, state_dim, control_dim)

    control_entries: list[tuple[int, tuple, tuple[tuple[complex, tuple], ...]]] = []
    symbols: list[WeylSymbol] = []
    constants: dict[str, np.ndarray] = {}
    names: list[str] = []
    for slot, slots in enumerate(parsed):
        terms = []
        for x_word in sorted(slots):
            contributions = tuple(slots[x_word])
            constant_only = all(u_word == () for _, u_word in contributions)
            if lift_constants and x_word == () and constant_only:
                value = sum(c for c, _ in contributions)
                name = f"C{slot}"
                if constant_matrices and name in constant_matrices:
                    constants[name] = np.asarray(constant_matrices[name], dtype=complex)
                else:
                    constants[name] = value * np.eye(matrix_dim, dtype=complex)
                terms.append(WeylTerm(coefficient=1.0, word=(name,)))
                continue
            index = len(control_entries)
            control_entries.append((slot, x_word, contributions))
            mono = "*".join(f"x{i + 1}" for i in x_word) if x_word else "1"
            names.append(f"a[{index}] := coeff of {mono} in rhs[{slot}]")
            terms.append(WeylTerm(coefficient=1.0, word=x_word, control=index))
        symbols.append(WeylSymbol(terms=tuple(terms)))

    def coefficient_map(u, x=None) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=complex))
        out = np.zeros(len(control_entries), dtype=complex)
        for k, (_, _, contributions) in enumerate(control_entries):
            total = 0j
            for coeff, u_word in contributions:
                value = coeff
                for j in u_word:
                    value *= u[j]
                total += value
            out[k] = total
        return out

    if parallel_initial is not None:
        diagonals = np.asarray(parallel_initial, dtype=float)
        if diagonals.shape != (state_dim, matrix_dim):
            raise ConfigurationError("parallel initial data must be (state, matrix_dim)")
        if not np.allclose(diagonals[:, designated_slot], x0):
            raise ConfigurationError("designated slot of the parallel data must carry x0")
    else:
        diagonals = np.repeat(x0[:, None], matrix_dim, axis=1)
    initial = MatrixTuple(matrices=tuple(np.diag(diagonals[i].astype(complex))
                                         for i in range(state_dim)), time=0.0)

    spec = RepDynSpec(symbols=tuple(symbols), initial=initial,
                      presentation=commutative_presentation(state_dim),
                      constants=constants, control_dim=len(control_entries),
                      tolerance=tolerance)
    symbolic_match = _verify_symbolic(parsed, symbols, control_entries, constants,
                                      lift_constants)
    return InverseConstruction(spec=spec, control_names=tuple(names),
                               coefficient_map=coefficient_map,
                               designated_slot=designated_slot,
                               symbolic_match=symbolic_match,
                               rhs_sources=tuple(rhs))


def _verify_symbolic(parsed, symbols, control_entries, constants, lift_constants) -> bool:
    """Check the constructed symbol reproduces the rhs monomial-by-monomial."""
    for slot, slots in enumerate(parsed):
        reconstructed: dict[tuple, list[tuple[complex, tuple]]] = {}
        for term in symbols[slot].terms:
            if term.control is not None:
                src_slot, x_word, contributions = control_entries[term.control]
                if src_slot != slot or x_word != term.word:
                    return False
                reconstructed.setdefault(x_word, []).extend(
                    (term.coefficient * c, uw) for c, uw in contributions)
            else:
                name = term.word[0] if term.word else None
                if name is None or name not in constants:
                    return False
                mat = constants[name]
                value = mat[0, 0]
                if not np.allclose(mat, value * np.eye(mat.shape[0])):
                    continue  # non-scalar lift: matches by declaration, not by value
                reconstructed.setdefault((), []).append(
                    (term.coefficient * value, ()))
        expected = {w: sorted((complex(c), uw) for c, uw in v)
                    for w, v in slots.items()}
        got = {w: sorted((complex(c), uw) for c, uw in v)
               for w, v in reconstructed.items()}
        for w, contributions in expected.items():
            if w not in got:
                return False
            agg_expected: dict[tuple, complex] = {}
            for c, uw in contributions:
                agg_expected[uw] = agg_expected.get(uw, 0j) + c
            agg_got: dict[tuple, complex] = {}
            for c, uw in got[w]:
                agg_got[uw] = agg_got.get(uw, 0j) + c
            for uw, c in agg_expected.items():
                if abs(agg_got.get(uw, 0j) - c) > 1e-12:
                    return False
    return True


def integrate_scalar_reference(rhs: Sequence[str], x0: Sequence[float],
                               u_schedule: Callable[[float], Sequence[float]],
                               t0: float, t1: float, dt: float,
                               control_dim: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Direct fixed-step 4th-order run of ``xdot = rhs(x, u)`` for comparison."""
    from .expr import compile_expression

    state_dim = len(rhs)
    scalars = tuple(f"x{i + 1}" for i in range(state_dim)) + \
        tuple(f"u{j + 1}" for j in range(control_dim))
    fns = [compile_expression(src, scalars=scalars) for src in rhs]

    def f(t, x):
        u = np.atleast_1d(np.asarray(u_schedule(t), dtype=float))
        args = tuple(x) + tuple(u)
        return np.array([fn(*args) for fn in fns])

    n_steps = int(round((t1 - t0) / dt))
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, state_dim))
    x = np.asarray(x0, dtype=float)
    times[0] = t0
    states[0] = x
    for k in range(n_steps):
        t = t0 + k * dt
        k1 = f(t, x)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        times[k + 1] = t0 + (k + 1) * dt
        states[k + 1] = x
    return times, states


# ---------------------------------------------------------------------------
# Tactical representative dynamics
# ---------------------------------------------------------------------------

TUPLE_MAPS: dict[str, Callable[..., Callable[[MatrixTuple], MatrixTuple]]] = {}


def tuple_map(name: str, *args) -> Callable[[MatrixTuple], MatrixTuple]:
    if name not in TUPLE_MAPS:
        raise ConfigurationError(f"unknown tuple embedding {name!r}")
    return TUPLE_MAPS[name](*args)


def _register(name: str):
    def deco(fn):
        TUPLE_MAPS[name] = fn
        return fn
    return deco


@_register("identity")
def _identity_map():
    return lambda X: X


@_register("append_commutator")
def _append_commutator(i: int, j: int):
    """Append [X_i, X_j] (1-based slots) as a new generator image."""

    def apply(X: MatrixTuple) -> MatrixTuple:
        a, b = X.matrices[i - 1], X.matrices[j - 1]
        return MatrixTuple(matrices=X.matrices + (a @ b - b @ a,), time=X.time)

    return apply


@dataclass(frozen=True)
class ClassDynamics:
    """Per-class dynamics symbols (tuple sizes differ between classes)."""

    symbols: tuple[WeylSymbol, ...]
    constants: Mapping[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class TacticalRepDyn:
    registry: AlgebraClassRegistry
    class_dynamics: Mapping[str, ClassDynamics]
    initial_class: str
    initial: MatrixTuple
    eta0: np.ndarray
    delta: DialecticalObject
    control_dim: int = 0
    control: Callable[[float], Sequence[float]] | None = None
    tolerance: float = 1e-9
    insolvable_threshold: float = 1e-5
    projection_cap: int = 50
    max_transitions_per_window: int = 8

    def __post_init__(self):
        if self.initial_class not in self.registry.labels():
            raise ConfigurationError(f"unknown initial class {self.initial_class!r}")
        known = set(self.registry.labels())
        missing = self.delta.referenced_classes() - known
        if missing:
            raise ConfigurationError(
                f"dialectical object references classes outside the registry: "
                f"{sorted(missing)}")
        for label in self.delta.referenced_classes() | {self.initial_class}:
            if label not in self.class_dynamics:
                raise ConfigurationError(f"no dynamics declared for class {label!r}")


@dataclass(frozen=True)
class TransitionEvent:
    time: float
    window_index: int
    from_class: str
    to_class: str
    residual: float


@dataclass
class TacticalRepdynResult:
    times: np.ndarray
    residuals: np.ndarray
    frobenius_norms: np.ndarray
    class_stream: list[CommentState]
    transitions: list[TransitionEvent]
    windows: list[WindowRecord]
    final: MatrixTuple


def _window_summaries(times, residuals, norms, a_values) -> tuple[np.ndarray, np.ndarray]:
    omega = np.array([float(np.max(residuals)), float(np.mean(norms))])
    v = np.mean(a_values, axis=0) if len(a_values) else np.zeros(0)
    return omega, np.atleast_1d(v)


def run_tactical_repdyn(game: TacticalRepDyn, window_grid: Sequence[float],
                        dt: float) -> TacticalRepdynResult:
    """Integrate per window under the current class, transitioning on insolvability.

    The comment stream pairs the class label with the auxiliary vector eta,
    one entry per window; window summaries are (max residual, mean tuple norm)
    and the mean control.
    """
    if len(window_grid) < 2:
        raise ConfigurationError("window grid needs at least two points")
    label = game.initial_class
    X = game.initial
    eta = np.atleast_1d(np.asarray(game.eta0, dtype=float))
    presentation = game.registry.presentation(label, X.m)

    all_times: list[float] = [float(window_grid[0])]
    all_residuals: list[float] = [relation_residual(presentation, X)]
    all_norms: list[float] = [float(np.linalg.norm(X.stacked()))]
    stream: list[CommentState] = []
    transitions: list[TransitionEvent] = []
    windows: list[WindowRecord] = []

    for n in range(1, len(window_grid)):
        t_a, t_b = float(window_grid[n - 1]), float(window_grid[n])
        t_cursor = t_a
        fired = 0
        window_res: list[float] = []
        window_norms: list[float] = []
        window_a: list[np.ndarray] = []
        while True:
            dynamics = game.class_dynamics[label]
            spec = RepDynSpec(symbols=dynamics.symbols,
                              initial=MatrixTuple(X.matrices, time=t_cursor),
                              presentation=presentation,
                              constants=dynamics.constants,
                              control_dim=game.control_dim,
                              tolerance=game.tolerance,
                              insolvable_threshold=game.insolvable_threshold,
                              projection_cap=game.projection_cap)
            result = integrate_repdyn(spec, game.control, t_cursor, t_b, dt)
            start = 1 if result.times[0] == all_times[-1] else 0
            for k in range(start, len(result.times)):
                all_times.append(float(result.times[k]))
                all_residuals.append(float(result.residuals[k]))
                all_norms.append(float(np.linalg.norm(result.tuples[k].stacked())))
            window_res.extend(result.residuals.tolist())
            window_norms.extend(float(np.linalg.norm(T.stacked())) for T in result.tuples)
            if game.control is not None:
                window_a.extend(np.atleast_1d(np.asarray(game.control(float(t)), dtype=float))
                                for t in result.times)
            X = result.final
            if result.insolvable is None:
                break
            fired += 1
            if fired > game.max_transitions_per_window:
                raise SimulationError(
                    f"more than {game.max_transitions_per_window} class transitions "
                    f"inside window {n}; the scenario does not settle")
            rule = game.delta.find(label, "insolvable")
            if rule is None:
                raise StrandedClassError(label, n, result.insolvable.time)
            X, eta, presentation, label = _apply_transition(
                game, rule, X, eta, result.insolvable, transitions, n)
            t_cursor = float(result.times[-1])
            if t_cursor >= t_b:
                break
        omega_n, v_n = _window_summaries(None, window_res, window_norms, window_a)
        for rule in game.delta.transitions:
            if rule.from_class == label and callable(rule.trigger):
                if rule.trigger(eta, omega_n, v_n, {"window": n}):
                    signal = InsolvableSignal(time=t_b, residual=float(omega_n[0]),
                                              reason="window predicate")
                    X, eta, presentation, label = _apply_transition(
                        game, rule, X, eta, signal, transitions, n)
                    break
        windows.append(WindowRecord(index=n, t_start=t_a, t_end=t_b,
                                    omega=omega_n, v=v_n, cell_label=label))
        stream.append(CommentState(index=n, class_label=label, eta=eta))

    return TacticalRepdynResult(times=np.array(all_times),
                                residuals=np.array(all_residuals),
                                frobenius_norms=np.array(all_norms),
                                class_stream=stream, transitions=transitions,
                                windows=windows, final=X)


def _apply_transition(game: TacticalRepDyn, rule: TransitionRule, X: MatrixTuple,
                      eta: np.ndarray, signal: InsolvableSignal,
                      transitions: list[TransitionEvent], window_index: int):
    new_label = rule.to_class
    mapper = rule.tuple_map
    if isinstance(mapper, str):
        mapper = tuple_map(mapper)
    if mapper is not None:
        X = mapper(X)
    if rule.eta_update is not None:
        eta = np.atleast_1d(np.asarray(
            rule.eta_update(eta, {"time": signal.time, "residual": signal.residual}),
            dtype=float))
    presentation = game.registry.presentation(new_label, X.m)
    post_residual = relation_residual(presentation, X)
    if post_residual > game.tolerance:
        X, post_residual, converged = project_to_variety(
            presentation, X, game.tolerance, game.projection_cap)
        if not converged:
            raise StrandedClassError(new_label, window_index, signal.time)
    transitions.append(TransitionEvent(time=signal.time, window_index=window_index,
                                       from_class=rule.from_class, to_class=new_label,
                                       residual=post_residual))
    return X, eta, presentation, new_label
