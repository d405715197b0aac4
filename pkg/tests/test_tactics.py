import math

import numpy as np
import pytest

from conftest import make_player
from tactica.games import (ConfigurationError, InteractiveSystem, SlowControl, simulate)
from tactica.tactics import (CommentRule, CommentedGame, DialecticalObject,
                             InteractionTerm, SynthesisRule, interaction_as_synthesis,
                             is_tactical_extension, probe_grid, run_commented_game,
                             run_synthesized, tactical_interaction, tactical_synthesis)
from tactica.verbalization import WindowFunctional, evaluate_functionals


def eps_system(eps_of_t, dynamics=None, coupling=None):
    if dynamics is None:
        dynamics = lambda t, phi, u, lam, om: [0.0]  # noqa: E731
    return InteractiveSystem(
        dim=1, dynamics=dynamics,
        players=(make_player(
            1, lambda t: np.zeros(1), known_form=coupling,
            eps_form=lambda t, u0, phi, derivs: np.array([eps_of_t(t)]), eps_dim=1),))


def commented(system, rule, theta0, grid, dt=1e-2,
              omega=(WindowFunctional("mean", "eps"),),
              v=(WindowFunctional("mean", "u0"),), initial=(0.0,),
              feed_omega=False):
    return CommentedGame(system=system, initial=np.asarray(initial, dtype=float),
                         dt=dt, omega_functionals=tuple(omega), v_functionals=tuple(v),
                         rule=rule, theta0=np.asarray(theta0, dtype=float),
                         window_grid=tuple(grid), feed_omega=feed_omega)


UNIT_GRID = tuple(float(k) for k in range(6))


def test_frozen_comment_equals_constant_parameter_run():
    system = InteractiveSystem(
        dim=1, dynamics=lambda t, phi, u, lam, om: [-lam[0] * phi[0]],
        players=(make_player(1, lambda t: np.zeros(1)),))
    theta0 = [0.7]
    game = commented(system, CommentRule(update=lambda th, om, v: th), theta0,
                     UNIT_GRID, initial=[1.0],
                     omega=(WindowFunctional("mean", "state"),))
    run = run_commented_game(game)
    plain = simulate(system, [1.0], 0.0, 5.0, 1e-2,
                     slow=SlowControl(schedule=lambda t: theta0), record_tape=False)
    assert np.array_equal(run.trajectory.phi, plain.phi)
    assert all(c.vector[0] == 0.7 for c in run.comments)


def test_additive_comment_is_arithmetic_progression():
    game = commented(eps_system(lambda t: 1.0),
                     CommentRule(update=lambda th, om, v: th + om), [0.25], UNIT_GRID)
    run = run_commented_game(game)
    for n, comment in enumerate(run.comments, start=1):
        assert comment.vector[0] == pytest.approx(0.25 + n, abs=1e-12)


def test_gain_scheduling_matches_hand_stepped_evaluation():
    # Phi = -theta*phi; theta increments whenever the window mean of eps > 0.5.
    def dynamics(t, phi, u, lam, om):
        return [-lam[0] * phi[0]]

    def rule(theta, omega, v):
        return theta + (1.0 if omega[0] > 0.5 else 0.0)

    system = eps_system(lambda t: math.sin(t), dynamics=dynamics)
    game = commented(system, CommentRule(update=rule), [0.5], UNIT_GRID, dt=1e-2,
                     initial=[1.0])
    run = run_commented_game(game)

    # Manual window-by-window forward evaluation through plain simulate calls.
    theta = np.array([0.5])
    phi = np.array([1.0])
    for n in range(1, 6):
        seg = simulate(system, phi, float(n - 1), float(n), 1e-2,
                       slow=SlowControl(schedule=lambda t, _th=theta: _th),
                       record_tape=False)
        omega_n = evaluate_functionals([WindowFunctional("mean", "eps")], seg, 0,
                                       len(seg.t) - 1)
        theta = rule(theta, omega_n, None)
        phi = seg.phi[-1]
    assert abs(run.trajectory.phi[-1, 0] - phi[0]) < 1e-9
    assert run.comments[-1].vector[0] == pytest.approx(theta[0], abs=1e-12)


def test_comment_feeds_couplings_as_parameter():
    # The coupling reads lambda: u = u0 + lam[0], Phi = u.
    system = InteractiveSystem(
        dim=1, dynamics=lambda t, phi, u, lam, om: u[0],
        players=(make_player(
            1, lambda t: np.zeros(1),
            known_form=lambda t, u0, phi, derivs, eps, lam: u0 + lam),))
    game = commented(system, CommentRule(update=lambda th, om, v: th), [0.5],
                     (0.0, 1.0), omega=(WindowFunctional("mean", "state"),))
    run = run_commented_game(game)
    assert run.trajectory.phi[-1, 0] == pytest.approx(0.5, abs=1e-12)


def test_dialectical_slot_requires_delta_stream():
    rule = CommentRule(update=lambda th, om, v: th,
                       dialectical=lambda th, delta, om, v: th)
    game = commented(eps_system(lambda t: 1.0), rule, [0.0], (0.0, 1.0))
    with pytest.raises(ConfigurationError):
        run_commented_game(game)
    delta = DialecticalObject(label="unit")
    run = run_commented_game(game, deltas=[delta])
    assert len(run.comments) == 1


# ---------------------------------------------------------------------------
# Interaction
# ---------------------------------------------------------------------------

def _pair(rule1, rule2, theta1, theta2):
    g1 = commented(eps_system(lambda t: 1.0), rule1, theta1, UNIT_GRID)
    g2 = commented(eps_system(lambda t: 1.0), rule2, theta2, UNIT_GRID)
    return g1, g2


def test_zero_interaction_equals_uncoupled_runs():
    rule1 = CommentRule(update=lambda th, om, v: 0.9 * th + om)
    rule2 = CommentRule(update=lambda th, om, v: 0.8 * th - v)
    g1, g2 = _pair(rule1, rule2, [1.0], [2.0])
    coupled = tactical_interaction(g1, g2, InteractionTerm.zero(),
                                   InteractionTerm.zero()).run()
    solo1, solo2 = run_commented_game(g1), run_commented_game(g2)
    assert np.array_equal(coupled[0].theta_values, solo1.theta_values)
    assert np.array_equal(coupled[1].theta_values, solo2.theta_values)


def test_pure_exchange_swaps_streams():
    zero = CommentRule(update=lambda th, om, v: np.zeros_like(th))
    g1, g2 = _pair(zero, zero, [1.0], [2.0])
    swap = InteractionTerm(form=lambda own, other, om, v: other)
    runs = tactical_interaction(g1, g2, swap, swap).run()
    assert [c.vector[0] for c in runs[0].comments] == [2.0, 1.0, 2.0, 1.0, 2.0]
    assert [c.vector[0] for c in runs[1].comments] == [1.0, 2.0, 1.0, 2.0, 1.0]


def test_linear_coupling_matches_matrix_power():
    a1, c12, a2, c21 = 0.9, 0.1, 0.8, 0.05
    g1, g2 = _pair(CommentRule(update=lambda th, om, v: a1 * th),
                   CommentRule(update=lambda th, om, v: a2 * th), [1.0], [2.0])
    term12 = InteractionTerm(form=lambda own, other, om, v: c12 * other)
    term21 = InteractionTerm(form=lambda own, other, om, v: c21 * other)
    runs = tactical_interaction(g1, g2, term12, term21).run()

    matrix = np.array([[a1, c12], [c21, a2]])
    theta = np.array([1.0, 2.0])
    for n in range(5):
        theta = matrix @ theta
        assert abs(runs[0].comments[n].vector[0] - theta[0]) < 1e-12
        assert abs(runs[1].comments[n].vector[0] - theta[1]) < 1e-12


def test_mismatched_window_grids_rejected():
    g1 = commented(eps_system(lambda t: 1.0),
                   CommentRule(update=lambda th, om, v: th), [0.0], (0.0, 1.0, 2.0))
    g2 = commented(eps_system(lambda t: 1.0),
                   CommentRule(update=lambda th, om, v: th), [0.0], (0.0, 0.5, 1.0))
    with pytest.raises(ConfigurationError, match="shared grid"):
        tactical_interaction(g1, g2, InteractionTerm.zero(), InteractionTerm.zero()).run()


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def test_identity_synthesis_equals_independent_runs():
    rule1 = CommentRule(update=lambda th, om, v: 0.5 * th + om)
    rule2 = CommentRule(update=lambda th, om, v: th - 0.1 * v)
    g1, g2 = _pair(rule1, rule2, [1.0], [2.0])
    synthesis = SynthesisRule(
        forms=(lambda th, om, v: rule1.update(th[0], om[0], v[0]),
               lambda th, om, v: rule2.update(th[1], om[1], v[1])),
        masks=(frozenset({0}), frozenset({1})))
    runs = tactical_synthesis([g1, g2], synthesis).run()
    solo1, solo2 = run_commented_game(g1), run_commented_game(g2)
    assert np.array_equal(runs[0].theta_values, solo1.theta_values)
    assert np.array_equal(runs[1].theta_values, solo2.theta_values)


def test_interaction_is_a_synthesis_specialization():
    rule1 = CommentRule(update=lambda th, om, v: 0.9 * th)
    rule2 = CommentRule(update=lambda th, om, v: 0.8 * th)
    term12 = InteractionTerm(form=lambda own, other, om, v: 0.1 * other)
    term21 = InteractionTerm(form=lambda own, other, om, v: 0.05 * other)
    g1, g2 = _pair(rule1, rule2, [1.0], [2.0])
    via_interaction = tactical_interaction(g1, g2, term12, term21).run()
    synthesis = interaction_as_synthesis(rule1, rule2, term12, term21)
    via_synthesis = tactical_synthesis([g1, g2], synthesis).run()
    for a, b in zip(via_interaction, via_synthesis):
        assert np.array_equal(a.theta_values, b.theta_values)


def test_three_game_hierarchical_mask():
    rules = [CommentRule(update=lambda th, om, v: th + om) for _ in range(3)]
    games = [commented(eps_system(lambda t: 1.0), rules[j], [float(j)], UNIT_GRID)
             for j in range(3)]

    def form3(thetas, omegas, vs):
        return 0.5 * (thetas[0] + thetas[1]) + omegas[2]

    synthesis = SynthesisRule(
        forms=(lambda th, om, v: th[0] + om[0],
               lambda th, om, v: th[1] + om[1],
               form3),
        masks=(frozenset({0}), frozenset({1}), frozenset({0, 1, 2})))
    runs = run_synthesized(games, synthesis, None, None)

    theta = [np.array([0.0]), np.array([1.0]), np.array([2.0])]
    for n in range(5):
        omega = np.array([1.0])
        theta = [theta[0] + omega, theta[1] + omega,
                 0.5 * (theta[0] + theta[1]) + omega]
        for j in range(3):
            assert abs(runs[j].comments[n].vector[0] - theta[j][0]) < 1e-12


def test_form_reading_outside_mask_is_rejected():
    g1, g2 = _pair(CommentRule(update=lambda th, om, v: th),
                   CommentRule(update=lambda th, om, v: th), [1.0], [2.0])
    synthesis = SynthesisRule(
        forms=(lambda th, om, v: th[1],  # mask only allows game 0
               lambda th, om, v: th[1]),
        masks=(frozenset({0}), frozenset({1})))
    with pytest.raises(ConfigurationError, match="outside"):
        tactical_synthesis([g1, g2], synthesis).run()


def test_mask_referencing_absent_game_rejected():
    with pytest.raises(ConfigurationError, match="absent game index"):
        SynthesisRule(forms=(lambda th, om, v: th[0],), masks=(frozenset({3}),))


def test_comment_causality():
    # theta_n depends only on data up to window n: permuting later window
    # summaries leaves the stream prefix unchanged.
    rule = CommentRule(update=lambda th, om, v: 0.7 * th + om - 0.2 * v)
    omegas = [np.array([math.sin(k)]) for k in range(8)]
    vs = [np.array([math.cos(k)]) for k in range(8)]

    def roll(omega_seq, v_seq):
        theta = np.array([1.0])
        out = []
        for om, v in zip(omega_seq, v_seq):
            theta = rule.step(theta, None, om, v)
            out.append(theta)
        return out

    base = roll(omegas, vs)
    permuted = roll(omegas[:4] + omegas[4:][::-1], vs[:4] + vs[4:][::-1])
    for n in range(4):
        assert np.array_equal(base[n], permuted[n])


# ---------------------------------------------------------------------------
# Tactical extension
# ---------------------------------------------------------------------------

def _extension_probes():
    return probe_grid(theta_dims=[1, 1], omega_dims=[1, 1], v_dims=[1, 1], points=3)


def test_extension_true_for_syntactic_identity():
    original = lambda th, om, v: 2.0 * th + om  # noqa: E731
    synthesis = SynthesisRule(
        forms=(lambda th, om, v: original(th[0], om[0], v[0]),
               lambda th, om, v: th[1]),
        masks=(frozenset({0}), frozenset({1})))
    ok, witness = is_tactical_extension(synthesis, original, _extension_probes())
    assert ok and witness is None


def test_extension_false_with_witness():
    original = lambda th, om, v: 2.0 * th + om  # noqa: E731
    synthesis = SynthesisRule(
        forms=(lambda th, om, v: original(th[0], om[0], v[0]) + 1e-3 * th[1],
               lambda th, om, v: th[1]),
        masks=(frozenset({0, 1}), frozenset({1})))
    ok, witness = is_tactical_extension(synthesis, original, _extension_probes())
    assert not ok
    thetas, _, _ = witness
    assert thetas[1][0] != 0.0


def test_extension_true_for_symbolically_zero_coupling():
    c = 0.0
    original = lambda th, om, v: 2.0 * th + om  # noqa: E731
    synthesis = SynthesisRule(
        forms=(lambda th, om, v: original(th[0], om[0], v[0]) + c * th[1],
               lambda th, om, v: th[1]),
        masks=(frozenset({0, 1}), frozenset({1})))
    ok, _ = is_tactical_extension(synthesis, original, _extension_probes())
    assert ok


def test_probe_grid_cap():
    with pytest.raises(ConfigurationError):
        probe_grid(theta_dims=[4, 4], omega_dims=[4, 4], v_dims=[4, 4], points=5)


def test_window_tag_feeds_the_dynamics():
    # With feed_omega on, window n runs under the previous window's summary
    # (the tag is empty during the first window).
    def dynamics(t, phi, u, lam, om):
        return [om[0] if len(om) else 0.0]

    system = InteractiveSystem(
        dim=1, dynamics=dynamics,
        players=(make_player(
            1, lambda t: np.zeros(1),
            eps_form=lambda t, u0, phi, derivs: np.array([2.0]), eps_dim=1),))
    game = commented(system, CommentRule(update=lambda th, om, v: th), [0.0],
                     (0.0, 1.0, 2.0), feed_omega=True)
    run = run_commented_game(game)
    # window 1: phi' = 0; window 2: phi' = omega_1 = 2.
    assert run.trajectory.phi[-1, 0] == pytest.approx(2.0, abs=1e-12)
