import math
from fractions import Fraction

import numpy as np
import pytest

from umbra.engines import check, check_ctmc, check_dtmc, check_mdp, check_pomdp
from umbra.engines.steady import compute_steady_state
from umbra.errors import EngineError, PropertyError
from umbra.prism.source import list_parameters, load_model
from umbra.prism.explicit import build_state_space

from _models import (BIRTH_DEATH, CASES, FIG2, TWO_ACTION_MDP, TWO_STATE_CTMC, build, dense,
                     induced, memoryless_policies, random_ctmc_text, random_dtmc_text,
                     random_mdp_text, reach_by_squaring)


# ------------------------------------------------------------------- dtmc

def test_fig2_reachability():
    assert check_dtmc(build(FIG2), "P=? [F s=1]").value == pytest.approx(16 / 19, abs=1e-12)


def test_fig2_one_step():
    assert check_dtmc(build(FIG2), "P=? [F<=1 s=1]").value == pytest.approx(0.8, abs=1e-12)


def test_reach_true_is_one():
    assert check_dtmc(build(FIG2), "P=? [F true]").value == 1.0


def test_fig2_rewards():
    m = build(FIG2)
    # expected steps to absorption: x0 = 1 + 0.1 x3, x3 = 1 + 0.5 x0
    assert check(m, 'R{"steps"}=? [F s=1 | s=2]').value == pytest.approx(22 / 19, abs=1e-12)
    assert check(m, 'R{"steps"}=? [C<=2]').value == pytest.approx(2.0, abs=1e-12)
    assert check(m, 'R{"steps"}=? [F s=1]').value == math.inf


def test_next_and_bounded_until():
    m = build(FIG2)
    assert check(m, "P=? [X s=3]").value == pytest.approx(0.1)
    # s=0 -> s=3 -> s=0 -> s=1 within 3 steps, plus the direct step
    assert check(m, "P=? [F<=3 s=1]").value == pytest.approx(0.8 + 0.1 * 0.5 * 0.8)


def test_bound_form_returns_bool():
    assert check(build(FIG2), "P>=0.8 [F s=1]").value is True
    assert check(build(FIG2), "P<0.8 [F s=1]").value is False


def test_unknown_label_lists_known():
    with pytest.raises(PropertyError, match="success"):
        check(build(FIG2), 'P=? [F "nope"]')


def test_random_dtmc_until_matches_squaring():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(3, 21))
        m = build(random_dtmc_text(rng, n, [], with_rewards=False))
        got = check_dtmc(m, 'P=? [F "goal"]').values
        goal = np.array([m.var_values("s")[i] == n - 1 for i in range(m.n)])
        want = reach_by_squaring(dense(m), goal)
        assert np.max(np.abs(got - want)) < 1e-10


# ------------------------------------------------------------------- ctmc

def test_two_state_ctmc():
    v = check_ctmc(build(TWO_STATE_CTMC), "P=? [F<=10 s=1]").value
    assert v == pytest.approx(1 - math.exp(-1), abs=1e-9)


def test_zero_length_interval():
    m = build(TWO_STATE_CTMC)
    assert check(m, "P=? [F<=0 s=1]").value == 0.0
    assert check(m, "P=? [F<=0 s=0]").value == 1.0


def test_interval_until():
    # reach s=1 inside [5,10] from s=0: e^{-0.5} - e^{-1}; s=1 is absorbing so it stays
    m = build(TWO_STATE_CTMC)
    want = 1 - math.exp(-1)
    assert check(m, "P=? [F[5,10] s=1]").value == pytest.approx(want, abs=1e-9)
    assert check(m, "P=? [s=0 U[5,10] s=1]").value == pytest.approx(math.exp(-0.5) - math.exp(-1), abs=1e-9)


def test_cumulative_reward_ctmc():
    m = build(TWO_STATE_CTMC + 'rewards "t" s=0 : 1; endrewards\n')
    # expected time spent in s=0 during [0,10] = (1 - e^{-1}) / 0.1
    assert check(m, 'R{"t"}=? [C<=10]').value == pytest.approx((1 - math.exp(-1)) / 0.1, rel=1e-9)
    assert check(m, 'R{"t"}=? [F s=1]').value == pytest.approx(10.0, rel=1e-12)


def test_garment_pick_against_simulation():
    src = load_model(CASES / "rad" / "pick-garment.ctmc")
    r, ps, pr = 0.1, 0.7, 0.8
    m = build_state_space(src, {"rPick": Fraction("0.1"), "psucc": Fraction("0.7"),
                                "pRetry": Fraction("0.8")})
    v = check(m, 'P=? [F<=90 "success"]').value
    rng = np.random.default_rng(7)
    trials = 10 ** 6
    stop = 1 - (1 - ps) * pr
    attempts = rng.geometric(stop, size=trials)
    elapsed = rng.gamma(attempts, 1 / r)
    success = rng.random(trials) < ps / stop
    hits = success & (elapsed <= 90)
    est = hits.mean()
    sigma = math.sqrt(est * (1 - est) / trials)
    assert abs(v - est) < 3 * sigma


def test_ctmc_monotone_in_time():
    rng = np.random.default_rng(2)
    for _ in range(50):
        m = build(random_ctmc_text(rng, int(rng.integers(2, 9))))
        ts = sorted(rng.uniform(0, 5, size=5))
        vals = [check(m, f'P=? [F<={t:.4f} "goal"]').value for t in ts]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_ctmc_bounded_approaches_unbounded():
    m = build(BIRTH_DEATH + 'label "full" = n=2;\n')
    assert check(m, 'P=? [F<=200 "full"]').value == pytest.approx(check(m, 'P=? [F "full"]').value)


# ------------------------------------------------------------ steady state

def test_two_state_steady_state():
    m = build("ctmc module m s:[0..1] init 0; [] s=0 -> 2:(s'=1); [] s=1 -> 1:(s'=0); endmodule")
    assert compute_steady_state(m) == pytest.approx([1 / 3, 2 / 3], abs=1e-12)


def test_birth_death_steady_state():
    pi = compute_steady_state(build(BIRTH_DEATH))
    assert np.max(np.abs(pi - np.array([4, 2, 1]) / 7)) < 1e-10


def test_absorbing_dtmc_steady_state():
    pi = compute_steady_state(build("dtmc module m s:[0..1] init 0; [] s=0 -> 0.5:(s'=1) + 0.5:true; "
                                    "[] s=1 -> 1:true; endmodule"))
    assert pi == pytest.approx([0, 1], abs=1e-12)


def test_steady_state_balance_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = build(random_ctmc_text(rng, int(rng.integers(2, 10))))
        R = dense(m)
        Q = R - np.diag(R.sum(axis=1))
        pi = compute_steady_state(m)
        assert abs(pi.sum() - 1) < 1e-12
        assert np.max(np.abs(pi @ Q)) < 1e-10


def test_reward_steady_state():
    m = build(BIRTH_DEATH + 'rewards "size" true : n; endrewards\n')
    assert check(m, 'R{"size"}=? [S]').value == pytest.approx((2 + 2) / 7, abs=1e-12)
    assert check(m, "S=? [n=0]").value == pytest.approx(4 / 7, abs=1e-12)


# -------------------------------------------------------------------- mdp

def test_two_action_mdp():
    m = build(TWO_ACTION_MDP)
    assert check_mdp(m, 'Pmax=? [F "goal"]').value == pytest.approx(1.0)
    assert check_mdp(m, 'Pmin=? [F "goal"]').value == pytest.approx(1.0)
    r = check_mdp(m, 'Pmax=? [F<=1 "goal"]')
    assert r.value == pytest.approx(0.9)
    assert r.policy == {"(s=0)": "a"}
    r = check_mdp(m, 'Pmin=? [F<=1 "goal"]')
    assert r.value == pytest.approx(0.5)
    assert r.policy == {"(s=0)": "b"}


def _goal(m, n):
    return np.array([m.var_values("s")[i] == n - 1 for i in range(m.n)])


def test_mdp_against_policy_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        m = build(random_mdp_text(rng, n, max_actions=2))
        goal = _goal(m, n)
        vals = [reach_by_squaring(induced(m, pol), goal)[m.initial] for pol in memoryless_policies(m)]
        assert check(m, 'Pmax=? [F "goal"]').value == pytest.approx(max(vals), abs=1e-7)
        assert check(m, 'Pmin=? [F "goal"]').value == pytest.approx(min(vals), abs=1e-7)


def _pmax_globally(m, safe, sweeps=20000):
    """Greatest fixed point of x = max_a P_a x on safe states (independent value iteration)."""
    x = safe.astype(float)
    for _ in range(sweeps):
        new = np.zeros(m.n)
        for s in np.flatnonzero(safe):
            new[s] = max(sum(float(t.weight) * x[t.target] for t in ch.transitions)
                         for ch in m.choices[s])
        if np.max(np.abs(new - x)) < 1e-13:
            return new
        x = new
    return x


def test_min_max_duality():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        m = build(random_mdp_text(rng, n))
        goal = _goal(m, n)
        pmin = check(m, 'Pmin=? [F "goal"]').value
        assert pmin == pytest.approx(1 - _pmax_globally(m, ~goal)[m.initial], abs=1e-7)


def test_single_action_mdp_equals_dtmc():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(3, 12))
        text = random_dtmc_text(rng, n, [], with_rewards=True)
        d = build(text)
        m = build(text.replace("dtmc", "mdp", 1))
        for prop in ('P=? [F "goal"]', 'P=? [F<=4 "goal"]'):
            want = check(d, prop).value
            for opt in ("min", "max"):
                got = check(m, prop.replace("P=?", f"P{opt}=?")).value
                assert got == pytest.approx(want, abs=1e-9)
        want = check(d, 'R{"r"}=? [C<=5]').value
        assert check(m, 'R{"r"}max=? [C<=5]').value == pytest.approx(want, abs=1e-9)


def test_mdp_reward_minimum():
    m = build("""mdp
    module m s:[0..2] init 0;
      [fast] s=0 -> 0.5:(s'=2) + 0.5:(s'=1);
      [slow] s=0 -> 1:(s'=2);
      [] s=1 -> 1:(s'=2);
      [] s=2 -> 1:true;
    endmodule
    rewards "cost" [fast] true : 1; [slow] true : 3; s=1 : 1; endrewards""")
    r = check(m, 'R{"cost"}min=? [F s=2]')
    assert r.value == pytest.approx(1.5)
    assert r.policy == {"(s=0)": "fast"}


def test_min_needed_on_mdp():
    with pytest.raises(PropertyError):
        check(build(TWO_ACTION_MDP), 'P=? [F "goal"]')


# ------------------------------------------------------------------ pomdp

def test_fully_observable_pomdp_equals_mdp():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(2, 6))
        text = random_mdp_text(rng, n, max_actions=2)
        text_p = text.replace("mdp", "pomdp\nobservables s endobservables", 1)
        m, p = build(text), build(text_p)
        for opt in ("min", "max"):
            prop = f'P{opt}=? [F "goal"]'
            assert check(p, prop).value == pytest.approx(check(m, prop).value, abs=1e-7)


def test_single_observation_two_policies():
    p = build("""pomdp
    observables o endobservables
    module m
      s:[0..2] init 0; o:[0..0] init 0;
      [a] s=0 -> 0.3:(s'=1) + 0.7:(s'=2);
      [b] s=0 -> 0.6:(s'=1) + 0.4:(s'=2);
      [a] s>0 -> 1:true;
      [b] s>0 -> 1:true;
    endmodule""")
    assert check(p, "Pmin=? [F s=1]").value == pytest.approx(0.3)
    assert check(p, "Pmax=? [F s=1]").value == pytest.approx(0.6)


def test_rad_dressing_against_enumeration():
    src = load_model(CASES / "rad" / "dressing.pomdp")
    rng = np.random.default_rng(9)
    binding = {k: Fraction(int(rng.integers(5, 95)), 100) for k in list_parameters(src)}
    p = build_state_space(src, binding)
    res = check_pomdp(p, "Pmin=? [F step=6]")
    fail = np.array([p.var_values("step")[i] == 6 for i in range(p.n)])
    # enumerate observation -> action maps directly
    obs_of = [p.observations[s] for s in range(p.n)]
    decisions = sorted({o for s, o in enumerate(obs_of) if len(p.choices[s]) > 1})
    best = 1.0
    for bits in range(2 ** len(decisions)):
        pick = {o: (bits >> i) & 1 for i, o in enumerate(decisions)}
        pol = [pick.get(obs_of[s], 0) if len(p.choices[s]) > 1 else 0 for s in range(p.n)]
        best = min(best, reach_by_squaring(induced(p, pol), fail)[p.initial])
    assert res.value == pytest.approx(best, abs=1e-9)
    assert set(res.policy.values()) <= {"dressSlow", "dressFast"}
