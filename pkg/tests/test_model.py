"""Model construction, validation, and decision-state classification."""
import pytest
from gmpy2 import mpq

from actmc.model import Alarm, Model, ModelError, classify, validate

from _models import t1, three_state


def _alarm(**kw):
    base = dict(
        name="a",
        family="dirac",
        lower=mpq(1, 2),
        upper=mpq(2),
        enabled=frozenset({"s"}),
        fire={"s": {"t": mpq(1)}},
        impulses={},
    )
    base.update(kw)
    return Alarm(**base)


def _model(**kw):
    base = dict(
        states=("s", "t"),
        rate=mpq(1),
        transitions={"s": {"s": mpq(1)}, "t": {"s": mpq(1)}},
        rate_costs={"s": mpq(1)},
        impulse_costs={},
        alarms=(_alarm(),),
    )
    base.update(kw)
    return Model(**base)


def _errors(model) -> str:
    with pytest.raises(ModelError) as exc:
        validate(model)
    return str(exc.value)


class TestValidate:
    def test_valid_models_pass(self):
        validate(t1())
        for family, kw in [
            ("dirac", {}),
            ("uniform", {}),
            ("uniform-shift", {"window": mpq(1, 2)}),
            ("weibull", {"shape": 2}),
        ]:
            validate(three_state(family, **kw))

    def test_duplicate_states(self):
        assert "duplicate" in _errors(_model(states=("s", "t", "s")))

    def test_empty_states(self):
        msg = _errors(_model(states=(), transitions={}, rate_costs={}, alarms=()))
        assert "state" in msg

    def test_nonpositive_rate(self):
        assert "rate" in _errors(_model(rate=mpq(0)))

    def test_row_does_not_sum_to_one(self):
        bad = {"s": {"s": mpq(1, 2)}, "t": {"s": mpq(1)}}
        assert "sum" in _errors(_model(transitions=bad))

    def test_negative_probability(self):
        bad = {"s": {"s": mpq(2), "t": mpq(-1)}, "t": {"s": mpq(1)}}
        assert "negative" in _errors(_model(transitions=bad))

    def test_unknown_target(self):
        bad = {"s": {"nope": mpq(1)}, "t": {"s": mpq(1)}}
        assert "nope" in _errors(_model(transitions=bad))

    def test_missing_row(self):
        assert "t" in _errors(_model(transitions={"s": {"s": mpq(1)}}))

    def test_negative_cost(self):
        assert "negative" in _errors(_model(rate_costs={"s": mpq(-1)}))

    def test_impulse_on_impossible_transition(self):
        msg = _errors(_model(impulse_costs={"t": {"t": mpq(1)}}))
        assert "impulse" in msg

    def test_duplicate_alarm_names(self):
        two = (
            _alarm(),
            _alarm(enabled=frozenset({"t"}), fire={"t": {"s": mpq(1)}}),
        )
        assert "duplicate" in _errors(_model(alarms=two))

    def test_unknown_family(self):
        assert "family" in _errors(_model(alarms=(_alarm(family="normal"),)))

    def test_nonpositive_lower(self):
        assert "lower" in _errors(_model(alarms=(_alarm(lower=mpq(0)),)))

    def test_upper_below_lower(self):
        assert "empty" in _errors(_model(alarms=(_alarm(upper=mpq(1, 4)),)))

    def test_uniform_shift_needs_window(self):
        assert "window" in _errors(_model(alarms=(_alarm(family="uniform-shift"),)))

    def test_window_only_for_uniform_shift(self):
        assert "window" in _errors(_model(alarms=(_alarm(window=mpq(1)),)))

    def test_weibull_needs_integer_shape(self):
        assert "shape" in _errors(_model(alarms=(_alarm(family="weibull"),)))
        assert "shape" in _errors(
            _model(alarms=(_alarm(family="weibull", shape=True),))
        )

    def test_shape_only_for_weibull(self):
        assert "shape" in _errors(_model(alarms=(_alarm(shape=2),)))

    def test_empty_enabling_set(self):
        assert "enabl" in _errors(
            _model(alarms=(_alarm(enabled=frozenset(), fire={}),))
        )

    def test_overlapping_enabling_sets_name_both_alarms(self):
        two = (
            _alarm(),
            _alarm(name="b"),
        )
        msg = _errors(_model(alarms=two))
        assert "a" in msg and "b" in msg and "disjoint" in msg

    def test_firing_row_required_for_every_enabled_state(self):
        assert "firing" in _errors(_model(alarms=(_alarm(fire={}),)))

    def test_firing_row_outside_enabling_set(self):
        bad = _alarm(fire={"s": {"t": mpq(1)}, "t": {"s": mpq(1)}})
        assert "t" in _errors(_model(alarms=(bad,)))

    def test_firing_impulse_on_impossible_firing(self):
        bad = _alarm(impulses={"s": {"s": mpq(1)}})
        assert "impulse" in _errors(_model(alarms=(bad,)))

    def test_collects_multiple_errors(self):
        with pytest.raises(ModelError) as exc:
            validate(_model(rate=mpq(-1), rate_costs={"s": mpq(-1)}))
        assert len(exc.value.errors) >= 2


class TestClassify:
    def test_t1(self):
        info = classify(t1())
        assert info.setting_state == {"a": "s"}
        assert info.off_states == ("t",)
        assert info.decision_states == ("s", "t")

    def test_three_state(self):
        info = classify(three_state())
        assert info.setting_state == {"a": "x"}
        assert info.alarm_of == {"x": "a", "y": "a", "z": None}
        assert info.off_states == ("z",)
        assert info.decision_states == ("x", "z")

    def test_no_setting_state(self):
        # the enabled block {u, v} is never entered: w only self-loops and
        # every firing transition leaves the block
        model = Model(
            states=("u", "v", "w"),
            rate=mpq(1),
            transitions={
                "u": {"v": mpq(1)},
                "v": {"u": mpq(1)},
                "w": {"w": mpq(1)},
            },
            rate_costs={},
            impulse_costs={},
            alarms=(
                Alarm(
                    name="a",
                    family="dirac",
                    lower=mpq(1),
                    upper=mpq(2),
                    enabled=frozenset({"u", "v"}),
                    fire={"u": {"w": mpq(1)}, "v": {"w": mpq(1)}},
                    impulses={},
                ),
            ),
        )
        with pytest.raises(ModelError, match="no setting state"):
            classify(model)

    def test_two_setting_states(self):
        # both enabled states are entered from the outside state
        model = Model(
            states=("u", "v", "w"),
            rate=mpq(1),
            transitions={
                "u": {"w": mpq(1)},
                "v": {"w": mpq(1)},
                "w": {"u": mpq(1, 2), "v": mpq(1, 2)},
            },
            rate_costs={},
            impulse_costs={},
            alarms=(
                Alarm(
                    name="a",
                    family="dirac",
                    lower=mpq(1),
                    upper=mpq(2),
                    enabled=frozenset({"u", "v"}),
                    fire={"u": {"w": mpq(1)}, "v": {"w": mpq(1)}},
                    impulses={},
                ),
            ),
        )
        with pytest.raises(ModelError, match="2 setting states"):
            classify(model)

    def test_firing_into_other_enabling_set_creates_setting_state(self):
        # alarm b fires into alarm a's set: that target is a-setting
        model = Model(
            states=("p", "q", "r"),
            rate=mpq(1),
            transitions={
                "p": {"p": mpq(1)},
                "q": {"q": mpq(1)},
                "r": {"r": mpq(1)},
            },
            rate_costs={},
            impulse_costs={},
            alarms=(
                Alarm(
                    name="a",
                    family="dirac",
                    lower=mpq(1),
                    upper=mpq(2),
                    enabled=frozenset({"p"}),
                    fire={"p": {"q": mpq(1)}},
                    impulses={},
                ),
                Alarm(
                    name="b",
                    family="dirac",
                    lower=mpq(1),
                    upper=mpq(2),
                    enabled=frozenset({"q"}),
                    fire={"q": {"p": mpq(1)}},
                    impulses={},
                ),
            ),
        )
        info = classify(model)
        assert info.setting_state == {"a": "p", "b": "q"}
        assert info.off_states == ("r",)


class TestAccessors:
    def test_transition_and_impulse_defaults(self):
        m = three_state()
        assert m.transition("x", "y") == mpq(1, 2)
        assert m.transition("z", "y") == 0
        assert m.impulse("x", "y") == mpq(1, 2)
        assert m.impulse("x", "x") == 0
        assert m.alarm("a").impulse("x", "z") == mpq(2)
        assert m.alarm("a").impulse("y", "x") == 0

    def test_unknown_alarm(self):
        with pytest.raises(KeyError):
            t1().alarm("nope")

    def test_zero_entries_dropped(self):
        m = Model(
            states=("s", "t"),
            rate=mpq(1),
            transitions={"s": {"s": mpq(1), "t": mpq(0)}, "t": {"s": mpq(1)}},
            rate_costs={"s": mpq(0)},
            impulse_costs={},
            alarms=(),
        )
        assert "t" not in m.transitions["s"]
        assert "s" not in m.rate_costs
