import pytest

from speaker_fusion import EmptyDecisionsError, IdentificationRate, identification_rate


@pytest.mark.parametrize(
    "correct,expected",
    [
        (24, "42.85"),
        (28, "50.00"),
        (30, "53.57"),
        (32, "57.14"),
        (34, "60.71"),
        (36, "64.28"),
        (38, "67.85"),
        (40, "71.42"),
        (42, "75.00"),
        (48, "85.71"),
    ],
)
def test_rates_of_56_trials(correct, expected):
    """Test the truncated two-decimal rates of 28 speakers x 2 test utterances"""
    decisions = [("spk", "spk")] * correct + [("spk", "other")] * (56 - correct)
    assert identification_rate(decisions).formatted() == expected


def test_rate_boundaries():
    """Test zero and full identification"""
    assert identification_rate([("a", "b"), ("b", "a")]).formatted() == "0.00"
    assert identification_rate([("a", "a")]).formatted() == "100.00"


def test_rate_is_truncated_not_rounded():
    """Test that 2/3 reads 66.66 while the full-precision value is kept"""
    rate = IdentificationRate(2, 3)
    assert rate.formatted() == "66.66"
    assert rate.rate == pytest.approx(66.6666666)


def test_rate_counts_pairs():
    """Test that predictions are compared with the truth of the same trial"""
    rate = identification_rate(iter([("a", "a"), ("b", "c"), ("c", "c"), ("d", "a")]))
    assert (rate.correct, rate.total) == (2, 4)


def test_rate_needs_decisions():
    """Test that an empty decision list is an error"""
    with pytest.raises(EmptyDecisionsError):
        identification_rate([])
    with pytest.raises(EmptyDecisionsError):
        IdentificationRate(0, 0)
