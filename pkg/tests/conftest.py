import pytest

from fbrnn.corpus import GoldNugget, LabelSet, Sentence, Token


@pytest.fixture
def break_in_sentence():
    """'an unknown man had broken into a house last November', gold (4,5)."""
    words = [
        ("an", "DT"),
        ("unknown", "JJ"),
        ("man", "NN"),
        ("had", "VBD"),
        ("broken", "VBN"),
        ("into", "IN"),
        ("a", "DT"),
        ("house", "NN"),
        ("last", "JJ"),
        ("November", "NNP"),
    ]
    return Sentence(
        tokens=tuple(Token(w, p) for w, p in words),
        nuggets=(GoldNugget(4, 5, ("Conflict.Attack",)),),
    )


@pytest.fixture
def attack_labels():
    return LabelSet(["Conflict.Attack", "Contact.Meet", "Justice.Arrest"])
