from importlib import resources

import numpy as np
import pytest

from hfmdp.errors import ModelParseError
from hfmdp.generators import bundled_model, bundled_model_names, two_subsystem_example
from hfmdp.parsers import dump_model, load_model, model_from_tree, parse_model, tokenize
from hfmdp.reuse import class_signature
from hfmdp.validation import validate_tree


def _golden_text():
    return resources.files("hfmdp.models").joinpath("two_subsystem.hmdp").read_text(encoding="utf-8")


def _parent_name(tree, j):
    parent = tree.parent(j)
    return None if parent is None else tree[parent].name


def _same_tree(a, b):
    """Equal up to the order subsystems are numbered in."""
    assert sorted(m.name for m in a.subsystems) == sorted(m.name for m in b.subsystems)
    assert a.discount == b.discount
    for j, m in enumerate(a.subsystems):
        n = b[b.index(m.name)]
        assert _parent_name(a, j) == _parent_name(b, b.index(m.name))
        assert m.scope.names == n.scope.names
        assert m.internal.names == n.internal.names
        np.testing.assert_array_equal(m.reward, n.reward)
        np.testing.assert_array_equal(m.cpt, n.cpt)


def test_tokenize_strips_comments_and_tracks_columns():
    lines = tokenize("hfmdp 1\n\n  var x a b   # comment\n# only a comment\n")
    assert [line.number for line in lines] == [1, 3]
    assert [(t.text, t.column) for t in lines[1].tokens] == [("var", 3), ("x", 7), ("a", 9), ("b", 11)]


def test_bundled_golden_matches_generator():
    model = bundled_model("two_subsystem")
    tree, weights = model.build()
    expected, expected_weights = two_subsystem_example()
    _same_tree(tree, expected)
    np.testing.assert_array_equal(weights[1], expected_weights[1])
    assert model.weights.convention == "ones"


def test_every_bundled_model_validates():
    assert set(bundled_model_names()) >= {"two_subsystem", "engine", "twin_valves"}
    for name in bundled_model_names():
        tree, weights = bundled_model(name).build()
        assert validate_tree(tree, weights).ok, name


@pytest.mark.parametrize("name", ["two_subsystem", "engine", "twin_valves"])
def test_dump_is_a_fixpoint(name):
    model = bundled_model(name)
    text = dump_model(model)
    again = parse_model(text)
    assert dump_model(again) == text
    _same_tree(again.build()[0], model.build()[0])


def test_generated_tree_round_trips_through_text(make_random_tree):
    tree, weights = make_random_tree(11)
    model = parse_model(dump_model(model_from_tree(tree, weights)))
    rebuilt, rebuilt_weights = model.build()
    _same_tree(rebuilt, tree)
    np.testing.assert_array_equal(rebuilt_weights[0], weights[0])


def test_class_instances_share_a_signature():
    tree, _ = bundled_model("twin_valves").build()
    assert [m.name for m in tree.subsystems] == ["Plant", "Valve1", "Gauge1", "Valve2", "Gauge2"]
    assert tree.parent(tree.index("Gauge2")) == tree.index("Valve2")
    valve1, valve2 = tree[tree.index("Valve1")], tree[tree.index("Valve2")]
    assert valve1.class_name == "Valve"
    assert valve1.scope.names == ("pressure", "flow1", "cmd1")
    assert class_signature(valve1, tree.discount) == class_signature(valve2, tree.discount)
    gauge1, gauge2 = tree[tree.index("Gauge1")], tree[tree.index("Gauge2")]
    assert class_signature(gauge1, tree.discount) == class_signature(gauge2, tree.discount)
    # class rows (v, p, u) = (open, low, keep) land at scope (pressure, flow1, cmd1) = (low, open, keep)
    assert valve1.reward[2] == pytest.approx(1.0)


def test_empty_file_reports_a_location():
    with pytest.raises(ModelParseError) as info:
        parse_model("# nothing here\n", "empty.hmdp")
    assert str(info.value).startswith("empty.hmdp:0:0:")
    assert info.value.exit_code == 2


def test_bad_header():
    with pytest.raises(ModelParseError) as info:
        parse_model("hfmdp 2\ndiscount 0.9\n")
    assert info.value.line == 1


def test_wrong_reward_count_names_the_subsystem():
    text = _golden_text().replace("    0 0 -3 -3\n", "    0 0 -3\n")
    with pytest.raises(ModelParseError) as info:
        parse_model(text, "golden.hmdp")
    assert "M1: reward table has 3 numbers, expected 4" in str(info.value)
    assert info.value.line == 15


def test_missing_cpt_row():
    text = _golden_text().replace("    x=1 y=1 b=1 : 0 1\n", "")
    with pytest.raises(ModelParseError) as info:
        parse_model(text)
    assert "M2: CPT row missing" in str(info.value)


def test_undeclared_variable_points_at_the_token():
    text = ("hfmdp 1\ndiscount 0.9\nvar x 0 1\nsubsystem M\n  internal z\n"
            "  reward dense\n    0 0\n  end\n  cpt dense\n    1 0\n    0 1\n  end\nend\n")
    with pytest.raises(ModelParseError) as info:
        parse_model(text)
    assert (info.value.line, info.value.column) == (5, 12)
    assert "undeclared variable z" in str(info.value)


@pytest.mark.parametrize("snippet, message", [
    ("discount 1.0\n", "discount must lie in [0, 1)"),
    ("discount 0.9\nvar x 0 0\n", "repeats a value"),
    ("discount 0.9\nvar x 0 1\nvar x 0 1\n", "declared twice"),
    ("discount 0.9\nfrobnicate\n", "unknown statement"),
    ("var x 0 1\n", "missing 'discount'"),
    ("discount 0.9\nweights lopsided\n", "unknown weights convention"),
])
def test_statement_errors(snippet, message):
    with pytest.raises(ModelParseError) as info:
        parse_model("hfmdp 1\n" + snippet)
    assert message in str(info.value)


def test_bindings_must_cover_the_class():
    text = _golden_text().replace("subsystem M2\n", "class C\n", 1) + \
        "subsystem M3 class C bind y=y\n"
    with pytest.raises(ModelParseError) as info:
        parse_model(text)
    assert "bindings must cover exactly" in str(info.value)


def test_load_model_reports_missing_files(tmp_path):
    with pytest.raises(ModelParseError) as info:
        load_model(str(tmp_path / "absent.hmdp"))
    assert "cannot read model" in str(info.value)
