import pytest
from hypothesis import given, strategies as st

from cascademap.model_ir import (
    BUNDLED_MODELS, AggregationLayer, DenseLayer, ModelError, ModelSpec, build_model,
    bundled_model, parse_model, serialize_model, validate_shapes,
)

JSC_M = """\
name = JSC-M
input = 64x16
dense 64 bias relu shift=8
dense 32 bias relu
shift = 9
dense 32 bias relu
dense 32 bias relu
dense 5 bias
"""

DEEPSETS_32 = """\
name = Deepsets-32
input = 32x21   # set of 32 particles, 21 features
dense 32 bias relu
dense 32 bias relu
dense 32 bias relu
aggregate mean
dense 32 bias relu
dense 10 bias
"""


def test_parse_jsc_m():
    m = parse_model(JSC_M)
    assert m.name == "JSC-M"
    assert len(m) == 5
    assert all(l.M == 64 for l in m.layers)
    assert [l.N for l in m.layers] == [64, 32, 32, 32, 5]
    assert m.layers[1].shift == 9
    assert m.layers[-1].has_bias and not m.layers[-1].has_relu


def test_parse_deepsets():
    m = parse_model(DEEPSETS_32)
    assert len(m) == 6
    agg = m.layers[3]
    assert agg.kind == "aggregate" and agg.out_shape == (1, 32)
    assert m.aggregation_index == 3
    assert m.output_shape == (1, 10)


def test_minimal_layer():
    m = parse_model("name = id\ninput = 8x8\ndense 8\n")
    assert m.layers == (DenseLayer(8, 8, 8),)


def test_validate_shapes_jsc_xl():
    got = validate_shapes(bundled_model("jsc-xl"))
    assert got == [(64, 16, 128), (64, 128, 64), (64, 64, 64), (64, 64, 64), (64, 64, 5)]


def test_validate_shapes_deepsets():
    got = validate_shapes(bundled_model("deepsets-32"))
    assert [s[0] for s in got] == [32, 32, 32, 1, 1]


def test_empty_layer_list():
    with pytest.raises(ModelError):
        ModelSpec("x", (4, 4), ())
    with pytest.raises(ModelError, match="no layers"):
        parse_model("name = x\ninput = 4x4\n")


def test_broken_chain_names_layers():
    with pytest.raises(ModelError, match="layer 0.*layer 1"):
        ModelSpec("x", (8, 8), (DenseLayer(8, 8, 16), DenseLayer(8, 32, 4)))


@pytest.mark.parametrize("text, line", [
    ("name = x\ninput = 8x8\ndense 8 shift=32\n", 3),
    ("name = x\ninput = 8by8\n", 2),
    ("name = x\ninput = 8x8\ndense 8\nconv 3\n", 4),
    ("name = x\ninput = 8x8\ndense 8 softmax\n", 3),
    ("name = x\ninput = 8x8\nshift = 2\n", 3),
    ("name = x\ninput = 8x8\ndense 8\naggregate\naggregate\n", 5),
    ("name = x\ninput = 8x8\naggregate\n", 3),
    ("name = x\ninput = 8x8\ndense\n", 3),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ModelError) as info:
        parse_model(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_missing_header():
    with pytest.raises(ModelError, match="name"):
        parse_model("input = 8x8\ndense 8\n")
    with pytest.raises(ModelError, match="input"):
        parse_model("name = x\ndense 8\n")


def test_layer_field_checks():
    with pytest.raises(ModelError):
        DenseLayer(0, 4, 4)
    with pytest.raises(ModelError):
        DenseLayer(4, 4, 4, shift=-1)
    with pytest.raises(ModelError):
        AggregationLayer(4, 4, "max")


def test_two_aggregations_rejected():
    with pytest.raises(ModelError, match="at most one"):
        build_model("x", (8, 8), [8, "aggregate", 8, "aggregate"])


def test_aggregation_sets_rows_to_one():
    m = build_model("x", (16, 8), [8, "aggregate", 4])
    assert m.layers[2].M == 1
    assert m.quant.shifts == (0, 0, 0)


@pytest.mark.parametrize("name", BUNDLED_MODELS)
def test_bundled_models_parse(name):
    m = bundled_model(name)
    assert parse_model(serialize_model(m)) == m


@st.composite
def models(draw):
    rows = draw(st.integers(1, 64))
    cols = draw(st.integers(1, 64))
    n = draw(st.integers(1, 6))
    agg_at = draw(st.one_of(st.none(), st.integers(1, n)))
    spec = []
    for i in range(n):
        if agg_at == i and i > 0:
            spec.append({"kind": "aggregate", "reduce_kind": draw(st.sampled_from(["sum", "mean"])),
                         "shift": draw(st.integers(0, 31))})
        spec.append({"N": draw(st.integers(1, 64)), "bias": draw(st.booleans()),
                     "relu": draw(st.booleans()), "shift": draw(st.integers(0, 31))})
    return build_model(draw(st.sampled_from(["m", "net-1", "Deep Sets"])), (rows, cols), spec)


@given(models())
def test_serialize_roundtrip(m):
    assert parse_model(serialize_model(m)) == m


@given(models())
def test_chain_holds(m):
    rows, cols = m.input_shape
    for layer in m.layers:
        assert layer.M == rows
        assert (layer.K if layer.kind == "dense" else layer.F) == cols
        rows, cols = layer.out_shape
    assert len(validate_shapes(m)) == len(m.dense_layers)
