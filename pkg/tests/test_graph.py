"""Structural graph checks: validation, shape inference, I/O discovery."""
import numpy as np
import pytest

from modelgraft.graph import (
    PADDING_SAME,
    PADDING_VALID,
    Graph,
    GraphBuilder,
    GraphError,
    IoSignature,
    MultipleInputs,
    MultipleOutputs,
    NoInput,
    NoOutput,
    Node,
    Op,
    ShapeMismatch,
    conv2d_out_hw,
    find_io,
    infer_shapes,
    topo_order,
    validate,
)
from modelgraft.tensor import DType, Tensor


def relu_chain():
    b = GraphBuilder()
    b.placeholder("x", (4,))
    b.add("r", Op.ReLU, ("x",))
    b.mark_output("r")
    return b.finish()


def test_validate_clean_chain_is_empty():
    g = relu_chain()
    assert validate(g) == []


def test_validate_two_node_cycle():
    g = Graph(
        nodes=[
            Node("A", Op.ReLU, inputs=((1, 0),)),
            Node("B", Op.ReLU, inputs=((0, 0),)),
        ],
        outputs=[],
    )
    bad = validate(g)
    assert len(bad) == 1
    v = bad[0]
    assert v.kind == "CycleDetected"
    assert "A" in v.detail and "B" in v.detail


def test_validate_arity_mismatch():
    g = Graph(
        nodes=[
            Node("x", Op.Placeholder, attrs={"dtype": 0, "shape": (4,)}),
            Node("r", Op.ReLU, inputs=((0, 0), (0, 0))),
        ],
        outputs=[1],
    )
    kinds = [v.kind for v in validate(g)]
    assert kinds == ["ArityMismatch"]


def test_validate_duplicate_names():
    g = Graph(
        nodes=[
            Node("x", Op.Placeholder, attrs={"dtype": 0, "shape": (4,)}),
            Node("x", Op.ReLU, inputs=((0, 0),)),
        ],
        outputs=[1],
    )
    assert "DuplicateName" in [v.kind for v in validate(g)]


def test_validate_dangling_node_and_nonsink_output():
    # const feeds nothing and is not declared; declared output feeds the relu
    g = Graph(
        nodes=[
            Node("x", Op.Placeholder, attrs={"dtype": 0, "shape": (4,)}),
            Node("r", Op.ReLU, inputs=((0, 0),)),
            Node("c", Op.Const, const_value=Tensor.f32([1.0])),
        ],
        outputs=[0],
    )
    kinds = {v.kind for v in validate(g)}
    assert "DanglingNode" in kinds
    assert "NonSinkOutput" in kinds


def test_validate_missing_const_and_missing_attr():
    g = Graph(
        nodes=[
            Node("c", Op.Const),
            Node("x", Op.Placeholder, attrs={"dtype": 0}),
        ],
        outputs=[0, 1],
    )
    kinds = {v.kind for v in validate(g)}
    assert "MissingConst" in kinds
    assert "MissingAttr" in kinds


def test_validate_dangling_edge():
    g = Graph(nodes=[Node("r", Op.ReLU, inputs=((7, 0),))], outputs=[0])
    assert "DanglingEdge" in {v.kind for v in validate(g)}


def test_empty_graph_is_valid():
    assert validate(Graph()) == []


def test_builder_rejects_unknown_input():
    b = GraphBuilder()
    with pytest.raises(GraphError):
        b.add("r", Op.ReLU, ("ghost",))


def test_builder_rejects_duplicate_name():
    b = GraphBuilder()
    b.placeholder("x", (1,))
    with pytest.raises(GraphError):
        b.placeholder("x", (1,))


def test_topo_order_lexicographic_tie_break():
    g = Graph(
        nodes=[
            Node("zz", Op.Placeholder, attrs={"dtype": 0, "shape": (1,)}),
            Node("aa", Op.Placeholder, attrs={"dtype": 0, "shape": (1,)}),
            Node("mid", Op.Add, inputs=((0, 0), (1, 0))),
        ],
        outputs=[2],
    )
    order = topo_order(g)
    assert [g.nodes[i].name for i in order] == ["aa", "zz", "mid"]


def test_conv2d_out_hw_same_padding_ceil():
    assert conv2d_out_hw(160, 160, 3, 3, 2, 2, PADDING_SAME) == (80, 80)
    assert conv2d_out_hw(5, 5, 3, 3, 2, 2, PADDING_SAME) == (3, 3)
    assert conv2d_out_hw(4, 4, 3, 3, 1, 1, PADDING_VALID) == (2, 2)


def conv_graph(in_hw=160, filters=16, stride=2, padding=PADDING_SAME):
    rng = np.random.default_rng(0)
    b = GraphBuilder()
    b.placeholder("img", (in_hw, in_hw, 3))
    b.const("w", Tensor.f32(rng.normal(size=(3, 3, 3, filters))))
    b.const("bias", Tensor.f32(np.zeros(filters)))
    b.add("conv", Op.Conv2D, ("img", "w", "bias"),
          attrs={"strides": (stride, stride), "padding": padding})
    b.mark_output("conv")
    return b.finish()


def test_infer_shapes_conv_same_padding():
    shapes = infer_shapes(conv_graph())
    assert shapes["conv"] == (80, 80, 16)


def test_infer_shapes_global_max_pool_and_reshape():
    b = GraphBuilder()
    b.placeholder("x", (7, 7, 32))
    b.add("gmp", Op.GlobalMaxPool, ("x",))
    b.add("flat", Op.Reshape, ("gmp",), attrs={"shape": (32,)})
    b.mark_output("flat")
    shapes = infer_shapes(b.finish())
    assert shapes["gmp"] == (1, 1, 32)
    assert shapes["flat"] == (32,)


def test_infer_shapes_input_override():
    g = conv_graph()
    shapes = infer_shapes(g, input_shape=(64, 64, 3))
    assert shapes["conv"] == (32, 32, 16)


def test_infer_shapes_dense_inner_mismatch():
    b = GraphBuilder()
    b.placeholder("x", (10,))
    b.const("w", Tensor.f32(np.zeros((8, 5))))
    b.const("bias", Tensor.f32(np.zeros(5)))
    b.add("fc", Op.Dense, ("x", "w", "bias"))
    b.mark_output("fc")
    with pytest.raises(ShapeMismatch):
        infer_shapes(b.finish())


def test_infer_shapes_add_requires_equal_shapes():
    b = GraphBuilder()
    b.placeholder("x", (4,))
    b.const("c", Tensor.f32(np.zeros(3)))
    b.add("s", Op.Add, ("x", "c"))
    b.mark_output("s")
    with pytest.raises(ShapeMismatch):
        infer_shapes(b.finish())


def toy_classifier():
    rng = np.random.default_rng(1)
    b = GraphBuilder()
    b.placeholder("image", (8, 8, 3))
    b.const("cw", Tensor.f32(rng.normal(size=(3, 3, 3, 4))))
    b.const("cb", Tensor.f32(np.zeros(4)))
    b.add("conv", Op.Conv2D, ("image", "cw", "cb"),
          attrs={"strides": (2, 2), "padding": PADDING_SAME})
    b.add("flat", Op.Reshape, ("conv",), attrs={"shape": (64,)})
    b.const("dw", Tensor.f32(rng.normal(size=(64, 10))))
    b.const("db", Tensor.f32(np.zeros(10)))
    b.add("fc", Op.Dense, ("flat", "dw", "db"))
    b.add("probs", Op.Softmax, ("fc",))
    b.mark_output("probs")
    return b.finish()


def test_find_io_toy_classifier():
    sig = find_io(toy_classifier())
    assert isinstance(sig, IoSignature)
    assert sig.input_name == "image"
    assert sig.input_shape == (8, 8, 3)
    assert sig.input_dtype == DType.F32
    assert sig.output_name == "probs"
    assert sig.output_shape == (10,)


def test_find_io_two_placeholders():
    g = Graph(
        nodes=[
            Node("a", Op.Placeholder, attrs={"dtype": 0, "shape": (1,)}),
            Node("b", Op.Placeholder, attrs={"dtype": 0, "shape": (1,)}),
            Node("s", Op.Add, inputs=((0, 0), (1, 0))),
        ],
        outputs=[2],
    )
    with pytest.raises(MultipleInputs):
        find_io(g)


def test_find_io_lone_const_has_no_input():
    g = Graph(nodes=[Node("c", Op.Const, const_value=Tensor.f32([3.0]))], outputs=[0])
    with pytest.raises(NoInput):
        find_io(g)


def test_find_io_no_output():
    g = Graph(nodes=[Node("x", Op.Placeholder, attrs={"dtype": 0, "shape": (1,)})], outputs=[])
    with pytest.raises(NoOutput):
        find_io(g)


def test_find_io_multiple_outputs():
    g = Graph(
        nodes=[
            Node("x", Op.Placeholder, attrs={"dtype": 0, "shape": (1,)}),
            Node("r", Op.ReLU, inputs=((0, 0),)),
            Node("s", Op.Sigmoid, inputs=((0, 0),)),
        ],
        outputs=[1, 2],
    )
    with pytest.raises(MultipleOutputs):
        find_io(g)


def test_tensor_shape_data_agreement():
    with pytest.raises(ValueError):
        Tensor(DType.F32, (3,), np.zeros(4, dtype=np.float32))
    with pytest.raises(ValueError):
        Tensor(DType.F32, (2, 2, 2, 2, 2), np.zeros(32, dtype=np.float32))
    t = Tensor.f32([[1, 2], [3, 4]])
    assert t.shape == (2, 2)
    assert t.array[1, 0] == 3.0
