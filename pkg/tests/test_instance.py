import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossdock.instance import (
    Instance,
    InstanceError,
    LayoutSpec,
    ParseError,
    door_positions,
    figure1_instance,
    figure1_layout,
    generate_from_layout,
    generate_random,
    read_instance,
    write_instance,
)


def test_smallest_random_instance():
    inst = generate_random(1, 1, 1, 1, 10.0, 5, seed=7)
    assert inst.distance.shape == (1, 1)
    assert inst.flow.shape == (1, 1)


def test_random_is_deterministic():
    assert generate_random(3, 3, 2, 2, 10.0, 5, seed=42) == generate_random(3, 3, 2, 2, 10.0, 5, seed=42)
    assert generate_random(3, 3, 2, 2, 10.0, 5, seed=42) != generate_random(3, 3, 2, 2, 10.0, 5, seed=43)


def test_random_ranges():
    inst = generate_random(6, 7, 4, 5, 10.0, 3, seed=1)
    assert inst.distance.min() >= 1.0 and inst.distance.max() <= 10.0
    assert inst.flow.min() >= 0 and inst.flow.max() <= 3
    assert inst.flow.dtype == np.int64


@pytest.mark.parametrize("dims, message", [
    ((2, 3, 3, 1), "I ≥ M violated"),
    ((3, 2, 1, 3), "J ≥ N violated"),
])
def test_dimension_violation(dims, message):
    with pytest.raises(InstanceError, match=message):
        generate_random(*dims, 10.0, 5, seed=0)


def test_instance_is_read_only():
    inst = generate_random(2, 2, 1, 1, seed=0)
    with pytest.raises(ValueError):
        inst.distance[0, 0] = 99.0


def test_instance_rejects_bad_data():
    with pytest.raises(InstanceError):
        Instance(1, 1, 1, 1, [[-1.0]], [[1]])
    with pytest.raises(InstanceError, match="integer"):
        Instance(1, 1, 1, 1, [[1.0]], [[2.5]])
    with pytest.raises(InstanceError):
        Instance(2, 2, 1, 1, [[1.0, 2.0]], [[1]])


def test_degenerate_flag():
    assert Instance(1, 1, 1, 1, [[3.0]], [[0]]).degenerate
    assert not Instance(1, 1, 1, 1, [[3.0]], [[1]]).degenerate


# -- layout geometry ---------------------------------------------------------

def test_figure1_dimensions():
    inst = figure1_instance()
    assert (inst.I, inst.J) == (6, 9)
    assert figure1_layout().total_doors == 16


def test_adjacent_same_wall_doors_are_one_pitch_apart():
    layout = LayoutSpec(inbound_doors=2, outbound_doors=2, dock_width=4.0, door_pitch=1.5,
                        inbound_wall="south", outbound_wall="south", open_wall="south")
    inst = generate_from_layout(layout, 1, 1, flow_seed=0)
    # inbound door 1 sits at slot 1, outbound door 0 at slot 2 on the same wall
    assert inst.distance[1, 0] == pytest.approx(1.5)


def test_opposite_doors_are_dock_width_apart():
    layout = LayoutSpec(inbound_doors=4, outbound_doors=4, dock_width=3.0, door_pitch=1.0)
    inst = generate_from_layout(layout, 2, 2, flow_seed=0)
    # hand computation: door k at x = k + 0.5 on both walls, walls 3 apart
    for k in range(4):
        assert inst.distance[k, k] == 3.0
    assert inst.distance[0, 3] == 3.0 + 3.0


def test_open_door_takes_a_slot():
    pos = door_positions(figure1_layout())
    assert pos["open"].shape == (1, 2)
    assert pos["open"][0, 0] == 9.5  # tenth slot on the north wall


def test_layout_needs_enough_doors():
    with pytest.raises(InstanceError):
        generate_from_layout(LayoutSpec(2, 2), 3, 1)
    with pytest.raises(InstanceError):
        generate_from_layout(LayoutSpec(2, 2), 1, 3)


def test_short_wall_capacity():
    with pytest.raises(InstanceError):
        door_positions(LayoutSpec(5, 1, dock_width=3.0, inbound_wall="west"))


layouts = st.builds(
    LayoutSpec,
    inbound_doors=st.integers(1, 6),
    outbound_doors=st.integers(1, 6),
    open_doors=st.integers(0, 2),
    dock_width=st.floats(6.0, 20.0),
    door_pitch=st.floats(0.5, 1.0),
    inbound_wall=st.sampled_from(["south", "north", "west", "east"]),
    outbound_wall=st.sampled_from(["south", "north", "west", "east"]),
    open_wall=st.sampled_from(["south", "north"]),
)


@settings(max_examples=60, deadline=None)
@given(layouts)
def test_layout_distances_satisfy_triangle_inequality(layout):
    short_wall = {w: 0 for w in ("west", "east")}
    for wall, n in ((layout.inbound_wall, layout.inbound_doors),
                    (layout.outbound_wall, layout.outbound_doors),
                    (layout.open_wall, layout.open_doors)):
        if wall in short_wall:
            short_wall[wall] += n
    if max(short_wall.values()) * layout.door_pitch > layout.dock_width:
        with pytest.raises(InstanceError, match="do not fit"):
            door_positions(layout)
        return
    pos = door_positions(layout)
    pts = np.vstack([pos["inbound"], pos["outbound"]])
    dist = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    # d(a,c) <= d(a,b) + d(b,c) for every triple
    assert np.all(dist[:, None, :] <= dist[:, :, None] + dist[None, :, :] + 1e-9)
    inst = generate_from_layout(layout, 1, 1, flow_seed=0)
    assert np.all(inst.distance >= 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(1.0, 10.0))
def test_wall_swap_symmetry(n, width):
    a = LayoutSpec(n, n, dock_width=width, inbound_wall="south", outbound_wall="north", open_wall="north")
    b = LayoutSpec(n, n, dock_width=width, inbound_wall="north", outbound_wall="south", open_wall="south")
    da = generate_from_layout(a, 1, 1).distance
    db = generate_from_layout(b, 1, 1).distance
    assert np.array_equal(da, db)
    assert np.array_equal(da, da.T)


# -- file format -------------------------------------------------------------

def test_minimal_file():
    inst = read_instance("CDAP 1\n1 1 1 1\n5.0\n3\n")
    assert inst.distance[0, 0] == 5.0
    assert inst.flow[0, 0] == 3


def test_comments_and_scientific_notation():
    text = "# header comment\nCDAP 1  # magic\n\n2 1 1 1\n1e1\n2.5E-1 # row two\n7\n"
    inst = read_instance(io.StringIO(text))
    assert inst.distance[:, 0].tolist() == [10.0, 0.25]


@pytest.mark.parametrize("seed", [42, 0, 7])
def test_round_trip(seed):
    inst = generate_random(4, 5, 3, 2, 10.0, 5, seed=seed)
    text = write_instance(inst)
    back = read_instance(text)
    assert back == inst
    assert write_instance(back) == text


def test_write_to_stream():
    buf = io.StringIO()
    inst = generate_random(2, 2, 1, 1, seed=0)
    write_instance(inst, buf)
    assert buf.getvalue() == write_instance(inst)


@pytest.mark.parametrize("text, fragment, lineno", [
    ("CDAP 1\n1 1 1 1\n5.0\n2.5\n", "flow must be integer", 4),
    ("CDAQ 1\n1 1 1 1\n5.0\n3\n", "bad magic", 1),
    ("CDAP 2\n1 1 1 1\n5.0\n3\n", "unsupported header", 1),
    ("CDAP 1\n1 1 1\n5.0\n3\n", "four integers", 2),
    ("CDAP 1\n1 2 1 1\n5.0\n3\n", "expected 2", 3),
    ("CDAP 1\n1 1 1 1\n-5.0\n3\n", "non-negative", 3),
    ("CDAP 1\n1 1 1 1\n5.0\n-3\n", "non-negative", 4),
    ("CDAP 1\n1 1 2 1\n5.0\n3\n", "I ≥ M", 2),
    ("CDAP 1\n1 1 1 1\n5.0\n", "end of file", 0),
    ("CDAP 1\n1 1 1 1\n5.0\n3\n4\n", "trailing", 5),
    ("CDAP 1\n1 1 1 1\nfive\n3\n", "not a real", 3),
])
def test_parse_errors(text, fragment, lineno):
    with pytest.raises(ParseError, match=fragment) as info:
        read_instance(text)
    assert info.value.lineno == lineno
