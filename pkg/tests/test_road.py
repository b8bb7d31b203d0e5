import pytest

from core.road import Lane, RoadPiece, RoadNetwork, load_network, make_network, parse_network


def test_reference_network_layout(reference_network):
    assert reference_network.total_length == pytest.approx(10800.0)
    assert len(reference_network.pieces) == 20
    assert reference_network.piece(1).length == 400.0
    assert reference_network.piece(2).start_x == 400.0
    assert [p.index for p in reference_network.pieces if p.has_onramp] == [1, 18]
    assert [p.index for p in reference_network.pieces if p.has_offramp] == [4, 12, 20]
    assert {reference_network.piece(i).length for i in (4, 12, 18)} == {300.0, 200.0}


@pytest.mark.parametrize("x, expected", [(0.0, 1), (399.999, 1), (400.0, 2), (10799.0, 20)])
def test_piece_at(reference_network, x, expected):
    assert reference_network.piece_at(x) == expected


@pytest.mark.parametrize("x", [-0.1, 10800.0, 20000.0])
def test_piece_at_out_of_range(reference_network, x):
    with pytest.raises(ValueError):
        reference_network.piece_at(x)


@pytest.mark.parametrize("x, expected", [(0.0, 400.0), (400.0, 1000.0), (10750.0, 10800.0)])
def test_next_transition(reference_network, x, expected):
    assert reference_network.next_transition(x) == pytest.approx(expected)


def test_piece_contains_its_positions(reference_network):
    for x in range(0, 10800, 37):
        piece = reference_network.piece(reference_network.piece_at(float(x)))
        assert piece.start_x <= x < piece.end_x


def test_ramp_points_are_piece_midpoints(reference_network):
    assert reference_network.onramp_points() == [200.0, 9450.0]
    assert reference_network.offramp_points() == [(4, 1750.0), (12, 6200.0), (20, 10500.0)]


@pytest.mark.parametrize("before, after, expected", [
    (390.0, 410.0, 400.0),
    (399.0, 400.0, 400.0),
    (401.0, 420.0, None),
    (-5.0, 5.0, None),
    (410.0, 390.0, None),
])
def test_crossed_transition(reference_network, before, after, expected):
    assert reference_network.crossed_transition(before, after) == expected


def test_final_boundary_is_not_a_transition(reference_network):
    assert reference_network.crossed_transition(10790.0, 10810.0) is None
    assert list(reference_network.transition_points())[-1] == pytest.approx(10200.0)


def test_piece_longer_than_600_is_rejected():
    with pytest.raises(ValueError, match="lengths must be"):
        make_network([601.0])


def test_pieces_must_be_contiguous():
    with pytest.raises(ValueError):
        RoadNetwork(pieces=(RoadPiece(1, 100.0, start_x=0.0), RoadPiece(2, 100.0, start_x=150.0)))


def test_lane_speeds(reference_network):
    assert reference_network.v_max(Lane.LEFT) == 30.0
    assert reference_network.v_max(Lane.RIGHT) == 20.0
    assert reference_network.v_m(Lane.RIGHT) == 14.0
    assert Lane.LEFT.other is Lane.RIGHT


def test_parse_network():
    network = parse_network(["# layout", "300 onramp", "", "500", "200 offramp  # exit"])
    assert network.total_length == 1000.0
    assert network.onramp_points() == [150.0]
    assert network.offramp_points() == [(3, 900.0)]


@pytest.mark.parametrize("lines, message", [
    (["300 bridge"], "unknown ramp flag"),
    (["abc"], "not a number"),
    (["# nothing"], "no road pieces"),
])
def test_parse_network_errors(lines, message):
    with pytest.raises(ValueError, match=message):
        parse_network(lines)


def test_load_network_file(tmp_path):
    path = tmp_path / "layout.txt"
    path.write_text("400 onramp\n600\n300 offramp\n")
    network = load_network(path, v_max_left=25.0)
    assert network.total_length == 1300.0
    assert network.v_max(Lane.LEFT) == 25.0
