"""
Road Network
Straight two-lane highway split into road pieces with ramps
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MAX_PIECE_LENGTH = 600.0


class Lane(str, Enum):
    """Lane label; lateral coordinate 0 is the right lane center"""
    LEFT = "left"
    RIGHT = "right"

    @property
    def other(self) -> "Lane":
        return Lane.RIGHT if self is Lane.LEFT else Lane.LEFT


@dataclass(frozen=True)
class RoadPiece:
    """One road piece covered by a single roadside unit"""
    index: int
    length: float
    has_onramp: bool = False
    has_offramp: bool = False
    start_x: float = 0.0

    @property
    def end_x(self) -> float:
        return self.start_x + self.length

    @property
    def midpoint(self) -> float:
        return self.start_x + self.length / 2.0


@dataclass(frozen=True)
class RoadNetwork:
    """
    Ordered road pieces of the highway plus per-lane speeds

    Coordinates are longitudinal meters from the trip origin. Piece boundaries
    are left-closed / right-open.
    """
    pieces: Tuple[RoadPiece, ...]
    v_max_left: float = 30.0
    v_max_right: float = 20.0
    v_m_left: float = 20.0
    v_m_right: float = 14.0
    lane_count: int = 2
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _ends: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("A road network needs at least one road piece")
        expected_start = 0.0
        for position, piece in enumerate(self.pieces, start=1):
            if piece.index != position:
                raise ValueError(f"Road piece {piece.index} is out of order (expected {position})")
            if not 0.0 < piece.length <= MAX_PIECE_LENGTH:
                raise ValueError(
                    f"Road piece {piece.index} has length {piece.length}; "
                    f"lengths must be in (0, {MAX_PIECE_LENGTH}]"
                )
            if abs(piece.start_x - expected_start) > 1e-9:
                raise ValueError(f"Road piece {piece.index} starts at {piece.start_x}, expected {expected_start}")
            expected_start += piece.length
        starts = np.array([p.start_x for p in self.pieces], dtype=float)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_ends", starts + np.array([p.length for p in self.pieces], dtype=float))

    @property
    def total_length(self) -> float:
        return float(self._ends[-1])

    def v_max(self, lane: Lane) -> float:
        """Speed cap of a lane"""
        return self.v_max_left if lane is Lane.LEFT else self.v_max_right

    def v_m(self, lane: Lane) -> float:
        """Capacity speed of a lane"""
        return self.v_m_left if lane is Lane.LEFT else self.v_m_right

    def _check_range(self, x: float):
        if not 0.0 <= x < self.total_length:
            raise ValueError(f"Position {x} is outside the network [0, {self.total_length})")

    def piece_at(self, x: float) -> int:
        """
        Find the road piece containing a position

        Args:
            x: Longitudinal coordinate in meters

        Returns:
            1-based index of the road piece
        """
        self._check_range(x)
        return int(np.searchsorted(self._starts, x, side="right"))

    def piece(self, index: int) -> RoadPiece:
        return self.pieces[index - 1]

    def next_transition(self, x: float) -> float:
        """
        Smallest piece boundary strictly greater than x

        Args:
            x: Longitudinal coordinate in meters

        Returns:
            Boundary coordinate, or the total length past the last boundary
        """
        self._check_range(x)
        return float(self._ends[np.searchsorted(self._ends, x, side="right")])

    def transition_points(self) -> np.ndarray:
        """Interior boundaries between two road pieces"""
        return self._ends[:-1].copy()

    def crossed_transition(self, x_before: float, x_after: float) -> Optional[float]:
        """Transition point passed while moving from x_before to x_after, if any"""
        if x_before < 0.0 or x_after <= x_before:
            return None
        transitions = self._ends[:-1]
        index = int(np.searchsorted(transitions, x_before, side="right"))
        if index < len(transitions) and transitions[index] <= x_after:
            return float(transitions[index])
        return None

    def onramp_points(self) -> List[float]:
        """Entry points of on-ramps (piece midpoints)"""
        return [p.midpoint for p in self.pieces if p.has_onramp]

    def offramp_points(self) -> List[Tuple[int, float]]:
        """(piece index, exit point) of every off-ramp"""
        return [(p.index, p.midpoint) for p in self.pieces if p.has_offramp]


def make_network(
    lengths: Sequence[float],
    onramps: Sequence[int] = (),
    offramps: Sequence[int] = (),
    **speeds
) -> RoadNetwork:
    """
    Build a network from piece lengths and ramp piece indices

    Args:
        lengths: Piece lengths in meters, in driving order
        onramps: 1-based indices of pieces with an on-ramp
        offramps: 1-based indices of pieces with an off-ramp
        **speeds: Optional v_max_left / v_max_right / v_m_left / v_m_right

    Returns:
        RoadNetwork
    """
    pieces = []
    start = 0.0
    for index, length in enumerate(lengths, start=1):
        pieces.append(RoadPiece(
            index=index,
            length=float(length),
            has_onramp=index in onramps,
            has_offramp=index in offramps,
            start_x=start,
        ))
        start += float(length)
    return RoadNetwork(pieces=tuple(pieces), **speeds)


def build_reference_network(**speeds) -> RoadNetwork:
    """
    The 10.8 km evaluation highway: 20 pieces, on-ramps on pieces 1 and 18,
    off-ramps on pieces 4, 12 and 20
    """
    short_pieces = {1: 400.0, 4: 300.0, 12: 200.0, 18: 300.0}
    lengths = [short_pieces.get(i, 600.0) for i in range(1, 21)]
    return make_network(lengths, onramps=(1, 18), offramps=(4, 12, 20), **speeds)


def parse_network(lines: Sequence[str], source: str = "<network>", **speeds) -> RoadNetwork:
    """
    Build a network from layout lines

    Each non-comment line describes one piece: ``<length> [onramp] [offramp]``.

    Args:
        lines: Layout lines
        source: Name used in error messages
        **speeds: Optional lane speed overrides

    Returns:
        RoadNetwork
    """
    lengths: List[float] = []
    onramps: List[int] = []
    offramps: List[int] = []
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            length = float(tokens[0])
        except ValueError:
            raise ValueError(f"{source}:{line_number}: piece length '{tokens[0]}' is not a number")
        lengths.append(length)
        for flag in tokens[1:]:
            if flag.lower() == "onramp":
                onramps.append(len(lengths))
            elif flag.lower() == "offramp":
                offramps.append(len(lengths))
            else:
                raise ValueError(f"{source}:{line_number}: unknown ramp flag '{flag}'")
    if not lengths:
        raise ValueError(f"{source}: no road pieces defined")
    return make_network(lengths, onramps=onramps, offramps=offramps, **speeds)


def load_network(path: Union[str, Path], **speeds) -> RoadNetwork:
    """Load a network layout file (see parse_network)"""
    network = parse_network(Path(path).read_text().splitlines(), str(path), **speeds)
    logger.info(f"Loaded network with {len(network.pieces)} pieces ({network.total_length:.0f} m) from {path}")
    return network
