"""Shared fixtures-as-functions for the test modules: oracle vectors and strategies."""

from __future__ import annotations

import json
import random
from functools import lru_cache
from pathlib import Path

from hypothesis import strategies as st

from v2xviz.j2735 import (
    ELEV_RANGE,
    HEADING_RANGE,
    INTERSECTION_ID_RANGE,
    LANE_ID_RANGE,
    LANE_WIDTH_RANGE,
    LAT_RANGE,
    LON_RANGE,
    MSG_COUNT_RANGE,
    NODE_OFFSET_RANGE,
    SEC_MARK_RANGE,
    SIGNAL_GROUP_RANGE,
    SPEED_RANGE,
    TIME_MARK_RANGE,
    BsmCore,
    EventState,
    Lane,
    LaneType,
    MapData,
    MessageFrame,
    MovementState,
    NodeXY,
    Position3D,
    Role,
    SpatData,
)

DATA = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def uper_vectors() -> dict:
    return json.loads((DATA / "uper_vectors.json").read_text())


# --------------------------------------------------------------------------
# oracle JSON (asn1tools value notation) -> dataclasses


def bsm_from_json(v: dict) -> BsmCore:
    return BsmCore(
        v["msgCnt"], bytes.fromhex(v["id"]), v["secMark"], v["lat"], v["long"],
        v["elev"], v["speed"], v["heading"], Role(v["role"]),
    )


def spat_from_json(v: dict) -> SpatData:
    return SpatData(
        v["id"],
        v["revision"],
        tuple(MovementState(m["signalGroup"], EventState(m["eventState"]), m["minEndTime"]) for m in v["movements"]),
    )


def map_from_json(v: dict) -> MapData:
    rp = v["refPoint"]
    return MapData(
        v["id"],
        Position3D(rp["lat"], rp["long"], rp["elevation"]),
        v["laneWidth"],
        tuple(
            Lane(l["laneID"], LaneType(l["laneType"]), tuple(NodeXY(n["x"], n["y"]) for n in l["nodes"]))
            for l in v["lanes"]
        ),
    )


_BODY = {"BsmFrame": bsm_from_json, "SpatFrame": spat_from_json, "MapFrame": map_from_json}


def frame_from_vector(vec: dict) -> MessageFrame:
    value = vec["value"]
    return MessageFrame(value["messageId"], _BODY[vec["type"]](value["value"]))


# --------------------------------------------------------------------------
# hypothesis strategies over the whole schema


def ints(bounds: tuple[int, int]) -> st.SearchStrategy[int]:
    return st.integers(*bounds)


bsms = st.builds(
    BsmCore,
    msg_count=ints(MSG_COUNT_RANGE),
    temporary_id=st.binary(min_size=4, max_size=4),
    sec_mark=ints(SEC_MARK_RANGE),
    latitude=ints(LAT_RANGE),
    longitude=ints(LON_RANGE),
    elevation=ints(ELEV_RANGE),
    speed=ints(SPEED_RANGE),
    heading=ints(HEADING_RANGE),
    role=st.sampled_from(Role),
)


@st.composite
def spats(draw) -> SpatData:
    groups = draw(st.lists(ints(SIGNAL_GROUP_RANGE), min_size=1, max_size=16, unique=True))
    return SpatData(
        draw(ints(INTERSECTION_ID_RANGE)),
        draw(ints(MSG_COUNT_RANGE)),
        tuple(
            MovementState(g, draw(st.sampled_from(EventState)), draw(ints(TIME_MARK_RANGE))) for g in groups
        ),
    )


nodes = st.builds(NodeXY, ints(NODE_OFFSET_RANGE), ints(NODE_OFFSET_RANGE))


@st.composite
def maps(draw) -> MapData:
    ids = draw(st.lists(ints(LANE_ID_RANGE), min_size=1, max_size=8, unique=True))
    lanes = tuple(
        Lane(i, draw(st.sampled_from(LaneType)), tuple(draw(st.lists(nodes, min_size=2, max_size=12))))
        for i in ids
    )
    ref = Position3D(draw(ints(LAT_RANGE)), draw(ints(LON_RANGE)), draw(ints(ELEV_RANGE)))
    return MapData(draw(ints(INTERSECTION_ID_RANGE)), ref, draw(ints(LANE_WIDTH_RANGE)), lanes)


frames = st.one_of(bsms, spats(), maps()).map(MessageFrame.wrap)


# --------------------------------------------------------------------------
# plain seeded generator, for bulk runs where hypothesis overhead is too high


def _edge(rng: random.Random, bounds: tuple[int, int]) -> int:
    lo, hi = bounds
    r = rng.random()
    if r < 0.05:
        return lo
    if r < 0.1:
        return hi
    return rng.randint(lo, hi)


def random_frame(rng: random.Random) -> MessageFrame:
    kind = rng.randrange(3)
    if kind == 0:
        body = BsmCore(
            _edge(rng, MSG_COUNT_RANGE), rng.randbytes(4), _edge(rng, SEC_MARK_RANGE),
            _edge(rng, LAT_RANGE), _edge(rng, LON_RANGE), _edge(rng, ELEV_RANGE),
            _edge(rng, SPEED_RANGE), _edge(rng, HEADING_RANGE), rng.choice(list(Role)),
        )
    elif kind == 1:
        groups = rng.sample(range(1, 256), rng.randint(1, 8))
        body = SpatData(
            _edge(rng, INTERSECTION_ID_RANGE),
            _edge(rng, MSG_COUNT_RANGE),
            tuple(MovementState(g, rng.choice(list(EventState)), _edge(rng, TIME_MARK_RANGE)) for g in groups),
        )
    else:
        lane_ids = rng.sample(range(256), rng.randint(1, 6))
        body = MapData(
            _edge(rng, INTERSECTION_ID_RANGE),
            Position3D(_edge(rng, LAT_RANGE), _edge(rng, LON_RANGE), _edge(rng, ELEV_RANGE)),
            _edge(rng, LANE_WIDTH_RANGE),
            tuple(
                Lane(
                    i,
                    rng.choice(list(LaneType)),
                    tuple(
                        NodeXY(_edge(rng, NODE_OFFSET_RANGE), _edge(rng, NODE_OFFSET_RANGE))
                        for _ in range(rng.randint(2, 10))
                    ),
                )
                for i in lane_ids
            ),
        )
    return MessageFrame.wrap(body)


def golden_scenes():
    """The scene builders used to regenerate the golden files."""
    import importlib.util

    path = Path(__file__).resolve().parent.parent / "tools" / "gen_goldens.py"
    spec = importlib.util.spec_from_file_location("gen_goldens", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod
