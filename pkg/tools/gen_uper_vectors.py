#!/usr/bin/env python3
"""Generate reference UPER vectors with asn1tools for the frozen subset schema.

Run once; the output is checked into tests/data/uper_vectors.json and the test
suite compares v2xviz's own encoder against it without needing asn1tools.

    python tools/gen_uper_vectors.py [--count 150] [--seed 2735]
"""

import argparse
import json
import random
from pathlib import Path

import asn1tools

ROOT = Path(__file__).resolve().parent.parent
SCHEMA = ROOT / "src" / "v2xviz" / "v2x_subset.asn"
OUT = ROOT / "tests" / "data" / "uper_vectors.json"

# Exercises primitives that the frozen schema itself does not use.
AUX_SCHEMA = """
Aux DEFINITIONS AUTOMATIC TAGS ::= BEGIN
Opt ::= SEQUENCE {
  a INTEGER (0..7) OPTIONAL,
  b INTEGER (0..1000),
  c OCTET STRING (SIZE(2)) OPTIONAL
}
Unbounded ::= SEQUENCE OF INTEGER (0..255)
Fixed ::= SEQUENCE (SIZE(3)) OF INTEGER (0..3)
Single ::= SEQUENCE { a INTEGER (5..5), b INTEGER (0..1) }
END
"""

PHASES = [
    "stop-And-Remain",
    "permissive-Movement-Allowed",
    "protected-Movement-Allowed",
    "permissive-clearance",
    "protected-clearance",
    "dark",
]
ROLES = ["vehicle", "pedestrian", "motorcycle", "emergency"]


def pick(rng, lo, hi):
    r = rng.random()
    if r < 0.1:
        return lo
    if r < 0.2:
        return hi
    return rng.randint(lo, hi)


def rand_bsm(rng):
    return {
        "msgCnt": pick(rng, 0, 127),
        "id": bytes(rng.getrandbits(8) for _ in range(4)),
        "secMark": pick(rng, 0, 65535),
        "lat": pick(rng, -900000000, 900000001),
        "long": pick(rng, -1799999999, 1800000001),
        "elev": pick(rng, -4096, 61439),
        "speed": pick(rng, 0, 8191),
        "heading": pick(rng, 0, 28800),
        "role": rng.choice(ROLES),
    }


def rand_spat(rng):
    n = rng.choice([1, 1, 2, 3, rng.randint(1, 12)])
    groups = rng.sample(range(1, 256), n)
    return {
        "id": pick(rng, 0, 65535),
        "revision": pick(rng, 0, 127),
        "movements": [
            {"signalGroup": g, "eventState": rng.choice(PHASES), "minEndTime": pick(rng, 0, 36001)}
            for g in groups
        ],
    }


def rand_map(rng):
    n = rng.choice([1, 2, 5, rng.randint(1, 8)])
    ids = rng.sample(range(0, 256), n)
    lanes = []
    for lane_id in ids:
        k = rng.choice([2, 2, 3, rng.randint(2, 10)])
        lanes.append(
            {
                "laneID": lane_id,
                "laneType": rng.choice(["vehicle", "crosswalk"]),
                "nodes": [{"x": pick(rng, -32768, 32767), "y": pick(rng, -32768, 32767)} for _ in range(k)],
            }
        )
    return {
        "id": pick(rng, 0, 65535),
        "refPoint": {
            "lat": pick(rng, -900000000, 900000001),
            "long": pick(rng, -1799999999, 1800000001),
            "elevation": pick(rng, -4096, 61439),
        },
        "laneWidth": pick(rng, 0, 32767),
        "lanes": lanes,
    }


def jsonable(value):
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [jsonable(v) for v in value]
    return value


def fixed_cases():
    return [
        (
            "BsmFrame",
            {
                "messageId": 20,
                "value": {
                    "msgCnt": 0,
                    "id": b"\x00\x00\x00\x00",
                    "secMark": 0,
                    "lat": 900000001,
                    "long": 1800000001,
                    "elev": -4096,
                    "speed": 8191,
                    "heading": 28800,
                    "role": "vehicle",
                },
            },
        ),
        (
            "SpatFrame",
            {
                "messageId": 19,
                "value": {
                    "id": 1201,
                    "revision": 3,
                    "movements": [
                        {"signalGroup": 1, "eventState": "stop-And-Remain", "minEndTime": 0},
                        {"signalGroup": 2, "eventState": "protected-Movement-Allowed", "minEndTime": 50},
                    ],
                },
            },
        ),
        (
            "MapFrame",
            {
                "messageId": 18,
                "value": {
                    "id": 1201,
                    "refPoint": {"lat": 399999000, "long": -830000000, "elevation": 2500},
                    "laneWidth": 366,
                    "lanes": [
                        {"laneID": 1, "laneType": "vehicle", "nodes": [{"x": 0, "y": 0}, {"x": 100, "y": -100}]}
                    ],
                },
            },
        ),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=150, help="random values per message type")
    ap.add_argument("--seed", type=int, default=2735)
    args = ap.parse_args()

    spec = asn1tools.compile_files(str(SCHEMA), "uper")
    aux = asn1tools.compile_string(AUX_SCHEMA, "uper")
    rng = random.Random(args.seed)

    cases = fixed_cases()
    for _ in range(args.count):
        cases.append(("BsmFrame", {"messageId": 20, "value": rand_bsm(rng)}))
        cases.append(("SpatFrame", {"messageId": 19, "value": rand_spat(rng)}))
        cases.append(("MapFrame", {"messageId": 18, "value": rand_map(rng)}))

    frames = []
    for type_name, value in cases:
        encoded = spec.encode(type_name, value)
        assert spec.decode(type_name, encoded) == value
        frames.append({"type": type_name, "value": jsonable(value), "hex": encoded.hex()})

    aux_cases = [
        ("Opt", {"b": 0}),
        ("Opt", {"a": 5, "b": 1000}),
        ("Opt", {"b": 17, "c": b"\xab\xcd"}),
        ("Opt", {"a": 7, "b": 999, "c": b"\x00\x01"}),
        ("Unbounded", []),
        ("Unbounded", [1, 2, 3]),
        ("Unbounded", list(range(127))),
        ("Unbounded", [i % 256 for i in range(128)]),
        ("Unbounded", [i % 256 for i in range(1000)]),
        ("Fixed", [0, 3, 2]),
        ("Single", {"a": 5, "b": 1}),
    ]
    primitives = [
        {"type": t, "value": jsonable(v), "hex": aux.encode(t, v).hex()} for t, v in aux_cases
    ]

    OUT.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "generator": f"asn1tools {asn1tools.__version__}",
        "schema": SCHEMA.name,
        "seed": args.seed,
        "frames": frames,
        "primitives": primitives,
    }
    OUT.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"wrote {len(frames)} frame vectors and {len(primitives)} primitive vectors to {OUT}")


if __name__ == "__main__":
    main()
