import pytest
from hypothesis import given
from hypothesis import strategies as st

from support import uper_vectors
from v2xviz.uper import BitReader, BitWriter, EndOfData, bits_for_range


def encode_aux(kind: str, value) -> bytes:
    w = BitWriter()
    if kind == "Opt":
        w.write_presence(["a" in value, "c" in value])
        if "a" in value:
            w.write_constrained(value["a"], 0, 7)
        w.write_constrained(value["b"], 0, 1000)
        if "c" in value:
            w.write_octets(bytes.fromhex(value["c"]))
    elif kind == "Unbounded":
        w.write_count(len(value), 0, None)
        for v in value:
            w.write_constrained(v, 0, 255)
    elif kind == "Fixed":
        w.write_count(len(value), 3, 3)
        for v in value:
            w.write_constrained(v, 0, 3)
    elif kind == "Single":
        w.write_constrained(value["a"], 5, 5)
        w.write_constrained(value["b"], 0, 1)
    return w.to_bytes()


def decode_aux(kind: str, data: bytes):
    r = BitReader(data)
    if kind == "Opt":
        has_a, has_c = r.read_presence(2)
        out = {}
        if has_a:
            out["a"] = r.read_constrained(0, 7)
        out["b"] = r.read_constrained(0, 1000)
        if has_c:
            out["c"] = r.read_octets(2).hex()
        return out
    if kind == "Unbounded":
        return [r.read_constrained(0, 255) for _ in range(r.read_count(0, None))]
    if kind == "Fixed":
        return [r.read_constrained(0, 3) for _ in range(r.read_count(3, 3))]
    return {"a": r.read_constrained(5, 5), "b": r.read_constrained(0, 1)}


PRIMITIVES = uper_vectors()["primitives"]


@pytest.mark.parametrize("vec", PRIMITIVES, ids=[f"{v['type']}-{i}" for i, v in enumerate(PRIMITIVES)])
def test_primitive_matches_reference_compiler(vec):
    assert encode_aux(vec["type"], vec["value"]).hex() == vec["hex"]
    assert decode_aux(vec["type"], bytes.fromhex(vec["hex"])) == vec["value"]


@pytest.mark.parametrize(
    "lo, hi, bits",
    [(0, 0, 0), (5, 5, 0), (0, 1, 1), (0, 7, 3), (0, 8, 4), (0, 127, 7), (0, 32767, 15),
     (-900_000_000, 900_000_001, 31), (-1_799_999_999, 1_800_000_001, 32), (0, 28800, 15)],
)
def test_bits_for_range(lo, hi, bits):
    assert bits_for_range(lo, hi) == bits


def test_bits_for_empty_range_rejected():
    with pytest.raises(ValueError):
        bits_for_range(3, 2)


def test_empty_encoding_is_one_zero_octet():
    assert BitWriter().to_bytes() == b"\x00"
    assert BitReader(b"\x00").padding_is_canonical()


def test_length_determinant_forms():
    for n, hexed in [(0, "00"), (127, "7f"), (128, "8080"), (16383, "bfff")]:
        w = BitWriter()
        w.write_length(n)
        assert w.to_bytes().hex() == hexed
        assert BitReader(bytes.fromhex(hexed)).read_length() == n
    with pytest.raises(ValueError):
        BitWriter().write_length(16384)
    with pytest.raises(ValueError):
        BitReader(b"\xc0\x00").read_length()


def test_writer_rejects_out_of_range():
    w = BitWriter()
    with pytest.raises(ValueError):
        w.write_constrained(8, 0, 7)
    with pytest.raises(ValueError):
        w.write_bits(4, 2)
    with pytest.raises(ValueError):
        w.write_count(2, 3, 3)


def test_reader_end_of_data():
    r = BitReader(b"\xff")
    r.read_bits(5)
    with pytest.raises(EndOfData):
        r.read_bits(4)


def test_padding_check():
    r = BitReader(b"\xa0")
    r.read_bits(3)
    assert r.padding_is_canonical()
    r = BitReader(b"\xa1")
    r.read_bits(3)
    assert not r.padding_is_canonical()
    assert not BitReader(b"\x00\x00").padding_is_canonical()


@given(st.lists(st.integers(0, 64).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1)))))
def test_bit_fields_round_trip(fields):
    w = BitWriter()
    for n, v in fields:
        w.write_bits(v, n)
    data = w.to_bytes()
    assert len(data) == max(1, -(-sum(n for n, _ in fields) // 8))
    r = BitReader(data)
    assert [r.read_bits(n) for n, _ in fields] == [v for _, v in fields]
    assert r.padding_is_canonical()


@given(st.integers(-(2**40), 2**40), st.integers(0, 2**40), st.data())
def test_constrained_round_trip(lo, span, data):
    hi = lo + span
    value = data.draw(st.integers(lo, hi))
    w = BitWriter()
    w.write_constrained(value, lo, hi)
    assert len(w) == bits_for_range(lo, hi)
    assert BitReader(w.to_bytes()).read_constrained(lo, hi) == value
