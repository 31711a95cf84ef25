from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from partaa import isa
from partaa.isa import (
    FORMATS, AssemblyError, BinaryImage, DecodeError, ImageError, Instruction, Opcode,
    assemble, decode, disassemble, encode,
)


def random_instruction(rng: random.Random) -> Instruction:
    op = rng.choice(list(Opcode))
    fields = {name: rng.randrange(32) for name in FORMATS[op].value}
    return Instruction(op, **fields)


instructions = st.builds(
    lambda op, regs: Instruction(op, **{n: regs[i] for i, n in enumerate(FORMATS[op].value)}),
    st.sampled_from(list(Opcode)),
    st.lists(st.integers(0, 31), min_size=3, max_size=3),
)


def test_add_packs_fields():
    image = assemble("ADD r3, r1, r2")
    assert image.words == ((0x01 << 24) | (3 << 19) | (1 << 14) | (2 << 9),)
    ins = decode(image.words[0])
    assert (ins.opcode, ins.rd, ins.rs1, ins.rs2) == (Opcode.ADD, 3, 1, 2)


def test_halt_has_no_operands():
    assert assemble("HALT").words == (0x3F000000,)
    with pytest.raises(AssemblyError):
        assemble("HALT r1")


def test_three_instructions_one_word():
    src = ".data\n.word k 7\n.text\nNOP\nADD r1, r2, r3\nHALT\n"
    image = assemble(src)
    assert len(image.words) == 3
    assert image.data_init == ((0x4000 | 257, 7),)
    again = assemble(disassemble(image))
    assert again.words == image.words and again.data_init == image.data_init


def test_disassemble_examples():
    assert disassemble(BinaryImage((0,))) == "NOP"
    assert str(decode(encode(Instruction(Opcode.ADD, 3, 1, 2)))) == "ADD r3, r1, r2"


def test_decode_rejects_bad_words():
    with pytest.raises(DecodeError):
        decode(0x7F000000)          # unknown opcode
    with pytest.raises(DecodeError):
        decode(0x00000001)          # reserved low bits
    with pytest.raises(DecodeError):
        decode((0x3F << 24) | (1 << 19))  # HALT with rd set
    assert not isa.is_valid_word(0xFFFFFFFF)


def test_disassemble_reports_word_index():
    with pytest.raises(DecodeError, match="word 1"):
        disassemble(BinaryImage((0, 0x7F000000)))


def test_encode_decode_exhaustive_over_opcodes():
    rng = random.Random(3)
    for op in Opcode:
        names = FORMATS[op].value
        for _ in range(200):
            word = op << 24
            for name in names:
                word |= rng.randrange(32) << {"rd": 19, "rs1": 14, "rs2": 9}[name]
            assert encode(decode(word)) == word


@given(st.integers(0, 0xFFFFFFFF))
def test_valid_words_round_trip(word):
    if isa.is_valid_word(word):
        assert encode(decode(word)) == word


@given(st.lists(instructions, min_size=1, max_size=100))
@settings(max_examples=60)
def test_disassemble_assemble_round_trip(program):
    image = BinaryImage(tuple(i.encode() for i in program))
    assert assemble(disassemble(image)).words == image.words


def test_random_100_word_image_round_trip():
    rng = random.Random(11)
    words = tuple(random_instruction(rng).encode() for _ in range(100))
    data = tuple((0x4000 | (300 + i), rng.getrandbits(32)) for i in range(5))
    image = BinaryImage(words, 0, data)
    back = assemble(disassemble(image))
    assert back.words == words and back.data_init == data


def test_entry_point_survives_disassembly():
    image = assemble("NOP\nstart: HALT\n.entry start\n")
    assert image.entry_point == 1
    assert assemble(disassemble(image)).entry_point == 1


def test_undefined_label_reports_line():
    with pytest.raises(AssemblyError) as info:
        assemble("NOP\nLOADK r1, missing\n")
    assert info.value.line == 2
    assert "missing" in info.value.message


def test_register_out_of_range():
    with pytest.raises(AssemblyError) as info:
        assemble("ADD r32, r1, r2")
    assert info.value.line == 1


def test_syntax_errors_carry_line_numbers():
    for src, line in [("NOP\nFOO r1\n", 2), ("\n\n.bogus\n", 3), ("ADD r1, r2\n", 1),
                      (".word x 1\n", 1), ("a: NOP\na: NOP\n", 2)]:
        with pytest.raises(AssemblyError) as info:
            assemble(src)
        assert info.value.line == line, src


def test_loadk_expansion_loads_constant_slot():
    seq = isa.loadk_sequence(5, 0b101)
    assert [str(i) for i in seq] == [
        "LD.P r31, r0", "ADD r5, r31, r0",
        "ADD r5, r5, r5", "ADD r5, r5, r5", "ADD r5, r5, r31",
        "LD.P r5, r5",
    ]


def test_loadk_adds_base_word():
    image = assemble(".data\n.word k 42\n.text\nLOADK r2, k\nHALT\n")
    assert (0x4000, 1) in image.data_init
    assert (0x4000 | 257, 42) in image.data_init


def test_loadk_rejects_reserved_targets():
    for reg in ("r0", "r31"):
        with pytest.raises(AssemblyError):
            assemble(f".data\n.word k 1\n.text\nLOADK {reg}, k\n")


def test_word_can_hold_code_label():
    image = assemble(".data\n.word target there\n.text\nNOP\nthere: HALT\n")
    assert image.data_init == ((0x4000 | 257, 1),)


def test_org_places_shared_data():
    image = assemble(".data\n.org 0x10\n.word s 5\n.text\nHALT\n")
    assert image.data_init == ((0x10, 5),)


def test_binary_format_is_bit_exact():
    image = BinaryImage((0x01000000, 0x3F000000), 0, ((0x4101, 7),))
    blob = image.to_bytes()
    assert blob == (b"PRTA\x01" + (2).to_bytes(4, "little")
                    + (0x01000000).to_bytes(4, "little") + (0x3F000000).to_bytes(4, "little")
                    + (1).to_bytes(4, "little") + (0x4101).to_bytes(4, "little") + (7).to_bytes(4, "little"))
    assert BinaryImage.from_bytes(blob) == image


def test_binary_image_save_load(tmp_path):
    image = assemble(".data\n.word k 9\n.text\nLOADK r1, k\nHALT\n")
    path = tmp_path / "p.prta"
    image.save(path)
    assert BinaryImage.load(path) == image


@pytest.mark.parametrize("blob", [b"XXXX\x01", b"PRTA\x02\x00\x00\x00\x00",
                                  b"PRTA\x01\x05\x00\x00\x00", b"PRTA\x01" + bytes(8) + b"!"])
def test_bad_binary_images(blob):
    with pytest.raises(ImageError):
        BinaryImage.from_bytes(blob)


def test_image_invariants():
    with pytest.raises(ImageError):
        BinaryImage((0,), entry_point=1)
    with pytest.raises(ImageError):
        BinaryImage(())
    assert BinaryImage((0,), 0, ((1 << 15, 0),)).validate(16)
    assert BinaryImage((0,), 0, ((5, 0), (5, 1))).validate(16)
