"""Instruction set, binary encoding, assembler and disassembler.

Every instruction is one 32-bit word::

    [31:24] opcode   [23:19] rd   [18:14] rs1   [13:9] rs2   [8:0] zero

There are no immediates. Constants live in pre-initialised data memory and
are brought into registers with the ``LOADK`` pseudo-instruction.
"""

from __future__ import annotations

import enum
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

NUM_REGISTERS = 32
WORD_MASK = 0xFFFFFFFF

#: Register reserved by the assembler for ``LOADK`` expansion.
ASSEMBLER_TEMP = 31

DEFAULT_ADDRESS_BITS = 16
DEFAULT_DATA_BASE = 257  # first protected offset above the default 256-word stack

IMAGE_MAGIC = b"PRTA"
IMAGE_VERSION = 0x01


class Opcode(enum.IntEnum):
    NOP = 0x00
    ADD = 0x01
    SUB = 0x02
    AND = 0x03
    OR = 0x04
    XOR = 0x05
    SLL = 0x06
    SRL = 0x07
    SLT = 0x08
    MUL = 0x09
    LD_P = 0x10
    ST_P = 0x11
    LD_S = 0x12
    ST_S = 0x13
    BEQ = 0x20
    BLT = 0x21
    JMPR = 0x22
    CALL = 0x23
    RET = 0x24
    HALT = 0x3F

    @property
    def mnemonic(self) -> str:
        return self.name.replace("_", ".")


class Format(enum.Enum):
    NONE = ()                         # NOP, RET, HALT
    ALU = ("rd", "rs1", "rs2")        # ADD rd, rs1, rs2
    LOAD = ("rd", "rs1")              # LD.P rd, rs1        rd <- mem[rs1]
    STORE = ("rs1", "rs2")            # ST.P rs1, rs2       mem[rs1] <- rs2
    BRANCH = ("rs1", "rs2", "rd")     # BEQ rs1, rs2, rd    pc <- rd if taken
    JUMP = ("rs1",)                   # JMPR rs1 / CALL rs1


FORMATS = {
    Opcode.NOP: Format.NONE,
    Opcode.RET: Format.NONE,
    Opcode.HALT: Format.NONE,
    Opcode.LD_P: Format.LOAD,
    Opcode.LD_S: Format.LOAD,
    Opcode.ST_P: Format.STORE,
    Opcode.ST_S: Format.STORE,
    Opcode.BEQ: Format.BRANCH,
    Opcode.BLT: Format.BRANCH,
    Opcode.JMPR: Format.JUMP,
    Opcode.CALL: Format.JUMP,
}
for _op in (Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR,
            Opcode.SLL, Opcode.SRL, Opcode.SLT, Opcode.MUL):
    FORMATS[_op] = Format.ALU

#: Instructions that redirect the program counter (they flush the pipeline).
CONTROL_OPS = frozenset({Opcode.BEQ, Opcode.BLT, Opcode.JMPR, Opcode.CALL, Opcode.RET})
MEMORY_OPS = frozenset({Opcode.LD_P, Opcode.ST_P, Opcode.LD_S, Opcode.ST_S})

_BY_MNEMONIC = {op.mnemonic: op for op in Opcode}


class DecodeError(ValueError):
    """Raised for words that are not valid instructions."""


class AssemblyError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    rd: int = 0
    rs1: int = 0
    rs2: int = 0

    def __post_init__(self):
        for name in ("rd", "rs1", "rs2"):
            value = getattr(self, name)
            if not 0 <= value < NUM_REGISTERS:
                raise ValueError(f"{name}={value} out of range 0..{NUM_REGISTERS - 1}")
            if value and name not in FORMATS[self.opcode].value:
                raise ValueError(f"{self.opcode.mnemonic} does not use {name}")

    def encode(self) -> int:
        return (self.opcode << 24) | (self.rd << 19) | (self.rs1 << 14) | (self.rs2 << 9)

    def __str__(self) -> str:
        fields = FORMATS[self.opcode].value
        if not fields:
            return self.opcode.mnemonic
        regs = ", ".join(f"r{getattr(self, name)}" for name in fields)
        return f"{self.opcode.mnemonic} {regs}"


def encode(instruction: Instruction) -> int:
    return instruction.encode()


def decode(word: int) -> Instruction:
    if not 0 <= word <= WORD_MASK:
        raise DecodeError(f"word {word:#x} is not a 32-bit value")
    try:
        opcode = Opcode(word >> 24)
    except ValueError:
        raise DecodeError(f"invalid opcode {word >> 24:#04x} in word {word:#010x}") from None
    if word & 0x1FF:
        raise DecodeError(f"reserved bits set in word {word:#010x}")
    regs = {"rd": (word >> 19) & 31, "rs1": (word >> 14) & 31, "rs2": (word >> 9) & 31}
    used = FORMATS[opcode].value
    for name, value in regs.items():
        if value and name not in used:
            raise DecodeError(f"{opcode.mnemonic} word {word:#010x} sets unused field {name}")
    return Instruction(opcode, **regs)


def is_valid_word(word: int) -> bool:
    try:
        decode(word)
    except DecodeError:
        return False
    return True


# --------------------------------
# Binary images
# --------------------------------

@dataclass(frozen=True)
class BinaryImage:
    """A loadable program: instruction words plus data-memory preload."""

    words: tuple[int, ...]
    entry_point: int = 0
    data_init: tuple[tuple[int, int], ...] = ()
    labels: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(int(w) for w in self.words))
        object.__setattr__(self, "data_init", tuple((int(a), int(v)) for a, v in self.data_init))
        if not self.words:
            raise ImageError("image has no instruction words")
        if not 0 <= self.entry_point < len(self.words):
            raise ImageError(f"entry point {self.entry_point} outside {len(self.words)} words")
        for word in self.words:
            if not 0 <= word <= WORD_MASK:
                raise ImageError(f"word {word:#x} is not 32-bit")
        for addr, value in self.data_init:
            if addr < 0 or not 0 <= value <= WORD_MASK:
                raise ImageError(f"bad data_init entry ({addr:#x}, {value:#x})")

    def validate(self, address_bits: int = DEFAULT_ADDRESS_BITS) -> list[str]:
        """Return problems with this image for an ``address_bits`` memory."""
        problems = []
        limit = 1 << (address_bits - 1)
        for addr, _ in self.data_init:
            if addr >= limit:
                problems.append(f"data_init address {addr:#x} exceeds {address_bits - 1}-bit visible space")
        seen = set()
        for addr, _ in self.data_init:
            if addr in seen:
                problems.append(f"data_init address {addr:#x} initialised twice")
            seen.add(addr)
        return problems

    def to_bytes(self) -> bytes:
        out = bytearray(IMAGE_MAGIC)
        out.append(IMAGE_VERSION)
        out += struct.pack("<I", len(self.words))
        out += struct.pack(f"<{len(self.words)}I", *self.words)
        out += struct.pack("<I", len(self.data_init))
        for addr, value in self.data_init:
            out += struct.pack("<II", addr, value)
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BinaryImage":
        if blob[:4] != IMAGE_MAGIC:
            raise ImageError("bad magic, not a PRTA image")
        if len(blob) < 9 or blob[4] != IMAGE_VERSION:
            raise ImageError("unsupported image version")
        try:
            (count,) = struct.unpack_from("<I", blob, 5)
            pos = 9
            words = struct.unpack_from(f"<{count}I", blob, pos)
            pos += 4 * count
            (ndata,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            pairs = [struct.unpack_from("<II", blob, pos + 8 * i) for i in range(ndata)]
            pos += 8 * ndata
        except struct.error as exc:
            raise ImageError(f"truncated image: {exc}") from None
        if pos != len(blob):
            raise ImageError(f"{len(blob) - pos} trailing bytes after image")
        # the binary format carries no entry point; execution starts at word 0
        return cls(words, 0, tuple(pairs))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BinaryImage":
        return cls.from_bytes(Path(path).read_bytes())


# --------------------------------
# Assembler
# --------------------------------

_LABEL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:(.*)$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_REG_RE = re.compile(r"^[rR](\d+)$")


def _parse_register(token: str, line: int) -> int:
    m = _REG_RE.match(token.strip())
    if not m:
        raise AssemblyError(f"expected register, got {token.strip()!r}", line)
    index = int(m.group(1))
    if index >= NUM_REGISTERS:
        raise AssemblyError(f"register r{index} out of range (r0..r{NUM_REGISTERS - 1})", line)
    return index


def _parse_number(token: str) -> int | None:
    try:
        value = int(token, 0)
    except ValueError:
        return None
    return value & WORD_MASK


def loadk_sequence(rd: int, offset: int) -> list[Instruction]:
    """Expand ``LOADK rd, <slot>`` for a slot at protected ``offset``.

    The word at the protected base reads as 1 (the assembler initialises it),
    so the slot offset is built bit by bit in ``rd`` and then dereferenced.
    """
    t = ASSEMBLER_TEMP
    seq = [Instruction(Opcode.LD_P, rd=t, rs1=0)]
    if offset == 0:
        return [Instruction(Opcode.LD_P, rd=rd, rs1=0)]
    bits = bin(offset)[3:]
    seq.append(Instruction(Opcode.ADD, rd=rd, rs1=t, rs2=0))
    for bit in bits:
        seq.append(Instruction(Opcode.ADD, rd=rd, rs1=rd, rs2=rd))
        if bit == "1":
            seq.append(Instruction(Opcode.ADD, rd=rd, rs1=rd, rs2=t))
    seq.append(Instruction(Opcode.LD_P, rd=rd, rs1=rd))
    return seq


@dataclass
class _Pending:
    line: int
    mnemonic: str
    operands: list[str]


def assemble(source: str, address_bits: int = DEFAULT_ADDRESS_BITS,
             data_base: int = DEFAULT_DATA_BASE) -> BinaryImage:
    """Assemble ``source`` into a :class:`BinaryImage`.

    ``.word`` slots are allocated upwards from protected offset ``data_base``
    unless an ``.org`` directive moves the cursor. Data labels resolve to
    their offset within the region, code labels to their word index.
    """
    seg_bits = address_bits - 2
    protected_bit = 1 << seg_bits
    offset_mask = protected_bit - 1
    visible_limit = 1 << (address_bits - 1)

    section = "text"
    labels: dict[str, tuple[str, int]] = {}
    text: list[_Pending] = []
    data: list[tuple[int, str, str, int]] = []  # (visible addr, label, value token, line)
    cursor = protected_bit | data_base
    entry_label: tuple[str, int] | None = None

    def define(name: str, kind: str, value: int, line: int):
        if name in labels:
            raise AssemblyError(f"label {name!r} defined twice", line)
        labels[name] = (kind, value)

    # pass 1: labels, directives, instruction sizes
    for lineno, raw in enumerate(source.splitlines(), start=1):
        stmt = raw.split(";", 1)[0].strip()
        while stmt:
            m = _LABEL_RE.match(stmt)
            if not m or stmt.startswith("."):
                break
            if section != "text":
                raise AssemblyError("code labels are only allowed in .text; use .word in .data", lineno)
            define(m.group(1), "code", -1, lineno)
            text.append(_Pending(lineno, ":label", [m.group(1)]))
            stmt = m.group(2).strip()
        if not stmt:
            continue
        if stmt.startswith("."):
            parts = stmt.split()
            directive = parts[0].lower()
            if directive == ".text":
                section = "text"
            elif directive == ".data":
                section = "data"
            elif directive == ".entry":
                if len(parts) != 2:
                    raise AssemblyError(".entry takes one label", lineno)
                entry_label = (parts[1], lineno)
            elif directive == ".org":
                if len(parts) != 2 or _parse_number(parts[1]) is None:
                    raise AssemblyError(".org takes one numeric address", lineno)
                cursor = int(parts[1], 0)
                if not 0 <= cursor < visible_limit:
                    raise AssemblyError(f".org address {cursor:#x} outside visible space", lineno)
            elif directive == ".word":
                if section != "data":
                    raise AssemblyError(".word is only allowed in .data", lineno)
                if len(parts) != 3 or not _NAME_RE.match(parts[1]):
                    raise AssemblyError(".word expects '<label> <value>'", lineno)
                if cursor >= visible_limit:
                    raise AssemblyError("data section overflows the visible address space", lineno)
                region = "pdata" if cursor & protected_bit else "sdata"
                define(parts[1], region, cursor & offset_mask, lineno)
                data.append((cursor, parts[1], parts[2], lineno))
                cursor += 1
            else:
                raise AssemblyError(f"unknown directive {parts[0]}", lineno)
            continue
        if section != "text":
            raise AssemblyError("instructions are only allowed in .text", lineno)
        mnemonic, _, rest = stmt.partition(" ")
        operands = [op.strip() for op in rest.split(",")] if rest.strip() else []
        text.append(_Pending(lineno, mnemonic.upper(), operands))

    # resolve code label positions (LOADK length depends on data labels only)
    def slot_offset(name: str, line: int) -> int:
        if name not in labels:
            raise AssemblyError(f"undefined label {name!r}", line)
        kind, value = labels[name]
        if kind != "pdata":
            raise AssemblyError(f"LOADK needs a protected .word label, {name!r} is {kind}", line)
        return value

    position = 0
    for item in text:
        if item.mnemonic == ":label":
            labels[item.operands[0]] = ("code", position)
        elif item.mnemonic == "LOADK":
            if len(item.operands) != 2:
                raise AssemblyError("LOADK expects 'rd, label'", item.line)
            position += len(loadk_sequence(1, slot_offset(item.operands[1], item.line)))
        else:
            position += 1

    # pass 2: emit
    words: list[int] = []
    uses_loadk = False
    for item in text:
        if item.mnemonic == ":label":
            continue
        if item.mnemonic == "LOADK":
            rd = _parse_register(item.operands[0], item.line)
            if rd in (0, ASSEMBLER_TEMP):
                raise AssemblyError(f"LOADK cannot target r{rd}", item.line)
            uses_loadk = True
            words.extend(i.encode() for i in loadk_sequence(rd, slot_offset(item.operands[1], item.line)))
            continue
        op = _BY_MNEMONIC.get(item.mnemonic)
        if op is None:
            raise AssemblyError(f"unknown mnemonic {item.mnemonic!r}", item.line)
        fmt = FORMATS[op].value
        if len(item.operands) != len(fmt):
            raise AssemblyError(f"{op.mnemonic} expects {len(fmt)} operand(s), got {len(item.operands)}",
                                item.line)
        regs = {name: _parse_register(tok, item.line) for name, tok in zip(fmt, item.operands)}
        words.append(Instruction(op, **regs).encode())

    if not words:
        raise AssemblyError("program has no instructions")

    data_init: list[tuple[int, int]] = []
    for addr, _name, token, line in data:
        value = _parse_number(token)
        if value is None:
            if token not in labels:
                raise AssemblyError(f"undefined label {token!r}", line)
            value = labels[token][1]
        data_init.append((addr, value))

    if uses_loadk:
        base = [v for a, v in data_init if a == protected_bit]
        if not base:
            data_init.insert(0, (protected_bit, 1))
        elif base[0] != 1:
            raise AssemblyError("protected base word must hold 1 when LOADK is used")

    entry = 0
    if entry_label is not None:
        name, line = entry_label
        if name not in labels or labels[name][0] != "code":
            raise AssemblyError(f"undefined code label {name!r} for .entry", line)
        entry = labels[name][1]
        if entry >= len(words):
            raise AssemblyError(f".entry label {name!r} points past the last instruction", line)

    code_labels = {k: v for k, (kind, v) in labels.items() if kind == "code"}
    return BinaryImage(tuple(words), entry, tuple(data_init), labels=code_labels)


def disassemble(image: BinaryImage) -> str:
    """Render ``image`` as assembly text that re-assembles to the same image."""
    lines = []
    for index, word in enumerate(image.words):
        try:
            instruction = decode(word)
        except DecodeError as exc:
            raise DecodeError(f"word {index}: {exc}") from None
        if index == image.entry_point and index != 0:
            lines.append("entry:")
        lines.append(str(instruction))
    if image.entry_point != 0:
        lines.append(".entry entry")
    if image.data_init:
        lines.append(".data")
        expected = None
        for n, (addr, value) in enumerate(image.data_init):
            if addr != expected:
                lines.append(f".org {addr:#x}")
            lines.append(f".word d{n} {value:#x}")
            expected = addr + 1
    return "\n".join(lines)
