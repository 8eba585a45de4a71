"""Toy instruction set: instruction/micro-op types, decoder, assembler, and a
strictly in-order reference interpreter used as the architectural oracle.

The ISA is deliberately minimal: 8 general-purpose 64-bit registers, 14
opcodes, byte/word loads, word stores, left shifts, and explicit markers for
transactions and traps. It is just rich enough to express a transient-leak
sequence (privileged byte load, shift into a page index, conditional retry,
probe-array touch) and a flush-and-time measurement loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

NUM_REGS = 8
MASK64 = (1 << 64) - 1

# Opcode mnemonics. Register operands are written R0..R7, memory operands
# [Ra] or [Ra+Rb], immediates as decimal or 0x-prefixed hex.
OP_LOAD_BYTE = "LOAD_BYTE"
OP_LOAD_WORD = "LOAD_WORD"
OP_STORE = "STORE"
OP_SHL_IMM = "SHL_IMM"
OP_ADD = "ADD"
OP_MOV_IMM = "MOV_IMM"
OP_JZ = "JZ"
OP_JMP = "JMP"
OP_CLFLUSH = "CLFLUSH"
OP_TIME_READ = "TIME_READ"
OP_TX_BEGIN = "TX_BEGIN"
OP_TX_END = "TX_END"
OP_RAISE = "RAISE"
OP_HALT = "HALT"

OPCODES = frozenset(
    {
        OP_LOAD_BYTE,
        OP_LOAD_WORD,
        OP_STORE,
        OP_SHL_IMM,
        OP_ADD,
        OP_MOV_IMM,
        OP_JZ,
        OP_JMP,
        OP_CLFLUSH,
        OP_TIME_READ,
        OP_TX_BEGIN,
        OP_TX_END,
        OP_RAISE,
        OP_HALT,
    }
)

# Micro-op kinds.
UOP_ADDRESS_GEN = "address-gen"
UOP_MEM_LOAD = "mem-load"
UOP_MEM_STORE = "mem-store"
UOP_ALU = "alu"
UOP_BRANCH = "branch"
UOP_FLUSH = "flush"
UOP_TIMER = "timer"
UOP_TX_MARKER = "tx-marker"
UOP_FAULT_MARKER = "fault-marker"

# Architectural fault kinds.
FAULT_PAGE = "page-fault"
FAULT_PROTECTION = "protection-fault"
FAULT_TRAP = "trap"

TX_NONE = "none"
TX_COMMITTED = "committed"
TX_ABORTED = "aborted"


class AsmError(ValueError):
    """Raised for unparseable assembly text; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DecodeError(ValueError):
    """Raised when an instruction has a malformed operand combination."""


class ProgramError(ValueError):
    """Raised for structurally invalid programs (bad targets, unbalanced TX)."""


@dataclass(frozen=True)
class Instruction:
    """One toy-ISA instruction.

    Operand fields are used per opcode: `rd` destination register, `rs`
    source register, `base`/`index` address registers for [base] or
    [base+index] operands, `imm` immediate, `target` branch target
    (instruction index).
    """

    op: str
    rd: int | None = None
    rs: int | None = None
    base: int | None = None
    index: int | None = None
    imm: int | None = None
    target: int | None = None


@dataclass(frozen=True)
class Microop:
    """A decoded micro-operation.

    `reads` lists exactly the register ids the micro-op's semantics read;
    address-generation feeds the following memory micro-op through an
    internal latch, so mem-load/mem-store/flush/timer read no registers
    themselves (stores read their data register).
    """

    kind: str
    reads: tuple[int, ...]
    writes: int | None
    instr_index: int
    width: int = 0  # access width in bytes for memory micro-ops
    imm: int = 0
    target: int = -1  # branch target (instruction index)
    detail: str = ""


def _check_reg(value: int | None, fieldname: str, op: str) -> int:
    if value is None:
        raise DecodeError(f"{op}: missing register operand '{fieldname}'")
    if not 0 <= value < NUM_REGS:
        raise DecodeError(f"{op}: register operand '{fieldname}' out of range: {value}")
    return value


def _check_imm(value: int | None, fieldname: str, op: str, limit: int = MASK64) -> int:
    if value is None:
        raise DecodeError(f"{op}: missing immediate operand '{fieldname}'")
    if not 0 <= value <= limit:
        raise DecodeError(f"{op}: immediate operand '{fieldname}' out of range: {value}")
    return value


def decode(instr: Instruction, instr_index: int = 0) -> list[Microop]:
    """Decode one instruction into its micro-op sequence.

    Deterministic and total over well-formed instructions; malformed operand
    combinations raise DecodeError naming the offending field.
    """
    op = instr.op
    i = instr_index
    if op == OP_LOAD_BYTE or op == OP_LOAD_WORD:
        rd = _check_reg(instr.rd, "rd", op)
        base = _check_reg(instr.base, "base", op)
        reads = (base,) if instr.index is None else (base, _check_reg(instr.index, "index", op))
        width = 1 if op == OP_LOAD_BYTE else 8
        return [
            Microop(UOP_ADDRESS_GEN, reads, None, i),
            Microop(UOP_MEM_LOAD, (), rd, i, width=width),
        ]
    if op == OP_STORE:
        rs = _check_reg(instr.rs, "rs", op)
        base = _check_reg(instr.base, "base", op)
        reads = (base,) if instr.index is None else (base, _check_reg(instr.index, "index", op))
        return [
            Microop(UOP_ADDRESS_GEN, reads, None, i),
            Microop(UOP_MEM_STORE, (rs,), None, i, width=8),
        ]
    if op == OP_SHL_IMM:
        rd = _check_reg(instr.rd, "rd", op)
        imm = _check_imm(instr.imm, "imm", op, limit=63)
        return [Microop(UOP_ALU, (rd,), rd, i, imm=imm, detail="shl")]
    if op == OP_ADD:
        rd = _check_reg(instr.rd, "rd", op)
        rs = _check_reg(instr.rs, "rs", op)
        return [Microop(UOP_ALU, (rd, rs), rd, i, detail="add")]
    if op == OP_MOV_IMM:
        rd = _check_reg(instr.rd, "rd", op)
        imm = _check_imm(instr.imm, "imm", op)
        return [Microop(UOP_ALU, (), rd, i, imm=imm, detail="mov")]
    if op == OP_JZ:
        rs = _check_reg(instr.rs, "rs", op)
        target = _check_imm(instr.target, "target", op)
        return [Microop(UOP_BRANCH, (rs,), None, i, target=target, detail="jz")]
    if op == OP_JMP:
        target = _check_imm(instr.target, "target", op)
        return [Microop(UOP_BRANCH, (), None, i, target=target, detail="jmp")]
    if op == OP_CLFLUSH:
        base = _check_reg(instr.base, "base", op)
        reads = (base,) if instr.index is None else (base, _check_reg(instr.index, "index", op))
        return [
            Microop(UOP_ADDRESS_GEN, reads, None, i),
            Microop(UOP_FLUSH, (), None, i),
        ]
    if op == OP_TIME_READ:
        # Fused timed load: performs a byte access at the operand address and
        # writes the observed latency (full width) into rd.
        rd = _check_reg(instr.rd, "rd", op)
        base = _check_reg(instr.base, "base", op)
        reads = (base,) if instr.index is None else (base, _check_reg(instr.index, "index", op))
        return [
            Microop(UOP_ADDRESS_GEN, reads, None, i),
            Microop(UOP_TIMER, (), rd, i, width=1),
        ]
    if op == OP_TX_BEGIN:
        return [Microop(UOP_TX_MARKER, (), None, i, detail="begin")]
    if op == OP_TX_END:
        return [Microop(UOP_TX_MARKER, (), None, i, detail="end")]
    if op == OP_RAISE:
        return [Microop(UOP_FAULT_MARKER, (), None, i)]
    if op == OP_HALT:
        return [Microop(UOP_BRANCH, (), None, i, detail="halt")]
    raise DecodeError(f"unknown opcode: {op!r}")


class Program:
    """An ordered instruction list with resolved labels, validated on build."""

    def __init__(self, instructions: Iterable[Instruction], labels: dict[str, int] | None = None):
        self.instructions: tuple[Instruction, ...] = tuple(instructions)
        self.labels: dict[str, int] = dict(labels or {})
        self._compiled = None  # engine-owned cache, set by compile_program
        self._validate()

    def __len__(self) -> int:
        return len(self.instructions)

    def _validate(self) -> None:
        n = len(self.instructions)
        depth = 0
        self.tx_pairs: dict[int, int] = {}
        begin_at = -1
        for idx, instr in enumerate(self.instructions):
            if instr.op in (OP_JZ, OP_JMP):
                if instr.target is None or not 0 <= instr.target < n:
                    raise ProgramError(
                        f"instruction {idx}: branch target {instr.target!r} out of range"
                    )
            if instr.op == OP_TX_BEGIN:
                if depth:
                    raise ProgramError(f"instruction {idx}: nested transactions are unsupported")
                depth += 1
                begin_at = idx
            elif instr.op == OP_TX_END:
                depth -= 1
                if depth < 0:
                    raise ProgramError(f"instruction {idx}: TX_END without TX_BEGIN")
                self.tx_pairs[begin_at] = idx
            # Decode every instruction once so malformed operands surface here.
            decode(instr, idx)
        if depth != 0:
            raise ProgramError("unbalanced TX markers: TX_BEGIN without TX_END")

    @property
    def has_tx(self) -> bool:
        return bool(self.tx_pairs)


_REG_NAMES = {f"R{i}": i for i in range(NUM_REGS)}


def _parse_int(token: str, lineno: int) -> int:
    try:
        value = int(token, 0)
    except ValueError:
        raise AsmError(lineno, f"bad immediate {token!r}") from None
    if value < 0:
        raise AsmError(lineno, f"immediates are unsigned: {token!r}")
    return value


def _parse_reg(token: str, lineno: int) -> int:
    reg = _REG_NAMES.get(token.upper())
    if reg is None:
        raise AsmError(lineno, f"bad register {token!r}")
    return reg


def _parse_mem(token: str, lineno: int) -> tuple[int, int | None]:
    if not (token.startswith("[") and token.endswith("]")):
        raise AsmError(lineno, f"bad memory operand {token!r}")
    inner = token[1:-1].strip()
    if "+" in inner:
        left, _, right = inner.partition("+")
        return _parse_reg(left.strip(), lineno), _parse_reg(right.strip(), lineno)
    return _parse_reg(inner, lineno), None


def assemble(text: str) -> Program:
    """Assemble textual source into a Program.

    Format: one instruction per line, `;` starts a comment, `name:` defines a
    label (optionally followed by an instruction on the same line). Branch
    targets are labels.
    """
    pending: list[tuple[int, str, list[str]]] = []  # lineno, mnemonic, operand tokens
    labels: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        while line:
            head, colon, rest = line.partition(":")
            if colon and " " not in head.strip() and "," not in head and "[" not in head:
                label = head.strip()
                if not label.isidentifier():
                    raise AsmError(lineno, f"bad label {label!r}")
                if label in labels:
                    raise AsmError(lineno, f"duplicate label {label!r}")
                labels[label] = len(pending)
                line = rest.strip()
                continue
            parts = line.split(None, 1)
            mnemonic = parts[0].upper()
            operands = [t.strip() for t in parts[1].split(",")] if len(parts) > 1 else []
            pending.append((lineno, mnemonic, operands))
            line = ""

    instructions: list[Instruction] = []
    for lineno, op, ops in pending:
        if op not in OPCODES:
            raise AsmError(lineno, f"unknown mnemonic {op!r}")
        try:
            instructions.append(_build_instruction(op, ops, labels, lineno))
        except AsmError:
            raise
        except (DecodeError, ProgramError) as exc:
            raise AsmError(lineno, str(exc)) from None
    try:
        return Program(instructions, labels)
    except ProgramError as exc:
        raise AsmError(0, str(exc)) from None


def _expect(ops: list[str], n: int, op: str, lineno: int) -> None:
    if len(ops) != n:
        raise AsmError(lineno, f"{op} expects {n} operand(s), got {len(ops)}")


def _build_instruction(op: str, ops: list[str], labels: dict[str, int], lineno: int) -> Instruction:
    if op in (OP_LOAD_BYTE, OP_LOAD_WORD, OP_TIME_READ):
        _expect(ops, 2, op, lineno)
        rd = _parse_reg(ops[0], lineno)
        base, index = _parse_mem(ops[1], lineno)
        return Instruction(op, rd=rd, base=base, index=index)
    if op == OP_STORE:
        _expect(ops, 2, op, lineno)
        base, index = _parse_mem(ops[0], lineno)
        rs = _parse_reg(ops[1], lineno)
        return Instruction(op, rs=rs, base=base, index=index)
    if op == OP_SHL_IMM or op == OP_MOV_IMM:
        _expect(ops, 2, op, lineno)
        return Instruction(op, rd=_parse_reg(ops[0], lineno), imm=_parse_int(ops[1], lineno))
    if op == OP_ADD:
        _expect(ops, 2, op, lineno)
        return Instruction(op, rd=_parse_reg(ops[0], lineno), rs=_parse_reg(ops[1], lineno))
    if op == OP_JZ:
        _expect(ops, 2, op, lineno)
        rs = _parse_reg(ops[0], lineno)
        if ops[1] not in labels:
            raise AsmError(lineno, f"undefined label {ops[1]!r}")
        return Instruction(op, rs=rs, target=labels[ops[1]])
    if op == OP_JMP:
        _expect(ops, 1, op, lineno)
        if ops[0] not in labels:
            raise AsmError(lineno, f"undefined label {ops[0]!r}")
        return Instruction(op, target=labels[ops[0]])
    if op == OP_CLFLUSH:
        _expect(ops, 1, op, lineno)
        base, index = _parse_mem(ops[0], lineno)
        return Instruction(op, base=base, index=index)
    _expect(ops, 0, op, lineno)
    return Instruction(op)


@dataclass
class ArchResult:
    """Architectural outcome of a strictly in-order run.

    `mem_writes` maps physical byte address to the committed value. A fault
    stops execution at `fault_index` with all effects of that instruction and
    younger ones discarded (inside a transaction the state instead rolls back
    to the TX_BEGIN snapshot and execution resumes after TX_END).
    """

    registers: tuple[int, ...]
    mem_writes: dict[int, int] = field(default_factory=dict)
    fault: str | None = None
    fault_index: int | None = None
    tx: str = TX_NONE
    halted: bool = False
    steps: int = 0
    step_limit_hit: bool = False


def _vaddr(regs: list[int], instr: Instruction) -> int:
    va = regs[instr.base]
    if instr.index is not None:
        va = (va + regs[instr.index]) & MASK64
    return va


def interpret_in_order(prog: Program, machine, max_steps: int = 100_000) -> ArchResult:
    """Execute `prog` sequentially with permission checks before any data read.

    Pure with respect to the machine: registers and memory are snapshotted,
    and cache state is never touched (timed reads report the latency class of
    the current cache membership without updating it). This is the
    architectural oracle the out-of-order engine is differentially tested
    against.
    """
    regs = list(machine.regs)
    writes: dict[int, int] = {}
    mem = machine.mem
    asp = machine.asp
    cache = machine.cache
    phys_size = mem.size

    def read_mem(pa: int, width: int) -> int:
        value = 0
        for k in range(width):
            a = pa + k
            if a >= phys_size:
                continue  # off-end bytes read as zero
            b = writes.get(a)
            if b is None:
                b = mem.read_byte(a)
            value |= b << (8 * k)
        return value

    pc = 0
    steps = 0
    n = len(prog.instructions)
    tx_snapshot: tuple[list[int], dict[int, int], int] | None = None
    tx_state = TX_NONE
    result_fault: str | None = None
    fault_index: int | None = None
    halted = False
    limit = False

    while pc < n:
        steps += 1
        if steps > max_steps:
            limit = True
            break
        instr = prog.instructions[pc]
        op = instr.op
        fault: str | None = None

        if op == OP_MOV_IMM:
            regs[instr.rd] = instr.imm
        elif op == OP_SHL_IMM:
            regs[instr.rd] = (regs[instr.rd] << instr.imm) & MASK64
        elif op == OP_ADD:
            regs[instr.rd] = (regs[instr.rd] + regs[instr.rs]) & MASK64
        elif op in (OP_LOAD_BYTE, OP_LOAD_WORD):
            pa, vfault = asp.translate_raw(_vaddr(regs, instr), user=True)
            if vfault:
                fault = FAULT_PAGE if vfault == 1 else FAULT_PROTECTION
            else:
                width = 1 if op == OP_LOAD_BYTE else 8
                value = read_mem(pa, width)
                if width == 1:
                    regs[instr.rd] = (regs[instr.rd] & ~0xFF) | value
                else:
                    regs[instr.rd] = value
        elif op == OP_STORE:
            pa, vfault = asp.translate_raw(_vaddr(regs, instr), user=True, write=True)
            if vfault:
                fault = FAULT_PAGE if vfault == 1 else FAULT_PROTECTION
            else:
                value = regs[instr.rs]
                for k in range(8):
                    if pa + k < phys_size:
                        writes[pa + k] = (value >> (8 * k)) & 0xFF
        elif op == OP_JZ:
            if regs[instr.rs] == 0:
                pc = instr.target
                continue
        elif op == OP_JMP:
            pc = instr.target
            continue
        elif op == OP_CLFLUSH:
            pa, vfault = asp.translate_raw(_vaddr(regs, instr), user=True)
            if vfault:
                fault = FAULT_PAGE if vfault == 1 else FAULT_PROTECTION
            # No cache mutation: the oracle observes, never perturbs.
        elif op == OP_TIME_READ:
            pa, vfault = asp.translate_raw(_vaddr(regs, instr), user=True)
            if vfault:
                fault = FAULT_PAGE if vfault == 1 else FAULT_PROTECTION
            else:
                hit = cache.is_cached(pa)
                regs[instr.rd] = cache.cfg.hit_latency if hit else cache.cfg.miss_latency
        elif op == OP_TX_BEGIN:
            tx_snapshot = (list(regs), dict(writes), prog.tx_pairs[pc])
        elif op == OP_TX_END:
            tx_snapshot = None
            tx_state = TX_COMMITTED
        elif op == OP_RAISE:
            fault = FAULT_TRAP
        elif op == OP_HALT:
            halted = True
            break

        if fault is not None:
            if tx_snapshot is not None:
                regs, writes, end_idx = tx_snapshot
                regs = list(regs)
                tx_snapshot = None
                tx_state = TX_ABORTED
                pc = end_idx + 1
                continue
            result_fault = fault
            fault_index = pc
            break
        pc += 1

    if pc >= n:
        halted = True
    return ArchResult(
        registers=tuple(regs),
        mem_writes=writes,
        fault=result_fault,
        fault_index=fault_index,
        tx=tx_state,
        halted=halted and result_fault is None,
        steps=steps,
        step_limit_hit=limit,
    )
