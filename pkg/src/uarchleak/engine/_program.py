"""Lowering from decoded micro-ops to the flat integer stream the kernels run."""

from __future__ import annotations

from array import array
from typing import NamedTuple

from .. import isa
from . import _ops


class CompiledProgram(NamedTuple):
    uops: tuple[tuple[int, int, int, int, int], ...]
    packed: array  # the same stream flattened ('q', stride 5) for the C kernel
    instr_starts: tuple[int, ...]  # instruction index -> first uop index
    has_tx: bool


_ALU_KINDS = {"mov": _ops.K_MOV, "shl": _ops.K_SHL, "add": _ops.K_ADD}


def compile_program(prog: isa.Program) -> CompiledProgram:
    """Compile (and cache on the Program) the integer micro-op stream."""
    cached = prog._compiled
    if cached is not None:
        return cached

    decoded: list[list[isa.Microop]] = [
        isa.decode(instr, idx) for idx, instr in enumerate(prog.instructions)
    ]
    starts: list[int] = []
    pos = 0
    for uops in decoded:
        starts.append(pos)
        pos += len(uops)
    n_uops = pos
    starts.append(n_uops)  # sentinel: branch targets one past the end are-halts

    flat: list[tuple[int, int, int, int, int]] = []
    for idx, uops in enumerate(decoded):
        instr = prog.instructions[idx]
        for u in uops:
            if u.kind == isa.UOP_ADDRESS_GEN:
                base = u.reads[0]
                index = u.reads[1] if len(u.reads) > 1 else -1
                flat.append((_ops.K_AGEN, base, index, 0, idx))
            elif u.kind == isa.UOP_MEM_LOAD:
                flat.append((_ops.K_LOAD, u.writes, -1, u.width, idx))
            elif u.kind == isa.UOP_MEM_STORE:
                flat.append((_ops.K_STORE, u.reads[0], -1, 0, idx))
            elif u.kind == isa.UOP_ALU:
                kind = _ALU_KINDS[u.detail]
                a = u.writes
                b = u.reads[1] if u.detail == "add" else -1
                flat.append((kind, a, b, u.imm, idx))
            elif u.kind == isa.UOP_BRANCH:
                if u.detail == "halt":
                    flat.append((_ops.K_HALT, -1, -1, 0, idx))
                elif u.detail == "jmp":
                    flat.append((_ops.K_JMP, -1, u.target, starts[u.target], idx))
                else:
                    flat.append((_ops.K_JZ, u.reads[0], u.target, starts[u.target], idx))
            elif u.kind == isa.UOP_FLUSH:
                flat.append((_ops.K_FLUSH, -1, -1, 0, idx))
            elif u.kind == isa.UOP_TIMER:
                flat.append((_ops.K_TIMER, u.writes, -1, 1, idx))
            elif u.kind == isa.UOP_TX_MARKER:
                if u.detail == "begin":
                    resume = starts[prog.tx_pairs[idx]] + 1
                    flat.append((_ops.K_TXB, -1, -1, resume, idx))
                else:
                    flat.append((_ops.K_TXE, -1, -1, 0, idx))
            elif u.kind == isa.UOP_FAULT_MARKER:
                flat.append((_ops.K_RAISE, -1, -1, 0, idx))
            else:
                raise AssertionError(f"unhandled micro-op kind {u.kind!r}")

    # Two's-complement fold so 64-bit immediates fit the signed element type;
    # the C kernel reinterprets the bit pattern as unsigned.
    fold = lambda v: v - (1 << 64) if v >= (1 << 63) else v
    packed = array("q", [fold(v) for uop in flat for v in uop])
    compiled = CompiledProgram(tuple(flat), packed, tuple(starts[:-1]), prog.has_tx)
    prog._compiled = compiled
    return compiled
