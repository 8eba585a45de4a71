"""Integer micro-op encoding shared by the pure-Python and Cython kernels.

A compiled micro-op is a 5-tuple of ints: (kind, a, b, imm, instr_index).
Field use per kind:

    AGEN   a=base reg, b=index reg or -1          latch = regs[a] (+ regs[b])
    LOAD   a=dest reg, imm=width (1 or 8)         reads memory at latch
    STORE  a=source reg                           writes 8 bytes at latch
    MOV    a=dest reg, imm=value
    SHL    a=dest reg, imm=shift count
    ADD    a=dest reg, b=source reg
    JZ     a=test reg, imm=target uop index, b=target instruction index
    JMP    imm=target uop index
    FLUSH  (address in latch)
    TIMER  a=dest reg                             timed byte access at latch
    TXB    imm=uop index just past the matching TX_END
    TXE    -
    RAISE  -
    HALT   -
"""

K_AGEN = 0
K_LOAD = 1
K_STORE = 2
K_MOV = 3
K_SHL = 4
K_ADD = 5
K_JZ = 6
K_JMP = 7
K_FLUSH = 8
K_TIMER = 9
K_TXB = 10
K_TXE = 11
K_RAISE = 12
K_HALT = 13

# Fault codes; 1 and 2 deliberately coincide with vmem.F_NOT_PRESENT and
# vmem.F_PROTECTION so translation results pass through unchanged.
FK_NONE = 0
FK_PAGE = 1
FK_PROT = 2
FK_TRAP = 3

# Transaction outcome codes.
TXS_NONE = 0
TXS_COMMITTED = 1
TXS_ABORTED = 2
