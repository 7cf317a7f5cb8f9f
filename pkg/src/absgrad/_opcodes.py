"""Numeric opcodes shared by the tape compiler and the evaluation kernels.

The Cython kernel hard-codes the same values; tests/test_tape.py keeps the
two backends in lockstep by comparing their outputs bitwise.
"""

CONST = 0
INPUT = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
SIN = 7
COS = 8
EXP = 9
LOG = 10
SQR = 11
ABS = 12

NAMES = {
    "const": CONST,
    "input": INPUT,
    "add": ADD,
    "sub": SUB,
    "mul": MUL,
    "div": DIV,
    "neg": NEG,
    "sin": SIN,
    "cos": COS,
    "exp": EXP,
    "log": LOG,
    "sqr": SQR,
    "abs": ABS,
}

CODES = {code: name for name, code in NAMES.items()}

ARITY = {
    CONST: 0,
    INPUT: 0,
    ADD: 2,
    SUB: 2,
    MUL: 2,
    DIV: 2,
    NEG: 1,
    SIN: 1,
    COS: 1,
    EXP: 1,
    LOG: 1,
    SQR: 1,
    ABS: 1,
}
