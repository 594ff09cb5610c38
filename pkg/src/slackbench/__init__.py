"""slackbench: a desk-scale workbench for randomized instruction scheduling.

A cycle-level out-of-order core model with pluggable schedulers (in-order,
out-of-order, probabilistic random delays, slack-directed random delays),
a Hamming-weight power model over register write-backs, and a side-channel
evaluation stack (CPA, windowed-integration CPA, and PCA/template attacks)
with key-rank and guessing-entropy metrics.
"""

from .isa import Op, Instruction, Program
from .assembler import assemble, AsmError
from .functional import run_functional, RetiredOp, SimError
from .prng import Prng, derive_seed

__version__ = "0.1.0"

__all__ = [
    "Op",
    "Instruction",
    "Program",
    "assemble",
    "AsmError",
    "run_functional",
    "RetiredOp",
    "SimError",
    "Prng",
    "derive_seed",
]
