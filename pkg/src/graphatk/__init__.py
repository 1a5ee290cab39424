"""graphatk: meta-gradient structure poisoning attacks on graph neural networks.

The package provides a tape-based autodiff engine whose gradients are
themselves differentiable (tape), dataset handling and graph generators
(graphs), a linearized GCN surrogate with contrastive training objectives
(surrogate), greedy meta-gradient and projected-gradient attacks (attacks),
edge-placement bias analysis (analysis), a GCN victim evaluator (victim)
and a command-line interface (cli).
"""

from .tape import (
    EPS,
    NonFiniteError,
    ShapeError,
    Tape,
    Var,
    finite_difference_check,
    gather_rows,
    grad,
    normalize_rows,
    outer,
    softmax_rows,
    tile_cols,
    tile_rows,
)

__all__ = [
    "EPS",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Var",
    "finite_difference_check",
    "gather_rows",
    "grad",
    "normalize_rows",
    "outer",
    "softmax_rows",
    "tile_cols",
    "tile_rows",
]

__version__ = "0.1.0"
