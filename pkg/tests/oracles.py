"""Independent reference computations shared by the test modules."""

import math

import numpy as np


def armchair_k0_levels(n, t=2.7, acc=0.142):
    """Non-negative k = 0 eigenvalues of an armchair ribbon built atom by atom."""
    j = np.repeat(np.arange(n), 2)
    x = np.where(j % 2 == 0, 0.0, 1.5 * acc) + np.tile([0.0, acc], n)
    y = j * math.sqrt(3) / 2 * acc
    h = np.zeros((2 * n, 2 * n))
    for shift in (-3 * acc, 0.0, 3 * acc):
        d = np.hypot(x[:, None] - x[None, :] - shift, y[:, None] - y[None, :])
        h -= t * (np.abs(d - acc) < 1e-6)
    e = np.linalg.eigvalsh(h)
    return np.unique(np.round(np.abs(e[e >= -1e-9]), 9))


def armchair_is_gapless(n, t=2.7):
    """Zero-energy state at k = 0 in the lattice Hamiltonian."""
    return bool(np.min(armchair_k0_levels(n, t)) < 1e-6)


_GATE_OPS = {"AND": all, "NAND": lambda v: not all(v), "OR": any, "NOR": lambda v: not any(v),
             "XOR": lambda v: sum(v) % 2 == 1, "XNOR": lambda v: sum(v) % 2 == 0,
             "NOT": lambda v: not v[0], "BUFF": lambda v: v[0]}


def truth_oracle(nl, bits):
    """Recursive Boolean evaluation of a netlist's outputs with Python operators."""
    gates = {g.output: g for g in nl.gates}
    memo = dict(zip(nl.inputs, map(bool, bits)))

    def val(s):
        if s not in memo:
            g = gates[s]
            memo[s] = bool(_GATE_OPS[g.kind.value]([val(f) for f in g.fanins]))
        return memo[s]

    return tuple(val(o) for o in nl.outputs)
