"""Concrete generators: an emitter array in a waveguide with parametric gain, and random structured models."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .generator import OperatorPair
from .likelihood import ParameterLayout

# |0> ground, |1> excited; sigma_minus lowers |1> -> |0>
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()

TABLE_STRUCTURES = (
    "({1,8})",
    "({1,4}^2)",
    "({1,2}^4)",
    "({1,4},{1,1}^4)",
    "({1,2},{1,1}^6)",
    "({1,1}^8)",
    "({2,1},{1,1}^6)",
    "({2,1}^4)",
    "({4,1},{1,1}^4)",
    "({4,1}^2)",
    "({8,1})",
)


@dataclass(frozen=True)
class WaveguideParams:
    gamma: float = 1.0
    r: float = 0.5
    theta: float = 0.0
    atoms: int = 3
    tau: float = 0.2

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.atoms < 1:
            raise ValueError("need at least one atom")

    @property
    def n(self):
        return 2 ** self.atoms


def site_operator(op, site, atoms):
    """``op`` on atom ``site`` (0-based, leftmost tensor factor first), identity elsewhere."""
    factors = [np.eye(2, dtype=complex)] * atoms
    factors[site] = op
    return reduce(np.kron, factors)


def waveguide_operators(p: WaveguideParams) -> OperatorPair:
    a = p.atoms
    sm = [site_operator(SIGMA_MINUS, j, a) for j in range(a)]
    sp = [site_operator(SIGMA_PLUS, j, a) for j in range(a)]
    phase = np.exp(-1j * p.theta)
    h = np.zeros((p.n, p.n), dtype=complex)
    for i in range(a):
        for j in range(a):
            c = np.sinh(p.r * abs(i - j) / 2)
            if c:
                h += c * (phase * sp[j] @ sp[i] + np.conj(phase) * sm[j] @ sm[i])
    h = p.gamma / 2 * h
    h = (h + h.conj().T) / 2

    def lindblad(squeeze):
        out = np.zeros((p.n, p.n), dtype=complex)
        for j in range(a):
            out += np.cosh(squeeze[j]) * sm[j] - 1j * phase * np.sinh(squeeze[j]) * sp[j]
        return np.sqrt(p.gamma) * out

    # atoms numbered 1..A in the squeeze profiles
    right = [p.r * j / 2 for j in range(a)]
    left = [p.r * (a - 1 - j) / 2 for j in range(a)]
    return OperatorPair(h, (lindblad(right), lindblad(left)))


def random_parameters(structure, rng, scale, lindblad_count=None):
    """Flat parameter vector with i.i.d. ``N(0, scale^2)`` entries in the frozen layout."""
    if scale < 0:
        raise ValueError("scale must be non-negative")
    layout = ParameterLayout(structure, lindblad_count)
    return layout, rng.normal(0.0, scale, size=layout.size) if scale > 0 else np.zeros(layout.size)


def random_structured_model(structure, J=None, scale=1.0, rng=None, unitary_scale=None):
    """Random structured generator.

    Every entry of ``G``, ``beta``, ``kappa`` and ``mu`` is Gaussian with
    standard deviation ``scale``; ``unitary_scale`` overrides it for ``G``
    alone so the orientation of the protected algebra can be made generic
    while the rates stay small.
    """
    rng = np.random.default_rng() if rng is None else rng
    layout, theta = random_parameters(structure, rng, scale, J)
    if unitary_scale is not None:
        g = slice(0, layout.g_im.stop)
        theta[g] = rng.normal(0.0, unitary_scale, size=g.stop) if unitary_scale > 0 else 0.0
    return layout.unpack(theta)
