"""Projective instruments, multi-time outcome probabilities and synthetic records.

Between consecutive measurements the state evolves by ``Phi_tau``; outcome
``x`` of a projective instrument collapses ``rho -> E_x rho E_x / p``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .algebra import AlgebraBasis, AlgebraStructure, zero_block_projector
from .generator import OperatorPair, model_propagator
from .linalg import dagger, haar_unitary

log = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12


class ZeroProbabilityBranch(ArithmeticError):
    """The observed outcome has (numerically) zero probability under the model."""


@dataclass(frozen=True)
class Instrument:
    projectors: np.ndarray = field(repr=False)  # (outcomes, n, n)
    accessible_basis: AlgebraBasis | None = field(default=None, repr=False)
    includes_complement: bool = False

    @property
    def outcome_count(self):
        return self.projectors.shape[0]

    @property
    def n(self):
        return self.projectors.shape[1]

    def completeness_error(self):
        return float(np.abs(self.projectors.sum(axis=0) - np.eye(self.n)).max())

    def validate(self, atol=1e-10):
        """Raise ``ValueError`` unless the projectors are Hermitian, orthogonal and idempotent."""
        e = self.projectors
        if np.abs(e - dagger(e)).max() > 1e-12:
            raise ValueError("projector not Hermitian")
        prod = np.einsum("xab,ybc->xyac", e, e)
        expect = np.einsum("xy,xac->xyac", np.eye(len(e)), e)
        if np.abs(prod - expect).max() > atol:
            raise ValueError("projectors are not mutually orthogonal idempotents")
        if self.accessible_basis is not None:
            total = e.sum(axis=0)
            target = np.eye(self.n)
            if not self.includes_complement:
                target = target - zero_block_projector(self.accessible_basis)
            if np.abs(total - target).max() > atol:
                raise ValueError("projectors do not resolve the accessible identity")


def random_instrument(basis, rng, granularity="fine", complement=True):
    """Haar-random projective measurement built from elements of the accessible algebra.

    Each block factor ``C^{n_k}`` gets a random orthonormal basis ``v_i``; the
    fine instrument has outcomes ``U (|v_i><v_i| (x) I_{m_k}) U^H``. The coarse
    instrument merges these into a random two-outcome partition. When
    ``n0 > 0`` and ``complement`` is set the projector onto the zero block is
    appended as an extra outcome.
    """
    s = basis.structure
    u = basis.unitary
    n = s.n
    fine = []
    for off, (nk, mk) in zip(s.block_offsets(), s.blocks):
        v = haar_unitary(nk, rng)
        for i in range(nk):
            # columns spanning |v_i> (x) C^{m_k} inside this block
            cols = np.kron(v[:, i:i + 1], np.eye(mk))
            w = u[:, off:off + nk * mk] @ cols
            fine.append(w @ dagger(w))
    if granularity == "coarse" and len(fine) > 1:
        labels = rng.integers(0, 2, size=len(fine))
        if labels.min() == labels.max():
            labels[rng.integers(0, len(fine))] ^= 1
        projectors = [sum(f for f, l in zip(fine, labels) if l == c) for c in (0, 1)]
    elif granularity in ("fine", "coarse"):
        projectors = fine
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    with_complement = bool(s.n0 and complement)
    if with_complement:
        projectors.append(zero_block_projector(basis))
    arr = np.stack(projectors) if projectors else np.zeros((0, n, n), dtype=complex)
    return Instrument(arr, basis, with_complement)


@dataclass(frozen=True)
class MeasurementChain:
    """Outcome record at times ``t_j = j * tau``; ``initial_state=None`` is ``I/n``."""

    instrument_ids: tuple
    outcomes: tuple
    tau: float
    initial_state: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "instrument_ids", tuple(int(i) for i in self.instrument_ids))
        object.__setattr__(self, "outcomes", tuple(int(x) for x in self.outcomes))
        if len(self.instrument_ids) != len(self.outcomes):
            raise ValueError("instrument_ids and outcomes differ in length")

    def __len__(self):
        return len(self.outcomes)

    def sigma(self, n):
        if self.initial_state is None:
            return np.eye(n, dtype=complex) / n
        return np.asarray(self.initial_state, dtype=complex)

    def validate(self, table):
        for i, x in zip(self.instrument_ids, self.outcomes):
            if not 0 <= i < len(table):
                raise ValueError(f"instrument id {i} out of range")
            if not 0 <= x < table[i].outcome_count:
                raise ValueError(f"outcome {x} out of range for instrument {i}")

    def observed_projectors(self, table):
        return np.stack([table[i].projectors[x] for i, x in zip(self.instrument_ids, self.outcomes)])


@dataclass
class Dataset:
    chains: list
    instrument_table: list
    accessible_structure: AlgebraStructure
    generator_metadata: dict | None = None
    accessible_basis: AlgebraBasis | None = None

    def __post_init__(self):
        for c in self.chains:
            c.validate(self.instrument_table)

    @property
    def n(self):
        return self.accessible_structure.n

    @property
    def tau(self):
        taus = {c.tau for c in self.chains}
        if len(taus) != 1:
            raise ValueError("dataset chains use different time steps")
        return taus.pop()

    def __len__(self):
        return len(self.chains)

    def subset(self, indices):
        return Dataset([self.chains[i] for i in indices], self.instrument_table,
                       self.accessible_structure, self.generator_metadata, self.accessible_basis)


def conditional_probability(e, p, rho):
    """``Tr[E Phi(rho)]`` clamped to ``[0, 1]``."""
    val = np.real(np.trace(e @ p.apply(rho)))
    return float(min(max(val, 0.0), 1.0))


def conditioned_state(e, p, rho, floor=PROBABILITY_FLOOR):
    evolved = p.apply(rho)
    prob = np.real(np.trace(e @ evolved))
    if prob <= floor:
        raise ZeroProbabilityBranch(f"outcome probability {prob:.3e} below floor {floor:g}")
    out = e @ evolved @ e / prob
    return (out + dagger(out)) / 2


def sequence_probability(chain, table, p, sigma=None, method="product"):
    """Probability of the whole record.

    ``method="product"`` multiplies the conditional probabilities along the
    collapse recursion; ``method="nested"`` evaluates the unnormalised trace
    ``Tr E_N Phi(... E_1 Phi(sigma) E_1 ...) E_N`` directly.
    """
    n = p.n
    rho = chain.sigma(n) if sigma is None else np.asarray(sigma, dtype=complex)
    projs = chain.observed_projectors(table) if len(chain) else []
    if method == "nested":
        for e in projs:
            rho = e @ p.apply(rho) @ e
        return float(np.real(np.trace(rho)))
    if method != "product":
        raise ValueError(f"unknown method {method!r}")
    total = 1.0
    for e in projs:
        total *= conditional_probability(e, p, rho)
        try:
            rho = conditioned_state(e, p, rho)
        except ZeroProbabilityBranch:
            return 0.0
    return total


def sample_chain(p, table, sigma, N, rng, instrument_ids=None, postselect=False, tau=None):
    """Draw ``N`` outcomes by sequential Born-rule sampling and collapse.

    ``instrument_ids`` defaults to cycling through ``table``. Incomplete
    instruments (no complement outcome for ``n0 > 0``) need ``postselect``,
    which renormalises over the accessible outcomes.
    """
    n = p.n
    if instrument_ids is None:
        instrument_ids = [j % len(table) for j in range(N)]
    rho = np.eye(n, dtype=complex) / n if sigma is None else np.asarray(sigma, dtype=complex)
    outcomes = []
    for j in range(N):
        inst = table[instrument_ids[j]]
        evolved = p.apply(rho)
        weights = np.real(np.einsum("xab,ba->x", inst.projectors, evolved))
        weights = np.clip(weights, 0.0, None)
        total = weights.sum()
        if not postselect and abs(total - 1.0) > 1e-9:
            raise ValueError(f"instrument {instrument_ids[j]} is incomplete (weights sum {total:.12f})")
        if total <= PROBABILITY_FLOOR:
            raise ZeroProbabilityBranch("no accessible outcome has positive probability")
        cdf = np.cumsum(weights / total)
        x = int(min(np.searchsorted(cdf, rng.random(), side="right"), len(weights) - 1))
        e = inst.projectors[x]
        rho = e @ evolved @ e / weights[x]
        rho = (rho + dagger(rho)) / 2
        outcomes.append(x)
    return MeasurementChain(tuple(instrument_ids[:N]), tuple(outcomes), p.tau if tau is None else tau,
                            None if sigma is None else np.asarray(sigma))


def generate_dataset(model, accessible, S, N, tau, seed, granularity="fine", postselect=False,
                     sigma=None):
    """``S`` independent chains of length ``N`` with a fresh random instrument at every step.

    Chain ``s`` uses its own stream ``default_rng([*seed, s])`` (``seed`` an
    integer or a sequence of integers) so chains can be produced in any order. ``postselect`` drops the complement outcome and
    conditions each step on landing in the accessible block.
    """
    if S < 1 or N < 1:
        raise ValueError(f"need S >= 1 and N >= 1, got S={S}, N={N}")
    if isinstance(accessible, AlgebraStructure):
        accessible = AlgebraBasis.identity(accessible)
    base = [int(x) for x in np.atleast_1d(seed)]
    p = model_propagator(model, tau)
    table = []
    chains = []
    for s in range(S):
        rng = np.random.default_rng(base + [s])
        insts = [random_instrument(accessible, rng, granularity, complement=not postselect)
                 for _ in range(N)]
        ids = list(range(len(table), len(table) + N))
        table.extend(insts)
        chains.append(sample_chain(p, table, sigma, N, rng, ids, postselect=postselect, tau=tau))
    meta = {
        "seed": base if len(base) > 1 else base[0],
        "S": int(S),
        "N": int(N),
        "tau": float(tau),
        "granularity": granularity,
        "postselect": bool(postselect),
    }
    if isinstance(model, OperatorPair):
        meta["structure"] = None
        meta["operators"] = model.to_json()
    else:
        meta["structure"] = model.structure.to_json()
        meta["model"] = model.to_json()
    return Dataset(chains, table, accessible.structure, meta, accessible)


def relative_position(basis_n, basis_a, tol=1e-9):
    """Dimensions of ``N``, ``A`` and ``N ∩ A`` as subspaces of ``C^{n x n}``.

    A heuristic for the genericity assumption between the hidden and the
    accessible algebra; nothing enforces it.
    """
    def span(basis):
        s = basis.structure
        u = basis.unitary
        vecs = []
        for off, (nk, mk) in zip(s.block_offsets(), s.blocks):
            for a in range(nk):
                for b in range(nk):
                    x = np.zeros((nk, nk))
                    x[a, b] = 1.0
                    blk = np.zeros((s.n, s.n), dtype=complex)
                    blk[off:off + nk * mk, off:off + nk * mk] = np.kron(x, np.eye(mk))
                    vecs.append((u @ blk @ dagger(u)).reshape(-1))
        return np.array(vecs).T

    vn, va = span(basis_n), span(basis_a)
    dim_n = np.linalg.matrix_rank(vn, tol)
    dim_a = np.linalg.matrix_rank(va, tol)
    dim_sum = np.linalg.matrix_rank(np.hstack([vn, va]), tol)
    inter = dim_n + dim_a - dim_sum
    info = {"dim_n": int(dim_n), "dim_a": int(dim_a), "dim_intersection": int(inter),
            "generic": bool(inter < min(dim_n, dim_a))}
    if not info["generic"]:
        log.info("hidden and accessible algebras are nested (dim N∩A = %d)", inter)
    return info
