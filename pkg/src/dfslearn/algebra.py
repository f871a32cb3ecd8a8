"""Finite-dimensional matrix *-algebras in canonical form.

An algebra is ``U (0 I_{n0} + sum_k C^{n_k x n_k} (x) I_{m_k}) U^H``. The discrete
part ``(n0, [(n_k, m_k), ...])`` is an :class:`AlgebraStructure`; together with a
unitary it becomes an :class:`AlgebraBasis`.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import dagger


@dataclass(frozen=True, order=True)
class AlgebraStructure:
    """Block dimensions ``(n0, ((n_1, m_1), ..., (n_K, m_K)))`` of a matrix *-algebra."""

    n0: int = 0
    blocks: tuple = ()

    def __post_init__(self):
        blocks = tuple((int(nk), int(mk)) for nk, mk in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "n0", int(self.n0))
        if self.n0 < 0:
            raise ValueError(f"n0 must be non-negative, got {self.n0}")
        for nk, mk in blocks:
            if nk < 1 or mk < 1:
                raise ValueError(f"block dimensions must be positive, got {(nk, mk)}")
        if self.n < 1:
            raise ValueError("structure has zero total dimension")

    @classmethod
    def of(cls, *blocks, n0=0):
        """``AlgebraStructure.of((1, 2), (1, 1), (1, 1))``."""
        return cls(n0=n0, blocks=tuple(blocks))

    @property
    def n(self):
        return self.n0 + sum(nk * mk for nk, mk in self.blocks)

    @property
    def K(self):
        return len(self.blocks)

    @property
    def is_unital(self):
        return self.n0 == 0

    @property
    def linear_dim(self):
        """Complex dimension of the algebra as a vector space."""
        return sum(nk * nk for nk, _ in self.blocks)

    @property
    def max_multiplicity(self):
        return max((mk for _, mk in self.blocks), default=1)

    def canonical(self):
        """Representative with pairs sorted descending; permutations are absorbed by ``U``."""
        return AlgebraStructure(self.n0, tuple(sorted(self.blocks, reverse=True)))

    def is_canonical(self):
        return self == self.canonical()

    def block_offsets(self):
        """Start row of every block in the canonical basis (after the ``n0`` zero block)."""
        offsets = []
        pos = self.n0
        for nk, mk in self.blocks:
            offsets.append(pos)
            pos += nk * mk
        return offsets

    def label(self):
        """Compact notation, e.g. ``({1,2},{1,1}^2)``; ``n0`` shown as a ``0^n0`` prefix."""
        parts = []
        if self.n0:
            parts.append(f"0^{self.n0}" if self.n0 > 1 else "0")
        for pair, group in itertools.groupby(self.blocks):
            count = len(list(group))
            text = "{%d,%d}" % pair
            parts.append(text if count == 1 else f"{text}^{count}")
        return "(" + ",".join(parts) + ")"

    def __str__(self):
        return self.label()

    @classmethod
    def parse(cls, text):
        """Inverse of :meth:`label`. Also accepts ``n0=2;{3,1}`` and bare ``{2,2},{1,1}``."""
        text = text.strip()
        n0 = 0
        m = re.match(r"^\s*n0\s*=\s*(\d+)\s*[;:]\s*(.*)$", text)
        if m:
            n0 = int(m.group(1))
            text = m.group(2)
        if text.startswith("(") and text.endswith(")"):
            text = text[1:-1]
        blocks = []
        pos = 0
        token = re.compile(r"\s*(?:\{\s*(\d+)\s*,\s*(\d+)\s*\}|0)(?:\^(\d+))?\s*(?:,|$)")
        while pos < len(text):
            m = token.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse structure {text!r}")
            count = int(m.group(3) or 1)
            if m.group(1) is None:
                n0 += count
            else:
                blocks.extend([(int(m.group(1)), int(m.group(2)))] * count)
            pos = m.end()
        return cls(n0=n0, blocks=tuple(blocks))

    def to_json(self):
        return {"n0": self.n0, "blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, data):
        return cls(n0=data.get("n0", 0), blocks=tuple(tuple(b) for b in data["blocks"]))


def _ordered_block_lists(total):
    if total == 0:
        yield ()
        return
    for part in range(1, total + 1):
        for nk in range(1, part + 1):
            if part % nk:
                continue
            for rest in _ordered_block_lists(total - part):
                yield ((nk, part // nk),) + rest


def enumerate_structures(n, up_to_permutation=False, allow_n0=False):
    """All structures of total dimension ``n``.

    With ``up_to_permutation`` one canonical representative per multiset of
    pairs is returned. ``allow_n0`` adds the non-unital structures with
    ``0 < n0 < n``.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    n0_values = range(0, n) if allow_n0 else (0,)
    found = set()
    for n0 in n0_values:
        for blocks in _ordered_block_lists(n - n0):
            s = AlgebraStructure(n0, blocks)
            found.add(s.canonical() if up_to_permutation else s)
    return sorted(found, key=_sort_key)


def _sort_key(s):
    # unitary dynamics first, free open dynamics last
    return (s.n0, -s.linear_dim, tuple((-a, -b) for a, b in s.blocks))


@dataclass(frozen=True)
class AlgebraBasis:
    structure: AlgebraStructure
    unitary: np.ndarray = field(repr=False)

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        n = self.structure.n
        if u.shape != (n, n):
            raise ValueError(f"unitary has shape {u.shape}, structure needs {(n, n)}")
        if np.abs(dagger(u) @ u - np.eye(n)).max() > 1e-12:
            raise ValueError("basis matrix is not unitary to 1e-12")
        object.__setattr__(self, "unitary", u)

    @classmethod
    def identity(cls, structure):
        return cls(structure, np.eye(structure.n, dtype=complex))

    @cached_property
    def projectors(self):
        return block_projectors(self)


@dataclass(frozen=True)
class AlgebraElement:
    basis: AlgebraBasis
    block_matrices: tuple

    def __post_init__(self):
        mats = tuple(np.asarray(x, dtype=complex) for x in self.block_matrices)
        blocks = self.basis.structure.blocks
        if len(mats) != len(blocks):
            raise ValueError(f"expected {len(blocks)} block matrices, got {len(mats)}")
        for x, (nk, _) in zip(mats, blocks):
            if x.shape != (nk, nk):
                raise ValueError(f"block matrix of shape {x.shape} does not match n_k={nk}")
        object.__setattr__(self, "block_matrices", mats)


def canonical_block_diagonal(structure, block_matrices):
    """``diag(0_{n0}, X_1 (x) I_{m_1}, ..., X_K (x) I_{m_K})`` in the canonical basis."""
    n = structure.n
    dtype = np.result_type(complex, *[np.asarray(x).dtype for x in block_matrices])
    out = np.zeros((n, n), dtype=dtype)
    for off, (nk, mk), x in zip(structure.block_offsets(), structure.blocks, block_matrices):
        size = nk * mk
        out[off:off + size, off:off + size] = np.kron(x, np.eye(mk))
    return out


def assemble_element(element):
    """``U diag(0, X_k (x) I_{m_k}) U^H`` for an :class:`AlgebraElement`."""
    u = element.basis.unitary
    return u @ canonical_block_diagonal(element.basis.structure, element.block_matrices) @ dagger(u)


def random_element(basis, rng, hermitian=False):
    mats = []
    for nk, _ in basis.structure.blocks:
        x = rng.standard_normal((nk, nk)) + 1j * rng.standard_normal((nk, nk))
        if hermitian:
            x = (x + dagger(x)) / 2
        mats.append(x)
    return AlgebraElement(basis, tuple(mats))


def block_projectors(basis):
    """Isometries ``P_k = P_k^+ U^H`` of shape ``(n_k m_k, n)``, one per block."""
    s = basis.structure
    uh = dagger(basis.unitary)
    return [uh[off:off + nk * mk, :] for off, (nk, mk) in zip(s.block_offsets(), s.blocks)]


def zero_block_projector(basis):
    """Orthogonal projector onto the ``n0`` block (zero matrix when ``n0 = 0``)."""
    u = basis.unitary
    n0 = basis.structure.n0
    return u[:, :n0] @ dagger(u[:, :n0])


# -- embeddings ---------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingWitness:
    """Non-negative integer matrix ``a`` (super blocks x sub blocks) certifying an embedding.

    ``n_k = sum_l a[k, l] * n~_l`` and ``m~_l = sum_k a[k, l] * m_k``.
    """

    a: np.ndarray

    def check(self, sub, sup):
        a = np.asarray(self.a)
        n_sup = np.array([b[0] for b in sup.blocks])
        m_sup = np.array([b[1] for b in sup.blocks])
        n_sub = np.array([b[0] for b in sub.blocks])
        m_sub = np.array([b[1] for b in sub.blocks])
        return (a.shape == (sup.K, sub.K) and np.all(a >= 0)
                and np.array_equal(a @ n_sub, n_sup) and np.array_equal(a.T @ m_sup, m_sub))


def is_embedded(sub, sup):
    """Witness that algebra ``sub`` embeds (up to isomorphism) into ``sup``, else ``None``.

    Depth-first search over the rows of ``a``; each row is a bounded
    composition of ``n_k`` into parts ``n~_l`` and partial multiplicity sums
    prune the search.
    """
    if sub.n != sup.n:
        raise ValueError(f"structures have different total dimension ({sub.n} vs {sup.n})")
    if not (sub.is_unital and sup.is_unital):
        raise ValueError("embedding test is defined for unital structures only")
    n_sub = [b[0] for b in sub.blocks]
    m_sub = [b[1] for b in sub.blocks]
    K, L = sup.K, sub.K
    a = np.zeros((K, L), dtype=int)
    msum = [0] * L

    def rows(k, ell, remaining):
        # non-negative a[k, ell:] with sum a[k, l] * n_sub[l] == remaining
        if ell == L:
            if remaining == 0:
                yield
            return
        mk = sup.blocks[k][1]
        top = min(remaining // n_sub[ell], (m_sub[ell] - msum[ell]) // mk)
        for v in range(top, -1, -1):
            a[k, ell] = v
            msum[ell] += v * mk
            yield from rows(k, ell + 1, remaining - v * n_sub[ell])
            msum[ell] -= v * mk
        a[k, ell] = 0

    def search(k):
        if k == K:
            return msum == m_sub
        for _ in rows(k, 0, sup.blocks[k][0]):
            if search(k + 1):
                return True
        return False

    if search(0):
        return EmbeddingWitness(a.copy())
    return None


@dataclass(frozen=True)
class HierarchyDag:
    """Transitively reduced embedding order.

    ``edges`` holds ``(sub, super)`` pairs: the algebra ``sub`` embeds into
    ``super``, so the GKSL model class of ``sub`` is the more complex one.
    """

    nodes: tuple
    edges: frozenset
    _below: dict = field(repr=False, compare=False)

    def embeds(self, sub, sup):
        """Reachability in the (reflexive) embedding order."""
        return sup in self._below[sub] or sub == sup

    def supers(self, node):
        return [b for a, b in self.edges if a == node]

    def subs(self, node):
        return [a for a, b in self.edges if b == node]

    def maximal(self):
        """Largest algebras (simplest models), e.g. unitary dynamics ``({n,1})``."""
        return [v for v in self.nodes if not self.supers(v)]

    def minimal(self):
        """Smallest algebras (most complex models), e.g. free open dynamics ``({1,n})``."""
        return [v for v in self.nodes if not self.subs(v)]

    def topological_order(self):
        """Nodes ordered from the simplest model (largest algebra) down."""
        indeg = {v: len(self.supers(v)) for v in self.nodes}
        rank = {v: i for i, v in enumerate(self.nodes)}
        ready = sorted((v for v in self.nodes if indeg[v] == 0), key=rank.get)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in sorted(self.subs(v), key=rank.get):
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
            ready.sort(key=rank.get)
        return order

    def to_dot(self, name="hierarchy"):
        """Graphviz text; arrows point from the larger algebra to the embedded one."""
        lines = [f"digraph {name} {{", "  rankdir=TB;", "  node [shape=box];"]
        ids = {v: f"n{i}" for i, v in enumerate(self.nodes)}
        for v in self.nodes:
            lines.append(f'  {ids[v]} [label="{v.label()}"];')
        order = {v: i for i, v in enumerate(self.nodes)}
        for sub, sup in sorted(self.edges, key=lambda e: (order[e[1]], order[e[0]])):
            lines.append(f"  {ids[sup]} -> {ids[sub]};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def hierarchy_dag(structures):
    """Embedding DAG over structures that are distinct up to block permutation."""
    nodes = tuple(structures)
    canon = [s.canonical() for s in nodes]
    if len(set(canon)) != len(canon):
        raise ValueError("structures must be pairwise distinct up to block permutation")
    if len({s.n for s in nodes}) > 1:
        raise ValueError("structures must share the total dimension n")
    below = {v: set() for v in nodes}
    for a, b in itertools.permutations(nodes, 2):
        if is_embedded(a, b) is not None:
            below[a].add(b)
    edges = set()
    for a in nodes:
        for b in below[a]:
            if not any(b in below[c] for c in below[a] if c != b):
                edges.add((a, b))
    return HierarchyDag(nodes, frozenset(edges), below)
