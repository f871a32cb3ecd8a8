"""GKSL generators with a prescribed decoherence-free subalgebra.

For a unital structure ``((n_k, m_k))_k`` and basis ``U = exp(iG)`` the
generator has

    L_j = sum_k P_k^H (I_{n_k} (x) beta_{j,k}) P_k
    H   = sum_k P_k^H (kappa_k (x) I_{m_k} + I_{n_k} (x) mu_k) P_k

with ``kappa_k``, ``mu_k`` real diagonal. Superoperators use column stacking,
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import AlgebraBasis, AlgebraStructure, assemble_element, random_element
from .linalg import dagger, expm, unvec, vec


def default_lindblad_count(structure):
    return structure.max_multiplicity ** 2


@dataclass(frozen=True)
class GkslModel:
    """Continuous parameters of a structured generator.

    ``betas[j][k]`` is the ``m_k x m_k`` complex matrix for Lindblad index ``j``
    and block ``k``; ``kappas[k]`` (length ``n_k``) and ``mus[k]`` (length
    ``m_k``) are the diagonals of the Hamiltonian blocks.
    """

    structure: AlgebraStructure
    unitary_generator: np.ndarray = field(repr=False)
    betas: tuple = field(repr=False)
    kappas: tuple = field(repr=False)
    mus: tuple = field(repr=False)

    def __post_init__(self):
        s = self.structure
        if not s.is_unital:
            raise ValueError("decoherence-free structures must be unital (n0 = 0)")
        g = np.asarray(self.unitary_generator, dtype=complex)
        if g.shape != (s.n, s.n):
            raise ValueError(f"unitary generator must be {s.n}x{s.n}")
        if np.abs(g - dagger(g)).max() > 1e-12:
            raise ValueError("unitary generator is not Hermitian")
        betas = tuple(tuple(np.asarray(b, dtype=complex) for b in row) for row in self.betas)
        for row in betas:
            if len(row) != s.K:
                raise ValueError("every Lindblad index needs one beta per block")
            for b, (_, mk) in zip(row, s.blocks):
                if b.shape != (mk, mk):
                    raise ValueError(f"beta of shape {b.shape} does not match m_k={mk}")
        kappas = tuple(np.asarray(k, dtype=float).reshape(-1) for k in self.kappas)
        mus = tuple(np.asarray(m, dtype=float).reshape(-1) for m in self.mus)
        if len(kappas) != s.K or len(mus) != s.K:
            raise ValueError("need one kappa and one mu per block")
        for kap, mu, (nk, mk) in zip(kappas, mus, s.blocks):
            if kap.shape != (nk,) or mu.shape != (mk,):
                raise ValueError("kappa/mu diagonal length mismatch")
        object.__setattr__(self, "unitary_generator", g)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "kappas", kappas)
        object.__setattr__(self, "mus", mus)

    @property
    def lindblad_count(self):
        return len(self.betas)

    @property
    def n(self):
        return self.structure.n

    def unitary(self):
        return expm(1j * self.unitary_generator)

    def basis(self):
        return AlgebraBasis(self.structure, self.unitary())

    @classmethod
    def zeros(cls, structure, lindblad_count=None):
        J = default_lindblad_count(structure) if lindblad_count is None else lindblad_count
        s = structure
        return cls(
            s,
            np.zeros((s.n, s.n), dtype=complex),
            tuple(tuple(np.zeros((mk, mk), dtype=complex) for _, mk in s.blocks) for _ in range(J)),
            tuple(np.zeros(nk) for nk, _ in s.blocks),
            tuple(np.zeros(mk) for _, mk in s.blocks),
        )

    def to_json(self):
        def cplx(x):
            return {"re": np.real(x).tolist(), "im": np.imag(x).tolist()}

        return {
            "structure": self.structure.to_json(),
            "unitary_generator": cplx(self.unitary_generator),
            "betas": [[cplx(b) for b in row] for row in self.betas],
            "kappas": [k.tolist() for k in self.kappas],
            "mus": [m.tolist() for m in self.mus],
        }

    @classmethod
    def from_json(cls, data):
        def cplx(d):
            return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)

        return cls(
            AlgebraStructure.from_json(data["structure"]),
            cplx(data["unitary_generator"]),
            tuple(tuple(cplx(b) for b in row) for row in data["betas"]),
            tuple(np.asarray(k, dtype=float) for k in data["kappas"]),
            tuple(np.asarray(m, dtype=float) for m in data["mus"]),
        )


@dataclass(frozen=True)
class OperatorPair:
    hamiltonian: np.ndarray = field(repr=False)
    lindblads: tuple = field(repr=False)

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if np.abs(h - dagger(h)).max() > 1e-12:
            raise ValueError("Hamiltonian is not Hermitian to 1e-12")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "lindblads", tuple(np.asarray(l, dtype=complex) for l in self.lindblads))

    @property
    def n(self):
        return self.hamiltonian.shape[0]

    def to_json(self):
        def cplx(x):
            return {"re": np.real(x).tolist(), "im": np.imag(x).tolist()}

        return {"hamiltonian": cplx(self.hamiltonian), "lindblads": [cplx(l) for l in self.lindblads]}

    @classmethod
    def from_json(cls, data):
        def cplx(d):
            return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)

        return cls(cplx(data["hamiltonian"]), tuple(cplx(l) for l in data["lindblads"]))


def canonical_hamiltonian_diagonal(structure, kappas, mus):
    """Diagonal of ``sum_k kappa_k (x) I + I (x) mu_k`` in the canonical basis."""
    return np.concatenate([np.add.outer(k, m).reshape(-1) for k, m in zip(kappas, mus)])


def canonical_lindblads(structure, betas):
    """``(J, n, n)`` stack of ``blockdiag(I_{n_k} (x) beta_{j,k})``."""
    n = structure.n
    out = np.zeros((len(betas), n, n), dtype=complex)
    for j, row in enumerate(betas):
        for off, (nk, mk), b in zip(structure.block_offsets(), structure.blocks, row):
            size = nk * mk
            out[j, off:off + size, off:off + size] = np.kron(np.eye(nk), b)
    return out


def assemble_operators(model):
    u = model.unitary()
    d = canonical_hamiltonian_diagonal(model.structure, model.kappas, model.mus)
    h = (u * d[np.newaxis, :]) @ dagger(u)
    h = (h + dagger(h)) / 2
    lind = u @ canonical_lindblads(model.structure, model.betas) @ dagger(u)
    return OperatorPair(h, tuple(lind))


def effective_hamiltonian(model):
    """``sum_k P_k^H (kappa_k (x) I_{m_k}) P_k``: generates the unitary action on the algebra."""
    u = model.unitary()
    d = np.concatenate([np.repeat(k, mk) for k, (_, mk) in zip(model.kappas, model.structure.blocks)])
    h = (u * d[np.newaxis, :]) @ dagger(u)
    return (h + dagger(h)) / 2


def gksl_superoperator(ops):
    """Column-stacking matrix of ``rho -> -i[H, rho] + sum_j (L rho L^H - {L^H L, rho}/2)``."""
    h = ops.hamiltonian
    n = h.shape[0]
    eye = np.eye(n)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    if ops.lindblads:
        ls = np.stack(ops.lindblads)
        k = np.einsum("jba,jbc->ac", ls.conj(), ls)
        sup = sup + np.einsum("jab,jcd->acbd", ls.conj(), ls).reshape(n * n, n * n)
        sup = sup - 0.5 * (np.kron(eye, k) + np.kron(k.T, eye))
    return sup


def gksl_superoperator_vjp(hamiltonian, lindblads, cotangent):
    """Pull a cotangent of :func:`gksl_superoperator` back to ``(H, L_j)``.

    Returns ``(hbar, lbars)`` with ``lbars`` shaped like ``lindblads`` ``(J, n, n)``.
    """
    n = hamiltonian.shape[0]
    g4 = cotangent.reshape(n, n, n, n)
    t_outer = np.einsum("acbc->ab", g4)  # pairs with kron(X, I)
    t_inner = np.einsum("acad->cd", g4)  # pairs with kron(I, X)
    hbar = 1j * t_inner - 1j * t_outer.T
    kbar = -0.5 * (t_inner + t_outer.T)
    ls = np.asarray(lindblads)
    if ls.size == 0:
        return hbar, np.zeros((0, n, n), dtype=complex)
    lbar = np.einsum("acbd,jab->jcd", g4, ls)
    lbar = lbar + np.conj(np.einsum("acbd,jcd->jab", g4, ls.conj()))
    lbar = lbar + ls @ (kbar + dagger(kbar))
    return hbar, lbar


@dataclass(frozen=True)
class Propagator:
    """``Phi_tau = exp(tau * L)`` as an ``n^2 x n^2`` matrix plus its Hilbert-Schmidt adjoint."""

    tau: float
    matrix: np.ndarray = field(repr=False)
    adjoint_matrix: np.ndarray = field(repr=False)

    @property
    def n(self):
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, rho):
        return unvec(self.matrix @ vec(rho), self.n)

    def apply_adjoint(self, x):
        return unvec(self.adjoint_matrix @ vec(x), self.n)

    @classmethod
    def identity(cls, n, tau=1.0):
        eye = np.eye(n * n, dtype=complex)
        return cls(float(tau), eye, eye.copy())


def propagator(superop, tau):
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    superop = np.asarray(superop)
    if not np.all(np.isfinite(superop)):
        raise ValueError("superoperator has non-finite entries")
    mat = expm(superop * tau)
    if not np.all(np.isfinite(mat)):
        raise FloatingPointError("propagator has non-finite entries")
    return Propagator(float(tau), mat, dagger(mat))


def model_propagator(model, tau):
    ops = model if isinstance(model, OperatorPair) else assemble_operators(model)
    return propagator(gksl_superoperator(ops), tau)


def choi_matrix(superop_matrix):
    """``sum_ab E_ab (x) Phi(E_ab)`` for a column-stacking superoperator matrix."""
    m = np.asarray(superop_matrix)
    n = int(round(np.sqrt(m.shape[0])))
    # m4[d, c, b, a] = Phi(E_ab)[c, d]
    m4 = m.reshape(n, n, n, n)
    return m4.transpose(3, 1, 2, 0).reshape(n * n, n * n)


@dataclass(frozen=True)
class CptpReport:
    trace_deviation: float
    choi_min_eigenvalue: float
    passed: bool


def verify_cptp(p, tol=1e-8, trace_tol=None):
    """Trace preservation over all matrix units and positivity of the Choi matrix."""
    trace_tol = tol if trace_tol is None else trace_tol
    m = p.matrix if isinstance(p, Propagator) else np.asarray(p)
    n = int(round(np.sqrt(m.shape[0])))
    m4 = m.reshape(n, n, n, n)
    traces = np.einsum("ccba->ab", m4)
    dev = float(np.abs(traces - np.eye(n)).max())
    choi = choi_matrix(m)
    lam = float(np.linalg.eigvalsh((choi + dagger(choi)) / 2).min())
    return CptpReport(dev, lam, bool(dev <= trace_tol and lam >= -tol))


@dataclass(frozen=True)
class DecoherenceFreeReport:
    product_residual: float     # ||Phi*(X^H X) - Phi*(X)^H Phi*(X)||
    coproduct_residual: float   # ||Phi*(X X^H) - Phi*(X) Phi*(X)^H||
    unitary_residual: float     # ||Phi*(X) - e^{iHt} X e^{-iHt}||
    passed: bool


def decoherence_free_residuals(ops, basis, times, samples, rng, effective_h=None, tol=1e-8):
    """Residuals of the decoherence-free conditions for random elements of ``N(nu, U)``.

    ``effective_h=None`` skips the effective-unitary comparison.
    """
    sup = gksl_superoperator(ops)
    xs = [assemble_element(random_element(basis, rng)) for _ in range(samples)]
    xs.append(np.eye(basis.structure.n, dtype=complex))
    r1 = r2 = r3 = 0.0
    for t in times:
        adj = propagator(sup, t)
        if effective_h is not None:
            w, v = np.linalg.eigh(effective_h)
            ut = (v * np.exp(1j * w * t)) @ dagger(v)
        for x in xs:
            fx = adj.apply_adjoint(x)
            r1 = max(r1, np.linalg.norm(adj.apply_adjoint(dagger(x) @ x) - dagger(fx) @ fx))
            r2 = max(r2, np.linalg.norm(adj.apply_adjoint(x @ dagger(x)) - fx @ dagger(fx)))
            if effective_h is not None:
                r3 = max(r3, np.linalg.norm(fx - ut @ x @ dagger(ut)))
    r1, r2, r3 = float(r1), float(r2), float(r3)
    return DecoherenceFreeReport(r1, r2, r3, bool(max(r1, r2, r3) <= tol))


def verify_decoherence_free(model, times, samples=20, tol=1e-8, rng=None):
    rng = np.random.default_rng(0) if rng is None else rng
    return decoherence_free_residuals(
        assemble_operators(model), model.basis(), times, samples, rng,
        effective_h=effective_hamiltonian(model), tol=tol)
