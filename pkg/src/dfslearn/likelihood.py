"""Log-likelihood of measurement records under a structured GKSL model, with gradients.

Parameter vector layout (``LAYOUT_VERSION = "v1"``) for a structure with ``K``
blocks and ``J`` Lindblad indices, in order:

1. ``G`` diagonal (``n`` reals), then ``Re G[a, b]`` and ``Im G[a, b]`` for
   ``a < b`` in row-major order of the upper triangle (``n(n-1)/2`` each);
2. for ``j = 0..J-1``, for ``k = 0..K-1``: ``Re beta_{j,k}`` then
   ``Im beta_{j,k}``, each ``m_k^2`` entries row-major;
3. ``kappa_k`` diagonals for ``k = 0..K-1`` (``n_k`` each);
4. ``mu_k`` diagonals for ``k = 0..K-1`` (``m_k`` each).

Gradients are computed by a reverse sweep through the collapse recursion,
the matrix exponential (via its Fréchet derivative) and the operator
assembly. Complex cotangents use ``Zbar = dF/dRe Z + i dF/dIm Z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import AlgebraStructure
from .dynamics import PROBABILITY_FLOOR
from .generator import (
    GkslModel,
    canonical_hamiltonian_diagonal,
    canonical_lindblads,
    default_lindblad_count,
    gksl_superoperator,
    gksl_superoperator_vjp,
    OperatorPair,
    propagator,
)
from .linalg import dagger, expm, expm_vjp

LAYOUT_VERSION = "v1"


class ParameterLayout:
    """Flat real encoding of :class:`GkslModel` parameters for one structure."""

    def __init__(self, structure, lindblad_count=None):
        if not structure.is_unital:
            raise ValueError("parameter layouts exist for unital structures only")
        self.structure = structure
        self.J = default_lindblad_count(structure) if lindblad_count is None else int(lindblad_count)
        n = structure.n
        self.n = n
        self._iu = np.triu_indices(n, 1)
        ntri = len(self._iu[0])
        pos = 0
        self.g_diag = slice(pos, pos + n); pos += n
        self.g_re = slice(pos, pos + ntri); pos += ntri
        self.g_im = slice(pos, pos + ntri); pos += ntri
        self.beta = []
        for _ in range(self.J):
            row = []
            for _, mk in structure.blocks:
                re = slice(pos, pos + mk * mk); pos += mk * mk
                im = slice(pos, pos + mk * mk); pos += mk * mk
                row.append((re, im))
            self.beta.append(row)
        self.kappa = []
        for nk, _ in structure.blocks:
            self.kappa.append(slice(pos, pos + nk)); pos += nk
        self.mu = []
        for _, mk in structure.blocks:
            self.mu.append(slice(pos, pos + mk)); pos += mk
        self.size = pos

    def hermitian_generator(self, theta):
        n = self.n
        g = np.zeros((n, n), dtype=complex)
        g[np.diag_indices(n)] = theta[self.g_diag]
        off = theta[self.g_re] + 1j * theta[self.g_im]
        g[self._iu] = off
        g[(self._iu[1], self._iu[0])] = np.conj(off)
        return g

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {theta.shape}, layout needs ({self.size},)")
        s = self.structure
        betas = tuple(
            tuple((theta[re] + 1j * theta[im]).reshape(mk, mk) for (re, im), (_, mk) in zip(row, s.blocks))
            for row in self.beta)
        return GkslModel(
            s,
            self.hermitian_generator(theta),
            betas,
            tuple(theta[sl].copy() for sl in self.kappa),
            tuple(theta[sl].copy() for sl in self.mu),
        )

    def pack(self, model):
        if model.structure != self.structure or model.lindblad_count != self.J:
            raise ValueError("model does not match this layout")
        theta = np.zeros(self.size)
        g = model.unitary_generator
        theta[self.g_diag] = np.real(np.diagonal(g))
        theta[self.g_re] = np.real(g[self._iu])
        theta[self.g_im] = np.imag(g[self._iu])
        for row_sl, row in zip(self.beta, model.betas):
            for (re, im), b in zip(row_sl, row):
                theta[re] = np.real(b).reshape(-1)
                theta[im] = np.imag(b).reshape(-1)
        for sl, k in zip(self.kappa, model.kappas):
            theta[sl] = k
        for sl, m in zip(self.mu, model.mus):
            theta[sl] = m
        return theta

    def generator_gradient(self, gbar):
        """Real gradient of the ``G`` entries from the complex cotangent of ``G``."""
        iu = self._iu
        lo = (iu[1], iu[0])
        return (np.real(np.diagonal(gbar)),
                np.real(gbar[iu] + gbar[lo]),
                np.imag(gbar[iu]) - np.imag(gbar[lo]))

    def to_json(self, theta):
        return {"layout": LAYOUT_VERSION, "structure": self.structure.to_json(),
                "lindblad_count": self.J, "values": [float(x) for x in theta]}

    @classmethod
    def from_json(cls, data):
        if data.get("layout") != LAYOUT_VERSION:
            raise ValueError(f"unsupported parameter layout {data.get('layout')!r}")
        layout = cls(AlgebraStructure.from_json(data["structure"]), data["lindblad_count"])
        return layout, np.asarray(data["values"], dtype=float)


@dataclass(frozen=True)
class LikelihoodValue:
    total: float
    per_step: tuple
    normalized: float


# -- forward model and its adjoint --------------------------------------------


def _operators(layout, theta):
    s = layout.structure
    g = layout.hermitian_generator(theta)
    u = expm(1j * g)
    kappas = [theta[sl] for sl in layout.kappa]
    mus = [theta[sl] for sl in layout.mu]
    d = canonical_hamiltonian_diagonal(s, kappas, mus)
    betas = [[(theta[re] + 1j * theta[im]).reshape(mk, mk) for (re, im), (_, mk) in zip(row, s.blocks)]
             for row in layout.beta]
    b = canonical_lindblads(s, betas)
    h = (u * d[np.newaxis, :]) @ dagger(u)
    h = (h + dagger(h)) / 2
    ls = u @ b @ dagger(u)
    return {"g": g, "u": u, "d": d, "b": b, "h": h, "ls": ls}


def _operators_vjp(layout, cache, hbar, lbar):
    s = layout.structure
    u, d, b = cache["u"], cache["d"], cache["b"]
    uh = dagger(u)
    # H = U diag(d) U^H, L_j = U B_j U^H
    ubar = hbar @ u * d[np.newaxis, :] + dagger(hbar) @ u * d[np.newaxis, :]
    ubar = ubar + np.einsum("jab,jbc->ac", lbar @ u, dagger(b)) + np.einsum("jab,jbc->ac", dagger(lbar) @ u, b)
    dbar = np.real(np.einsum("ab,bc,ca->a", uh, hbar, u))
    bbar = uh @ lbar @ u
    grad = np.zeros(layout.size)
    gbar = -1j * expm_vjp(1j * cache["g"], ubar)
    gd, gre, gim = layout.generator_gradient(gbar)
    grad[layout.g_diag] = gd
    grad[layout.g_re] = gre
    grad[layout.g_im] = gim
    for k, (off, (nk, mk)) in enumerate(zip(s.block_offsets(), s.blocks)):
        size = nk * mk
        dk = dbar[off:off + size].reshape(nk, mk)
        grad[layout.kappa[k]] = dk.sum(axis=1)
        grad[layout.mu[k]] = dk.sum(axis=0)
        blk = bbar[:, off:off + size, off:off + size].reshape(-1, nk, mk, nk, mk)
        betabar = np.einsum("jiaib->jab", blk)
        for j in range(layout.J):
            re, im = layout.beta[j][k]
            grad[re] = np.real(betabar[j]).reshape(-1)
            grad[im] = np.imag(betabar[j]).reshape(-1)
    return grad


def _sweep(phi, projectors, sigmas, weights, floor, need_grad):
    """Collapse recursion for a stack of equal-length chains.

    ``projectors`` is ``(B, N, n, n)``. States are carried transposed
    (``Y = rho^T``) so that ``Y.ravel()`` is the column-stacked ``vec(rho)``.
    Returns ``(f, phibar)`` where ``f`` is ``(B, N)`` log-probabilities and
    ``phibar`` the cotangent of ``phi`` for ``sum_b weights[b] * sum_j f[b, j]``.
    """
    bsz, nsteps, n, _ = projectors.shape
    nn = n * n
    e_all = projectors
    ec_all = np.conj(projectors)
    y = np.swapaxes(sigmas, -1, -2).astype(complex)
    phit = phi.T
    f = np.empty((bsz, nsteps))
    if need_grad:
        ys_in = np.empty((nsteps, bsz, nn), dtype=complex)
        us = np.empty((nsteps, bsz, n, n), dtype=complex)
        pcs = np.empty((nsteps, bsz))
        clamped = np.empty((nsteps, bsz), dtype=bool)
    for j in range(nsteps):
        r = y.reshape(bsz, nn)
        ysj = (r @ phit).reshape(bsz, n, n)
        e = e_all[:, j]
        ec = ec_all[:, j]
        p = np.real(np.einsum("bij,bij->b", ysj, e))
        low = p <= floor
        pc = np.where(low, floor, p)
        f[:, j] = np.log(pc)
        uj = ec @ ysj @ ec
        y = uj / pc[:, None, None]
        if need_grad:
            ys_in[j] = r
            us[j] = uj
            pcs[j] = pc
            clamped[j] = low
    if not need_grad:
        return f, None
    phibar = np.zeros((nn, nn), dtype=complex)
    ybar = np.zeros((bsz, n, n), dtype=complex)
    w = np.asarray(weights, dtype=float)
    cphi = np.conj(phi)
    for j in range(nsteps - 1, -1, -1):
        e = e_all[:, j]
        ec = ec_all[:, j]
        pc = pcs[j]
        ubar = ybar / pc[:, None, None]
        pbar = -np.real(np.einsum("bij,bij->b", np.conj(ybar), us[j])) / pc**2 + w / pc
        pbar = np.where(clamped[j], 0.0, pbar)
        ysbar = pbar[:, None, None] * ec + ec @ ubar @ ec
        sb = ysbar.reshape(bsz, nn)
        phibar += sb.T @ np.conj(ys_in[j])
        ybar = (sb @ cphi).reshape(bsz, n, n)
    return f, phibar


class Likelihood:
    """Batched evaluator of ``F/N`` for a dataset under one structure.

    Observed projectors are gathered once; chains are grouped by length so
    every group runs as one vectorised sweep.
    """

    def __init__(self, structure, dataset, lindblad_count=None, floor=PROBABILITY_FLOOR):
        self.layout = ParameterLayout(structure, lindblad_count)
        self.structure = structure
        self.dataset = dataset
        self.tau = dataset.tau
        self.floor = floor
        n = dataset.n
        self.n = n
        self._proj = [c.observed_projectors(dataset.instrument_table) if len(c) else
                      np.zeros((0, n, n), dtype=complex) for c in dataset.chains]
        self._sigma = [c.sigma(n) for c in dataset.chains]
        self._len = np.array([len(c) for c in dataset.chains])

    def propagator(self, theta):
        cache = _operators(self.layout, theta)
        sup = gksl_superoperator(OperatorPair(cache["h"], tuple(cache["ls"])))
        return propagator(sup, self.tau)

    def _groups(self, batch):
        batch = np.asarray(batch, dtype=int)
        for length in sorted(set(self._len[batch].tolist())):
            idx = batch[self._len[batch] == length]
            yield idx, length

    def _run(self, theta, batch, need_grad):
        batch = np.arange(len(self._proj)) if batch is None else np.asarray(batch, dtype=int)
        if batch.size == 0:
            raise ValueError("empty batch")
        theta = np.asarray(theta, dtype=float)
        cache = _operators(self.layout, theta)
        sup = gksl_superoperator(OperatorPair(cache["h"], tuple(cache["ls"])))
        a = sup * self.tau
        phi = expm(a)
        per_chain = {}
        phibar = np.zeros_like(phi) if need_grad else None
        for idx, length in self._groups(batch):
            if length == 0:
                for i in idx:
                    per_chain[int(i)] = np.zeros(0)
                continue
            projs = np.stack([self._proj[i] for i in idx])
            sig = np.stack([self._sigma[i] for i in idx])
            weights = np.full(len(idx), 1.0 / (batch.size * length))
            f, pb = _sweep(phi, projs, sig, weights, self.floor, need_grad)
            for row, i in enumerate(idx):
                per_chain[int(i)] = f[row]
            if need_grad:
                phibar += pb
        # fixed-order reduction over the batch as given
        norm = [per_chain[int(i)].sum() / max(len(per_chain[int(i)]), 1) for i in batch]
        value = float(np.sum(norm) / batch.size)
        if not need_grad:
            return value, per_chain, None
        supbar = self.tau * expm_vjp(a, phibar)
        hbar, lbar = gksl_superoperator_vjp(cache["h"], cache["ls"], supbar)
        grad = _operators_vjp(self.layout, cache, hbar, lbar)
        return value, per_chain, grad

    def value(self, theta, batch=None):
        return self._run(theta, batch, False)[0]

    def value_and_grad(self, theta, batch=None):
        value, _, grad = self._run(theta, batch, True)
        bad = np.flatnonzero(~np.isfinite(grad))
        if bad.size:
            raise FloatingPointError(f"non-finite gradient components at parameter indices {bad.tolist()}")
        return value, grad

    def chain_values(self, theta, batch=None):
        _, per_chain, _ = self._run(theta, batch, False)
        out = {}
        for i, f in per_chain.items():
            out[i] = LikelihoodValue(float(f.sum()), tuple(float(v) for v in f),
                                     float(f.sum() / max(len(f), 1)))
        return out


def log_likelihood(structure, params, chain, table, tau=None, lindblad_count=None):
    """Additive log-likelihood of one chain: ``sum_j ln Tr[E_j Phi(rho_{j-1})]``."""
    from .dynamics import Dataset

    if tau is not None and tau != chain.tau:
        chain = type(chain)(chain.instrument_ids, chain.outcomes, tau, chain.initial_state)
    ds = Dataset([chain], table, AlgebraStructure(0, ((structure.n, 1),)))
    return Likelihood(structure, ds, lindblad_count).chain_values(params, [0])[0]


def nested_log_likelihood(p, chain, table, sigma=None):
    """``ln Tr(E_N Phi(... E_1 Phi(sigma) E_1 ...) E_N)`` without intermediate normalisation.

    Independent of the recursion used by :class:`Likelihood`; underflows for
    long chains, so meant for checking.
    """
    from .dynamics import sequence_probability

    return float(np.log(sequence_probability(chain, table, p, sigma, method="nested")))


def batch_log_likelihood(structure, params, dataset, batch, lindblad_count=None):
    """Mean of per-chain ``F/N`` over ``batch``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    return Likelihood(structure, dataset, lindblad_count).value(params, batch)


def gradient(structure, params, dataset, batch, lindblad_count=None):
    return Likelihood(structure, dataset, lindblad_count).value_and_grad(params, batch)[1]


def true_value(model, dataset, batch=None):
    """``F_E/N`` of a known generator (structured or not) on ``dataset``."""
    if isinstance(model, OperatorPair):
        p = propagator(gksl_superoperator(model), dataset.tau)
        n = dataset.n
        batch = range(len(dataset)) if batch is None else batch
        vals = []
        for i in batch:
            c = dataset.chains[i]
            projs = c.observed_projectors(dataset.instrument_table)[None]
            f, _ = _sweep(p.matrix, projs, c.sigma(n)[None], [1.0], PROBABILITY_FLOOR, False)
            vals.append(f.sum() / len(c))
        return float(np.mean(vals))
    layout = ParameterLayout(model.structure, model.lindblad_count)
    return Likelihood(model.structure, dataset, model.lindblad_count).value(layout.pack(model), batch)
