"""Numerical self-checks behind ``dfslearn verify``.

Each check returns ``(passed, details)``; details hold the worst residual seen.
"""

from __future__ import annotations

import itertools

import numpy as np

from .algebra import AlgebraBasis, AlgebraStructure, enumerate_structures
from .dynamics import Dataset, MeasurementChain, random_instrument, sample_chain, sequence_probability
from .generator import model_propagator, verify_cptp, verify_decoherence_free
from .likelihood import Likelihood, ParameterLayout
from .physmodels import random_structured_model


def check_enumeration():
    ordered = enumerate_structures(4)
    canonical = enumerate_structures(4, up_to_permutation=True)
    ok = len(ordered) == 18 and len(canonical) == 11
    return ok, {"ordered": len(ordered), "canonical": len(canonical)}


def check_generators(samples=5, tau=0.3, seed=0):
    rng = np.random.default_rng(seed)
    worst = {"trace": 0.0, "choi": np.inf, "dfs": 0.0}
    for s in enumerate_structures(4, up_to_permutation=True):
        for _ in range(samples):
            m = random_structured_model(s, scale=1.0, rng=rng)
            c = verify_cptp(model_propagator(m, tau), trace_tol=1e-10)
            d = verify_decoherence_free(m, [tau, 2 * tau, 5 * tau], samples=5, rng=rng)
            worst["trace"] = max(worst["trace"], c.trace_deviation)
            worst["choi"] = min(worst["choi"], c.choi_min_eigenvalue)
            worst["dfs"] = max(worst["dfs"], d.product_residual, d.coproduct_residual, d.unitary_residual)
    ok = worst["trace"] < 1e-10 and worst["choi"] > -1e-8 and worst["dfs"] < 1e-8
    return ok, worst


def check_normalization(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (2, 3):
        s = AlgebraStructure.of((1, n))
        m = random_structured_model(s, scale=1.0, rng=rng)
        p = model_propagator(m, 0.4)
        basis = AlgebraBasis.identity(AlgebraStructure.of((n, 1)))
        table = [random_instrument(basis, rng) for _ in range(3)]
        for N in (1, 2, 3):
            total = 0.0
            for outcomes in itertools.product(*(range(t.outcome_count) for t in table[:N])):
                chain = MeasurementChain(range(N), outcomes, 0.4)
                total += sequence_probability(chain, table, p)
            worst = max(worst, abs(total - 1.0))
    return worst < 1e-9, {"max_deviation": worst}


def check_likelihood_consistency(cases=20, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    s = AlgebraStructure.of((1, 2), (1, 1))
    layout = ParameterLayout(s)
    basis = AlgebraBasis.identity(AlgebraStructure.of((3, 1)))
    for _ in range(cases):
        theta = rng.normal(0, 0.7, layout.size)
        p = model_propagator(layout.unpack(theta), 0.3)
        table = [random_instrument(basis, rng) for _ in range(8)]
        chain = sample_chain(p, table, None, 8, rng)
        ds = Dataset([chain], table, basis.structure, None, basis)
        additive = Likelihood(s, ds).chain_values(theta, [0])[0].total
        nested = np.log(sequence_probability(chain, table, p, method="nested"))
        worst = max(worst, abs(additive - nested) / abs(nested))
    return worst < 1e-10, {"max_relative_error": worst}


def check_gradient(seed=0, h=1e-5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for label in ("({1,2})", "({2,2})"):
        s = AlgebraStructure.parse(label)
        m = random_structured_model(s, scale=0.7, rng=rng)
        basis = AlgebraBasis.identity(AlgebraStructure.of((s.n, 1)))
        p = model_propagator(m, 0.3)
        table = [random_instrument(basis, rng) for _ in range(6)]
        ds = Dataset([sample_chain(p, table, None, 6, rng)], table, basis.structure, None, basis)
        lik = Likelihood(s, ds)
        theta = rng.normal(0, 0.5, lik.layout.size)
        _, g = lik.value_and_grad(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd = (lik.value(theta + e) - lik.value(theta - e)) / (2 * h)
            err = abs(fd - g[i])
            if err > 1e-8:
                worst = max(worst, err / max(abs(fd), 1e-12))
    return worst < 1e-4, {"max_relative_error": worst}


CHECKS = {
    "enumeration": check_enumeration,
    "generators": check_generators,
    "normalization": check_normalization,
    "likelihood_consistency": check_likelihood_consistency,
    "gradient": check_gradient,
}


def run_all(seed=0):
    out = {}
    for name, fn in CHECKS.items():
        ok, details = fn() if name == "enumeration" else fn(seed=seed)
        out[name] = {"passed": bool(ok), **{k: float(v) for k, v in details.items()}}
    return out
