"""Experiment runners shared by the command line, the scripts and the acceptance suite.

Each runner takes plain arguments, derives every random stream from one
integer seed and returns JSON-ready results.

Seed streams: the generating model uses ``default_rng([seed, 0])``;
training data uses ``[seed, 1, ...]`` and test data ``[seed, 2, ...]``
(``generate_dataset`` appends the chain index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .algebra import AlgebraBasis, AlgebraStructure, enumerate_structures, hierarchy_dag
from .dynamics import generate_dataset
from .likelihood import Likelihood, true_value
from .physmodels import TABLE_STRUCTURES, WaveguideParams, random_structured_model, waveguide_operators
from .training import TrainConfig, hierarchy_consistency, structure_scan, train

# Settings of the generating models used in the desk-scale experiments.
MODEL_SCALE = 0.6
UNITARY_SCALE = 1.0
TAU = 0.5


@dataclass(frozen=True)
class DataSpec:
    S: int = 50
    S_test: int = 50
    N: int = 100
    N_test: int | None = None
    tau: float = TAU
    model_scale: float = MODEL_SCALE
    unitary_scale: float = UNITARY_SCALE
    granularity: str = "fine"
    postselect: bool = False

    def __post_init__(self):
        if self.S < 1 or self.S_test < 1 or self.N < 1:
            raise ValueError("S, S_test and N must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def scaled(self, factor):
        """Chain counts and lengths each shrink by ``sqrt(factor)`` so ``S * N`` scales by ``factor``."""
        r = math.sqrt(factor)
        return replace(self, S=max(1, round(self.S * r)), S_test=max(1, round(self.S_test * r)),
                       N=max(1, round(self.N * r)),
                       N_test=None if self.N_test is None else max(1, round(self.N_test * r)))


# Full-scale sizes; the desk defaults in DataSpec are what the acceptance suite uses.
FULL_SCAN = DataSpec(S=100, S_test=100, N=200)
FULL_EPOCHS = {"scan": 300, "scan6": 500, "tradeoff": 700, "restricted": 400, "waveguide": 1500}
DESK_TRAIN = TrainConfig(epochs=150, batch_size=10, learning_rate=0.02, restarts=3)


def generating_model(structure, seed, spec=DataSpec()):
    rng = np.random.default_rng([seed, 0])
    return random_structured_model(structure, scale=spec.model_scale, rng=rng,
                                   unitary_scale=spec.unitary_scale)


def make_data(model, accessible, spec, seed, tag=()):
    """Independent train and test sets for ``model`` observed through ``accessible``."""
    if isinstance(accessible, AlgebraStructure):
        accessible = AlgebraBasis.identity(accessible)
    tag = list(tag)
    n_test = spec.N if spec.N_test is None else spec.N_test
    tr = generate_dataset(model, accessible, spec.S, spec.N, spec.tau, [seed, 1] + tag,
                          spec.granularity, spec.postselect)
    te = generate_dataset(model, accessible, spec.S_test, n_test, spec.tau, [seed, 2] + tag,
                          spec.granularity, spec.postselect)
    return tr, te


def full_algebra(n):
    return AlgebraStructure.of((n, 1))


def run_scan(generator, candidates, cfg, seed, spec=DataSpec(), jobs=1, margin=0.005):
    """Scan ``candidates`` on data from ``generator`` (a structure or a model) observed fully."""
    model = generating_model(generator, seed, spec) if isinstance(generator, AlgebraStructure) else generator
    n = model.n
    candidates = list(candidates) if candidates else enumerate_structures(n, up_to_permutation=True)
    tr, te = make_data(model, full_algebra(n), spec, seed)
    scan = structure_scan(candidates, cfg, tr, te, reference=model, jobs=jobs)
    out = {"scan": scan, "model": model}
    canon = [c.canonical() for c in candidates]
    if len(set(canon)) == len(canon):
        check = hierarchy_consistency(scan, hierarchy_dag(candidates), margin)
        out["violations"] = check.violations
        out["frontier"] = check.frontier
    return out


def run_tradeoff(structure, cfg, seed, product=6000, lengths=(10, 50, 100, 200), spec=DataSpec(),
                 test_size=(50, 100), batches_per_epoch=10):
    """Train ``structure`` on its own data for several ``(N, S)`` with ``N * S = product``.

    Every cell shares one test set; the batch size is ``ceil(S / batches_per_epoch)``
    so all cells take the same number of optimizer steps.
    """
    model = generating_model(structure, seed, spec)
    acc = AlgebraBasis.identity(full_algebra(structure.n))
    s_test, n_test = test_size
    te = generate_dataset(model, acc, s_test, n_test, spec.tau, [seed, 2], spec.granularity)
    rows = []
    reports = []
    for N in lengths:
        S = product // N
        if S < 1:
            raise ValueError(f"chain length {N} exceeds the measurement budget {product}")
        tr = generate_dataset(model, acc, S, N, spec.tau, [seed, 1, N], spec.granularity)
        c = replace(cfg, batch_size=math.ceil(S / batches_per_epoch))
        rep = train(structure, c, tr, te)
        reports.append(rep)
        rows.append([N, S, rep.best_test_value, rep.best_epoch, rep.final_delta])
    ref = true_value(model, te)
    values = [r[2] for r in rows]
    return {
        "columns": ["N_train", "S_train", "F/N", "T_best", "Delta_T F"],
        "rows": rows,
        "reference_value": ref,
        "meta": {"structure": structure.label(), "product": product, "spread": max(values) - min(values)},
        "reports": reports,
    }


def restricted_accessible(n, n0):
    return AlgebraStructure(n0, ((n - n0, 1),))


def run_restricted(structure, cfg, seed, n0_values=(0, 2), spec=DataSpec(), postselect=True):
    """Train on data seen through ``(n0, {n - n0, 1})`` and test both on full and on restricted data.

    ``postselect`` keeps only the accessible outcomes (the projectors then sum
    to the identity on the accessible block); otherwise the zero-block
    projector is recorded as an extra outcome.
    """
    model = generating_model(structure, seed, spec)
    n = structure.n
    full_test = generate_dataset(model, AlgebraBasis.identity(full_algebra(n)), spec.S_test,
                                 spec.N if spec.N_test is None else spec.N_test, spec.tau, [seed, 3],
                                 spec.granularity)
    ref_full = true_value(model, full_test)
    rows = []
    reports = {}
    for n0 in n0_values:
        acc = restricted_accessible(n, n0)
        tr, te = make_data(model, acc, replace(spec, postselect=postselect and n0 > 0), seed, (n0,))
        rep = train(structure, cfg, tr, te)
        reports[n0] = rep
        on_full = Likelihood(structure, full_test, cfg.lindblad_count).value(rep.best_params)
        rows.append([n0, on_full, ref_full, rep.best_test_value, true_value(model, te),
                     rep.best_epoch, rep.final_delta])
    return {
        "columns": ["n0", "F/N full test", "F_E/N full", "F/N own test", "F_E/N own", "T_best", "Delta_T F"],
        "rows": rows,
        "reference_value": ref_full,
        "meta": {"structure": structure.label(), "postselect": postselect},
        "reports": reports,
    }


def run_waveguide(cfg, seed, structures=None, params=WaveguideParams(), S=50, S_test=50, N=100, jobs=1):
    ops = waveguide_operators(params)
    acc = AlgebraBasis.identity(full_algebra(params.n))
    tr = generate_dataset(ops, acc, S, N, params.tau, [seed, 1])
    te = generate_dataset(ops, acc, S_test, N, params.tau, [seed, 2])
    labels = TABLE_STRUCTURES if structures is None else structures
    cands = [s if isinstance(s, AlgebraStructure) else AlgebraStructure.parse(s) for s in labels]
    scan = structure_scan(cands, cfg, tr, te, reference=ops, jobs=jobs)
    return {"scan": scan, "operators": ops, "hierarchy": hierarchy_dag(cands)}
