"""Gradient-ascent training, structure scans and hierarchy-consistency checks."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .algebra import AlgebraStructure
from .likelihood import Likelihood, ParameterLayout, true_value

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int | None = None  # None: full set if S <= 128, else 64
    learning_rate: float = 1e-2
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    restarts: int = 3
    init_scale: float = 0.1
    seed: int = 0
    eval_every: int = 1
    lindblad_count: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.init_scale >= 0:
            raise ValueError("init_scale must be non-negative")

    def resolved_batch_size(self, S):
        if self.batch_size is not None:
            return min(self.batch_size, S)
        return S if S <= 128 else 64

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        return cls(**data)


class Adam:
    """Adam for maximisation (steps along the gradient)."""

    def __init__(self, size, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta + self.lr * mhat / (np.sqrt(vhat) + self.eps)


class Sgd:
    def __init__(self, size, lr=1e-2, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity = np.zeros(size)

    def step(self, theta, grad):
        self.velocity = self.momentum * self.velocity + grad
        return theta + self.lr * self.velocity


def make_optimizer(cfg, size):
    if cfg.optimizer == "adam":
        return Adam(size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return Sgd(size, cfg.learning_rate, cfg.momentum)


def init_params(structure, rng, init_scale, lindblad_count=None):
    """I.i.d. ``N(0, init_scale^2)`` entries in the frozen layout (``G`` Hermitian by construction)."""
    if init_scale < 0:
        raise ValueError("init_scale must be non-negative")
    layout = ParameterLayout(structure, lindblad_count)
    if init_scale == 0:
        return np.zeros(layout.size)
    return rng.normal(0.0, init_scale, size=layout.size)


@dataclass
class TrainReport:
    structure: AlgebraStructure
    best_epoch: int
    best_test_value: float
    final_delta: float | None
    history: list  # (epoch, train F/N, test F/N)
    best_params: np.ndarray = field(repr=False)
    restart_index: int
    lindblad_count: int
    restart_values: list  # best test value per restart, None if it failed
    epochs: int

    @property
    def converged_late(self):
        return self.best_epoch >= 0.95 * self.epochs

    def model(self):
        return ParameterLayout(self.structure, self.lindblad_count).unpack(self.best_params)

    def to_json(self):
        layout = ParameterLayout(self.structure, self.lindblad_count)
        return {
            "structure": self.structure.to_json(),
            "label": self.structure.label(),
            "best_epoch": self.best_epoch,
            "best_test_value": self.best_test_value,
            "final_delta": self.final_delta,
            "history": [list(h) for h in self.history],
            "best_params": layout.to_json(self.best_params),
            "restart_index": self.restart_index,
            "restart_values": self.restart_values,
            "epochs": self.epochs,
        }

    @classmethod
    def from_json(cls, data):
        layout, params = ParameterLayout.from_json(data["best_params"])
        return cls(
            AlgebraStructure.from_json(data["structure"]),
            data["best_epoch"],
            data["best_test_value"],
            data["final_delta"],
            [tuple(h) for h in data["history"]],
            params,
            data["restart_index"],
            layout.J,
            data["restart_values"],
            data["epochs"],
        )


class TrainingFailed(RuntimeError):
    pass


def _run_restart(train_lik, test_lik, cfg, restart):
    rng = np.random.default_rng([cfg.seed, restart])
    theta = init_params(train_lik.structure, rng, cfg.init_scale, cfg.lindblad_count)
    opt = make_optimizer(cfg, theta.size)
    S = len(train_lik.dataset)
    bs = cfg.resolved_batch_size(S)
    history = []
    best = (-math.inf, 0, theta.copy())
    epoch_vals = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(S)
        epoch_vals = []
        for start in range(0, S, bs):
            batch = order[start:start + bs]
            value, grad = train_lik.value_and_grad(theta, batch)
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite training objective at epoch {epoch}")
            epoch_vals.append(value * len(batch))
            theta = opt.step(theta, grad)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            test = test_lik.value(theta)
            if not np.isfinite(test):
                raise FloatingPointError(f"non-finite test objective at epoch {epoch}")
            history.append((epoch, float(np.sum(epoch_vals) / S), float(test)))
            if test > best[0]:
                best = (float(test), epoch, theta.copy())
    return best, history


def train(structure, cfg, train_set, test_set):
    """Best-of-``cfg.restarts`` gradient ascent of the batch log-likelihood."""
    if len(train_set) == 0 or len(test_set) == 0:
        raise ValueError("training and test sets must be non-empty")
    if train_set.n != structure.n or test_set.n != structure.n:
        raise ValueError("dataset dimension does not match the structure")
    train_lik = Likelihood(structure, train_set, cfg.lindblad_count)
    test_lik = Likelihood(structure, test_set, cfg.lindblad_count)
    results = []
    for r in range(cfg.restarts):
        try:
            results.append((r,) + _run_restart(train_lik, test_lik, cfg, r))
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("restart %d for %s failed: %s", r, structure.label(), exc)
            results.append((r, None, None))
    ok = [res for res in results if res[1] is not None]
    if not ok:
        raise TrainingFailed(f"all {cfg.restarts} restarts failed for {structure.label()}")
    # first restart wins ties, so adding restarts never lowers the result
    r, (value, epoch, params), history = max(ok, key=lambda res: (res[1][0], -res[0]))
    delta = None
    if epoch >= 0.95 * cfg.epochs and len(history) >= 2:
        delta = abs(history[-1][2] - history[-2][2])
    return TrainReport(
        structure, epoch, value, delta, history, params, r, train_lik.layout.J,
        [None if res[1] is None else res[1][0] for res in results], cfg.epochs,
    )


@dataclass
class ScanRow:
    structure: AlgebraStructure
    report: TrainReport | None
    error: str | None = None

    @property
    def value(self):
        return -math.inf if self.report is None else self.report.best_test_value


@dataclass
class ScanResult:
    rows: list
    reference_value: float | None = None

    def structures(self):
        return [r.structure for r in self.rows]

    def value_of(self, structure):
        for r in self.rows:
            if r.structure == structure:
                return r.value
        raise KeyError(structure.label())

    def to_json(self):
        return {
            "reference_value": self.reference_value,
            "rows": [{"structure": r.structure.to_json(), "label": r.structure.label(),
                      "report": None if r.report is None else r.report.to_json(),
                      "error": r.error} for r in self.rows],
        }

    @classmethod
    def from_json(cls, data):
        rows = [ScanRow(AlgebraStructure.from_json(r["structure"]),
                        None if r["report"] is None else TrainReport.from_json(r["report"]),
                        r.get("error")) for r in data["rows"]]
        return cls(rows, data.get("reference_value"))


def sort_rows(rows):
    return sorted(rows, key=lambda r: (-r.value, r.structure.canonical(), r.structure))


def _scan_task(args):
    structure, cfg, train_set, test_set = args
    try:
        return ScanRow(structure, train(structure, cfg, train_set, test_set))
    except TrainingFailed as exc:
        return ScanRow(structure, None, str(exc))


def structure_scan(candidates, cfg, train_set, test_set, reference=None, jobs=1):
    """Train every candidate with the same config and seed; rows sorted by test F/N."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate structures")
    tasks = [(s, cfg, train_set, test_set) for s in candidates]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_scan_task, tasks))
    else:
        rows = [_scan_task(t) for t in tasks]
    ref = None if reference is None else true_value(reference, test_set)
    return ScanResult(sort_rows(rows), ref)


@dataclass(frozen=True)
class Violation:
    complex_structure: AlgebraStructure  # smaller algebra, richer model class
    simple_structure: AlgebraStructure
    complex_value: float
    simple_value: float

    @property
    def shortfall(self):
        return self.simple_value - self.complex_value


@dataclass
class HierarchyCheck:
    violations: list
    frontier: AlgebraStructure | None

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def hierarchy_consistency(scan, dag, margin=0.005):
    """Pairs where a richer model class scores below a simpler one it contains.

    ``A`` is more complex than ``B`` when the algebra of ``A`` embeds into the
    algebra of ``B``. The frontier is the most complex scanned structure whose
    set of simpler-or-equal models is free of violations.
    """
    structures = scan.structures()
    nodes = set(dag.nodes)
    for s in structures:
        if s not in nodes:
            raise KeyError(f"structure {s.label()} is not in the hierarchy")
    values = {r.structure: r.value for r in scan.rows}
    violations = []
    for a in structures:
        for b in structures:
            if a != b and dag.embeds(a, b) and values[a] < values[b] - margin:
                violations.append(Violation(a, b, values[a], values[b]))
    violations.sort(key=lambda v: (-v.shortfall, v.complex_structure, v.simple_structure))
    frontier = None
    candidates = []
    for c in structures:
        up = {x for x in structures if dag.embeds(c, x)}
        if not any(v.complex_structure in up and v.simple_structure in up for v in violations):
            candidates.append(c)
    if candidates:
        frontier = min(candidates, key=lambda c: (c.linear_dim, -values[c], c.canonical()))
    return HierarchyCheck(violations, frontier)
