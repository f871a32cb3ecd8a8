"""JSON-lines dataset files and small JSON helpers.

Layout: the first line is a header ``{"kind": "header", n, tau,
accessible_structure, accessible_unitary, generator_metadata}``; then one
``{"kind": "instrument", id, includes_complement, shape, re, im}`` line per
instrument; then one ``{"kind": "chain", instrument_ids, outcomes, tau,
initial_state}`` line per chain. Floats are written with ``repr`` precision
so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .algebra import AlgebraBasis, AlgebraStructure
from .dynamics import Dataset, Instrument, MeasurementChain

FORMAT_VERSION = 1


def complex_to_json(x):
    x = np.asarray(x, dtype=complex)
    return {"shape": list(x.shape), "re": np.real(x).reshape(-1).tolist(), "im": np.imag(x).reshape(-1).tolist()}


def complex_from_json(d):
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    out = np.empty(re.shape, dtype=complex)
    out.real = re
    out.imag = im
    return out.reshape(d["shape"])


def dataset_lines(ds):
    basis = ds.accessible_basis or AlgebraBasis.identity(ds.accessible_structure)
    yield {
        "kind": "header",
        "format": FORMAT_VERSION,
        "n": ds.n,
        "tau": ds.tau,
        "accessible_structure": ds.accessible_structure.to_json(),
        "accessible_unitary": complex_to_json(basis.unitary),
        "generator_metadata": ds.generator_metadata,
        "chains": len(ds.chains),
        "instruments": len(ds.instrument_table),
    }
    for i, inst in enumerate(ds.instrument_table):
        yield {"kind": "instrument", "id": i, "includes_complement": inst.includes_complement,
               **complex_to_json(inst.projectors)}
    for c in ds.chains:
        yield {"kind": "chain", "instrument_ids": list(c.instrument_ids), "outcomes": list(c.outcomes),
               "tau": c.tau,
               "initial_state": None if c.initial_state is None else complex_to_json(c.initial_state)}


def write_dataset(ds, path):
    path = Path(path)
    with path.open("w") as fh:
        for line in dataset_lines(ds):
            fh.write(json.dumps(line, allow_nan=False) + "\n")
    return path


def read_dataset(path):
    with Path(path).open() as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise ValueError(f"{path}: missing dataset header")
    head = lines[0]
    structure = AlgebraStructure.from_json(head["accessible_structure"])
    basis = AlgebraBasis(structure, complex_from_json(head["accessible_unitary"]))
    table, chains = [], []
    for rec in lines[1:]:
        if rec["kind"] == "instrument":
            if rec["id"] != len(table):
                raise ValueError(f"{path}: instrument ids out of order at {rec['id']}")
            table.append(Instrument(complex_from_json(rec), basis, rec["includes_complement"]))
        elif rec["kind"] == "chain":
            sigma = rec.get("initial_state")
            chains.append(MeasurementChain(rec["instrument_ids"], rec["outcomes"], rec["tau"],
                                           None if sigma is None else complex_from_json(sigma)))
        else:
            raise ValueError(f"{path}: unknown record kind {rec['kind']!r}")
    return Dataset(chains, table, structure, head.get("generator_metadata"), basis)


def write_json(obj, path):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
