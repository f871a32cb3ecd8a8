"""Shipped JSON schemas and a validator that resolves references between them."""

import json
from functools import lru_cache
from importlib import resources

import jsonschema
from referencing import Registry, Resource

NAMES = ("train_report", "scan_result", "manifest", "error", "sweep", "config")


@lru_cache(maxsize=None)
def load(name):
    return json.loads(resources.files(__name__).joinpath(f"{name}.json").read_text())


@lru_cache(maxsize=None)
def _registry():
    return Registry().with_resources(
        (f"{n}.json", Resource.from_contents(load(n))) for n in NAMES)


def validate(obj, name):
    """Raise ``jsonschema.ValidationError`` unless ``obj`` matches schema ``name``."""
    jsonschema.Draft202012Validator(load(name), registry=_registry()).validate(obj)
