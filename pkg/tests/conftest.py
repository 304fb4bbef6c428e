import json
from pathlib import Path

import pytest

from unicity.synth import GeneratorConfig, generate
from unicity.tensor import from_sets

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "unicity" / "schemas"

# items a, b, c, d of the hand-checked fixture
A, B, C, D = 10, 11, 12, 13


@pytest.fixture
def d0():
    """u1={a,b}, u2={a,c}, u3={a,b,c}, u4={d} in a single period."""
    return from_sets([{1: {A, B}, 2: {A, C}, 3: {A, B, C}, 4: {D}}])


@pytest.fixture(scope="session")
def small_synth():
    return generate(GeneratorConfig(users=800, items=400, periods=3, churn=0.3,
                                    mean_items=8, seed=11))


def dense_matrix(tensor, window=None):
    """Boolean users x items matrix of a window, for brute-force oracles."""
    return tensor.window_matrix(window).toarray().astype(bool)


def brute_count(dense, tensor, item_ids):
    pos = tensor.item_index(item_ids)
    if (pos < 0).any():
        return 0
    return int(dense[:, pos].all(axis=1).sum())


def brute_popularity(tensor, window=None):
    m = dense_matrix(tensor, window)
    counts = m.sum(axis=0)
    return {int(tensor.item_ids[i]): int(c) for i, c in enumerate(counts) if c}


def validate(instance, schema_name):
    from jsonschema import Draft202012Validator
    from referencing import Registry, Resource

    resources = []
    for p in SCHEMA_DIR.glob("*.json"):
        resources.append((p.name, Resource.from_contents(json.loads(p.read_text()))))
    registry = Registry().with_resources(resources)
    schema = json.loads((SCHEMA_DIR / schema_name).read_text())
    Draft202012Validator(schema, registry=registry).validate(instance)
