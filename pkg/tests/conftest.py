import pytest

from fedsa_sim.config import parse_config_dict
from fedsa_sim.runner import build_pipeline

# Desk-scale scenario shared by the driver-level tests: separable synthetic
# flows, 20 participants with 6 selected per round, everything seed-pinned.
DESK_DOC = {
    "driver": "fedsa",
    "seed": 42,
    "output": "unused",
    "data": {
        "synthetic": {
            "n_samples": 4000,
            "n_features": 10,
            "class_ratio": 0.5,
            "separation": 6.0,
            "seed": 7,
        }
    },
    "federation": {"n_participants": 20, "subset_size": 6},
    "fedsa": {"epochs": 5},
    "fedavg": {"tau": 10, "eta0": 0.1, "rounds": 10},
}


def desk_doc(**overrides):
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DESK_DOC.items()}
    doc["data"] = {"synthetic": dict(DESK_DOC["data"]["synthetic"])}
    doc.update(overrides)
    return doc


@pytest.fixture(scope="session")
def desk_pipeline():
    cfg = parse_config_dict(desk_doc())
    return build_pipeline(cfg)
