"""Shared fixtures: the three-machine benchmark grid and reference data.

The expensive objects (solved equilibria, certificates) are session
scoped; everything in the package is immutable dataclasses or plain
arrays, so sharing them across tests is safe.
"""
import numpy as np
import pytest
import yaml

from gridcert import (build_network, find_certificate, solve_equilibrium,
                      verify_supplied_p)

GAMMA_TENTH = np.pi / 10

# 6x6 certificate matrix from an external convex solver, used as a
# cross-check target for the verification path (printed to 4 decimals,
# hence the loose absolute margins in the tests that consume it).
REFERENCE_P = np.array([
    [2.8401, 1.9098, 1.9812, 4.5726, 4.4349, 4.4563],
    [1.9098, 2.7949, 2.0263, 4.4393, 4.5628, 4.4578],
    [1.9812, 2.0263, 2.7235, 4.4502, 4.4644, 4.5480],
    [4.5726, 4.4393, 4.4502, 18.4333, 17.5302, 17.6662],
    [4.4349, 4.5628, 4.4644, 17.5302, 18.3632, 17.7364],
    [4.4563, 4.4578, 4.5480, 17.6662, 17.7364, 18.2271],
])

THREE_MACHINE = {
    "buses": [
        {"id": 1, "kind": "renewable-generator", "voltage": 1.0566,
         "injection": -0.2464, "inertia": 2.0, "damping": 1.0},
        {"id": 2, "kind": "conventional-generator", "voltage": 1.0502,
         "injection": 0.2086, "inertia": 2.0, "damping": 1.0},
        {"id": 3, "kind": "conventional-generator", "voltage": 1.0170,
         "injection": 0.0378, "inertia": 2.0, "damping": 1.0},
    ],
    "lines": [
        {"from": 1, "to": 2, "susceptance": 0.739},
        {"from": 1, "to": 3, "susceptance": 1.0958},
        {"from": 2, "to": 3, "susceptance": 1.245},
    ],
}


def write_grid(path, doc):
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
    return str(path)


@pytest.fixture(scope="session")
def grid_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("grids") / "three_machine.yaml"
    return write_grid(path, THREE_MACHINE)


@pytest.fixture(scope="session")
def net():
    return build_network(THREE_MACHINE)


@pytest.fixture(scope="session")
def eq_tenth(net):
    """Equilibrium inside the pi/10 angle region."""
    return solve_equilibrium(net, gamma=GAMMA_TENTH)


@pytest.fixture(scope="session")
def eq_default(net):
    return solve_equilibrium(net)


@pytest.fixture(scope="session")
def cert_uniform(net, eq_tenth):
    """Certificate solved here, with the worst-case gain over the region."""
    return find_certificate(net, eq_tenth, uniform_gain=True)


@pytest.fixture(scope="session")
def ref_cert(net, eq_tenth):
    """Certificate carrying the externally solved matrix."""
    return verify_supplied_p(REFERENCE_P, net, eq_tenth, uniform_gain=True)


@pytest.fixture(scope="session")
def ref_p_file(tmp_path_factory):
    import json
    path = tmp_path_factory.mktemp("pmat") / "reference_p.json"
    doc = {"order": 6, "entries": [float(v) for v in REFERENCE_P.reshape(-1)]}
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


def two_bus_doc(injection=0.0, susceptance=1.0, load=False):
    """Minimal generator pair (or generator plus load) for edge cases."""
    second_kind = "load" if load else "conventional-generator"
    second = {"id": 2, "kind": second_kind, "voltage": 1.0,
              "injection": -injection, "damping": 1.0}
    if not load:
        second["inertia"] = 1.0
    return {
        "buses": [
            {"id": 1, "kind": "conventional-generator", "voltage": 1.0,
             "injection": injection, "inertia": 1.0, "damping": 1.0},
            second,
        ],
        "lines": [{"from": 1, "to": 2, "susceptance": susceptance}],
    }
