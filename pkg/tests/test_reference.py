"""The frozen golden file must still be reproducible from the dense oracles."""
import math

import numpy as np
import pytest

from triladder.fock import LatticeSpec
from triladder.reference import (
    CHIRAL_RATIOS,
    ground_energy,
    ladder_point,
    load_golden,
    pauli_xx_hamiltonian,
    sector_hamiltonian,
    soft_core_bias,
)

GOLDEN = load_golden()


def test_every_entry_is_tagged():
    for key, entry in GOLDEN.items():
        assert entry["source"] in ("oracle", "published"), key
        assert entry["tolerance"] > 0, key


@pytest.mark.parametrize("ratio", [-1.22, 0.98])
def test_ladder_point_reproduces_golden(ratio):
    pt = ladder_point(ratio)
    key = f"ladder/{ratio:+.2f}"
    assert GOLDEN[f"{key}/top_energy"]["spec_hash"] == pt["spec"].digest()
    assert pt["top_energy"] == pytest.approx(GOLDEN[f"{key}/top_energy"]["value"], abs=1e-12)
    assert pt["chiral_c"] == pytest.approx(GOLDEN[f"{key}/chiral_c"]["value"], abs=1e-12)
    assert np.allclose(pt["bond_o"], GOLDEN[f"{key}/bond_o"]["value"], atol=1e-12)
    assert ground_energy(pt["spec"], 4) == pytest.approx(GOLDEN[f"{key}/ground_energy"]["value"], abs=1e-12)


def test_soft_core_entry_reproduces():
    b = soft_core_bias(0.98)
    assert b["bias"] == pytest.approx(GOLDEN["soft_core_bias/+0.98"]["value"]["bias"], abs=1e-12)


def test_soft_core_bias_is_small_at_zero_flux():
    biases = {r: GOLDEN[f"soft_core_bias/{r:+.2f}"]["value"]["bias"] for r in CHIRAL_RATIOS}
    assert abs(biases[0.98]) < abs(biases[-1.22]) < abs(biases[-3.56])


def test_oracles_agree_with_each_other():
    spec = LatticeSpec.uniform(4, j=0.7, j_leg=1.3, flux=2.1, omega=0.2, u=-3.0)
    pauli = pauli_xx_hamiltonian(spec)
    full = np.concatenate([np.linalg.eigvalsh(sector_hamiltonian(spec, n)[0]) for n in range(5)])
    assert np.allclose(np.sort(full), np.linalg.eigvalsh(pauli), atol=1e-12)


def test_published_beamsplitter_time():
    entry = GOLDEN["tbs/6.1MHz_ns"]
    assert entry["source"] == "published"
    assert math.pi / (4 * 2 * math.pi * 6.1e6) * 1e9 == pytest.approx(entry["value"], rel=entry["tolerance"])
