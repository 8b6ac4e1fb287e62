import math

import numpy as np
import pytest
import torch

from gwnav.rainbow import project_distribution

V_MIN, V_MAX, ATOMS = -2.0, 0.0, 51


def oracle_project(probs, rewards, dones, gamma_n, v_min, v_max):
    """Naive per-atom reference projection (plain Python floats)."""
    n_atoms = len(probs[0])
    dz = (v_max - v_min) / (n_atoms - 1)
    out = []
    for p, r, d in zip(probs, rewards, dones):
        m = [0.0] * n_atoms
        for j in range(n_atoms):
            z = v_min + j * dz
            tz = r if d else r + gamma_n * z
            tz = min(max(tz, v_min), v_max)
            b = (tz - v_min) / dz
            low = math.floor(b)
            high = math.ceil(b)
            if low == high:
                m[low] += p[j]
            else:
                m[low] += p[j] * (high - b)
                m[high] += p[j] * (b - low)
        out.append(m)
    return out


def random_case(rng, n):
    p = rng.random((n, ATOMS))
    p /= p.sum(axis=1, keepdims=True)
    r = rng.uniform(-0.7, 0.1, n)
    d = rng.random(n) < 0.3
    return p, r, d


def test_matches_bruteforce_oracle_on_1000_cases():
    rng = np.random.default_rng(2024)
    gamma_n = 0.99 ** 3
    p, r, d = random_case(rng, 1000)
    got = project_distribution(torch.from_numpy(p), torch.from_numpy(r),
                               torch.from_numpy(d.astype(np.float64)),
                               gamma_n, V_MIN, V_MAX).numpy()
    want = np.array(oracle_project(p.tolist(), r.tolist(), d.tolist(),
                                   gamma_n, V_MIN, V_MAX))
    assert np.max(np.abs(got - want)) < 1e-9
    assert np.max(np.abs(got.sum(axis=1) - 1.0)) < 1e-9


def test_terminal_collapses_to_reward():
    p = torch.full((1, ATOMS), 1.0 / ATOMS, dtype=torch.float64)
    m = project_distribution(p, torch.tensor([-0.5], dtype=torch.float64),
                             torch.tensor([1.0], dtype=torch.float64),
                             0.9, V_MIN, V_MAX)
    z = torch.linspace(V_MIN, V_MAX, ATOMS, dtype=torch.float64)
    # -0.5 sits between atoms 37 (-0.52) and 38 (-0.48): linear split
    nonzero = torch.nonzero(m[0]).flatten().tolist()
    assert nonzero == [37, 38]
    assert float((m * z).sum()) == pytest.approx(-0.5, abs=1e-12)
    assert float(m.sum()) == pytest.approx(1.0, abs=1e-12)


def test_terminal_on_exact_atom_puts_all_mass_there():
    p = torch.full((1, ATOMS), 1.0 / ATOMS, dtype=torch.float64)
    m = project_distribution(p, torch.tensor([-0.52], dtype=torch.float64),
                             torch.tensor([1.0], dtype=torch.float64),
                             0.9, V_MIN, V_MAX)
    assert float(m[0, 37]) == pytest.approx(1.0, abs=1e-12)


def test_identity_when_unshifted():
    rng = np.random.default_rng(5)
    p = rng.random((8, ATOMS))
    p /= p.sum(axis=1, keepdims=True)
    pt = torch.from_numpy(p)
    m = project_distribution(pt, torch.zeros(8, dtype=torch.float64),
                             torch.zeros(8, dtype=torch.float64),
                             1.0, V_MIN, V_MAX)
    assert torch.allclose(m, pt, atol=1e-12)


def test_mass_never_outside_support():
    rng = np.random.default_rng(6)
    p, r, d = random_case(rng, 200)
    m = project_distribution(torch.from_numpy(p), torch.from_numpy(r),
                             torch.from_numpy(d.astype(np.float64)),
                             0.97, V_MIN, V_MAX)
    assert m.shape == (200, ATOMS)
    assert float(m.min()) >= 0.0
    assert np.allclose(m.sum(dim=1).numpy(), 1.0, atol=1e-9)


def test_rewards_below_vmin_clip_to_first_atom():
    p = torch.full((1, ATOMS), 1.0 / ATOMS, dtype=torch.float64)
    m = project_distribution(p, torch.tensor([-5.0], dtype=torch.float64),
                             torch.tensor([1.0], dtype=torch.float64),
                             0.9, V_MIN, V_MAX)
    assert float(m[0, 0]) == pytest.approx(1.0, abs=1e-12)
