import numpy as np
import pytest

from estimator.basis import NarmaxConfig, enumerate_monomials
from experiments.datagen import BENCHMARK_CONFIG, MultisineSpec, generate_multisine, generate_system, simulate_system


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def benchmark_spec():
    return enumerate_monomials(BENCHMARK_CONFIG)


@pytest.fixture
def scalar_config():
    """phi = (u_k): no delays, no constant, degree 1."""
    return NarmaxConfig(
        input_delays=0,
        output_delays=0,
        error_delays=0,
        degree=1,
        include_constant=False,
    )


@pytest.fixture
def benchmark_data():
    """(system, u, y) of length 512 at noise std 0.02."""
    rng = np.random.default_rng(7)
    system = generate_system(seed=7, noise_std=0.02, rng=rng)
    inputs = generate_multisine(MultisineSpec(), 512, np.random.default_rng(8))
    outputs, _ = simulate_system(system, inputs, rng=np.random.default_rng(9))
    return system, inputs, outputs


@pytest.fixture
def signal_csv(tmp_path, benchmark_data):
    _, inputs, outputs = benchmark_data
    path = tmp_path / "data.csv"
    lines = ["t,u,y"] + [f"{t},{float(u)!r},{float(y)!r}" for t, (u, y) in enumerate(zip(inputs[:128], outputs[:128]))]
    path.write_text("\n".join(lines) + "\n")
    return path
