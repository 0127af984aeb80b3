import numpy as np
import pytest

from survfair.data import SynthConfig, generate_synthetic

STRONG = (1.0, -0.8, 0.6, -0.4, 0.2)


@pytest.fixture(scope="session")
def strong_data():
    return generate_synthetic(SynthConfig(n=600, p=5, effect_weights=STRONG, target_censoring=0.3), 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_harrell(risk, time, status):
    num = den = 0.0
    n = len(time)
    for i in range(n):
        for j in range(n):
            if i != j and time[i] < time[j] and status[i] == 1:
                den += 1
                if risk[i] > risk[j]:
                    num += 1
                elif risk[i] == risk[j]:
                    num += 0.5
    return num / den
