import itertools
import math

import hypothesis
import pytest

from dynbrw.groups import FreeGroup, HomTree, LatticeZd, StepLaw

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture
def srw_z():
    return StepLaw.simple(LatticeZd(1))


@pytest.fixture
def srw_z2():
    return StepLaw.simple(LatticeZd(2))


@pytest.fixture
def srw_f2():
    return StepLaw.simple(FreeGroup(2))


@pytest.fixture
def srw_t3():
    return StepLaw.simple(HomTree(3))


def enumerate_paths(law, n):
    """Brute-force law of S_n: walk every length-n step sequence."""
    fam = law.family
    out = {}
    for combo in itertools.product(range(len(law.support)), repeat=n):
        x = fam.identity()
        p = 1.0
        for i in combo:
            x = fam.multiply(x, law.support[i])
            p *= law.probs[i]
        out[x] = out.get(x, 0.0) + p
    return out


def binomial_return(n):
    """p^(n)(0,0) for simple random walk on Z."""
    if n % 2:
        return 0.0
    return math.comb(n, n // 2) / 2.0**n
