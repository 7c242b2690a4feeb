"""Tape gradients against central finite differences, 100 random instances per operation."""

import numpy as np
import pytest

from . import gradcases

INSTANCES = 100


@pytest.mark.parametrize("name", list(gradcases.CASES))
def test_gradient_matches_central_differences(name):
    rng = np.random.default_rng([7, list(gradcases.CASES).index(name)])
    worst = max(gradcases.check(gradcases.CASES[name], rng) for _ in range(INSTANCES))
    assert worst < 1e-4, f"{name}: worst relative error {worst:.2e}"
