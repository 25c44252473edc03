from __future__ import annotations

import math

import numpy as np
import pytest

from ceqopt.problem import Problem

SQRT3 = math.sqrt(3.0)


def example_1a() -> Problem:
    return Problem.from_strings("xy", "x^2 + 2*y^2", [("x - y^2", 1)])


def example_1b() -> Problem:
    return Problem.from_strings("xy", "x^2 + 2*y^2 - 2*x*y^2", [("x + y^2", 1)])


def example_2() -> Problem:
    return Problem.from_strings("xyz", "x^2 - 2*y + z^3", [("x^2 + y + z", 1), ("y - z^2", -1)])


def example_2_points() -> dict:
    """Closed forms: the determinant is 2x(3z^2 - 6z - 1), the curve x^2 = 2 - z - z^2, y = z^2 - 1."""
    zc = 1.0 - 2.0 / SQRT3
    yc = zc * zc - 1.0
    xc = math.sqrt(2.0 * SQRT3 - 4.0 / 3.0)
    return {
        "A": (0.0, 3.0, -2.0),
        "B": (0.0, 0.0, 1.0),
        "C": (-xc, yc, zc),
        "D": (xc, yc, zc),
    }


def on_curve_points(p: Problem, k: int, count: int, rng: np.random.Generator,
                    box=(-2.5, 2.5), reject=None) -> list[np.ndarray]:
    """Random points of the constraint curve: fix x_k, Newton the rest from random guesses."""
    from ceqopt.taylor import axis_singularity, curve_system

    cs = curve_system(p)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        assert tries < 200 * count, "could not sample the curve"
        guess = rng.uniform(*box, size=p.n)
        x = cs.solve_station(k, float(guess[k]), guess)
        if x is None or np.max(np.abs(x)) > 10:
            continue
        if not axis_singularity(p, k, x)[2]:
            continue
        if reject is not None and reject(x):
            continue
        out.append(x)
    return out


@pytest.fixture
def e1a() -> Problem:
    return example_1a()


@pytest.fixture
def e1b() -> Problem:
    return example_1b()


@pytest.fixture
def e2() -> Problem:
    return example_2()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
