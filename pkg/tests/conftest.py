"""Shared fixtures: scenes and solved systems reused across test modules."""

import numpy as np
import pytest

import sparsebem as sb


@pytest.fixture(scope="session")
def circle_scene():
    return sb.preset_scene("circle", {"radius": 1.0})


@pytest.fixture(scope="session")
def two_circles_scene():
    return sb.preset_scene("two_circles")


@pytest.fixture(scope="session")
def near_inclusion_scene():
    return sb.preset_scene("near_inclusion")


@pytest.fixture(scope="session")
def plane_wave_x():
    return sb.PlaneWave((1.0, 0.0))


@pytest.fixture(scope="session")
def circle_k16(circle_scene, plane_wave_x):
    """Dense solve on the unit circle at k=16, ppw=10, degree 1."""
    disc = sb.discretize(circle_scene, 16.0, ppw=10, degree=1)
    A = sb.assemble_matrix(disc)
    b = sb.assemble_rhs(disc, plane_wave_x)
    c = sb.dense_solve(A, b).solution
    return disc, A, b, c


@pytest.fixture(scope="session")
def circle_k32(circle_scene, plane_wave_x):
    disc = sb.discretize(circle_scene, 32.0, ppw=10, degree=1)
    A = sb.assemble_matrix(disc)
    b = sb.assemble_rhs(disc, plane_wave_x)
    c = sb.dense_solve(A, b).solution
    return disc, A, b, c
