"""Shared session fixtures: profiles, modes, and the expensive runs."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import polystar as ps
from polystar.config import ExperimentConfig, ExperimentSection, MeshSection


def make_config(n_nodes=1024, gamma=1.3, **exp_kwargs) -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg = dataclasses.replace(
        cfg,
        polytrope=dataclasses.replace(cfg.polytrope, gamma=gamma),
        mesh=MeshSection(n_nodes=n_nodes),
    )
    if exp_kwargs:
        cfg = dataclasses.replace(
            cfg, experiment=dataclasses.replace(ExperimentSection(), **exp_kwargs)
        )
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def profile13():
    return ps.solve_lane_emden(ps.PolytropeConfig(gamma=1.3), 1024)


@pytest.fixture(scope="session")
def mode13(profile13):
    pencil = ps.assemble_pencil(profile13)
    return pencil, ps.largest_eigenpair(pencil)


@pytest.fixture(scope="session")
def profile13_2048():
    return ps.solve_lane_emden(ps.PolytropeConfig(gamma=1.3), 2048)


@pytest.fixture(scope="session")
def mode13_2048(profile13_2048):
    pencil = ps.assemble_pencil(profile13_2048)
    return pencil, ps.largest_eigenpair(pencil)


@pytest.fixture(scope="session")
def profile13_512():
    return ps.solve_lane_emden(ps.PolytropeConfig(gamma=1.3), 512)


@pytest.fixture(scope="session")
def mode13_512(profile13_512):
    pencil = ps.assemble_pencil(profile13_512)
    return pencil, ps.largest_eigenpair(pencil)


@pytest.fixture(scope="session")
def profile2():
    return ps.solve_lane_emden(ps.PolytropeConfig(gamma=2.0), 1024)


@pytest.fixture(scope="session")
def insta13():
    """Nonlinear growing-mode runs at the default mesh for the delta ladder."""
    import time

    out = {}
    t0 = time.perf_counter()
    for delta in (1e-3, 1e-4, 1e-5):
        cfg = make_config(kind="instability", delta=delta, pair_linear=False)
        out[delta] = ps.run_instability_experiment(cfg, delta=delta)
    out["elapsed"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def duhamel_pairs():
    """Paired nonlinear/linear runs on the doubled mesh for the remainder study."""
    out = {}
    for delta in (1e-3, 1e-4):
        cfg = make_config(n_nodes=2048, kind="instability", delta=delta, pair_linear=True)
        out[delta] = ps.run_instability_experiment(cfg, delta=delta)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(20240802)


def smooth_trials(rng, r, n, degree=6, amplitude=1.0):
    """Seeded smooth trial functions on a radial grid."""
    x = 2.0 * r / r[-1] - 1.0
    decay = 0.5 ** np.arange(degree + 1)
    coeffs = rng.standard_normal((n, degree + 1)) * decay
    return amplitude * np.polynomial.chebyshev.chebval(x, coeffs.T)
