"""Pytest fixtures for dinosaur_readout tests."""

import logging

import numpy as np
import pytest

from dinosaur_readout.bloch import LayerStack
from dinosaur_readout.geometry import FABRICATED_TAPER, TaperSpec, UnitCellSpec, fabricated_taper
from dinosaur_readout.readout import v2_readout_model

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

DESIGN_NU_THZ = 300.0


@pytest.fixture
def fabricated_cell() -> UnitCellSpec:
    """Periodic cell of the fabricated reflector."""
    return UnitCellSpec(a=401.3, A=171.3, e=6, g=60.6, delta=54.0)


@pytest.fixture
def taper() -> TaperSpec:
    """Fabricated tapered reflector: five taper cells plus 13 periodic cells."""
    return fabricated_taper()


@pytest.fixture
def taper_document():
    """Mutable copy of the tapered reflector document."""
    return {
        **FABRICATED_TAPER,
        "cells": [dict(c) for c in FABRICATED_TAPER["cells"]],
        "periodic_cell": dict(FABRICATED_TAPER["periodic_cell"]),
    }


@pytest.fixture
def flat_device() -> TaperSpec:
    """Reflector without corrugation: a bare waveguide of the same width."""
    return TaperSpec(
        cells=(),
        e=6,
        waveguide_half_width=100.0,
        n_periodic=8,
        periodic_cell=UnitCellSpec(a=400.0, A=0.0, e=6, g=100.0),
    )


@pytest.fixture
def si_model():
    """Readout parameters of the measured V2 centre."""
    return v2_readout_model()


@pytest.fixture
def quarter_wave() -> LayerStack:
    """Quarter-wave bilayer n1=2, n2=1 designed for 300 THz."""
    return LayerStack.quarter_wave(2.0, 1.0, DESIGN_NU_THZ)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
