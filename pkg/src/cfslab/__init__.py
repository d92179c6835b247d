"""cfslab: a numerical laboratory for causal fermion systems."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    core,
    dirac_sea,
    discrete_vp,
    lightcone,
    measure_opt,
    perturbation,
    spectral,
)
