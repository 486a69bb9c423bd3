"""Single-molecule waveguide coupling: mode solver, emission rates, 2D FDTD,
photon-number-dependent phase shifts and few-photon circuits."""

__version__ = "0.1.0"
