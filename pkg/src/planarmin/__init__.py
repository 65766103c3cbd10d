"""Numerical exploration of minimal sets of planar autonomous ODEs."""

from .certify import (BallWindow, CertificateReport, ClassifyConfig, classify, crossing_finiteness,
                      divergence_crosscheck, equilibrium_certificate, flux_bound_certificate,
                      flux_integral)
from .construct import ConstructionTrace, JordanCurve, detect_periodicity, run_construction
from .field import Field, builtin, parse_field
from .flow import Trajectory, first_circle_hit, integrate, residence
from .geom import Circle, ClosedPolyline, Vec2

__version__ = "0.1.0"
