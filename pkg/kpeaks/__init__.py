"""A package for multi-peak solutions of the singularly perturbed Kirchhoff equation."""
from kpeaks.kirchhoff_limit import ProblemParams, WellData, build_limit_system
from kpeaks.radial_core import RadialProfile, solve_ground_state
