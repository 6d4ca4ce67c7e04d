"""Numerical laboratory for Hermitian metric flows on split Higgs bundles
over the flat unit-area torus.

The package integrates the Donaldson heat flow for the metric factor h(t),
reconstructs the gauge-orbit pair flow, tracks every monotone quantity
(energy, mean-curvature norms, Hermitian-Yang-Mills type functionals), and
compares the limiting mean-curvature spectrum against a combinatorial
Harder-Narasimhan type oracle for split bundle configurations.
"""

__version__ = "0.1.0"

from .geometry import TorusGrid
from .bundle import BundleConfig, Background, MetricState, HiggsField
from .flow import FlowParams, run
from .hn import HNType, oracle_hn_type, dominance_compare

__all__ = [
    "TorusGrid", "BundleConfig", "Background", "MetricState", "HiggsField",
    "FlowParams", "run", "HNType", "oracle_hn_type", "dominance_compare",
]
