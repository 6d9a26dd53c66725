"""
sqpe-estimators - simulated expectation-value estimators for few-qubit observables.

Operator Averaging and single-step phase estimation (linear and cubic order),
readout-noise mitigation, advantage conditions and product-formula costs.
"""

__version__ = "0.1.0"
