"""Exact and semiclassical dynamics of a driven collective spin-boson model.

Submodules:
    model      operators, parameters, initial states, rotation generators
    propagate  eigensolver propagation, fidelity out-of-time-order signals
    mqc        coherence spectra, Renyi entropy estimators, partial traces
    classical  mean-field flow, tangent-space Lyapunov exponents
    twa        truncated Wigner ensemble dynamics
    spectrum   level statistics, thermal/diagonal ensembles
    runner     config-driven experiment pipelines with manifest output
"""

__version__ = "0.1.0"
