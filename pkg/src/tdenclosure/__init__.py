"""Time-domain enclosure method for an impedance obstacle.

Modules: :mod:`core` (scenario, pulses, Laplace quadrature),
:mod:`analytic` (closed-form free-space potential and proxies),
:mod:`solver` (FDTD forward data), :mod:`enclosure` (indicators and
estimators), :mod:`oracle` (independent validators), :mod:`cli`.
"""

__version__ = "0.1.0"
