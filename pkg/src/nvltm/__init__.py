"""Simulation and analysis of NV-diamond laser-threshold magnetometry.

Subpackages and modules:

* ``spin_model`` - NV- rate equations, populations, Zeeman levels
* ``cavity`` - Fabry-Perot geometry, finesse and output powers
* ``physics`` / ``simulate`` - operating point and synthetic datasets
* ``analysis`` - Lorentzian fitting, finesse, contrast, sensitivity
* ``calibration`` / ``config`` / ``harness`` / ``cli`` - orchestration
"""

__version__ = "0.1.0"
