"""Quantum-like bits on networks of coupled oscillators.

Submodules: ``netgraph`` (graph sampling and resources), ``spectra``
(eigen-solvers and densities), ``qlgates`` (gate maps), ``dynamics``
(complex Kuramoto propagation), ``emergent`` (error analysis) and
``experiments``/``cli`` (the runner).  Importing the package itself loads no
numerical libraries so the CLI can configure thread counts first.
"""

__version__ = "0.1.0"
