"""adiabatica: a numerical laboratory for slowly driven linear systems.

The package studies matrix ODEs x'(t) = (1/eps) A(t) x(t) on [0, 1] in the
small-eps regime: how closely the exact flow follows the spectral subspaces
of A(t), at what rate the deviation vanishes, and how the answer changes
with spectral gaps, eigenvalue crossings, dense spectrum, non-semisimple
eigenvalues, dissipative generators, and adiabatic switching.  It provides

- ``matrixkit``: dense linear-algebra kernels (batched exponentials,
  guarded solves, ordered Schur forms);
- ``opfamily``: operator/projection families and a catalogue of worked
  examples;
- ``spectral``: spectral projections (contour and Schur based), stability
  and resolvent-ray probes, gap diagnostics;
- ``evolve``: high-order propagators for the slow flow and its intertwined
  comparison flows;
- ``commutator``: solvers for the commutator equations behind the
  rate estimates, exact and approximate;
- ``openq``: dissipative (Lindblad-type) generators, their kernels, and
  time-averaging projections;
- ``switching``: adiabatic switching on (-infinity, 0] and energy-shift
  formulas;
- ``harness``: eps-sweep experiments, slope fits, verdicts, CSV/SVG
  reporting, and the command-line entry point.
"""

from . import matrixkit, opfamily

__version__ = "0.1.0"

__all__ = ["matrixkit", "opfamily", "__version__"]
