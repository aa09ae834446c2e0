"""qflab: a verification laboratory for quadratic Fourier analysis over F_p^n.

Modules:
    fpn_core      exact F_p / Z[omega] arithmetic, enumeration, character sums
    factor        linear and quadratic factors, atoms, bilinear level sets
    spectral      Fourier transform, global U^2/U^3 norms, AP averages
    local_norms   local U^2(d)/U^3(d) semi-norms and restricted Fourier
    pattern_ops   IP/IP2 operators, multi-local pattern operators, witnesses
    combinatorics VC/VC2 dimension search, structure predicates
    lab_cli       experiment harness behind the `qflab` command
"""

from .errors import (
    AsymmetricForm,
    CapExceeded,
    DegenerateContext,
    DependentBasis,
    DependentVectors,
    EmptyAtom,
    EmptyLevelSet,
    NegativeDiagonal,
    QflabError,
    TooManyForms,
    UnknownExperiment,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetricForm",
    "CapExceeded",
    "DegenerateContext",
    "DependentBasis",
    "DependentVectors",
    "EmptyAtom",
    "EmptyLevelSet",
    "NegativeDiagonal",
    "QflabError",
    "TooManyForms",
    "UnknownExperiment",
    "__version__",
]
