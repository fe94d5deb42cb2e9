"""Hyperfine/Zeeman modeling of electronic-spin-1/2, nuclear-spin-1/2
Kramers ions in low-symmetry crystals.

Predicts optical, ODMR, EPR and spectral-hole-burning observables from
hyperfine (A) and Zeeman (g) tensor parameters, fits tensor orientations
from measured transition data, and locates ZEFOZ (zero first-order Zeeman)
field points.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .fitting import DataPoint, FitProblem, FitResult, fit, invert_and_seed, residuals
from .hamiltonian import (
    EigenSystem,
    SpinSystem,
    TransitionTable,
    ZeroFieldLevels,
    basis_overlaps,
    build_hamiltonian,
    diagonalize,
    eigensystem,
    energies_sweep,
    invert_zero_field,
    physical_constants,
    transition_frequencies,
    zeeman_gradient,
    zero_field_levels,
)
from .magres import EprResonance, OdmrLine, epr_angular_map, epr_resonance_fields, odmr_lines
from .presets import SITE_I, SITE_II, get_site
from .shb import (
    ClassAssignment,
    HolePattern,
    RateMatrix,
    enumerate_classes,
    hole_pattern,
    populations_after_burn,
    shb_field_map,
)
from .spectra import OpticalLine, SiteModel, absorption_spectrum, optical_lines, ordering_search
from .tensors import (
    EulerAngles,
    FrameRotation,
    PrincipalTensor,
    SymmetricTensor3,
    assemble_tensor,
    decompose_tensor,
    lab_transform,
    rotation_matrix,
    subsite_transform,
)
from .zefoz import ZefozCandidate, sensitivity, zefoz_search

__version__ = "0.1.0"
