"""Effective-potential reduction of coupled two-field eigenproblems.

Closed channels are eliminated into an energy-dependent potential on the open
channel. The reduced equation then has more roots than its dimension; these
are grouped into realisations, each with a probability. A seeded jump process
switches between realisations, and a separate module evaluates the
rest-frequency / de Broglie kinematics.
"""
from .model import (ChannelSet, ConfigError, CoupledSystem, GridSpec, SystemConfig, build_system,
                    uniform_grid, validate)
from .spectral import FullSpectrum, TruncatedSpectrum, solve_full, solve_truncated
from .ep import (AssembledState, EffectivePotential, PoleProximityError, RootCountError, RootRecord,
                 assemble_all, assemble_state, build_ep, eigen_branches, find_all_roots)
from .realisations import (RealisationSet, Regime, RegimeThresholds, born_probabilities,
                           classify_regime, complexity, expectation_density, group_realisations)

__version__ = "0.1.0"
