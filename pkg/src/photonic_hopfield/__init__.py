"""Multiphoton interference mapped onto generalized Hopfield spin models.

Phase layers on a linear interferometer induce a 2*n_ph-body spin
Hamiltonian over the input phases; this package simulates it with exchange
Monte Carlo, cross-checked against exact permanent-based amplitudes, and
measures the retrieval / spin-glass / paramagnet phenomenology.
"""

from . import analysis, cli, dynamics, linops, model, runio, seeding
from .analysis import (
    CellStats,
    Histogram,
    PhaseThresholds,
    SweepResult,
    classify_phase,
    collect_pm,
    collect_pq,
    finite_size_study,
    overlap_q,
    phase_sweep,
)
from .dynamics import (
    EMC,
    MCState,
    Schedule,
    Trajectory,
    geometric_ladder,
    mc_step,
    measurement_noise,
    metropolis_flip,
    run_emc,
    self_correlation,
    thermal_fluctuation,
)
from .linops import (
    FockSuperposition,
    ModeConfig,
    dft_input_amplitudes,
    dft_matrix,
    enumerate_configs,
    haar_random_unitary,
    multiplicity,
    permanent,
    scattering_amplitude,
    transition_probability,
)
from .model import (
    BunchedSubset,
    ExplicitOutputs,
    FieldCache,
    ModelInstance,
    bunched_overlaps,
    coupling_tensor,
    energy,
    fully_bunched_probability,
    memory_overlap,
    normalized_memory_overlap,
    output_probability_exact,
    sample_instance,
)
from .runio import Manifest, RunConfig, TemperatureGrid
from .seeding import split_seed

__version__ = "0.1.0"
