"""Finite-key key-rate calculator and protocol simulator for squeezed-state CV-QKD."""

from cvqkd.gaussian import (
    CovarianceMatrix,
    SymplecticSpectrum,
    apply_loss_excess,
    condition_on_homodyne,
    gaussian_entropy,
    gaussian_purification,
    symplectic_eigenvalues,
    two_mode_squeezed_source,
)
from cvqkd.discretization import (
    BinnedDistribution,
    BinningScheme,
    JointBinnedDistribution,
    bin_probabilities,
    conditional_shannon_entropy,
    expected_distance,
    joint_bin_distribution,
    overlap_c,
    renyi_half_entropy,
    shannon_entropy,
)
from cvqkd.coherent import (
    KeyRateResult,
    ProtocolParams,
    SecurityBudget,
    gamma,
    key_length_coherent,
    leak_ec,
    mu_correction,
    p_alpha_from_model,
    set_abort_threshold,
    tail_correction_f,
)
from cvqkd.collective import (
    ConfidenceBox,
    aep_delta,
    build_confidence_box,
    conditional_entropy_bound,
    devetak_winter_rate,
    key_length_collective,
)
from cvqkd.model import ScenarioModel


from cvqkd.config import ScenarioConfig  # noqa: E402
from cvqkd.optimize import optimize_parameters, sweep, sweep_csv  # noqa: E402
from cvqkd.simulation import (  # noqa: E402
    SimulationRun,
    counting_enumeration,
    end_to_end_run,
    run_parameter_estimation,
    sample_protocol_rounds,
    serfling_experiment,
    toeplitz_privacy_amplification,
)

__version__ = "0.1.0"
