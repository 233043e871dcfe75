"""Pinning control of coupled chaotic-oscillator networks with a single controller."""

from .dynamics import (
    DivergenceError,
    NetworkState,
    RunResult,
    SimulationConfig,
    rhs,
    rk4_step,
    select_pinned_node,
    simulate,
    sync_error,
)
from .network import (
    CouplingMatrix,
    GeneratorConfig,
    NetworkStructure,
    analyze_structure,
    augment_master_slave,
    from_weighted_adjacency,
    generate,
    load_triplets,
    pairwise_bilinear,
    save_triplets,
)
from .oscillators import (
    CouplingFunction,
    Oscillator,
    QuadEstimate,
    chua_h,
    estimate_quad,
    eval_g,
    make_oscillator,
)
from .spectral import (
    CriterionReport,
    PerronWeights,
    PinnedMatrix,
    Spectrum,
    check_global_criterion,
    check_local_criterion,
    left_perron,
    pin,
    symmetric_eigenvalues,
    weighted_symmetric_part,
)

__version__ = "0.1.0"
