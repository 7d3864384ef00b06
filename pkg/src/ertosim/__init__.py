"""ertosim: interference-aware opportunistic routing with Pareto topology control."""

from .energymodel import (
    NoReachableCandidate,
    RadioParams,
    default_radio_params,
    expected_attempts,
    expected_energy_cost,
)
from .geometry import (
    DensityContext,
    GeometryDegeneracy,
    Lens,
    candidate_relay_area,
    dsa_half_angle,
    relay_degree_pmf,
    transmission_range,
)
from .linkmodel import (
    ChannelParams,
    Interferer,
    LinkEstimate,
    UnreachableLink,
    default_channel_params,
    etx,
    pdr_sc,
    pdr_sn,
    q_function,
    reception_prob,
    sinr_success_prob,
)
from .pareto import (
    DecisionGrid,
    EAParams,
    NoFeasibleTopology,
    OptimizationContext,
    ParetoSolution,
    adjust_power,
    balanced_select,
    objective_vector,
    optimal_feasible_set,
    pareto_front_evolutionary,
    pareto_front_exhaustive,
)
from .protocols import (
    Candidate,
    CandidateSet,
    NetView,
    RoutingDecision,
    RoutingVoid,
    candidate_set,
    eeor_decide,
    erto_decide,
    exor_decide,
    make_strategy,
    opportunistic_relay,
    tcor_decide,
)
from .simcore import NodeState, RunMetrics, SimConfig, run

__version__ = "0.1.0"
