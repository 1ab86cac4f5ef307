"""smallball: martingale small-ball simulation lab and bound certificates.

Simulates Hilbert-space-valued martingales with deterministic conditional
variance schedules under adversarial direction controllers, couples them to
planar martingales with the same norms and increment norms, evaluates the
closed-form corridor / small-ball / radius-R bounds, embeds random walks on
vertex-transitive graphs as martingales, and estimates small-ball
probabilities by deterministic parallel Monte Carlo with exact
dynamic-programming oracles on lattices.
"""

from .bounds import (
    BoundCertificate,
    BoundParams,
    azuma_tail,
    build_certificate,
    check_exp_approx,
    compute_beta,
    compute_k0,
    compute_s,
    corridor_bound,
    corridor_indicator,
    largeball_bound,
    magnitude_bounds,
    smallball_bound,
)
from .coupling import CoupledPair, couple_path, couple_step
from .errors import SmallballError
from .estimator import (
    EstimateRequest,
    GraphWalkProcess,
    SmallBallEstimate,
    corridor_probability,
    estimate_smallball,
    exact_lattice_smallball,
    scaling_study,
    wilson_interval,
)
from .graphs import (
    GraphSpec,
    complete,
    custom,
    cycle,
    eigexpand_check,
    embedded_martingale,
    graph_distance,
    hypercube,
    lattice,
    lattice_embedding,
    random_walk,
    spectral_embedding,
    torus,
)
from .martingale import (
    FixedAxis,
    MartingaleSpec,
    PathSample,
    RadialInward,
    RadialOutward,
    Tangential,
    TimeSwitched,
    VarianceSchedule,
    extend_path_for_radius,
    simulate_path,
    standard_suite,
    two_point_increment,
    validate_conditions,
)

__version__ = "0.1.0"
