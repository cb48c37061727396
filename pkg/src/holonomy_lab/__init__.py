"""Holonomy, gauge actions and closure experiments on finite graphs.

The package is organized in five layers: ``pathgroupoid`` (graphs and
reduced edge words), ``matrixgroups`` (compact matrix groups and Haar
sampling), ``connections`` (edge assignments, smooth bump connections,
parallel transport, gauge actions, interpolation), ``cylindrical``
(functions of finitely many holonomies, Haar means, trace separation)
and ``spectra`` (spanning-tree coordinates, orbit normal forms, closure
verdicts).  The ``cli`` module exposes the same operations as a batch
tool named ``holonomy-lab``.
"""

from .pathgroupoid import (
    CompositionError,
    ConnectivityError,
    Edge,
    Graph,
    PathWord,
    UnknownEdgeError,
    abelianize,
    compose,
    compose_all,
    depends_on,
    edge_word,
    graph_from_dict,
    graph_to_dict,
    inverse,
    is_independent_family,
    spanning_tree,
    tree_edge_ids,
    word_from_tokens,
    word_to_tokens,
)
from .matrixgroups import (
    BranchCutError,
    CentralQuotient,
    DescriptorMismatchError,
    GroupElement,
    LieAlgebraElement,
    ProductGroup,
    SpecialUnitary,
    Torus,
    Unitary,
    central_quotient,
    conjugate,
    descriptor_from_dict,
    descriptor_to_dict,
    dim,
    distance,
    exp_map,
    find_conjugator,
    haar_batch,
    haar_sample,
    identity,
    inv,
    log_map,
    mul,
    quotient_project,
    random_algebra,
    trace_normalized,
)
from .connections import (
    BumpTerm,
    DiscreteGauge,
    GaugeBump,
    GeneralizedConnection,
    GeometryError,
    IndependenceError,
    InterpolationTarget,
    SmoothConnection,
    SmoothGauge,
    TransformedSmoothHolonomy,
    gauge_act_general,
    gauge_act_smooth,
    generalized_from_dict,
    generalized_to_dict,
    holonomy_general,
    holonomy_smooth,
    holonomy_smooth_path,
    interpolate_connection,
    pushforward_hom,
    random_discrete_gauge,
    random_generalized_connection,
    random_smooth_connection,
    random_smooth_gauge,
    smooth_from_dict,
    smooth_to_dict,
    split_holonomy,
    transport,
)
from .cylindrical import (
    Conj,
    Const,
    CylFunction,
    Entry,
    HaarMean,
    MeanEstimate,
    Prod,
    SeparationVerdict,
    Sum,
    TraceOf,
    cyl_from_dict,
    cyl_to_dict,
    entry_abs_square,
    entry_function,
    evaluate,
    holonomy_stack,
    invariance_check,
    loop_stack,
    separation_test,
    wilson_loop,
)
from .spectra import (
    ApproximationReport,
    ClosureVerdict,
    LoopAssignment,
    ObstructionWitness,
    TreeBasis,
    TreeDecomposition,
    abelian_obstruction_witness,
    approximation_experiment,
    closure_membership,
    commutator_word,
    loop_assignment_from_dict,
    loop_assignment_to_dict,
    orbit_representative,
    tree_basis,
    tree_decompose,
    tree_reconstruct,
)

__version__ = "0.1.0"
