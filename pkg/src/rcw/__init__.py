"""Robust counterfactual witnesses for GNN node classification.

A witness is a subgraph explanation that is factual (test nodes keep their
labels on the witness alone), counterfactual (removing it flips them), and
k-robust (both properties survive any k admissible edge flips elsewhere).
The package verifies such witnesses, generates them by expand-verify
search, parallelizes generation over graph fragments, and evaluates them.
"""

from .bahouse import generate_bahouse
from .bitmap import (
    AdjacencyBitmap,
    apply_disturbance,
    disturbance_universe,
    enumerate_disturbances,
)
from .errors import (
    BudgetError,
    CapacityError,
    ChecksumMismatch,
    IntegrityError,
    ModelCompatError,
    NumericalError,
    ParameterError,
    RcwError,
    WorkerFailure,
)
from .generate import GenerationResult, expand, load_witness, robo_gexp, save_witness
from .graph import (
    Disturbance,
    Graph,
    Witness,
    load_graph,
    load_graph_tsv,
    save_graph,
    subtract,
    witness_view,
)
from .metrics import (
    EvalReport,
    evaluate,
    fidelity_minus,
    fidelity_plus,
    inject_disturbance,
    normalized_ged,
)
from .models import (
    APPNP,
    GCN,
    UNDEFINED,
    GcnLayer,
    GnnModel,
    appnp_forward,
    gcn_forward,
    infer,
    load_model,
    pagerank_vector,
    save_model,
    synth_model,
)
from .parallel import SyncState, WorkerTask, para_robo_gexp, para_verify_rcw
from .partition import Partition, partition_graph
from .verify import (
    Configuration,
    MarginReport,
    Status,
    VerifyOutcome,
    pri,
    verify_cw,
    verify_rcw,
    verify_rcw_appnp,
    verify_rcw_bruteforce,
    verify_witness,
    worst_case_margin,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
