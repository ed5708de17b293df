"""Knowledge compilation of queries on treelike relational instances."""

from .automaton import (
    CompiledBdta,
    FunctionBdta,
    TableBdta,
    TableBnta,
    compile_query,
    determinize,
    fact_count_bdta,
    run,
)
from .circuit import (
    Circuit,
    CircuitDecomposition,
    build_lineage_circuit,
    check_ddnnf,
    evaluate_circuit,
    truth_mask,
)
from .decomposition import (
    AnnotatedTreeEncoding,
    EliminationForest,
    PathDecomposition,
    TreeDecomposition,
    TreeEncoding,
    binarize,
    decompose_pathwidth,
    decompose_treewidth,
    tree_depth,
    tree_encode,
    validate_decomposition,
)
from .intricacy import (
    LineInstance,
    enumerate_line_instances,
    find_non_intricacy_witness,
    is_intricate,
)
from .model import (
    Fact,
    GaifmanGraph,
    Instance,
    ProbabilityValuation,
    Signature,
    gaifman_graph,
    generate_instance,
    validate_instance,
)
from .obdd import (
    Obdd,
    VariableOrder,
    compile_to_obdd,
    compile_to_obdd_pathwidth,
    evaluate_obdd,
    obdd_probability,
    variable_order,
)
from .probability import brute_force_probability, circuit_probability, ddnnf_probability
from .query import (
    Atom,
    CqNeq,
    Expr,
    Match,
    UcqNeq,
    connected,
    evaluate,
    expression_to_ucq,
    format_query,
    minimal_matches,
    parse_query,
    rank,
    validate_inversion_free,
)
from .unfold import Unfolding, unfold, verify_respects

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
