"""saferecur: safety-constrained recurrence analysis for controlled Markov chains.

Given a finite controlled Markov chain and a set of forbidden states, this
package computes the largest set of states that some memoryless policy can
keep recurrent without ever stepping into the forbidden set, together with
a policy achieving it. The computation runs an entropy-maximization convex
program whose optimal support is exactly that set; independent exact
oracles (full enumeration and polynomial end-component pruning) are
included so every answer can be cross-checked combinatorially.
"""

from .chain_model import (
    ClosedLoopChain,
    ControlledChain,
    JointDistribution,
    Policy,
    RecurrentClasses,
    SafeRecurrentResult,
    ValidationReport,
    closed_loop,
    recurrent_states,
    safe_recurrent_states,
    simulate,
    validate,
)
from .chainfile import (
    ChainDocument,
    ChainFileError,
    document_to_dict,
    example1_path,
    load_chain_file,
    parse_chain_dict,
    save_chain_file,
)
from .exact_oracle import (
    EnumerationCapError,
    SupportSelection,
    brute_force_safe_recurrent,
    feasible_point_from_policy,
    iter_support_selections,
    mec_decomposition,
    safe_recurrent_under_selection,
)
from .maxent import (
    LinearConstraint,
    MaxEntProblem,
    OracleMismatchError,
    Residuals,
    SolveReport,
    SolverConvergenceError,
    constraint_residuals,
    entropy,
    solve_maxent,
    solve_maxent_marginal,
    solve_with_linear_constraints,
)
from .policy_synthesis import (
    SynthesizedPolicy,
    VerificationResult,
    extract_policy,
    perturb_within_support,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "ChainDocument",
    "ChainFileError",
    "ClosedLoopChain",
    "ControlledChain",
    "EnumerationCapError",
    "JointDistribution",
    "LinearConstraint",
    "MaxEntProblem",
    "OracleMismatchError",
    "Policy",
    "RecurrentClasses",
    "Residuals",
    "SafeRecurrentResult",
    "SolveReport",
    "SolverConvergenceError",
    "SupportSelection",
    "SynthesizedPolicy",
    "ValidationReport",
    "VerificationResult",
    "brute_force_safe_recurrent",
    "closed_loop",
    "constraint_residuals",
    "document_to_dict",
    "entropy",
    "example1_path",
    "extract_policy",
    "feasible_point_from_policy",
    "iter_support_selections",
    "load_chain_file",
    "mec_decomposition",
    "parse_chain_dict",
    "perturb_within_support",
    "recurrent_states",
    "safe_recurrent_states",
    "safe_recurrent_under_selection",
    "save_chain_file",
    "simulate",
    "solve_maxent",
    "solve_maxent_marginal",
    "solve_with_linear_constraints",
    "validate",
    "verify",
]
