"""Desk-scale simulator for classical-communication quantum state merging.

Subpackages by responsibility:

* :mod:`mergesim.qstate` — labeled multipartite states, entropies, distances.
* :mod:`mergesim.codes` — GF(2) linear algebra, CSS codes, universal hashing.
* :mod:`mergesim.typicality` — typical sets, typical projectors, pruning.
* :mod:`mergesim.hsw` — projector conditions and pretty-good measurements.
* :mod:`mergesim.protocol` — the merging runs and rate accounting.
* :mod:`mergesim.cli` — batch experiment runner emitting CSV/JSON reports.
"""

from .qstate import (DensityOperator, Ensemble, StateVector, SubsystemLayout,
                     conditional_entropy, fidelity, mutual_information,
                     partial_trace, reduced_state, schmidt_form, tensor_power,
                     trace_distance, von_neumann_entropy)
from .codes import CssCode, Gf2Matrix, HashFunction, sample_css, sample_hash
from .typicality import TypicalSetDescriptor, prune, typical_projector, typical_set
from .hsw import ConditionReport, Povm, build_measurement, check_conditions, error_probability
from .protocol import (MergeConfig, ProtocolReport, classical_cost_compare,
                       rate_audit, run_merge, top_up)

__version__ = "0.1.0"

__all__ = [
    "DensityOperator", "Ensemble", "StateVector", "SubsystemLayout",
    "conditional_entropy", "fidelity", "mutual_information", "partial_trace",
    "reduced_state", "schmidt_form", "tensor_power", "trace_distance",
    "von_neumann_entropy",
    "CssCode", "Gf2Matrix", "HashFunction", "sample_css", "sample_hash",
    "TypicalSetDescriptor", "prune", "typical_projector", "typical_set",
    "ConditionReport", "Povm", "build_measurement", "check_conditions",
    "error_probability",
    "MergeConfig", "ProtocolReport", "classical_cost_compare", "rate_audit",
    "run_merge", "top_up",
    "__version__",
]
