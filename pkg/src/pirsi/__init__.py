"""Multi-server private information retrieval with side information.

The client knows ``M`` of the ``K`` replicated messages and wants one more
without revealing which. Queries are randomized sums of sub-packets; a
fraction of servers receive an empty query and send nothing back, which is
where the rate gain over the super-message baseline comes from.
"""

from .analysis import (
    ClassificationError,
    SchemeDistribution,
    SupportClass,
    classify_support,
    closed_form_query_prob,
    compare_theorem2,
    compute_distribution,
    rate_R,
    rate_RL,
    rate_Rstar,
    verify_pk_conditions,
)
from .core import (
    DemandSideInfo,
    FieldElement,
    MessageDB,
    Params,
    Rat,
    field_add,
    field_sub,
    random_db,
    validate_params,
)
from .oracle import (
    BudgetExceeded,
    brute_force_query_distribution,
    enumerate_realizations,
    expected_download_exact,
    verify_privacy,
    verify_recoverability,
)
from .scheme import (
    Answer,
    QueryPlan,
    QueryVector,
    generate_plan,
    queries_as_sent,
    recover_demand,
    sample_I,
    server_answer,
    two_step_retrieve,
)
from .simnet import Harness, run_experiment, run_session, run_two_step_experiment

__version__ = "0.1.0"
