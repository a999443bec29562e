"""Percolation laboratory.

Infinite bounded-degree graphs and their quotients, Bernoulli bond
percolation with an exploratory enhancement, exploration-lifting
couplings across covering maps, exact pivotality accounting with local
window surgery, and Monte Carlo estimation of critical parameters.
"""

from .coupling import (CouplingError, CouplingParams, audit_conditions,
                       check_conditions, choose_M_s, default_params,
                       extract_marginals, phat, run_coupling)
from .cover import (CoveringMap, GroupAction, choose_r, disjoint_lifts,
                    is_strong_covering, is_weak_covering, lift_tree,
                    pattern_set, quotient, resolve_action, tame_radius,
                    translation_action)
from .enhance import (Configuration, EnhancedCluster, ModelParams,
                      event_EL, exact_event_prob, exact_theta,
                      grow_cluster, r_nice, sample_cluster)
from .graphs import (GraphOracle, ball, cycle, edge_key, graph_distance,
                     hypercubic, path_graph, product, regular_tree,
                     resolve_graph, sphere)
from .mc import (Estimate, PcEstimate, ball_connect_mc, build_pair,
                 couple_verify_campaign, pc_bisect, strict_gap_experiment,
                 surgery_AB_campaign, surgery_campaign, sweep, theta_mc)
from .pivotal import (LinkEvent, RussoReport, SphereEvent, SurgeryError,
                      is_p_pivotal, is_s_pivotal, pivotal_probabilities,
                      russo_check, strip_alpha, surgery, surgery_AB,
                      window_radius)

__version__ = "0.1.0"
