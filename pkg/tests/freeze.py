"""Frozen empirical constants for the regression suites.

The qualitative inequalities come with unspecified constants; each suite
records the worst constant-free ratio observed on the pinned seed corpus
(seed 20240817) and fails when a later run exceeds 1.2x the frozen value.
Regenerate with scripts/calibrate.py after an intentional change and
review the diff.
"""

SLACK = 1.2

FROZEN = {
    # whitney covering corpus (interval x time, 108 random closed sets)
    "whitney_W7_overlap_n1": 15,
    "whitney_W8_neighbors_n1": 5,
    "whitney_W13_n1": 145.63,
    # maximal operator L^theta bounds (interval grid corpus)
    "maximal_Ltheta_1.5": 1.608,
    "maximal_Ltheta_2.0": 1.462,
    "maximal_Ltheta_3.0": 1.292,
    "dual_maximal_Lq": 1.571,
    # truncation sweep (percentile x p x resolution cube, bump data)
    "truncation_sup_value": 1.431,
    "truncation_sup_gradient": 92.72,
    "truncation_neighbor_diff": 30.659,
    "truncation_time_derivative": 39.797,
    "truncation_product_theta1": 0.351,
    "truncation_lipschitz_over_lambda": 6.100,
    # estimate pipelines (drifting-sine instances, p in {1.8, 2, 3})
    "time_slice_ratio": 0.311,
    "apriori_ratio": 0.062,
    "caccioppoli_ratio": 0.007,
    "reverse_holder_ratio": 0.261,
    "higher_integrability_ratio": 0.022,
    # calculus inequality sweeps
    "parabolic_poincare_ratio": 0.032,
    "gagliardo_nirenberg_ratio": 0.898,
    # capacity (box complement, 32^2)
    "thickness_box_b0": 0.566,
}


def cap(name):
    """Regression ceiling: frozen value times the allowed slack."""
    return FROZEN[name] * SLACK
