"""Dyadic Haar analysis on the N-torus: product BMO, little bmo, LMO norms,
multi-parameter paraproducts, dyadic shift commutators and operator-norm tools."""
from .dyadic import (
    DepthError,
    DyadicInterval,
    DyadicRectangle,
    GridSignal,
    HaarExpansion,
    OpenSet,
    haar_forward,
    haar_inverse,
    pointwise_product,
)
from .norms import (
    NormReport,
    Witness,
    bmo_norm,
    lmo_axis_norm,
    lmo_beta_norm,
    lmo_equiv_quantity,
    lmo_norm,
    product_bmo_exact,
    product_bmo_norm,
    rect_bmo_norm,
)
from .operators import OperatorHandle
from .paraproducts import PartitionSpec, SignSpec, delta_op, nine_terms, pi_beta, pi_main, pi_partition
from .shifts import CommutatorResult, GridSpec, iterated_commutator, shift_apply
from .opnorm import EquivalenceRecord, bmo_to_bmo_lower_bound, l2_opnorm

__version__ = "0.1.0"
