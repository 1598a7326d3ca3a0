"""momentlab: moment-SOS hierarchies, CD kernels, and pseudo-moment error measurement."""

from momentlab.polycore import (
    MonomialBasis,
    Polynomial,
    compose_linear,
    count_monomials,
    enumerate_monomials,
    eval_poly,
    half_degree,
    l1_norm,
    monomial_basis,
)
from momentlab.semialg import (
    SemiAlgebraicSet,
    SimpleSetProduct,
    archimedean_augment,
    make_catalog_set,
    violation,
)
from momentlab.momentkit import (
    DiscreteMeasure,
    TruncatedSequence,
    lift_sequence,
    localizing_matrix,
    moment_matrix,
    preordering_products,
    riesz_apply,
    transform_sequence,
)
from momentlab.sdpcore import Block, ConicProgram, Solution, SolveOptions, psd_project, solve

__all__ = [
    "Block",
    "ConicProgram",
    "DiscreteMeasure",
    "MonomialBasis",
    "Polynomial",
    "SemiAlgebraicSet",
    "SimpleSetProduct",
    "Solution",
    "SolveOptions",
    "TruncatedSequence",
    "archimedean_augment",
    "compose_linear",
    "count_monomials",
    "enumerate_monomials",
    "eval_poly",
    "half_degree",
    "l1_norm",
    "lift_sequence",
    "localizing_matrix",
    "make_catalog_set",
    "moment_matrix",
    "monomial_basis",
    "preordering_products",
    "psd_project",
    "riesz_apply",
    "solve",
    "transform_sequence",
    "violation",
]
