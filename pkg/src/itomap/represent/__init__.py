"""Predictable representation estimates and the polynomial-representation oracle."""

from .polyoracle import OracleSample, PolyOracleReport, oracle_sample, poly_representation_oracle
from .regression import (
    PayoffSpec,
    ReplicationReport,
    RepresentationEstimate,
    estimate_predictable_representation,
    replicate,
)

__all__ = [
    "OracleSample",
    "PayoffSpec",
    "PolyOracleReport",
    "ReplicationReport",
    "RepresentationEstimate",
    "estimate_predictable_representation",
    "oracle_sample",
    "poly_representation_oracle",
    "replicate",
]
