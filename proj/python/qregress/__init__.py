"""Python bindings for the qregress C++ core."""

from ._core import (  # noqa: F401
    DataError,
    DomainError,
    Error,
    FormatError,
    Model,
    ShapeError,
    add_noise,
    aggregate_bound,
    dataset_power,
    load_mnist_idx,
    mae_gradient,
    make_ttn_model,
    parse_history,
    pqc_unitary,
    rademacher_bound,
    run_experiment,
    scaling_fit,
    tpe_decode,
    tpe_encode,
    tt_roundtrip,
    tt_svd,
    vqc_expectations,
    vqc_gradient,
    vqc_shots,
)

__version__ = "0.1.0"
