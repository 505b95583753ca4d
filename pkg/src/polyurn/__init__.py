"""Simulation and analysis of two-color nonlinear Polya urns with fitness."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from .core import (  # noqa: E402
    CoupledPair,
    TieSummary,
    UrnParams,
    UrnState,
    coupled_equal_fitness,
    coupled_first_tie,
    derive_seed,
    simulate,
    simulate_batch,
    transition_probabilities,
)

__all__ = [
    "CoupledPair",
    "TieSummary",
    "UrnParams",
    "UrnState",
    "coupled_equal_fitness",
    "coupled_first_tie",
    "derive_seed",
    "simulate",
    "simulate_batch",
    "transition_probabilities",
]
