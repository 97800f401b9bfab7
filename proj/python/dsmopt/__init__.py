"""DSM modularization toolkit.

Loads design structure matrix cases, evaluates the TotalCost objective,
computes simulated-annealing and exact reference solutions, renders
optimization prompts and runs the LLM-driven improvement loop (against
deterministic mock backends or any OpenAI-compatible HTTP endpoint).
"""

from ._core import (
    Case,
    brute_force_optimum,
    canonical_partition,
    clustering_efficiency,
    gap_percent,
    generate_random_case,
    load_case,
    parse_case,
    parse_response,
    render_prompt,
    run_optimization,
    sa_reference,
    singleton_partition,
    total_cost,
    __version__,
)

__all__ = [
    "Case",
    "brute_force_optimum",
    "canonical_partition",
    "clustering_efficiency",
    "gap_percent",
    "generate_random_case",
    "load_case",
    "parse_case",
    "parse_response",
    "render_prompt",
    "run_optimization",
    "sa_reference",
    "singleton_partition",
    "total_cost",
    "__version__",
]
