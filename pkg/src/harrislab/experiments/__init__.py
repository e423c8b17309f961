"""Experiment harness: specs, runners, statistics, reports and the CLI."""

from .config import PRESETS, load_spec, parse_sites, preset, read_config
from .runners import (RUNNERS, run, run_coalesce, run_expanding, run_identities, run_lemma1,
                      run_marginals, run_outcomes, run_percolation, run_renorm_closure,
                      run_speed, run_symmetry, run_tail)
from .types import (ExperimentResult, ExperimentSpec, MarginalTable, Outcome, OutcomeLabel,
                    Table, TailFit)

__all__ = [
    "PRESETS", "load_spec", "parse_sites", "preset", "read_config", "RUNNERS", "run",
    "run_coalesce", "run_expanding", "run_identities", "run_lemma1", "run_marginals",
    "run_outcomes", "run_percolation", "run_renorm_closure", "run_speed", "run_symmetry",
    "run_tail", "ExperimentResult", "ExperimentSpec", "MarginalTable", "Outcome",
    "OutcomeLabel", "Table", "TailFit",
]
