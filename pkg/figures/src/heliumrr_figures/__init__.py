"""Publication figures from (E, M) density histogram CSV files."""

__version__ = "0.1.0"
