"""fusebench: evaluation and score-fusion toolkit for facial retouching detection."""

from fusebench.scores import (
    Label,
    ScoreRecord,
    ScoreTable,
    SourceRange,
    join_tables,
    load_scores,
    partition_by_filter,
    save_scores,
)

__version__ = "0.1.0"

__all__ = [
    "Label",
    "ScoreRecord",
    "ScoreTable",
    "SourceRange",
    "join_tables",
    "load_scores",
    "partition_by_filter",
    "save_scores",
]
