"""Multi-stage table question answering.

Profile the table, plan the answer in natural language, translate the plan to
dataframe code, execute it in an isolated harness with bounded repair and
retry loops, then coerce and format the result into one of the five task
answer types. Includes ensemble voting and a per-type accuracy evaluator.
"""

from .interpreter import AnswerType, TypedAnswer
from .table import Column, ColumnKind, Table, load_table, serialize_subset

__all__ = [
    "AnswerType",
    "Column",
    "ColumnKind",
    "Table",
    "TypedAnswer",
    "load_table",
    "serialize_subset",
]

__version__ = "0.1.0"
