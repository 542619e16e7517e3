"""Isolated executor for generated dataframe code.

Launched as `python -m mrt_harness` with no arguments; speaks one JSON object
per line over stdin/stdout. Requests carry an op of check, run, or convert;
every request id is echoed in exactly one reply.
"""

PROTOCOL_VERSION = 1

from .serialize import serialize_value  # noqa: E402

__all__ = ["PROTOCOL_VERSION", "serialize_value"]
