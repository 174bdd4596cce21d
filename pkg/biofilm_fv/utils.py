import hashlib
from typing import Any, Mapping

import orjson


def dumps_settings(settings: Mapping[str, Any]) -> bytes:
    """Serialize resolved settings with sorted keys."""
    return orjson.dumps(
        settings, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
    )


def config_hash(settings: Mapping[str, Any]) -> str:
    """Stable digest of resolved settings."""
    return hashlib.sha256(dumps_settings(settings)).hexdigest()


def format_time(t: float) -> str:
    """Short float label used in snapshot file names."""
    return f"{t:.6g}"
