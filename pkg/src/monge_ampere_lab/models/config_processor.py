from typing import Dict, Any, Optional
from copy import deepcopy


def deep_merge_dicts(
    base: Dict[str, Any], override: Optional[Dict[str, Any]]
) -> Dict[str, Any]:
    """
    Recursively merge two dictionaries, with override taking precedence.
    Lists and scalars from the override replace the base value; None values
    in the override are ignored so unset command-line flags keep file values.
    """
    if override is None:
        return deepcopy(base)

    result = deepcopy(base)

    for key, value in override.items():
        if value is None:
            continue
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge_dicts(result[key], value)
        else:
            result[key] = deepcopy(value)

    return result


def nest_dotted(flat: Dict[str, Any]) -> Dict[str, Any]:
    """
    Expands dotted keys into nested dictionaries.

    Examples:
        >>> nest_dotted({"flow.T": 10, "seed": 3})
        {'flow': {'T': 10}, 'seed': 3}
    """
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            continue
        parts = key.split(".")
        cursor = nested
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
    return nested
