"""
Checks - Threshold comparisons recorded with every run
"""

import math
import operator
from typing import Any, Dict, List, Optional

_COMPARATORS = {
    "<=": operator.le,
    "<": operator.lt,
    ">=": operator.ge,
    ">": operator.gt,
    "==": operator.eq,
}


def make_check(name: str, value: Any, threshold: Any, comparison: str = "<=") -> Dict[str, Any]:
    """
    One check record: {name, passed, value, threshold, comparison}

    NaN values never pass.
    """
    compare = _COMPARATORS[comparison]
    if isinstance(value, float) and math.isnan(value):
        passed = False
    else:
        passed = bool(compare(value, threshold))
    return {"name": name, "passed": passed, "value": value, "threshold": threshold, "comparison": comparison}


def failed_checks(checks: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    return [c for c in checks if not c.get("passed")]


def requested(thresholds: Dict[str, float], name: str) -> Optional[float]:
    """Threshold configured for ``name``, or None when the experiment does not ask for it."""
    value = thresholds.get(name)
    return None if value is None else float(value)
