"""Multiply-accumulate accounting for analytic complexity reports.

Ops report their MAC counts here whenever a counter is active.  Convolutions
contribute kernel MACs, elementwise products contribute one MAC per output
element, pooled-statistics work contributes resolution-independent constants.
"""

from __future__ import annotations

_STACK: list["mac_counter"] = []


class mac_counter:
    """Context manager accumulating MACs of every op executed inside it."""

    def __init__(self):
        self.macs = 0

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _STACK.pop()
        assert popped is self
        return False


def add_macs(n: int):
    if _STACK:
        _STACK[-1].macs += int(n)


def counting() -> bool:
    return bool(_STACK)
