"""
Exception hierarchy for scope-sim.

Every failure raised by the library derives from ScopeError so the CLI can
catch one type and map it to exit code 1. Verification helpers (ECDSA,
contact and source signatures) never raise: they answer False.
"""
from __future__ import annotations


class ScopeError(Exception):
    """Base class for every library error."""


# ============================================
# ALGEBRA
# ============================================

class GroupError(ScopeError):
    """Field/curve misuse: mismatched fields, off-curve points, wrong params."""


class EncodingError(GroupError):
    """A chunk could not be mapped to a curve point."""


class NotAMessagePoint(EncodingError):
    """The point's x-coordinate does not carry a valid length/counter framing."""


class LayerError(ScopeError):
    """Ciphertext layer bookkeeping violated (r = 0, multi-layer decrypt, ...)."""


# ============================================
# WIRE FORMAT
# ============================================

class ParseError(ScopeError):
    """
    Structured deserialization failure.

    Attributes:
        section: wire section being parsed when the failure happened
                 (e.g. "mac_header", "scope_header.report", "payload")
    """

    def __init__(self, section: str, message: str):
        super().__init__(f"{section}: {message}")
        self.section = section
        self.message = message


# ============================================
# PROTOCOL / SIMULATION
# ============================================

class ProtocolError(ScopeError):
    """Secure coding-condition exchange misuse (missing keys, wrong stage)."""


class ScenarioError(ScopeError):
    """Unknown scenario id, malformed topology, flow or scenario file."""
