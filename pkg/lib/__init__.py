"""
scope-sim - secure network coding simulator

COPE-style coding over an additively homomorphic EC-ElGamal cipher on
binary curves, with ECDSA contact and source signatures.
"""

__version__ = "1.0.0"
__license__ = "MIT"

# Lazy loading: the curve modules build tables on first use
__all__ = [
    "errors",
    "group",
    "he",
    "auth",
    "packet",
    "coding",
    "sim",
    "bench",
    "report",
]

def __getattr__(name):
    """Import sub-modules on first attribute access."""
    if name in __all__:
        import importlib
        module = importlib.import_module(f".{name}", __package__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
