"""
Shared helpers for the scope-sim test suites.

Puts the repository root on sys.path (so `lib` imports as a package) and
scales sample counts: the acceptance counts run only when
SCOPE_FULL_ACCEPTANCE is set, otherwise a reduced count keeps the suite fast.
"""
import os
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / 'tests' / 'fixtures'

if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

def _flag(name: str) -> bool:
    return os.environ.get(name, '').strip() not in ('', '0', 'false', 'no')


FULL_ACCEPTANCE = _flag('SCOPE_FULL_ACCEPTANCE')
# rewrite the golden fixture's full-frame hex from the current build
UPDATE_GOLDEN = _flag('SCOPE_UPDATE_GOLDEN')


def samples(full: int, reduced: int) -> int:
    """Sample count for a property check."""
    return full if FULL_ACCEPTANCE else reduced
