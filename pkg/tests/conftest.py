"""Shared test configuration.

Property tests assert numerical invariants, not latency; disable the
per-example deadline so they do not flake when the suite shares a loaded
CPU with the long chain-based tests.
"""

from hypothesis import settings

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")
