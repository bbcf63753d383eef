"""Selects the compiled detection kernels, falling back to the interpreted ones.

Set ``SPECCEP_PURE=1`` to force the interpreted kernels.
"""

import os

from . import detect as _pure

COMPILED = False
if os.environ.get("SPECCEP_PURE") != "1":
    try:
        from . import _detect as _impl
        COMPILED = True
    except ImportError:  # extension not built
        _impl = _pure
else:
    _impl = _pure

QEDetector = _impl.QEDetector
Q1Detector = _impl.Q1Detector
Q2Detector = _impl.Q2Detector
Q3Detector = _impl.Q3Detector

CREATE, ADD, COMPLETE, ABANDON = _pure.CREATE, _pure.ADD, _pure.COMPLETE, _pure.ABANDON


def backend(compiled=None):
    """Return the detector module, ``compiled=None`` meaning the active one."""
    if compiled is None:
        return _impl
    if compiled:
        from . import _detect
        return _detect
    return _pure
