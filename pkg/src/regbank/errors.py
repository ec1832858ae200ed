"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the CLI can map failures onto the
documented process exit codes: 1 usage, 2 data, 3 training/convergence.
"""

from __future__ import annotations


class RegbankError(Exception):
    exit_code = 2


class UsageError(RegbankError):
    """Bad flags, unknown config keys, malformed option values."""

    exit_code = 1


class ConfigError(UsageError):
    pass


# -- data errors (exit code 2) -------------------------------------------

class WaveformTooShort(RegbankError):
    pass


class InvalidWindow(RegbankError):
    pass


class DimensionMismatch(RegbankError):
    pass


class LengthMismatch(RegbankError):
    pass


class NegativeEntry(RegbankError):
    pass


class MissingChannel(RegbankError):
    pass


class EmptyEvent(RegbankError):
    pass


class ParseError(RegbankError):
    pass


class MissingFile(RegbankError):
    pass


class InvalidInterval(RegbankError):
    pass


class VersionMismatch(RegbankError):
    pass


class CorruptBundle(RegbankError):
    pass


# -- training / convergence errors (exit code 3) --------------------------

class TrainingError(RegbankError):
    exit_code = 3


class EmptyClass(TrainingError):
    pass


class EmptySide(TrainingError):
    pass


class NoValidSplit(TrainingError):
    """Raised when no candidate test separates the node's data.

    Tree growth treats this as a signal to close the node as a leaf,
    so it never escapes training.
    """


class SingleClass(TrainingError):
    pass


class TooFewEvents(TrainingError):
    pass


class TooFewSamples(TrainingError):
    pass


class TooFewPoints(TrainingError):
    pass


class NoConvergence(TrainingError):
    pass
