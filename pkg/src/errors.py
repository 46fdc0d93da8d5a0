"""
Error hierarchy shared by every module.

Each error knows the module that raised it so the CLI can print
module-qualified diagnostics.
"""
from typing import Optional


class ApneaScreenError(Exception):
    """Base class for all toolkit errors"""

    module = "core"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if module:
            self.module = module

    def __str__(self) -> str:
        return f"{self.module}: {self.message}"


class InvalidValue(ApneaScreenError, ValueError):
    """Out-of-range argument or malformed record"""


class StorageError(ApneaScreenError):
    """Unreadable or missing file"""

    module = "storage"


# dsp-features
class NightTooShort(ApneaScreenError):
    module = "dsp-features"


class EmptyInput(ApneaScreenError):
    module = "dsp-features"


class NonFiniteSample(ApneaScreenError):
    module = "dsp-features"


class UnsupportedSampleRate(ApneaScreenError):
    module = "storage"


# alignment / effort-estimator
class DegenerateInput(ApneaScreenError):
    module = "alignment"


# nn-core
class ShapeMismatch(ApneaScreenError):
    module = "nn-core"


class NonFiniteActivation(ApneaScreenError):
    module = "nn-core"


class NoRecordedGraph(ApneaScreenError):
    module = "nn-core"


class CorruptCheckpoint(ApneaScreenError):
    module = "nn-core"


class VersionMismatch(ApneaScreenError):
    module = "nn-core"


# training
class EmptyDataset(ApneaScreenError):
    module = "effort-estimator"


class MissingClass(ApneaScreenError):
    module = "osa-classifier"


class MissingCheckpoint(ApneaScreenError):
    module = "osa-classifier"


# events-metrics
class UnsortedInput(ApneaScreenError):
    module = "events-metrics"


class NonPositiveTst(ApneaScreenError):
    module = "events-metrics"


class NegativeAhi(ApneaScreenError):
    module = "events-metrics"


class SingleClass(ApneaScreenError):
    module = "events-metrics"


class TooFewSubjects(ApneaScreenError):
    module = "events-metrics"


# config / cli
class ConfigInvalid(ApneaScreenError):
    module = "config"


class UnknownSubcommand(ApneaScreenError):
    module = "cli"
