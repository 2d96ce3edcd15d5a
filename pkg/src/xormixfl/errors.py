"""Exception hierarchy shared by all xormixfl modules."""


class XorMixFLError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(XorMixFLError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


# dataset
class IDXError(XorMixFLError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class BadMagic(IDXError):
    pass


class CountMismatch(IDXError):
    pass


class TruncatedFile(IDXError):
    pass


class InsufficientSamples(XorMixFLError):
    def __init__(self, label, needed, available):
        self.label = label
        self.needed = needed
        self.available = available
        super().__init__(f"label {label}: need {needed} samples, only {available} available")


# shared arithmetic
class LengthMismatch(XorMixFLError, ValueError):
    pass


# blending / codec
class EmptyPool(XorMixFLError):
    pass


class SameLabel(XorMixFLError):
    pass


class DummyLabelMismatch(XorMixFLError):
    pass


# protocol
class NothingToRequest(XorMixFLError):
    pass


class MissingLabel(XorMixFLError):
    def __init__(self, label, device=None):
        self.label = label
        where = f" on device {device}" if device is not None else ""
        super().__init__(f"no samples of label {label}{where}")


class QuotaShortfall(XorMixFLError):
    pass


class MissingDummyBase(XorMixFLError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"server holds no base samples of dummy label {label}")


# classifier / baselines
class DivergedLoss(XorMixFLError):
    pass


class ShapeMismatch(XorMixFLError, ValueError):
    pass


class ZeroWeights(XorMixFLError, ValueError):
    pass


# privacy
class UnknownContributor(XorMixFLError, KeyError):
    pass


class EmptyInput(XorMixFLError, ValueError):
    pass


class DegenerateSpectrum(XorMixFLError):
    pass
