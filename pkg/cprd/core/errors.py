class InvalidAlpha(ValueError):
    """Tail exponent outside (0, 1)"""


class InvalidLaw(ValueError):
    """Interarrival law is malformed or unsuitable for the requested operation"""


class InvalidRates(ValueError):
    """Negative rate or a rate combination the formula is undefined for"""


class InvalidParams(ValueError):
    pass


class InvalidEpsilon(ValueError):
    """The interval construction needs |V|(1 - alpha - 3 eps) > 1"""


class InvalidStep(ValueError):
    pass


class EmptyReplicas(ValueError):
    pass


class EmptyGraph(ValueError):
    pass


class NotConnected(ValueError):
    pass


class DegenerateGraph(ValueError):
    pass


class UnknownVertex(ValueError):
    pass


class PreconditionLambdaDD(ValueError):
    """Containment of the dormant-block coupling only holds without dormant-dormant infection"""


class NeedsExtension(ValueError):
    """No generated point of the trace lies beyond the requested time"""


class TraceTooShort(NeedsExtension):
    """A fixed trace does not cover the window an operation needs"""


class WindowExhausted(RuntimeError):
    """An open cluster reached the edge of the sampled window"""


class WindowCapExceeded(RuntimeError):
    pass


class ConfigInvalid(ValueError):
    """Experiment configuration is missing a field or has one of the wrong type

    Attributes
    ----------
    field : str
        dotted path of the offending field, e.g. ``wake_law.alpha``
    """

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class IoFailure(OSError):
    pass
