"""Exception and warning types raised by the engine."""


class SmartEMError(Exception):
    pass


class NonConvergent(SmartEMError):
    pass


class IndexOutOfRange(SmartEMError, IndexError):
    pass


class GeometryOverlap(SmartEMError):
    pass


class FarFieldViolated(SmartEMError):
    pass


class SingularSystem(SmartEMError):
    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class WrongGeometry(SmartEMError):
    pass


class PointInsideSlab(SmartEMError):
    pass


class DegenerateSpec(SmartEMError):
    pass


class BudgetExhausted(SmartEMError):
    pass


class SchemaError(SmartEMError):
    pass


class EvanescentProbe(UserWarning):
    pass


class ExpansionTruncation(UserWarning):
    pass


class HarmonicMismatch(UserWarning):
    pass
