"""Exception hierarchy.

Every error carries a short ``category`` string so the command-line front end
can report failures in a machine-parsable way.
"""


class VarFSIError(Exception):
    category = "error"


class ConfigurationError(VarFSIError, ValueError):
    category = "configuration"


class DimensionError(VarFSIError, ValueError):
    category = "dimension"


class MeshError(VarFSIError, ValueError):
    category = "mesh"


class CouplingError(VarFSIError, ValueError):
    category = "coupling"


class SchedulingError(VarFSIError, ValueError):
    category = "scheduling"


class GeometryError(VarFSIError, ValueError):
    category = "geometry"


class AssemblyError(VarFSIError, ValueError):
    category = "assembly"


class SteadinessError(VarFSIError, RuntimeError):
    category = "steadiness"


class NonConvergenceError(VarFSIError, RuntimeError):
    category = "nonconvergence"

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class SingularityError(VarFSIError, RuntimeError):
    category = "singularity"

    def __init__(self, message, block=None, step=None):
        super().__init__(message)
        self.block = block
        self.step = step


class ParseError(VarFSIError, ValueError):
    category = "parse"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(VarFSIError, ValueError):
    category = "validation"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class HistoryError(VarFSIError, ValueError):
    category = "history"


class UsageError(VarFSIError, ValueError):
    category = "usage"
