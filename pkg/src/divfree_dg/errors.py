"""Exception hierarchy.

Every error carries the name of the pipeline stage that raised it so the CLI
can print module-tagged messages and map the class to an exit code.
"""


class DivFreeDGError(Exception):
    module = "core"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class InputDataError(DivFreeDGError):
    """Bad input: malformed files, invalid meshes, bad configuration."""


class UsageError(DivFreeDGError):
    """The API or CLI was called in a way that cannot work."""


class NumericalError(DivFreeDGError):
    """Rank deficiency, factorization breakdown, non-convergence."""


class MeshParseError(InputDataError):
    module = "mesh"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshGeometryError(InputDataError):
    module = "mesh"


class MeshTopologyError(InputDataError):
    module = "mesh"


class PatchError(NumericalError):
    module = "patching"


class QuadratureError(UsageError):
    module = "quadrature"


class ReconstructionError(NumericalError):
    module = "reconstruction"


class AssemblyError(InputDataError):
    module = "dg_assembly"


class FactorizationError(NumericalError):
    module = "linear_solver"


class ConvergenceError(NumericalError):
    module = "linear_solver"


class ConfigError(InputDataError):
    module = "cli_harness"
