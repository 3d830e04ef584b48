"""Exception types shared across the package.

Every failure the pipeline can recover from (or report cleanly) derives from
UvmForgeError so callers can catch one base class at the CLI boundary.
"""


class UvmForgeError(Exception):
    """Base class for all package errors."""


# --- workspace ---------------------------------------------------------------

class MissingInputError(UvmForgeError):
    """A required workspace input (spec, config, RTL) is absent."""


class UnreadableSourceError(UvmForgeError):
    """An RTL source exists but cannot be read or decoded."""


class ConfigSyntaxError(UvmForgeError):
    """config.json is not valid JSON; message carries position info."""


class ConfigSchemaError(UvmForgeError):
    """config.json parsed but a field is missing or ill-typed."""


# --- rtl_iface ---------------------------------------------------------------

class MissingModuleError(UvmForgeError):
    """No module with the requested name exists in the given sources."""


class DuplicateModuleError(UvmForgeError):
    """The requested module is defined more than once."""


class UnsupportedConstructError(UvmForgeError):
    """The header uses Verilog outside the supported subset."""


class SignalNotFoundError(UvmForgeError):
    """A configured clock/reset signal is not a port of the module."""


class InvalidClockError(UvmForgeError):
    """The configured clock signal is not a 1-bit port."""


class InvalidResetError(UvmForgeError):
    """The configured reset signal is not a 1-bit port."""


# --- agent_core --------------------------------------------------------------

class MissingStageError(UvmForgeError):
    """A prompt stage required by the role's canonical order is absent."""


class ExtraStageError(UvmForgeError):
    """A prompt stage not in the role's canonical order was supplied."""


class AuthMissingError(UvmForgeError):
    """The HTTP backend's API key environment variable is unset."""


class BackendUnreachableError(UvmForgeError):
    """The HTTP backend failed after exhausting retries."""


class MockFixtureMissingError(UvmForgeError):
    """No recorded fixture matches the (role, digest) lookup key."""


# --- test_planner ------------------------------------------------------------

class EmptyPlanError(UvmForgeError):
    """Planner output contains no function-point blocks."""


class MalformedPlanError(UvmForgeError):
    """A function-point block is missing its mandatory description."""


# --- tb_generator ------------------------------------------------------------

class MissingDependencyError(UvmForgeError):
    """A generation prompt was requested without a required predecessor."""


class EmptyGenerationError(UvmForgeError):
    """The agent response contained no extractable code."""


class UnclassifiedClockError(UvmForgeError):
    """Template rendering needs clock/reset flags that were never set."""


class IncompleteSetError(UvmForgeError):
    """Testbench assembly was attempted with component kinds missing."""


# --- sim_gateway -------------------------------------------------------------

class AdapterSpawnError(UvmForgeError):
    """The external simulator command could not be started."""


class ScenarioExhaustedError(UvmForgeError):
    """The mock scenario ran out of scripted outcomes."""


class AdapterContractError(UvmForgeError):
    """An adapter produced an outcome violating pass/fail consistency."""


class CoverageSchemaError(UvmForgeError):
    """A coverage document violates the expected JSON shape."""


# --- repair_engine -----------------------------------------------------------

class NoActionableErrorsError(UvmForgeError):
    """Every error lacks attribution and the testcase fallback is disabled."""


# --- coverage_optimizer ------------------------------------------------------

class NoGapsError(UvmForgeError):
    """An optimization prompt was requested with an empty gap list."""


# --- harness -----------------------------------------------------------------

class DivisionDomainError(UvmForgeError, ValueError):
    """success_rate was asked to divide by a zero total."""


class ReportIoError(UvmForgeError):
    """A report file could not be written."""
