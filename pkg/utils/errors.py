"""
Error types shared by the library, the agents and the CLI exit-code mapping
"""


class ErgodicLabError(Exception):
    """Base class for errors raised on purpose by ergodiclab"""

    exit_code = 1


class ConfigError(ErgodicLabError, ValueError):
    """Experiment config or settings failed validation"""

    exit_code = 2

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


class NumericGuardError(ErgodicLabError, ArithmeticError):
    """A named numeric guard tripped (overflow risk, uncertified truncation)"""

    exit_code = 3

    def __init__(self, guard: str, message: str):
        self.guard = guard
        super().__init__(f"[{guard}] {message}")


class AcceptanceError(ErgodicLabError):
    """At least one acceptance check failed under --check"""

    exit_code = 4


class SpaceMismatchError(ValueError):
    """A cloud and a map (or two clouds) live on different spaces"""


class ConstructionError(ErgodicLabError):
    """A certified construction could not meet its certificates"""


class VerificationError(ErgodicLabError):
    """An internal oracle disagreed with a computed value; indicates a bug"""


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ErgodicLabError):
        return error.exit_code
    return 1
