"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: user-facing problems (bad input files,
bad configuration, incompatible checkpoints) exit 1, broken internal
contracts exit 2.
"""


class LabelAttnError(Exception):
    """Base class for every error raised by this package."""


class InputError(LabelAttnError):
    """Malformed user input: corpus files, texts, ids out of range."""


class ConfigError(LabelAttnError):
    """Invalid or inconsistent configuration values."""


class CompatibilityError(InputError):
    """Checkpoint does not match the requested config or vocabulary."""


class ContractError(LabelAttnError):
    """A caller violated an internal precondition."""


class ShapeError(ContractError):
    """Tensor shapes do not fit the requested operation."""
