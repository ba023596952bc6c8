"""Exception hierarchy shared by every windsor_rspc module"""

from pathlib import Path
from typing import Optional, Union


class RspcError(Exception):
    """Base class for all errors raised by windsor_rspc"""


class ConfigError(RspcError, ValueError):
    """Invalid or inconsistent configuration value"""


class RangeError(RspcError, IndexError):
    """Time index or window outside the available data"""


class DimensionError(RspcError, ValueError):
    """Block dimensions that do not line up"""


class PlantFault(RspcError, ArithmeticError):
    """Non-finite plant state; the run halts"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class EstimatorFault(RspcError, ArithmeticError):
    """Non-finite recursive least-squares update"""


class ExportError(RspcError, OSError):
    """Failure writing run outputs"""

    def __init__(self, message: str, path: Union[str, Path]):
        super().__init__(f"{message}: {path}")
        self.path = Path(path)
