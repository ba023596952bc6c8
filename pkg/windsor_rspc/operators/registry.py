"""
Operator base class and registry

An operator is one user-facing action. ``execute(context)`` returns
{"FINISHED"} or {"CANCELLED"} and reports problems through ``self.report``
instead of raising, so every error class ends in the same exit path.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Set, Tuple, Type

from ..properties.run_properties import RunConfig

logger = logging.getLogger(__name__)

_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


@dataclass
class Context:
    """What an operator works on and where it leaves its results"""

    config: RunConfig
    output_dir: Path
    results: Dict[str, Any] = field(default_factory=dict)


class Operator:
    bl_idname: ClassVar[str] = ""
    bl_label: ClassVar[str] = ""
    bl_description: ClassVar[str] = ""

    def __init__(self, **options: Any):
        self.options = options
        self.reports: List[Tuple[str, str]] = []

    def report(self, level: Set[str], message: str):
        name = next(iter(level))
        logger.log(_LEVELS.get(name, logging.INFO), message)
        self.reports.append((name, message))

    def execute(self, context: Context) -> Set[str]:
        raise NotImplementedError


_OPERATORS: Dict[str, Type[Operator]] = {}


def register_class(cls: Type[Operator]):
    if not cls.bl_idname:
        raise ValueError(f"{cls.__name__} has no bl_idname")
    _OPERATORS[cls.bl_idname] = cls


def unregister_class(cls: Type[Operator]):
    _OPERATORS.pop(cls.bl_idname, None)


def get_operator(idname: str) -> Type[Operator]:
    try:
        return _OPERATORS[idname]
    except KeyError:
        raise KeyError(f"Operator {idname} is not registered") from None


def registered() -> Tuple[str, ...]:
    return tuple(sorted(_OPERATORS))
