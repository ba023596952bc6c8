"""
Declarative property fields

``prop()`` declares a configuration field the way add-on property groups are
declared: a default plus a display name, a description and optional bounds or
enumeration items. ``PropertyGroup`` validates the declared bounds on
construction and converts to and from plain mappings (TOML tables).
"""

from dataclasses import MISSING, dataclass, field, fields, replace
from typing import (
    Any,
    ClassVar,
    Dict,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Type,
    TypeVar,
)

from ..functions.errors import ConfigError

G = TypeVar("G", bound="PropertyGroup")


def prop(
    default: Any,
    *,
    name: str,
    description: str = "",
    min: Optional[float] = None,
    max: Optional[float] = None,
    items: Optional[Sequence[str]] = None,
) -> Any:
    metadata = {
        "name": name,
        "description": description,
        "min": min,
        "max": max,
        "items": tuple(items) if items is not None else None,
    }
    return field(default=_freeze(default), metadata=metadata)


def _freeze(value: Any) -> Any:
    """Lists (from TOML arrays) become tuples so groups stay hashable"""
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


def _numbers(value: Any):
    if isinstance(value, bool):
        return
    if isinstance(value, (int, float)):
        yield value
    elif isinstance(value, tuple):
        for v in value:
            yield from _numbers(v)


@dataclass(frozen=True)
class PropertyGroup:
    """Base of every configuration group"""

    section: ClassVar[str] = ""

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            frozen = _freeze(value)
            if frozen is not value:
                object.__setattr__(self, f.name, frozen)
            self._check(f.name, frozen, f.metadata)
        self.validate()

    def _check(self, attr: str, value: Any, meta: Mapping[str, Any]):
        label = f"{self.section}.{attr}"
        default = self.__dataclass_fields__[attr].default
        if default is not MISSING and isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{label} must be true or false, got {value!r}")
        elif default is not MISSING and isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{label} must be an integer, got {value!r}")
        elif default is not MISSING and isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{label} must be a number, got {value!r}")
        if meta.get("items") and value not in meta["items"]:
            choices = ", ".join(meta["items"])
            raise ConfigError(f"{label} must be one of {choices}, got {value!r}")
        for number in _numbers(value):
            if meta.get("min") is not None and number < meta["min"]:
                raise ConfigError(f"{label} = {number} is below {meta['min']}")
            if meta.get("max") is not None and number > meta["max"]:
                raise ConfigError(f"{label} = {number} is above {meta['max']}")

    def validate(self):
        """Cross-field checks; overridden by groups that need them"""

    @classmethod
    def from_mapping(cls: Type[G], data: Optional[Mapping[str, Any]]) -> G:
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown keys in [{cls.section}]: {', '.join(unknown)}")
        try:
            return cls(**{key: _freeze(value) for key, value in data.items()})
        except TypeError as e:
            raise ConfigError(f"Invalid [{cls.section}] table: {e}") from e

    def to_mapping(self) -> Dict[str, Any]:
        return {f.name: _thaw(getattr(self, f.name)) for f in fields(self)}

    def with_values(self: G, **changes: Any) -> G:
        return replace(self, **{k: _freeze(v) for k, v in changes.items()})

    @classmethod
    def describe(cls) -> Tuple[Tuple[str, str, str], ...]:
        """(attribute, display name, description) for every property"""
        return tuple(
            (f.name, f.metadata.get("name", f.name), f.metadata.get("description", ""))
            for f in fields(cls)
        )
