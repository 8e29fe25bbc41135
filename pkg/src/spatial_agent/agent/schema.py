"""Tool schemas, argument validation and the tool registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

__all__ = [
    "ArgSpec",
    "ToolSchema",
    "ToolRegistry",
    "ArgumentError",
    "UnknownArgumentError",
    "MissingArgumentError",
    "ArgumentTypeError",
    "UnknownToolError",
    "DuplicateToolError",
    "validate_args",
]

_NO_DEFAULT = object()

# semantic type -> accepted python types (bool is excluded from int/float explicitly)
_TYPES = {
    "str": (str,),
    "int": (int,),
    "float": (int, float),
    "bool": (bool,),
    "dict": (dict,),
    "list": (list,),
    "payload": (dict, list),
}
_JSON_TYPES = {
    "str": "string", "int": "integer", "float": "number", "bool": "boolean",
    "dict": "object", "list": "array", "payload": ["object", "array"],
}


class ArgumentError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class UnknownArgumentError(ArgumentError):
    def __init__(self, key: str, tool: str = ""):
        super().__init__(key, f"unknown argument {key!r}" + (f" for {tool}" if tool else ""))


class MissingArgumentError(ArgumentError):
    def __init__(self, key: str, tool: str = ""):
        super().__init__(key, f"missing required argument {key!r}" + (f" for {tool}" if tool else ""))


class ArgumentTypeError(ArgumentError):
    def __init__(self, key: str, expected: str, got: Any):
        super().__init__(key, f"argument {key!r} must be {expected}, got {type(got).__name__}")


class UnknownToolError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown tool"


class DuplicateToolError(ValueError):
    pass


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: str
    required: bool = True
    default: Any = _NO_DEFAULT
    description: str = ""
    choices: Optional[tuple] = None

    def __post_init__(self):
        if self.type not in _TYPES:
            raise ValueError(f"unsupported argument type {self.type!r}")
        if not self.required and self.default is _NO_DEFAULT:
            raise ValueError(f"optional argument {self.name!r} needs a default")

    @property
    def has_default(self) -> bool:
        return self.default is not _NO_DEFAULT

    def check(self, value):
        ok = isinstance(value, _TYPES[self.type])
        if self.type in ("int", "float") and isinstance(value, bool):
            ok = False
        if not ok:
            raise ArgumentTypeError(self.name, self.type, value)
        if self.choices is not None and value not in self.choices:
            raise ArgumentError(self.name, f"argument {self.name!r} must be one of {list(self.choices)}")
        return float(value) if self.type == "float" else value

    def to_dict(self) -> dict:
        d = {"name": self.name, "type": self.type, "required": self.required}
        if self.has_default:
            d["default"] = self.default
        if self.choices is not None:
            d["choices"] = list(self.choices)
        d["description"] = self.description
        return d


@dataclass(frozen=True)
class ToolSchema:
    """Function name, ordered arguments, output format and behavioural description."""

    name: str
    args: tuple
    output_format: str
    description: str
    family: str = "utility"
    produces: Optional[str] = None  # heavy payload argument this tool's output can fill

    def __post_init__(self):
        names = [a.name for a in self.args]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate argument names")

    def arg(self, name: str) -> Optional[ArgSpec]:
        for a in self.args:
            if a.name == name:
                return a
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "args": [a.to_dict() for a in self.args],
            "output_format": self.output_format,
            "description": self.description,
        }

    def to_json_schema(self) -> dict:
        """Function-calling style parameter schema."""
        props = {}
        for a in self.args:
            p = {"type": _JSON_TYPES[a.type], "description": a.description}
            if a.has_default:
                p["default"] = a.default
            if a.choices is not None:
                p["enum"] = list(a.choices)
            props[a.name] = p
        return {
            "name": self.name,
            "description": self.description + "\nOutput: " + self.output_format,
            "parameters": {
                "type": "object",
                "properties": props,
                "required": [a.name for a in self.args if a.required],
                "additionalProperties": False,
            },
        }


def validate_args(schema: ToolSchema, args: dict) -> dict:
    """Reject unknown and missing keys, check types, fill defaults.

    The result follows the schema's argument order.
    """
    if not isinstance(args, dict):
        raise ArgumentError("", f"arguments for {schema.name} must be an object")
    known = {a.name for a in schema.args}
    for key in args:
        if key not in known:
            raise UnknownArgumentError(key, schema.name)
    out = {}
    for spec in schema.args:
        if spec.name in args:
            out[spec.name] = spec.check(args[spec.name])
        elif spec.has_default:
            out[spec.name] = spec.default
        else:
            raise MissingArgumentError(spec.name, schema.name)
    return out


class ToolRegistry:
    """Name -> (schema, implementation). Implementations take validated keyword args."""

    def __init__(self):
        self._tools: dict = {}

    def register(self, schema: ToolSchema, implementation: Callable[..., Any]) -> "ToolRegistry":
        if schema.name in self._tools:
            raise DuplicateToolError(f"tool {schema.name!r} is already registered")
        self._tools[schema.name] = (schema, implementation)
        return self

    def __contains__(self, name) -> bool:
        return name in self._tools

    def __len__(self):
        return len(self._tools)

    def names(self) -> list:
        return list(self._tools)

    def schema(self, name: str) -> ToolSchema:
        try:
            return self._tools[name][0]
        except KeyError:
            raise UnknownToolError(f"unknown tool {name!r}") from None

    def schemas(self) -> list:
        return [s for s, _ in self._tools.values()]

    def families(self) -> set:
        return {s.family for s, _ in self._tools.values()}

    def producers(self, heavy_arg: str) -> list:
        """Tools whose raw output fills ``heavy_arg``."""
        return [s.name for s, _ in self._tools.values() if s.produces == heavy_arg]

    def dispatch(self, name: str, args: dict):
        schema = self.schema(name)
        impl = self._tools[name][1]
        return impl(**validate_args(schema, args))
