"""System-definition files and the built-in registry.

Format (line oriented, ``#`` starts a comment)::

    [system]
    name = morris-lecar          # optional
    fast = x1, x2
    slow = y
    params = k = -0.2, c = 1
    eps = 0.001
    [equations]
    x1' = <expr>
    x2' = <expr>
    y'  = <expr>                 # slow right-hand side, written without eps
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from types import MappingProxyType
from typing import Mapping

from .expr import Expr, ExprSyntaxError, free_variables, parse_expression

__all__ = [
    "SystemFileError",
    "SystemFile",
    "parse_system_file",
    "load_system",
    "builtin_names",
    "builtin_text",
]

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")
_BUILTINS = ("parabola", "vdp", "repelling", "morris-lecar", "circle")


class SystemFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SystemFile:
    fast: tuple[str, ...]
    slow: tuple[str, ...]
    params: Mapping[str, float]
    fast_eqs: tuple[Expr, ...]
    slow_eqs: tuple[Expr, ...]
    eps: float
    name: str = "system"

    @property
    def m(self) -> int:
        return len(self.fast)

    @property
    def n(self) -> int:
        return len(self.slow)


def _names(value: str, line: int) -> list[str]:
    out = [s.strip() for s in value.split(",") if s.strip()]
    for s in out:
        if not _NAME_RE.match(s):
            raise SystemFileError(f"invalid name {s!r}", line)
    return out


def _params(value: str, line: int) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in (s.strip() for s in value.split(",")):
        if not item:
            continue
        name, sep, num = item.partition("=")
        name = name.strip()
        if not sep or not _NAME_RE.match(name):
            raise SystemFileError(f"bad parameter entry {item!r}", line)
        if name in out:
            raise SystemFileError(f"duplicate parameter {name!r}", line)
        try:
            out[name] = float(num)
        except ValueError:
            raise SystemFileError(f"parameter {name!r} needs a numeric value", line) from None
    return out


def parse_system_file(text: str) -> SystemFile:
    """Parse and validate a system file; raises :class:`SystemFileError`."""
    section = None
    header: dict[str, tuple[str, int]] = {}
    equations: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line not in ("[system]", "[equations]"):
                raise SystemFileError(f"unknown section {line!r}", lineno)
            section = line[1:-1]
            continue
        if section is None:
            raise SystemFileError("content before the first section", lineno)
        key, sep, value = line.partition("=")
        if not sep:
            raise SystemFileError("expected 'key = value'", lineno)
        key, value = key.strip(), value.strip()
        if section == "system":
            if key not in ("name", "fast", "slow", "params", "eps"):
                raise SystemFileError(f"unknown key {key!r}", lineno)
            if key in header:
                raise SystemFileError(f"duplicate key {key!r}", lineno)
            header[key] = (value, lineno)
        else:
            if not key.endswith("'"):
                raise SystemFileError("equation left-hand side must look like name'", lineno)
            var = key[:-1].strip()
            if var in equations:
                raise SystemFileError(f"duplicate equation for {var!r}", lineno)
            equations[var] = (value, lineno)

    for key in ("fast", "slow"):
        if key not in header:
            raise SystemFileError(f"missing '{key} =' in [system]")
    fast = _names(*header["fast"])
    slow = _names(*header["slow"])
    params = _params(*header["params"]) if "params" in header else {}
    if not fast or not slow:
        raise SystemFileError("need at least one fast and one slow variable")
    if len(set(fast)) != len(fast) or len(set(slow)) != len(slow):
        raise SystemFileError("duplicate variable name")
    groups = [set(fast), set(slow), set(params)]
    if (groups[0] & groups[1]) or (groups[0] & groups[2]) or (groups[1] & groups[2]):
        raise SystemFileError("fast, slow and parameter names must be disjoint")
    eps = 0.01
    if "eps" in header:
        value, line = header["eps"]
        try:
            eps = float(value)
        except ValueError:
            raise SystemFileError("eps must be a number", line) from None
        if not eps > 0:
            raise SystemFileError("eps must be positive", line)

    fast_eqs = [e for e in equations if e in groups[0]]
    slow_eqs = [e for e in equations if e in groups[1]]
    unknown = [e for e in equations if e not in groups[0] | groups[1]]
    if unknown:
        raise SystemFileError(f"equation for undeclared variable {unknown[0]!r}", equations[unknown[0]][1])
    if len(fast_eqs) != len(fast):
        raise SystemFileError(f"{len(fast)} fast variables but {len(fast_eqs)} fast equations")
    if len(slow_eqs) != len(slow):
        raise SystemFileError(f"{len(slow)} slow variables but {len(slow_eqs)} slow equations")

    declared = groups[0] | groups[1] | groups[2]
    parsed: dict[str, Expr] = {}
    for var, (src, line) in equations.items():
        try:
            e = parse_expression(src, line=line)
        except ExprSyntaxError as exc:
            raise SystemFileError(f"syntax error in equation for {var!r}: {exc}", line) from exc
        undeclared = free_variables(e) - declared
        if undeclared:
            raise SystemFileError(f"unknown identifier {sorted(undeclared)[0]!r} in equation for {var!r}", line)
        parsed[var] = e

    return SystemFile(
        fast=tuple(fast),
        slow=tuple(slow),
        params=MappingProxyType(dict(params)),
        fast_eqs=tuple(parsed[v] for v in fast),
        slow_eqs=tuple(parsed[v] for v in slow),
        eps=eps,
        name=header["name"][0] if "name" in header else "system",
    )


def builtin_names() -> tuple[str, ...]:
    return _BUILTINS


def _data(filename: str) -> str:
    return resources.files("slowfast").joinpath("data").joinpath(filename).read_text()


def builtin_text(name: str) -> str:
    if name not in _BUILTINS:
        raise KeyError(f"unknown built-in system {name!r}; choose from {', '.join(_BUILTINS)}")
    return _data(f"{name}.sys")


def builtin_region_text(name: str) -> str:
    return _data(f"{name}.region")


def load_system(source: str) -> SystemFile:
    """Built-in name or path to a system file."""
    if source in _BUILTINS:
        return parse_system_file(builtin_text(source))
    with open(source, encoding="utf-8") as fh:
        return parse_system_file(fh.read())
