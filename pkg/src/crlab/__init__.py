"""crlab: dbar solvers and bump constructions on smooth families of domains."""

from .domain import DomainFamily, builtin_family, family_from_config, parse_defining_function
from .expr import DefiningExpr

__version__ = "0.1.0"

__all__ = ["DomainFamily", "DefiningExpr", "builtin_family", "family_from_config", "parse_defining_function"]
