"""lutscope: switching/coverage analysis, property proving, and LUT
reconfiguration for flat LUT+DFF netlists."""

__version__ = "0.1.0"

from .netlist import (
    Netlist, Module, Cell, Port, NetDecl, Diagnostic,
    NetlistError, ParseError,
    parse_netlist, emit_netlist, flatten, validate, clock_net,
)

__all__ = [
    "Netlist", "Module", "Cell", "Port", "NetDecl", "Diagnostic",
    "NetlistError", "ParseError",
    "parse_netlist", "emit_netlist", "flatten", "validate", "clock_net",
    "__version__",
]
