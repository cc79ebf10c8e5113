"""VCD subset for event traces.

Export writes one scalar $var per traced signal (vector bits as their own
scalars named ``port[i]``), values 0/1/x/z, timestamps = time steps. Import
additionally accepts vector ``b...`` values against ranged $var declarations,
expanding them to per-bit events. import(export(trace)) == trace.
"""

from __future__ import annotations

import re

from .netlist import Netlist
from .sim import EventTrace, VALUE_CHARS, X

_VALUE_OF = {"0": 0, "1": 1, "x": 2, "X": 2, "z": 3, "Z": 3}

# printable ASCII '!'..'~' per the VCD identifier-code convention
_ID_FIRST, _ID_COUNT = 33, 94


class VcdError(Exception):
    pass


def _id_code(i):
    code = ""
    i += 1
    while i > 0:
        i -= 1
        code = chr(_ID_FIRST + i % _ID_COUNT) + code
        i //= _ID_COUNT
    return code


def export_vcd(trace: EventTrace, top_name="top", timescale="1ns"):
    ids = {sig: _id_code(i) for i, sig in enumerate(trace.signals)}
    out = [
        f"$timescale {timescale} $end",
        f"$scope module {top_name} $end",
    ]
    for sig in trace.signals:
        out.append(f"$var wire 1 {ids[sig]} {sig} $end")
    out.append("$upscope $end")
    out.append("$enddefinitions $end")
    t_cur = None
    for t, sig, v in trace.events:
        if t != t_cur:
            out.append(f"#{t}")
            t_cur = t
        out.append(f"{VALUE_CHARS[v]}{ids[sig]}")
    # a final bare timestamp pins the trace length even past the last event
    if t_cur is None or t_cur < trace.length:
        out.append(f"#{trace.length}")
    return "\n".join(out) + "\n"


_VAR_RE = re.compile(
    r"\$var\s+\w+\s+(\d+)\s+(\S+)\s+(.+?)\s*\$end"
)


def import_vcd(text, netlist: Netlist | None = None) -> EventTrace:
    """Parse a VCD event list. With a netlist, every declared signal must
    exist in it (flat signal names)."""
    id_bits = {}   # id code -> list of bit signal names, MSB first as declared
    signals = []
    events = []
    t = None
    max_t = -1

    body = text
    for m in _VAR_RE.finditer(text):
        width = int(m.group(1))
        code = m.group(2)
        rest = m.group(3).strip()
        # "name" or "name [msb:lsb]" or already-bracketed bit "name[i]"
        rm = re.fullmatch(r"(\S+)\s+\[(\d+):(\d+)\]", rest)
        if rm:
            base, msb, lsb = rm.group(1), int(rm.group(2)), int(rm.group(3))
            if msb < lsb:
                raise VcdError(f"descending range unsupported for {base!r}")
            bits = [f"{base}[{i}]" for i in range(msb, lsb - 1, -1)]
        else:
            name = rest.split()[0]
            bits = [name]
        if width != len(bits):
            raise VcdError(f"width {width} does not match declaration {rest!r}")
        if code in id_bits:
            raise VcdError(f"duplicate identifier code {code!r}")
        id_bits[code] = bits
        signals.extend(reversed(bits))  # table in LSB-first order

    if netlist is not None:
        known = set(netlist.top_module.signals())
        for sig in signals:
            if sig not in known:
                raise VcdError(f"VCD signal {sig!r} not present in netlist")

    in_defs = True
    for raw in body.splitlines():
        line = raw.strip()
        if not line:
            continue
        if in_defs:
            if line.startswith("$enddefinitions"):
                in_defs = False
            continue
        if line.startswith("$"):  # $dumpvars / $end markers
            continue
        if line.startswith("#"):
            try:
                nt = int(line[1:])
            except ValueError:
                raise VcdError(f"malformed timestamp {line!r}")
            if t is not None and nt < t:
                raise VcdError(f"timestamp {nt} goes backwards")
            t = nt
            max_t = max(max_t, t)
            continue
        if t is None:
            raise VcdError(f"value {line!r} before first timestamp")
        if line[0] in _VALUE_OF:
            code = line[1:]
            if code not in id_bits:
                raise VcdError(f"value for undeclared identifier {code!r}")
            bits = id_bits[code]
            if len(bits) != 1:
                raise VcdError(f"scalar value for vector identifier {code!r}")
            events.append((t, bits[0], _VALUE_OF[line[0]]))
        elif line[0] in "bB":
            val, _, code = line[1:].partition(" ")
            code = code.strip()
            if code not in id_bits:
                raise VcdError(f"value for undeclared identifier {code!r}")
            bits = id_bits[code]
            digits = val.rjust(len(bits), val[0] if val[0] in "xzXZ" else "0")
            if len(digits) != len(bits):
                raise VcdError(f"vector value {val!r} too wide for {code!r}")
            for ch, sig in zip(digits, bits):
                if ch not in _VALUE_OF:
                    raise VcdError(f"bad vector digit {ch!r}")
                events.append((t, sig, _VALUE_OF[ch]))
        else:
            raise VcdError(f"unrecognized VCD line {line!r}")

    # normalize: sorted by time, minimal per-signal event list
    events.sort(key=lambda e: (e[0], e[1]))
    last = {}
    minimal = []
    for t_, sig, v in events:
        if last.get(sig, X) != v:
            minimal.append((t_, sig, v))
            last[sig] = v
    length = max_t if max_t >= 0 else 0
    has_event_at_end = any(e[0] == max_t for e in minimal)
    if has_event_at_end:
        length = max_t + 1
    return EventTrace(signals=signals, events=minimal, length=length)
