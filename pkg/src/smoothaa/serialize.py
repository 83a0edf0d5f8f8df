"""
Plain-text archive format for problem instances.

Layout::

    smoothaa-instance v1 family=<name> key=value ...
    array <name> <rows> <cols>
    <row 0 as space separated %.17g values>
    ...

Every double is written with 17 significant digits, which round-trips
exactly, so a reloaded instance reproduces runs bit for bit.
"""

from __future__ import annotations

import numpy as np

from .problems import BearingInstance, EnrInstance, NnlsInstance, build_bearing

MAGIC = "smoothaa-instance"
VERSION = "v1"


class InstanceFormatError(ValueError):
    pass


def _fmt(x):
    return "%.17g" % x


def _array_lines(name, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lines = [f"array {name} {a.shape[0]} {a.shape[1]}"]
    lines.extend(" ".join(_fmt(x) for x in row) for row in a)
    return lines


def dumps_instance(inst):
    if isinstance(inst, EnrInstance):
        params = dict(family="enr", M=inst.A.shape[0], n=inst.A.shape[1], lam=inst.lam,
                      alpha_step=inst.alpha_step, L=inst.L, beta=inst.beta)
        arrays = [("A", inst.A), ("b", inst.b)]
    elif isinstance(inst, NnlsInstance):
        params = dict(family="nnls", M=inst.A.shape[0], n=inst.A.shape[1], lam=inst.lam,
                      alpha_step=inst.alpha_step, L=inst.L)
        arrays = [("A", inst.A), ("b", inst.b)]
    elif isinstance(inst, BearingInstance):
        params = dict(family="bearing", n=inst.n, eps=inst.eps, dt=inst.dt)
        arrays = [("diag", inst.diag), ("off", inst.off), ("b", inst.b)]
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    head = [MAGIC, VERSION] + [
        f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in params.items()
    ]
    lines = [" ".join(head)]
    for name, a in arrays:
        lines.extend(_array_lines(name, a))
    return "\n".join(lines) + "\n"


def loads_instance(text):
    lines = text.splitlines()
    if not lines:
        raise InstanceFormatError("empty instance file")
    head = lines[0].split()
    if head[:2] != [MAGIC, VERSION]:
        raise InstanceFormatError(f"line 1: expected '{MAGIC} {VERSION}' header")
    params = {}
    for tok in head[2:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise InstanceFormatError(f"line 1: malformed parameter {tok!r}")
        params[key] = val
    arrays = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "array":
            raise InstanceFormatError(f"line {i + 1}: expected 'array <name> <rows> <cols>'")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        block = lines[i + 1 : i + 1 + rows]
        if len(block) != rows:
            raise InstanceFormatError(f"line {i + 1}: array {name} truncated")
        a = np.array([[float(x) for x in row.split()] for row in block]).reshape(rows, cols)
        arrays[name] = a
        i += 1 + rows

    family = params.get("family")
    try:
        if family == "enr":
            return EnrInstance(A=arrays["A"], b=arrays["b"].ravel(), lam=float(params["lam"]),
                               alpha_step=float(params["alpha_step"]), L=float(params["L"]),
                               beta=float(params["beta"]))
        if family == "nnls":
            return NnlsInstance(A=arrays["A"], b=arrays["b"].ravel(), lam=float(params["lam"]),
                                alpha_step=float(params["alpha_step"]), L=float(params["L"]))
        if family == "bearing":
            inst = build_bearing(int(params["n"]), float(params["eps"]))
            diag, off, b = (arrays[k].ravel() for k in ("diag", "off", "b"))
            if not (np.array_equal(diag, inst.diag) and np.array_equal(off, inst.off)
                    and np.array_equal(b, inst.b)):
                raise InstanceFormatError("bearing arrays do not match the regenerated grid")
            return inst
    except KeyError as exc:
        raise InstanceFormatError(f"missing field {exc}") from None
    raise InstanceFormatError(f"unknown family {family!r}")


def save_instance(inst, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_instance(inst))


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        return loads_instance(fh.read())
