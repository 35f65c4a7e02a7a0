"""Built-in mass-lumped tetrahedral elements and the ``.mltet`` table format.

Node generators are written in Cartesian reference coordinates exactly as the
element tables print them; ``(a, 0, 0)`` becomes the barycentric point
``(1 - a, a, 0, 0)``.  Degree-4 parameters are the printed 16-digit decimals.
"""

from __future__ import annotations

import math
from pathlib import Path

from .reference_element import (
    ElementTable,
    ElementTableError,
    FunctionOrbit,
    NodeOrbit,
)

__all__ = ["BUILTIN_IDS", "build_element_table", "read_element_table", "write_element_table"]

BUILTIN_IDS = ("ml1", "ml2n15", "ml3n32", "ml4n60", "ml4n61", "ml4n65")

# barycentric exponent generators, b0 being the extra coordinate
X1 = (0, 1, 0, 0)
X1SQ_X2 = (0, 2, 1, 0)
X1SQ_X2SQ = (0, 2, 2, 0)
BF = (0, 1, 1, 1)  # face bubble x1 x2 x3
BE = (1, 1, 1, 1)  # interior bubble x1 x2 x3 x4
BF_X1 = (0, 2, 1, 1)
BF_X1X2 = (0, 2, 2, 1)
BF_SQ = (0, 2, 2, 2)
BE_X1 = (1, 2, 1, 1)
BE_X1X2 = (1, 2, 2, 1)
BE_BF = (1, 2, 2, 2)
BE_SQ = (2, 2, 2, 2)


def _orbit(x1: float, x2: float, x3: float, weight: float, **params: float) -> NodeOrbit:
    return NodeOrbit((1.0 - x1 - x2 - x3, x1, x2, x3), weight, dict(params))


def _space(*gens) -> tuple[FunctionOrbit, ...]:
    return tuple(FunctionOrbit(g) for g in gens)


def _ml1() -> ElementTable:
    return ElementTable("ml1", 1, (_orbit(0, 0, 0, 1 / 24),), _space(X1))


def _ml2n15() -> ElementTable:
    nodes = (
        _orbit(0, 0, 0, 17 / 5040),
        _orbit(1 / 2, 1 / 2, 0, 2 / 315),
        _orbit(1 / 3, 1 / 3, 0, 9 / 560),
        _orbit(1 / 4, 1 / 4, 1 / 4, 16 / 315),
    )
    return ElementTable("ml2n15", 2, nodes, _space(X1, (0, 1, 1, 0), BF, BE))


def ml3n32_parameters() -> dict[str, float]:
    """Closed-form positions and weights of the 32-node cubic element."""
    r2 = math.sqrt(2.0)
    return {
        "a": (3.0 - math.sqrt(3.0 * (r2 - 1.0))) / 6.0,
        "b": (4.0 - r2) / 12.0,
        "c": 1.0 / 6.0,
        "w_vertex": (41.0 - 9.0 * r2) / 41160.0,
        "w_edge": (8.0 + 9.0 * r2) / 13720.0,
        "w_face": (10.0 - r2) / 1715.0,
        "w_interior": 3.0 / 140.0,
    }


def _ml3n32() -> ElementTable:
    q = ml3n32_parameters()
    a, b, c = q["a"], q["b"], q["c"]
    nodes = (
        _orbit(0, 0, 0, q["w_vertex"]),
        _orbit(a, 0, 0, q["w_edge"], a=a),
        _orbit(b, b, 0, q["w_face"], b=b),
        _orbit(c, c, c, q["w_interior"], c=c),
    )
    return ElementTable("ml3n32", 3, nodes, _space(X1, X1SQ_X2, BF_X1, BE_X1))


def _degree4(id_, rows, space) -> ElementTable:
    return ElementTable(id_, 4, tuple(rows), _space(*space))


def _ml4n65() -> ElementTable:
    a, b1, b2 = 0.1724919407749086, 0.1474177969013686, 0.4540395272271067
    c1, d, c2 = 0.1282209316290979, 0.08742182088664353, 0.3124061452070811
    rows = [
        _orbit(0, 0, 0, 0.0001216042545112321),
        _orbit(a, 0, 0, 0.0004704124198744411, a=a),
        _orbit(0.5, 0, 0, 0.0001767065925083475),
        _orbit(b1, b1, 0, 0.001974748586596177, b1=b1),
        _orbit(b2, b2, 0, 0.001192465311769701, b2=b2),
        _orbit(1 / 3, 1 / 3, 0, 0.001044697597634123),
        _orbit(c1, c1, c1, 0.008841425190569096, c1=c1),
        _orbit(d, d, 0.5 - d, 0.006891012924401557, d=d),
        _orbit(c2, c2, c2, 0.007499563520517103, c2=c2),
        _orbit(1 / 4, 1 / 4, 1 / 4, 0.01057967149339721),
    ]
    space = (X1, X1SQ_X2, X1SQ_X2SQ, BF_X1, BF_X1X2, BF_SQ, BE_X1, BE_X1X2, BE_BF, BE_SQ)
    return _degree4("ml4n65", rows, space)


def _ml4n60() -> ElementTable:
    a, b1, b2 = 0.1614865833496676, 0.1490219288469598, 0.3944591972171783
    c1, d, c2 = 0.1302058846372564, 0.06386116838612691, 0.3012179234079087
    rows = [
        _orbit(0, 0, 0, 0.00009319146955767176),
        _orbit(a, 0, 0, 0.0004829332376473431, a=a),
        _orbit(0.5, 0, 0, 0.0002005503792135920),
        _orbit(b1, b1, 0, 0.002003104085841525, b1=b1),
        _orbit(b2, b2, 0, 0.001126849366800016, b2=b2),
        _orbit(c1, c1, c1, 0.009159244489996298, c1=c1),
        _orbit(d, d, 0.5 - d, 0.006725322654059780, d=d),
        _orbit(c2, c2, c2, 0.01118676108633598, c2=c2),
    ]
    space = (X1, X1SQ_X2, X1SQ_X2SQ, BF_X1, BF_X1X2, BE_X1, BE_X1X2, BE_BF)
    return _degree4("ml4n60", rows, space)


def _ml4n61() -> ElementTable:
    a, b1, b2 = 0.2001628104707848, 0.1397350972238366, 0.4319436235177682
    c1, d, c2 = 0.1282209316290979, 0.08742182088664353, 0.3124061452070811
    rows = [
        _orbit(0, 0, 0, 0.0001593069370906064),
        _orbit(a, 0, 0, 0.0004461325181676239, a=a),
        _orbit(0.5, 0, 0, 0.0003715829945705960),
        _orbit(b1, b1, 0, 0.001884294964657102, b1=b1),
        _orbit(b2, b2, 0, 0.001545425606069384, b2=b2),
        _orbit(c1, c1, c1, 0.008841425190569096, c1=c1),
        _orbit(d, d, 0.5 - d, 0.006891012924401557, d=d),
        _orbit(c2, c2, c2, 0.007499563520517103, c2=c2),
        _orbit(1 / 4, 1 / 4, 1 / 4, 0.01057967149339721),
    ]
    space = (X1, X1SQ_X2, X1SQ_X2SQ, BF_X1, BF_X1X2, BE_X1, BE_X1X2, BE_BF, BE_SQ)
    return _degree4("ml4n61", rows, space)


_BUILDERS = {
    "ml1": _ml1,
    "ml2n15": _ml2n15,
    "ml3n32": _ml3n32,
    "ml4n60": _ml4n60,
    "ml4n61": _ml4n61,
    "ml4n65": _ml4n65,
}


def build_element_table(id_or_path: str | Path) -> ElementTable:
    """Return a built-in table by id, or parse a ``.mltet`` file."""
    key = str(id_or_path)
    if key in _BUILDERS:
        return _BUILDERS[key]()
    path = Path(key)
    if path.suffix == ".mltet" or path.exists():
        return read_element_table(path)
    raise KeyError(f"unknown element {key!r}; built-ins are {', '.join(BUILTIN_IDS)}")


def read_element_table(path: str | Path) -> ElementTable:
    """Parse a table file and check its invariants.

    Format::

        mltet 1
        degree p
        orbit  w  b1 b2 b3 b4      (one line per node orbit)
        space  e1 e2 e3 e4         (one line per function-orbit generator)
    """
    path = Path(path)
    lines = [ln.split("#", 1)[0].split() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != ["mltet", "1"]:
        raise ElementTableError(f"{path}: missing 'mltet 1' header")
    if len(lines) < 2 or lines[1][0] != "degree" or len(lines[1]) != 2:
        raise ElementTableError(f"{path}: second line must be 'degree p'")
    degree = int(lines[1][1])
    orbits, space = [], []
    for lineno, tok in enumerate(lines[2:], start=3):
        try:
            if tok[0] == "orbit" and len(tok) == 6:
                orbits.append(NodeOrbit(tuple(float(v) for v in tok[2:]), float(tok[1])))
            elif tok[0] == "space" and len(tok) == 5:
                space.append(FunctionOrbit(tuple(int(v) for v in tok[1:])))
            else:
                raise ElementTableError(f"unrecognised record {' '.join(tok)!r}")
        except ValueError as exc:
            raise ElementTableError(f"{path}:{lineno}: {exc}") from exc
    table = ElementTable(path.stem, degree, tuple(orbits), tuple(space))
    try:
        for o in table.node_orbits:
            o.points
    except ValueError as exc:
        raise ElementTableError(f"{path}: {exc}") from exc
    table.validate()
    return table


def write_element_table(table: ElementTable, path: str | Path) -> None:
    rows = ["mltet 1", f"degree {table.degree}"]
    for o in table.node_orbits:
        coords = " ".join(f"{v:.17g}" for v in o.generator)
        rows.append(f"orbit {o.weight:.17g} {coords}")
    for f in table.space_orbits:
        rows.append("space " + " ".join(str(e) for e in f.exponents))
    Path(path).write_text("\n".join(rows) + "\n")
