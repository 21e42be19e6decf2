"""Exact representation theory of the double group C3v (with the 2pi rotation).

Characters are Gaussian integers; projections divide by the group order
and are checked to be integral, so no floating point is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .errors import NotARepresentationError


@dataclass(frozen=True)
class GaussInt:
    """a + b*i with integer a, b."""

    re: int
    im: int = 0

    @staticmethod
    def of(v) -> "GaussInt":
        if isinstance(v, GaussInt):
            return v
        if isinstance(v, complex):
            if v.real != int(v.real) or v.imag != int(v.imag):
                raise ValueError(f"{v} is not a Gaussian integer")
            return GaussInt(int(v.real), int(v.imag))
        if isinstance(v, int):
            return GaussInt(v, 0)
        raise TypeError(f"cannot make a Gaussian integer from {v!r}")

    def __add__(self, o):
        o = GaussInt.of(o)
        return GaussInt(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussInt(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-GaussInt.of(o))

    def __mul__(self, o):
        o = GaussInt.of(o)
        return GaussInt(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conj(self) -> "GaussInt":
        return GaussInt(self.re, -self.im)

    def __eq__(self, o):
        try:
            o = GaussInt.of(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return {1: "i", -1: "-i"}.get(self.im, f"{self.im}i")
        sign = "+" if self.im > 0 else "-"
        mag = abs(self.im)
        return f"{self.re}{sign}{'' if mag == 1 else mag}i"


@dataclass(frozen=True)
class GroupClass:
    label: str
    size: int


@dataclass(frozen=True)
class RepCharacters:
    """Class characters of a (possibly reducible) representation."""

    chars: tuple

    def __post_init__(self):
        object.__setattr__(self, "chars", tuple(GaussInt.of(c) for c in self.chars))

    @property
    def dimension(self) -> GaussInt:
        return self.chars[0]

    def conj(self) -> "RepCharacters":
        return RepCharacters(tuple(c.conj() for c in self.chars))

    def __mul__(self, other: "RepCharacters") -> "RepCharacters":
        return RepCharacters(tuple(a * b for a, b in zip(self.chars, other.chars)))


@dataclass(frozen=True)
class Irrep:
    label: str
    characters: RepCharacters

    @property
    def dimension(self) -> int:
        return self.characters.dimension.re

    def __str__(self):
        return self.label


CLASSES = (
    GroupClass("E", 1),
    GroupClass("Ē", 1),
    GroupClass("2C3", 2),
    GroupClass("2C̄3", 2),
    GroupClass("3σv", 3),
    GroupClass("3σ̄v", 3),
)

_I = GaussInt(0, 1)
_ROWS = {
    "A1": (1, 1, 1, 1, 1, 1),
    "A2": (1, 1, 1, 1, -1, -1),
    "E": (2, 2, -1, -1, 0, 0),
    "Γ4": (2, -2, 1, -1, 0, 0),
    "Γ5": (1, -1, -1, 1, _I, -_I),
    "Γ6": (1, -1, -1, 1, -_I, _I),
}

# ASCII spellings accepted on input
ALIASES = {"G4": "Γ4", "G5": "Γ5", "G6": "Γ6", "Gamma4": "Γ4", "Gamma5": "Γ5", "Gamma6": "Γ6"}


@dataclass(frozen=True)
class DoubleGroup:
    classes: tuple
    irreps: tuple

    @property
    def order(self) -> int:
        return sum(c.size for c in self.classes)

    def irrep(self, label: str) -> Irrep:
        label = ALIASES.get(label, label)
        for ir in self.irreps:
            if ir.label == label:
                return ir
        raise KeyError(f"unknown irrep {label!r}")

    def inner(self, a: RepCharacters, b: RepCharacters) -> Fraction:
        """(1/|G|) sum_k size_k a_k conj(b_k); must be real for class functions used here."""
        total = GaussInt(0)
        for cls, x, y in zip(self.classes, a.chars, b.chars):
            total = total + cls.size * x * y.conj()
        if total.im != 0:
            raise NotARepresentationError(f"inner product has imaginary part {total.im}/{self.order}")
        return Fraction(total.re, self.order)


def character_table() -> DoubleGroup:
    irreps = tuple(Irrep(k, RepCharacters(v)) for k, v in _ROWS.items())
    return DoubleGroup(CLASSES, irreps)


TABLE = character_table()


def _as_irrep(x) -> Irrep:
    return x if isinstance(x, Irrep) else TABLE.irrep(x)


def product(a, b, conj_a: bool = True) -> RepCharacters:
    """Class-wise character product of a (conjugated by default) and b."""
    ca = _as_irrep(a).characters if not isinstance(a, RepCharacters) else a
    cb = _as_irrep(b).characters if not isinstance(b, RepCharacters) else b
    return (ca.conj() if conj_a else ca) * cb


def decompose(rep: RepCharacters, group: DoubleGroup = TABLE) -> dict:
    """Irrep multiplicities, in table order, omitting zeros."""
    out = {}
    dim = 0
    for ir in group.irreps:
        m = group.inner(rep, ir.characters)
        if m.denominator != 1 or m < 0:
            raise NotARepresentationError(f"multiplicity of {ir.label} is {m}")
        if m:
            out[ir.label] = int(m)
            dim += int(m) * ir.dimension
    if GaussInt(dim) != rep.dimension:
        raise NotARepresentationError("characters are not a combination of irreps")
    return out


def format_decomposition(mult: dict) -> str:
    parts = []
    for label, m in mult.items():
        parts.append(label if m == 1 else f"{m}{label}")
    return " + ".join(parts) if parts else "0"


# --- field operators and selection rules ------------------------------------------

FIELD_OPERATORS = {"E∥": "A1", "B∥": "A2", "E⊥": "E", "B⊥": "E"}
OPERATOR_ALIASES = {"E_par": "E∥", "B_par": "B∥", "E_perp": "E⊥", "B_perp": "B⊥"}
SPINOR_IRREPS = ("Γ4", "Γ5", "Γ6")


@dataclass(frozen=True)
class FieldOperator:
    kind: str

    def __post_init__(self):
        kind = OPERATOR_ALIASES.get(self.kind, self.kind)
        if kind not in FIELD_OPERATORS:
            raise ValueError(f"unknown field operator {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    @property
    def irrep(self) -> Irrep:
        return TABLE.irrep(FIELD_OPERATORS[self.kind])

    @property
    def is_magnetic(self) -> bool:
        return self.kind.startswith("B")


@dataclass(frozen=True)
class SelectionResult:
    bra: str
    ket: str
    operator: str
    allowed: bool
    decomposition: dict

    def as_dict(self) -> dict:
        return {
            "bra": self.bra,
            "ket": self.ket,
            "operator": self.operator,
            "allowed": self.allowed,
            "decomposition": format_decomposition(self.decomposition),
        }


def selection_rule(bra, ket, op) -> SelectionResult:
    """<bra| op |ket> is allowed iff A1 occurs in bra* x op x ket."""
    b, k = _as_irrep(bra), _as_irrep(ket)
    if b.label not in SPINOR_IRREPS or k.label not in SPINOR_IRREPS:
        raise ValueError("bra and ket must be spinor irreps (Γ4, Γ5, Γ6)")
    op = op if isinstance(op, FieldOperator) else FieldOperator(op)
    rep = product(b, op.irrep) * k.characters
    mult = decompose(rep)
    return SelectionResult(b.label, k.label, op.kind, "A1" in mult, mult)


def selection_matrix(op) -> dict:
    return {(b, k): selection_rule(b, k, op).allowed for b in SPINOR_IRREPS for k in SPINOR_IRREPS}


# --- Kramers doublets --------------------------------------------------------------

DOUBLETS = {"Γ56": ("Γ5", "Γ6"), "Γ4": ("Γ4",)}


@dataclass(frozen=True)
class FieldProfile:
    doublet: str
    symmetry_allowed: dict  # operator -> allowed by A1-counting within the doublet
    kramers_forbidden: dict  # operator -> forbidden by time reversal within a pure Kramers pair
    allowed: dict  # final verdict

    def as_dict(self) -> dict:
        return {
            "doublet": self.doublet,
            "symmetry_allowed": dict(self.symmetry_allowed),
            "kramers_forbidden": dict(self.kramers_forbidden),
            "allowed": dict(self.allowed),
        }


def kd_field_profile(kd) -> FieldProfile:
    """Which field components couple the two states of a Kramers doublet.

    A component is symmetry-allowed if any pair of states in the doublet is
    connected. Time-reversal-even operators (electric fields) cannot split
    the two partners of one Kramers pair; that is reported as a separate
    flag, since it does not follow from counting A1.
    """
    key = {"Γ5,6": "Γ56", "G56": "Γ56", "Γ5": "Γ56", "Γ6": "Γ56", "G4": "Γ4"}.get(kd, kd)
    if isinstance(kd, (tuple, list)):
        key = "Γ56" if set(kd) == {"Γ5", "Γ6"} else "Γ4" if tuple(kd) == ("Γ4",) else None
    if key not in DOUBLETS:
        raise ValueError(f"unknown Kramers doublet {kd!r}")
    states = DOUBLETS[key]
    sym, kram, final = {}, {}, {}
    for kind in FIELD_OPERATORS:
        op = FieldOperator(kind)
        ok = any(selection_rule(a, b, op).allowed for a in states for b in states)
        sym[kind] = ok
        kram[kind] = not op.is_magnetic
        final[kind] = ok and not kram[kind]
    return FieldProfile(key, sym, kram, final)


# --- rendering -----------------------------------------------------------------------


def _table(rows, header):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).rjust(w) for c, w in zip(r, widths))  # noqa: E731
    return "\n".join([line(header)] + [line(r) for r in rows])


def render_character_table(group: DoubleGroup = TABLE) -> str:
    header = [""] + [c.label for c in group.classes]
    rows = [[ir.label] + [str(c) for c in ir.characters.chars] for ir in group.irreps]
    return _table(rows, header)


def product_table() -> dict:
    """Decompositions of a* x b for the spinor irreps."""
    return {
        (a, b): format_decomposition(decompose(product(a, b))) for a in SPINOR_IRREPS for b in SPINOR_IRREPS
    }


def render_product_table() -> str:
    tab = product_table()
    rows = [[f"{a}*"] + [tab[(a, b)] for b in SPINOR_IRREPS] for a in SPINOR_IRREPS]
    return _table(rows, [""] + list(SPINOR_IRREPS))


def render_selection_matrix() -> str:
    blocks = []
    for kind in FIELD_OPERATORS:
        m = selection_matrix(kind)
        rows = [[a] + ["allowed" if m[(a, b)] else "-" for b in SPINOR_IRREPS] for a in SPINOR_IRREPS]
        blocks.append(f"{kind} ({FIELD_OPERATORS[kind]})\n" + _table(rows, [""] + list(SPINOR_IRREPS)))
    return "\n\n".join(blocks)


def rules_json() -> str:
    group = TABLE
    doc = {
        "classes": [{"label": c.label, "size": c.size} for c in group.classes],
        "irreps": {ir.label: [str(c) for c in ir.characters.chars] for ir in group.irreps},
        "products": {f"{a}*x{b}": v for (a, b), v in product_table().items()},
        "selection_rules": [
            selection_rule(a, b, k).as_dict()
            for k in FIELD_OPERATORS
            for a in SPINOR_IRREPS
            for b in SPINOR_IRREPS
        ],
        "doublets": {k: kd_field_profile(k).as_dict() for k in DOUBLETS},
    }
    return json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True)
