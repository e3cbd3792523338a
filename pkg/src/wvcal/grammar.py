"""Composite latent-process models and their textual form.

A model is a sum of independent elementary processes written as, e.g.::

    3*GM() + WN() + QN() + RW()
    AR1(phi=0.9, sigma2=0.1) + WN(sigma2=1)
    ARMA(2,1) + DR(omega=0.01!)

Named arguments give starting values; a trailing ``!`` pins the value so the
optimizer leaves it alone.  ``k*`` repeats a block and is only legal for
``GM`` and ``AR1``; every other process may appear once.

Gauss-Markov blocks are stored as AR1 blocks tagged ``gm=True``.  Their
``values`` stay in the (beta, sigma2_gm) parametrization the user wrote,
while :attr:`LatentModel.theta` always exposes the AR1 form used by the
numerical code.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SINGLETONS",
    "LatentModel",
    "ModelError",
    "ModelSyntaxError",
    "ProcessBlock",
    "ar1_to_gm",
    "gm_to_ar1",
    "parse_model",
    "render_model",
]

INF = math.inf

POSITIVE = (0.0, INF)
UNIT = (-1.0, 1.0)
REAL = (-INF, INF)

# name, bounds; user parametrization
_FIXED_LAYOUT: dict[str, tuple[tuple[str, tuple[float, float]], ...]] = {
    "GM": (("beta", POSITIVE), ("sigma2_gm", POSITIVE)),
    "AR1": (("phi", UNIT), ("sigma2", POSITIVE)),
    "WN": (("sigma2", POSITIVE),),
    "QN": (("q2", POSITIVE),),
    "RW": (("gamma2", POSITIVE),),
    "DR": (("omega", REAL),),
}
_ALIASES = {"WN": {"nu2": "sigma2"}}

SINGLETONS = frozenset({"WN", "QN", "RW", "DR", "AR", "MA", "ARMA"})
_ORDERED = frozenset({"AR", "MA", "ARMA"})
_KNOWN = frozenset(_FIXED_LAYOUT) | _ORDERED
# one block per kind, see SINGLETONS; AR/MA/ARMA share the "ARMA" family
_FAMILY = {"AR": "ARMA", "MA": "ARMA", "ARMA": "ARMA"}


class ModelError(ValueError):
    """Raised for a structurally valid model string that violates a rule."""


class ModelSyntaxError(ModelError):
    """Raised when a model string cannot be tokenized or parsed."""

    def __init__(self, message: str, text: str, pos: int):
        self.text = text
        self.pos = pos
        caret = " " * pos + "^"
        super().__init__(f"{message} at position {pos}\n  {text}\n  {caret}")


def gm_to_ar1(beta: float, sigma2_gm: float, freq: float = 1.0) -> tuple[float, float]:
    """Map Gauss-Markov parameters to the equivalent AR1 at sampling ``freq``.

    ``phi = exp(-beta * dt)`` and ``sigma2 = sigma2_gm * (1 - exp(-2 * beta * dt))``
    with ``dt = 1 / freq``.
    """
    for v in (beta, sigma2_gm, freq):
        if not math.isfinite(v):
            raise ValueError("gm_to_ar1 needs finite inputs")
    if beta <= 0 or sigma2_gm <= 0 or freq <= 0:
        raise ValueError("beta, sigma2_gm and freq must be positive")
    dt = 1.0 / freq
    phi = math.exp(-beta * dt)
    sigma2 = sigma2_gm * -math.expm1(-2.0 * beta * dt)
    return phi, sigma2


def ar1_to_gm(phi: float, sigma2: float, freq: float = 1.0) -> tuple[float, float]:
    """Inverse of :func:`gm_to_ar1`; only defined for ``0 < phi < 1``."""
    if not (math.isfinite(phi) and math.isfinite(sigma2) and math.isfinite(freq)):
        raise ValueError("ar1_to_gm needs finite inputs")
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi={phi!r} has no Gauss-Markov equivalent (need 0 < phi < 1)")
    if sigma2 <= 0 or freq <= 0:
        raise ValueError("sigma2 and freq must be positive")
    beta = -freq * math.log(phi)
    sigma2_gm = sigma2 / -math.expm1(-2.0 * beta / freq)
    return beta, sigma2_gm


@dataclass(frozen=True)
class ProcessBlock:
    """One elementary process inside a :class:`LatentModel`.

    ``kind`` is the canonical kind (``GM`` is stored as ``AR1`` with
    ``gm=True``).  ``values`` holds one optional starting value per
    parameter, in the user's parametrization; ``fixed`` flags pinned ones.
    """

    kind: str
    order: tuple[int, int] | None = None
    gm: bool = False
    values: tuple[float | None, ...] = ()
    fixed: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.kind not in _KNOWN or self.kind == "GM":
            raise ModelError(f"unknown process kind {self.kind!r}")
        if self.gm and self.kind != "AR1":
            raise ModelError("only AR1 blocks can carry the GM tag")
        if self.kind in _ORDERED:
            if self.order is None or len(self.order) != 2:
                raise ModelError(f"{self.kind} needs an order")
            p, q = self.order
            if p < 0 or q < 0 or p + q == 0:
                raise ModelError(f"{self.kind} order must be nonnegative with p + q >= 1")
            if self.kind == "AR" and q != 0 or self.kind == "MA" and p != 0:
                raise ModelError(f"inconsistent order {self.order} for {self.kind}")
        elif self.order is not None:
            raise ModelError(f"{self.label} takes no order")
        n = len(self.layout)
        if not self.values:
            object.__setattr__(self, "values", (None,) * n)
        if not self.fixed:
            object.__setattr__(self, "fixed", (False,) * n)
        if len(self.values) != n or len(self.fixed) != n:
            raise ModelError(f"{self.label} expects {n} parameters")
        for (name, (lo, hi)), v, fx in zip(self.layout, self.values, self.fixed):
            if v is None:
                if fx:
                    raise ModelError(f"{self.label}: cannot pin {name} without a value")
                continue
            if not math.isfinite(v):
                raise ModelError(f"{self.label}: {name} must be finite")
            if not lo < v < hi:
                raise ModelError(f"{self.label}: {name}={v!r} outside ({lo}, {hi})")
        if self.kind in _ORDERED and self.order is not None:
            p, q = self.order
            ar = self.values[:p]
            ma = self.values[p : p + q]
            if all(v is not None for v in ar) and p and not _is_stationary(ar):
                raise ModelError(f"{self.label}: AR coefficients are not stationary")
            if all(v is not None for v in ma) and q and not _is_stationary([-v for v in ma]):
                raise ModelError(f"{self.label}: MA coefficients are not invertible")

    @property
    def label(self) -> str:
        return "GM" if self.gm else self.kind

    @property
    def layout(self) -> tuple[tuple[str, tuple[float, float]], ...]:
        if self.kind in _ORDERED:
            p, q = self.order  # type: ignore[misc]
            coefs = tuple((f"ar{i + 1}", REAL) for i in range(p))
            coefs += tuple((f"ma{i + 1}", REAL) for i in range(q))
            return coefs + (("sigma2", POSITIVE),)
        return _FIXED_LAYOUT[self.label]

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.layout)

    @property
    def n_params(self) -> int:
        return len(self.layout)

    @property
    def complete(self) -> bool:
        return all(v is not None for v in self.values)

    def canonical(self, freq: float) -> tuple[float, ...]:
        """Values in the numerical (AR1) parametrization."""
        if not self.complete:
            raise ModelError(f"{self.label} has unset parameters")
        vals = tuple(float(v) for v in self.values)  # type: ignore[arg-type]
        if self.gm:
            return gm_to_ar1(vals[0], vals[1], freq)
        return vals

    def with_canonical(self, values: Sequence[float], freq: float) -> ProcessBlock:
        vals = tuple(float(v) for v in values)
        if self.gm:
            vals = ar1_to_gm(vals[0], vals[1], freq)
        # pinned entries keep their exact user value
        vals = tuple(old if fx else new for old, new, fx in zip(self.values, vals, self.fixed))
        return replace(self, values=vals)


def _is_stationary(coefs: Sequence[float]) -> bool:
    """True when 1 - a1 z - ... - ap z^p has all roots outside the unit circle."""
    coefs = [float(c) for c in coefs]
    if not coefs:
        return True
    poly = np.r_[1.0, -np.asarray(coefs)][::-1]
    roots = np.roots(poly)
    return bool(np.all(np.abs(roots) > 1.0 + 1e-12))


@dataclass(frozen=True)
class LatentModel:
    """Sum of independent :class:`ProcessBlock` objects sampled at ``freq`` Hz."""

    blocks: tuple[ProcessBlock, ...]
    freq: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ModelError("a model needs at least one process")
        if not (math.isfinite(self.freq) and self.freq > 0):
            raise ModelError("freq must be positive")
        seen: set[str] = set()
        for b in self.blocks:
            fam = _FAMILY.get(b.kind, b.kind)
            if b.kind in SINGLETONS:
                if fam in seen:
                    raise ModelError(f"{b.label}() can only be included once")
                seen.add(fam)

    # -- layout -------------------------------------------------------------
    @property
    def n_params(self) -> int:
        return sum(b.n_params for b in self.blocks)

    @property
    def free_mask(self) -> np.ndarray:
        return np.array([not f for b in self.blocks for f in b.fixed], dtype=bool)

    @property
    def n_free(self) -> int:
        return int(self.free_mask.sum())

    @property
    def slices(self) -> list[slice]:
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.n_params))
            start += b.n_params
        return out

    @property
    def param_labels(self) -> list[str]:
        """Unique display names: ``beta_2`` for repeated processes, ``WN.sigma2`` on clashes."""
        counts: dict[str, int] = {}
        for b in self.blocks:
            counts[b.label] = counts.get(b.label, 0) + 1
        seen: dict[str, int] = {}
        raw = []
        for b in self.blocks:
            seen[b.label] = seen.get(b.label, 0) + 1
            for name in b.param_names:
                tag = f"{name}_{seen[b.label]}" if counts[b.label] > 1 else name
                raw.append((b.label, tag))
        tally: dict[str, int] = {}
        for _, tag in raw:
            tally[tag] = tally.get(tag, 0) + 1
        return [f"{label}.{tag}" if tally[tag] > 1 else tag for label, tag in raw]

    @property
    def complete(self) -> bool:
        return all(b.complete for b in self.blocks)

    @property
    def theta(self) -> np.ndarray | None:
        """Canonical parameter vector, or ``None`` while any value is unset."""
        if not self.complete:
            return None
        return np.array([v for b in self.blocks for v in b.canonical(self.freq)], dtype=float)

    @property
    def values(self) -> list[float | None]:
        """Values in the user's parametrization (GM blocks as beta, sigma2_gm)."""
        return [v for b in self.blocks for v in b.values]

    def with_theta(self, theta: Sequence[float]) -> LatentModel:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have length {self.n_params}")
        blocks = tuple(b.with_canonical(theta[s], self.freq) for b, s in zip(self.blocks, self.slices))
        return replace(self, blocks=blocks)

    def with_values(self, values: Sequence[float]) -> LatentModel:
        """Set every parameter in the user's parametrization; pinned entries are kept."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_params,):
            raise ValueError(f"values must have length {self.n_params}")
        blocks = []
        for b, s in zip(self.blocks, self.slices):
            vals = tuple(old if fx else float(new) for old, new, fx in zip(b.values, values[s], b.fixed))
            blocks.append(replace(b, values=vals))
        return replace(self, blocks=tuple(blocks))

    @property
    def bounds(self) -> list[tuple[float, float]]:
        """Bounds of each parameter in the user's parametrization."""
        return [bd for b in self.blocks for _, bd in b.layout]

    def cleared(self) -> LatentModel:
        """Copy with every non-pinned value unset."""
        blocks = tuple(
            replace(b, values=tuple(v if f else None for v, f in zip(b.values, b.fixed)))
            for b in self.blocks
        )
        return replace(self, blocks=blocks)

    def render(self) -> str:
        return render_model(self)

    def __str__(self) -> str:
        return self.render()


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*(),=!])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))  # type: ignore[arg-type]
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def error(self, message: str, tok=None):
        pos = tok[2] if tok else len(self.text)
        raise ModelSyntaxError(message, self.text, pos)

    def expect(self, value: str):
        tok = self.peek()
        if tok is None or tok[1] != value:
            self.error(f"expected {value!r}", tok)
        self.i += 1
        return tok

    def parse(self) -> list[ProcessBlock]:
        blocks = self.term()
        while self.peek() is not None:
            self.expect("+")
            blocks += self.term()
        return blocks

    def term(self) -> list[ProcessBlock]:
        tok = self.peek()
        count = 1
        if tok is not None and tok[0] == "num":
            if not re.fullmatch(r"\d+", tok[1]):
                self.error("multiplier must be a positive integer", tok)
            count = int(tok[1])
            if count < 1:
                self.error("multiplier must be a positive integer", tok)
            self.i += 1
            self.expect("*")
            tok = self.peek()
        if tok is None or tok[0] != "name":
            self.error("expected a process name", tok)
        name = tok[1]
        if name not in _KNOWN:
            raise ModelSyntaxError(f"unknown process {name!r}", self.text, tok[2])
        self.i += 1
        if count != 1 and name not in ("GM", "AR1"):
            raise ModelSyntaxError(
                f"{name}() can only be included once; multipliers apply to GM and AR1", self.text, tok[2]
            )
        block = self.args(name, tok)
        return [block] * count

    def args(self, name: str, name_tok) -> ProcessBlock:
        self.expect("(")
        positional: list[int] = []
        named: dict[str, tuple[float, bool]] = {}
        if self.peek() is not None and self.peek()[1] == ")":  # type: ignore[index]
            self.i += 1
        else:
            while True:
                tok = self.peek()
                if tok is None:
                    self.error("unterminated argument list")
                if tok[0] == "num":
                    if named:
                        self.error("positional argument after named argument", tok)
                    if not re.fullmatch(r"\d+", tok[1]):
                        self.error("process orders must be integers", tok)
                    positional.append(int(tok[1]))
                    self.i += 1
                elif tok[0] == "name":
                    key = tok[1]
                    self.i += 1
                    self.expect("=")
                    sign = 1.0
                    vtok = self.peek()
                    if vtok is not None and vtok[1] in "+-":
                        sign = -1.0 if vtok[1] == "-" else 1.0
                        self.i += 1
                        vtok = self.peek()
                    if vtok is None or vtok[0] != "num":
                        self.error("expected a number", vtok)
                    self.i += 1
                    pinned = False
                    if self.peek() is not None and self.peek()[1] == "!":  # type: ignore[index]
                        pinned = True
                        self.i += 1
                    if key in named:
                        self.error(f"duplicate argument {key!r}", tok)
                    named[key] = (sign * float(vtok[1]), pinned)
                else:
                    self.error("expected an argument", tok)
                tok = self.peek()
                if tok is not None and tok[1] == ",":
                    self.i += 1
                    continue
                self.expect(")")
                break
        return _make_block(name, positional, named, self.text, name_tok[2])


def _make_block(name, positional, named, text, pos) -> ProcessBlock:
    order = None
    if name in _ORDERED:
        need = 2 if name == "ARMA" else 1
        if len(positional) != need:
            raise ModelSyntaxError(f"{name} needs {need} integer order(s)", text, pos)
        if name == "AR":
            order = (positional[0], 0)
        elif name == "MA":
            order = (0, positional[0])
        else:
            order = (positional[0], positional[1])
    elif positional:
        raise ModelSyntaxError(f"{name} takes no positional arguments", text, pos)
    kind = "AR1" if name == "GM" else name
    proto = ProcessBlock(kind=kind, order=order, gm=name == "GM")
    names = list(proto.param_names)
    values: list[float | None] = [None] * len(names)
    fixed = [False] * len(names)
    aliases = _ALIASES.get(name, {})
    for key, (val, pinned) in named.items():
        key = aliases.get(key, key)
        if key not in names:
            raise ModelSyntaxError(f"{name} has no parameter {key!r}", text, pos)
        if name in _ORDERED and key != "sigma2":
            raise ModelSyntaxError(f"{name} coefficients cannot be given inline", text, pos)
        idx = names.index(key)
        values[idx] = val
        fixed[idx] = pinned
    return replace(proto, values=tuple(values), fixed=tuple(fixed))


def parse_model(text: str, freq: float = 1.0) -> LatentModel:
    """Parse a model string such as ``"3*GM()+WN()+QN()+RW()"``.

    Raises
    ------
    ModelSyntaxError
        Malformed text, unknown process, or a multiplier on a singleton.
    ModelError
        Duplicated singleton process or a value outside its bounds.
    """
    if not text or not text.strip():
        raise ModelSyntaxError("empty model", text or "", 0)
    if not (isinstance(freq, (int, float)) and math.isfinite(freq) and freq > 0):
        raise ModelError("freq must be positive")
    blocks = _Parser(text).parse()
    return LatentModel(blocks=tuple(blocks), freq=float(freq))


def _render_block(b: ProcessBlock) -> str:
    args: list[str] = []
    if b.kind == "AR":
        args.append(str(b.order[0]))  # type: ignore[index]
    elif b.kind == "MA":
        args.append(str(b.order[1]))  # type: ignore[index]
    elif b.kind == "ARMA":
        args.extend(str(o) for o in b.order)  # type: ignore[union-attr]
    for name, v, fx in zip(b.param_names, b.values, b.fixed):
        if v is not None:
            args.append(f"{name}={float(v)!r}{'!' if fx else ''}")
    return f"{b.label}({','.join(args)})"


def render_model(model: LatentModel) -> str:
    """Canonical text for ``model``; runs of identical blocks use ``k*``."""
    parts: list[str] = []
    blocks = list(model.blocks)
    i = 0
    while i < len(blocks):
        j = i
        while j + 1 < len(blocks) and blocks[j + 1] == blocks[i] and blocks[i].kind == "AR1":
            j += 1
        text = _render_block(blocks[i])
        n = j - i + 1
        parts.append(f"{n}*{text}" if n > 1 else text)
        i = j + 1
    return "+".join(parts)


def model_from_blocks(blocks: Iterable[ProcessBlock], freq: float = 1.0) -> LatentModel:
    return LatentModel(blocks=tuple(blocks), freq=freq)
