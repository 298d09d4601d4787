"""Symbolic terms, the equational theory, pattern matching and dictionaries.

Every value the simulator handles (messages, process states, recipes) is a
``Term``. Terms are immutable and hashable. ``normalize`` computes the unique
normal form under the six rewrite rules for the crypto symbols and
projections; ``to_text`` / ``parse`` give the canonical textual form used by
trace files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence


class Term:
    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Str(Term):
    value: str

    def __repr__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Num(Term):
    value: int

    def __repr__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Addr(Term):
    name: str

    def __repr__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Special(Term):
    symbol: str

    def __repr__(self) -> str:
        return self.symbol


@dataclass(frozen=True, slots=True)
class Nonce(Term):
    id: int

    def __repr__(self) -> str:
        return f"n{self.id}"


# kinds: "ν" process placeholder, "λ" script placeholder, "*" wildcard,
# "x" recipe variable standing for the i-th fact of a knowledge set
@dataclass(frozen=True, slots=True)
class Var(Term):
    kind: str
    index: int = 0

    def __repr__(self) -> str:
        return to_text(self)


class Seq(Term):
    __slots__ = ("items", "_hash")

    def __init__(self, items: Iterable[Term] = ()):
        object.__setattr__(self, "items", tuple(items))
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("Seq is immutable")

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if type(other) is not Seq:
            return False
        if self.__hash__() != other.__hash__():
            return False
        return self.items == other.items

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash(("seq", self.items))
            object.__setattr__(self, "_hash", h)
        return h

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __repr__(self) -> str:
        return to_text(self)

    def __reduce__(self):
        return (Seq, (self.items,))


ARITY = {
    "pub": 1,
    "enc_a": 2,
    "dec_a": 2,
    "enc_s": 2,
    "dec_s": 2,
    "sig": 2,
    "checksig": 3,
    "extractmsg": 1,
    "proj": 1,
}


class Fn(Term):
    __slots__ = ("symbol", "args", "index", "_hash")

    def __init__(self, symbol: str, args: Sequence[Term], index: int = 0):
        args = tuple(args)
        if symbol not in ARITY:
            raise ValueError(f"unknown function symbol {symbol}")
        if len(args) != ARITY[symbol]:
            raise ValueError(f"{symbol} expects {ARITY[symbol]} arguments, got {len(args)}")
        if symbol == "proj" and index < 0:
            raise ValueError("projection index must be non-negative")
        object.__setattr__(self, "symbol", symbol)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "index", index if symbol == "proj" else 0)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("Fn is immutable")

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if type(other) is not Fn:
            return False
        if self.__hash__() != other.__hash__():
            return False
        return self.symbol == other.symbol and self.index == other.index and self.args == other.args

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash(("fn", self.symbol, self.index, self.args))
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self) -> str:
        return to_text(self)

    def __reduce__(self):
        return (Fn, (self.symbol, self.args, self.index))


TOP = Special("⊤")
BOT = Special("⊥")
DIAMOND = Special("◇")
EMPTY = Seq(())
WILDCARD = Var("*")

CONSTANT_TYPES = (Str, Num, Addr, Special)


def s(value: str) -> Str:
    return Str(value)


def seq(*items: Term) -> Seq:
    return Seq(items)


def pub(k: Term) -> Fn:
    return Fn("pub", (k,))


def enc_a(m: Term, k: Term) -> Fn:
    return Fn("enc_a", (m, k))


def dec_a(m: Term, k: Term) -> Fn:
    return Fn("dec_a", (m, k))


def enc_s(m: Term, k: Term) -> Fn:
    return Fn("enc_s", (m, k))


def dec_s(m: Term, k: Term) -> Fn:
    return Fn("dec_s", (m, k))


def sig(m: Term, k: Term) -> Fn:
    return Fn("sig", (m, k))


def checksig(m: Term, x: Term, k: Term) -> Fn:
    return Fn("checksig", (m, x, k))


def extractmsg(m: Term) -> Fn:
    return Fn("extractmsg", (m,))


def proj(i: int, t: Term) -> Fn:
    return Fn("proj", (t,), i)


def boolean(flag: bool) -> Special:
    return TOP if flag else BOT


def is_constant(t: Term) -> bool:
    return isinstance(t, CONSTANT_TYPES)


# ---------------------------------------------------------------------------
# equational theory


def _rewrite(t: Fn) -> Term:
    """One root rewrite on a term whose arguments are already normal."""
    sym = t.symbol
    a = t.args
    if sym == "dec_a":
        m, k = a
        if type(m) is Fn and m.symbol == "enc_a":
            key = m.args[1]
            if type(key) is Fn and key.symbol == "pub" and key.args[0] == k:
                return m.args[0]
    elif sym == "dec_s":
        m, k = a
        if type(m) is Fn and m.symbol == "enc_s" and m.args[1] == k:
            return m.args[0]
    elif sym == "checksig":
        sg, x, k = a
        if (
            type(sg) is Fn
            and sg.symbol == "sig"
            and sg.args[0] == x
            and type(k) is Fn
            and k.symbol == "pub"
            and k.args[0] == sg.args[1]
        ):
            return TOP
    elif sym == "extractmsg":
        m = a[0]
        if type(m) is Fn and m.symbol == "sig":
            return m.args[0]
    elif sym == "proj":
        m = a[0]
        if type(m) is Seq:
            i = t.index
            if 1 <= i <= len(m.items):
                return m.items[i - 1]
            return DIAMOND
    return t


def normalize(t: Term) -> Term:
    """Innermost rewriting to the unique normal form."""
    tt = type(t)
    if tt is Seq:
        items = t.items
        new = [normalize(x) for x in items]
        if all(x is y for x, y in zip(new, items)):
            return t
        return Seq(new)
    if tt is Fn:
        args = t.args
        new = tuple(normalize(x) for x in args)
        if not all(x is y for x, y in zip(new, args)):
            t = Fn(t.symbol, new, t.index)
        return _rewrite(t)
    return t


def equiv(t1: Term, t2: Term) -> bool:
    return normalize(t1) == normalize(t2)


def is_ground(t: Term) -> bool:
    return not any(isinstance(x, Var) for x in subterms(t))


def subterms(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        x = stack.pop()
        yield x
        if type(x) is Seq:
            stack.extend(x.items)
        elif type(x) is Fn:
            stack.extend(x.args)


def nonces_of(t: Term) -> set:
    return {x for x in subterms(t) if type(x) is Nonce}


def substitute(t: Term, mapping: dict) -> Term:
    """Replace variables (or any leaf) according to ``mapping``."""
    if not mapping:
        return t
    return _subst(t, mapping)


def _subst(t: Term, mapping: dict) -> Term:
    tt = type(t)
    if tt is Seq:
        new = [_subst(x, mapping) for x in t.items]
        if all(x is y for x, y in zip(new, t.items)):
            return t
        return Seq(new)
    if tt is Fn:
        new = [_subst(x, mapping) for x in t.args]
        if all(x is y for x, y in zip(new, t.args)):
            return t
        return Fn(t.symbol, new, t.index)
    return mapping.get(t, t)


def depth(t: Term) -> int:
    if type(t) is Seq:
        return 1 + max((depth(x) for x in t.items), default=0)
    if type(t) is Fn:
        return 1 + max(depth(x) for x in t.args)
    return 0


# ---------------------------------------------------------------------------
# pattern matching


def matches(t: Term, pattern: Term) -> bool:
    """True iff some instantiation of the wildcards in pattern equals t."""
    return _match(normalize(t), pattern)


def _match(t: Term, p: Term) -> bool:
    if type(p) is Var and p.kind == "*":
        return True
    if type(p) is Seq:
        return type(t) is Seq and len(t.items) == len(p.items) and all(
            _match(a, b) for a, b in zip(t.items, p.items)
        )
    if type(p) is Fn:
        if type(t) is not Fn or t.symbol != p.symbol or t.index != p.index:
            return False
        return all(_match(a, b) for a, b in zip(t.args, p.args))
    return t == p


def filter_matching(t: Term, pattern: Term) -> Seq:
    if type(t) is not Seq:
        raise TypeError("filter_matching expects a sequence")
    return Seq(x for x in t.items if matches(x, pattern))


# ---------------------------------------------------------------------------
# pointers and sequence helpers


def apply_pointer(t: Term, pointer: Sequence[int]) -> Term:
    for i in pointer:
        if type(t) is Seq and 1 <= i <= len(t.items):
            t = t.items[i - 1]
        else:
            return DIAMOND
    return t


def replace_at(t: Term, pointer: Sequence[int], value: Term) -> Term:
    """Return t with the subterm at pointer replaced (pointer must be valid)."""
    if not pointer:
        return value
    i = pointer[0]
    if type(t) is not Seq or not 1 <= i <= len(t.items):
        raise IndexError(f"invalid pointer step {i}")
    items = list(t.items)
    items[i - 1] = replace_at(items[i - 1], pointer[1:], value)
    return Seq(items)


def append(t: Term, item: Term) -> Seq:
    if type(t) is not Seq:
        raise TypeError("append expects a sequence")
    return Seq(t.items + (item,))


def remove_item(t: Term, item: Term) -> Seq:
    """Remove the first occurrence of item from sequence t."""
    if type(t) is not Seq:
        raise TypeError("remove_item expects a sequence")
    items = list(t.items)
    if item in items:
        items.remove(item)
    return Seq(items)


def contains(t: Term, item: Term) -> bool:
    return type(t) is Seq and item in t.items


def items_of(t: Term) -> tuple:
    return t.items if type(t) is Seq else ()


# ---------------------------------------------------------------------------
# dictionaries: sequences of pairs with unique keys


def dict_get(d: Term, key: Term) -> Term:
    if type(d) is Seq:
        for entry in d.items:
            if type(entry) is Seq and len(entry.items) == 2 and entry.items[0] == key:
                return entry.items[1]
    return EMPTY


def dict_has(d: Term, key: Term) -> bool:
    if type(d) is Seq:
        for entry in d.items:
            if type(entry) is Seq and len(entry.items) == 2 and entry.items[0] == key:
                return True
    return False


def dict_put(d: Term, key: Term, value: Term) -> Seq:
    items = list(d.items) if type(d) is Seq else []
    for i, entry in enumerate(items):
        if type(entry) is Seq and len(entry.items) == 2 and entry.items[0] == key:
            items[i] = Seq((key, value))
            return Seq(items)
    items.append(Seq((key, value)))
    return Seq(items)


def dict_remove(d: Term, key: Term) -> Seq:
    items = d.items if type(d) is Seq else ()
    return Seq(
        e for e in items if not (type(e) is Seq and len(e.items) == 2 and e.items[0] == key)
    )


def dict_keys(d: Term) -> list:
    return [e.items[0] for e in items_of(d) if type(e) is Seq and len(e.items) == 2]


def dict_items(d: Term) -> list:
    return [(e.items[0], e.items[1]) for e in items_of(d) if type(e) is Seq and len(e.items) == 2]


def make_dict(pairs: Iterable[tuple]) -> Seq:
    d: Seq = EMPTY
    for k, v in pairs:
        d = dict_put(d, k, v)
    return d


# ---------------------------------------------------------------------------
# canonical serialization


def to_text(t: Term, nonce_name: Callable[[Nonce], str] | None = None) -> str:
    out: list[str] = []
    _write(t, out, nonce_name)
    return "".join(out)


def _write(t: Term, out: list, nonce_name) -> None:
    tt = type(t)
    if tt is Seq:
        out.append("⟨")
        for i, x in enumerate(t.items):
            if i:
                out.append(",")
            _write(x, out, nonce_name)
        out.append("⟩")
    elif tt is Fn:
        out.append(f"proj{t.index}(" if t.symbol == "proj" else t.symbol + "(")
        for i, x in enumerate(t.args):
            if i:
                out.append(",")
            _write(x, out, nonce_name)
        out.append(")")
    elif tt is Str:
        out.append(json.dumps(t.value, ensure_ascii=False))
    elif tt is Nonce:
        out.append(nonce_name(t) if nonce_name else f"n{t.id}")
    elif tt is Num:
        out.append(str(t.value))
    elif tt is Addr:
        out.append("@" + t.name)
    elif tt is Special:
        out.append(t.symbol)
    elif tt is Var:
        out.append("*" if t.kind == "*" else f"{t.kind}{t.index}")
    else:
        raise TypeError(f"not a term: {t!r}")


class ParseError(ValueError):
    pass


_NAME_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-:/")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> ParseError:
        return ParseError(f"{msg} at offset {self.pos} in {self.text[:80]!r}")

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def term(self) -> Term:
        c = self.peek()
        if c == "⟨":
            self.pos += 1
            items = []
            if self.peek() == "⟩":
                self.pos += 1
                return EMPTY
            while True:
                items.append(self.term())
                if self.peek() == ",":
                    self.pos += 1
                    continue
                self.expect("⟩")
                return Seq(items)
        if c == '"':
            dec = json.JSONDecoder()
            value, end = dec.raw_decode(self.text, self.pos)
            self.pos = end
            return Str(value)
        if c in ("⊤", "⊥", "◇"):
            self.pos += 1
            return Special(c)
        if c == "*":
            self.pos += 1
            return WILDCARD
        if c == "@":
            self.pos += 1
            return Addr(self.name())
        if c in ("ν", "λ"):
            self.pos += 1
            return Var(c, self.number())
        if c.isdigit() or c == "-":
            return Num(self.number())
        word = self.name()
        if not word:
            raise self.error("unexpected character")
        if self.peek() == "(":
            self.pos += 1
            args = [self.term()]
            while self.peek() == ",":
                self.pos += 1
                args.append(self.term())
            self.expect(")")
            if word.startswith("proj") and word[4:].isdigit():
                return Fn("proj", args, int(word[4:]))
            try:
                return Fn(word, args)
            except ValueError as exc:
                raise self.error(str(exc)) from None
        if word[0] == "n" and word[1:].isdigit():
            return Nonce(int(word[1:]))
        if word[0] == "x" and word[1:].isdigit():
            return Var("x", int(word[1:]))
        raise self.error(f"unknown token {word!r}")

    def name(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in _NAME_CHARS:
            self.pos += 1
        return self.text[start:self.pos]

    def number(self) -> int:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        while self.peek().isdigit():
            self.pos += 1
        if start == self.pos:
            raise self.error("expected number")
        return int(self.text[start:self.pos])


def parse(text: str) -> Term:
    p = _Parser(text.strip())
    t = p.term()
    if p.pos != len(p.text):
        raise p.error("trailing input")
    return t


def parse_prefix(text: str, pos: int = 0) -> tuple:
    """Parse one term starting at pos; return (term, end offset)."""
    p = _Parser(text)
    p.pos = pos
    return p.term(), p.pos
