"""Dolev-Yao derivability by analysis to a fixpoint followed by synthesis.

A ``Knowledge`` object holds a list of ground facts. Fact number i is named by
the recipe variable ``x<i>``. Analysis decomposes sequences, opens signatures
and decrypts ciphertexts whose key is derivable; every analysed subterm is
stored together with a recipe that rebuilds it from the facts. Synthesis then
composes a target from analysed terms, constants and allowed placeholders.

For the subterm-convergent theory used here this procedure is complete: every
derivable term is obtained this way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .terms import (
    Fn,
    Nonce,
    Seq,
    Term,
    Var,
    dec_a,
    dec_s,
    extractmsg,
    is_constant,
    normalize,
    proj,
    substitute,
)


@dataclass(frozen=True)
class DerivationResult:
    ok: bool
    recipe: Term | None = None

    def __bool__(self) -> bool:
        return self.ok


class Knowledge:
    def __init__(self, facts: Iterable[Term] = (), placeholders: Iterable[Var] = ()):
        self.facts: list[Term] = []
        self.placeholders = frozenset(placeholders)
        self.known: dict[Term, Term] = {}
        self._pending: list[tuple[Term, Term]] = []
        for f in facts:
            self.add(f, saturate=False)
        self._saturate()

    def copy(self) -> "Knowledge":
        k = Knowledge.__new__(Knowledge)
        k.facts = list(self.facts)
        k.placeholders = self.placeholders
        k.known = dict(self.known)
        k._pending = list(self._pending)
        return k

    def add(self, fact: Term, saturate: bool = True) -> None:
        fact = normalize(fact)
        recipe = Var("x", len(self.facts))
        self.facts.append(fact)
        self._learn(fact, recipe)
        if saturate:
            self._saturate()

    def _learn(self, t: Term, recipe: Term) -> None:
        queue = [(t, recipe)]
        known = self.known
        while queue:
            t, r = queue.pop()
            if t in known:
                continue
            known[t] = r
            tt = type(t)
            if tt is Seq:
                for i, x in enumerate(t.items, 1):
                    if x not in known:
                        queue.append((x, proj(i, r)))
            elif tt is Fn:
                if t.symbol == "sig":
                    queue.append((t.args[0], extractmsg(r)))
                elif t.symbol in ("enc_a", "enc_s"):
                    self._pending.append((t, r))

    def _saturate(self) -> None:
        progress = True
        while progress:
            progress = False
            pending, self._pending = self._pending, []
            for t, r in pending:
                opened = self._open(t, r)
                if opened is None:
                    self._pending.append((t, r))
                else:
                    self._learn(*opened)
                    progress = True

    def _open(self, t: Fn, r: Term):
        key = t.args[1]
        if t.symbol == "enc_a":
            if not (type(key) is Fn and key.symbol == "pub"):
                return None
            kr = self.synthesize(key.args[0])
            if kr is None:
                return None
            return t.args[0], dec_a(r, kr)
        kr = self.synthesize(key)
        if kr is None:
            return None
        return t.args[0], dec_s(r, kr)

    def synthesize(self, target: Term) -> Term | None:
        known = self.known
        placeholders = self.placeholders

        def go(t: Term):
            r = known.get(t)
            if r is not None:
                return r
            if is_constant(t):
                return t
            tt = type(t)
            if tt is Var:
                return t if t in placeholders else None
            if tt is Seq:
                parts = []
                for x in t.items:
                    p = go(x)
                    if p is None:
                        return None
                    parts.append(p)
                return Seq(parts)
            if tt is Fn:
                parts = []
                for x in t.args:
                    p = go(x)
                    if p is None:
                        return None
                    parts.append(p)
                return Fn(t.symbol, parts, t.index)
            return None

        return go(target)

    def knows_atom(self, t: Term) -> bool:
        """Fast path for nonces: a nonce is derivable iff analysis exposed it."""
        return t in self.known

    def evaluate(self, recipe: Term) -> Term:
        mapping = {Var("x", i): f for i, f in enumerate(self.facts)}
        return normalize(substitute(recipe, mapping))

    def nonces(self) -> set:
        return {t for t in self.known if type(t) is Nonce}


def derive(target: Term, knowledge: "Knowledge | Iterable[Term]", placeholders: Iterable[Var] = ()) -> DerivationResult:
    """Decide whether target is derivable from the knowledge; return a recipe if so."""
    if not isinstance(knowledge, Knowledge):
        knowledge = Knowledge(knowledge, placeholders)
    elif placeholders:
        knowledge = knowledge.copy()
        knowledge.placeholders = knowledge.placeholders | frozenset(placeholders)
    recipe = knowledge.synthesize(normalize(target))
    if recipe is None:
        return DerivationResult(False)
    return DerivationResult(True, recipe)


def check_recipe(recipe: Term, facts: list, target: Term) -> bool:
    mapping = {Var("x", i): f for i, f in enumerate(facts)}
    return normalize(substitute(recipe, mapping)) == normalize(target)
