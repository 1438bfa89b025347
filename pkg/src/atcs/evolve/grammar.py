"""BNF grammars and genotype-to-phenotype mapping.

A genotype is a fixed-length string of integer codons.  Decoding expands the
grammar's start symbol leftmost-first; whenever a nonterminal offers more than
one alternative, the next codon (mod the number of alternatives) picks one.
Rules with a single alternative consume no codon.  The codon string may be
re-read up to ``wrap_limit`` times; if the derivation is still incomplete the
mapping is invalid and yields ``None``.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

_MAX_EXPANSION = 10_000  # symbols; guards against runaway recursive rules


class GrammarError(ValueError):
    pass


def _is_nonterminal(token: str) -> bool:
    return token.startswith("<") and token.endswith(">") and len(token) > 2


@dataclass(frozen=True)
class Grammar:
    """Context-free grammar in BNF form.

    ``rules`` maps each nonterminal to its ordered alternatives; every
    alternative is a tuple of symbol tokens (``<name>`` marks a nonterminal).
    """

    rules: dict
    start: str

    def __post_init__(self):
        if self.start not in self.rules:
            raise GrammarError(f"start symbol {self.start!r} has no rule")

    def alternatives(self, symbol: str):
        return self.rules[symbol]

    @property
    def nonterminals(self) -> set:
        return set(self.rules)

    @property
    def terminals(self) -> set:
        out = set()
        for alts in self.rules.values():
            for alt in alts:
                out.update(tok for tok in alt if not _is_nonterminal(tok))
        return out


def parse_bnf(text: str) -> Grammar:
    """Parse BNF text into a :class:`Grammar`.

    One rule per line, ``<lhs> ::= alt | alt | ...``; tokens are whitespace
    separated, ``#`` starts a comment line.  The first rule's left-hand side
    becomes the start symbol.
    """
    rules: dict = {}
    start = None
    refs = []  # (nonterminal, line_no) for post-parse definition check
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "::=" not in line:
            raise GrammarError(f"line {line_no}: missing '::=' in rule")
        lhs, rhs = (part.strip() for part in line.split("::=", 1))
        if not _is_nonterminal(lhs):
            raise GrammarError(
                f"line {line_no}: left-hand side {lhs!r} is not of the form <name>")
        if lhs in rules:
            raise GrammarError(f"line {line_no}: duplicate rule for {lhs}")
        alts = []
        for alt_text in rhs.split("|"):
            tokens = tuple(alt_text.split())
            if not tokens:
                raise GrammarError(f"line {line_no}: empty alternative in rule {lhs}")
            for tok in tokens:
                if _is_nonterminal(tok):
                    refs.append((tok, line_no))
            alts.append(tokens)
        rules[lhs] = tuple(alts)
        if start is None:
            start = lhs
    if start is None:
        raise GrammarError("grammar has no rules")
    for symbol, line_no in refs:
        if symbol not in rules:
            raise GrammarError(
                f"line {line_no}: reference to undefined nonterminal {symbol}")
    return Grammar(rules=rules, start=start)


def load_grammar(name: str) -> Grammar:
    """Load a grammar shipped with the package (``atcs/grammars/<name>.bnf``)."""
    text = resources.files("atcs").joinpath(f"grammars/{name}.bnf").read_text()
    return parse_bnf(text)


@dataclass(frozen=True)
class Genotype:
    codons: tuple
    wrap_limit: int = 3

    def __post_init__(self):
        if len(self.codons) == 0:
            raise GrammarError("genotype must contain at least one codon")
        if any((not isinstance(c, (int, np.integer))) or c < 0 or c > 255
               for c in self.codons):
            raise GrammarError("codons must be integers in [0, 255]")
        if self.wrap_limit < 1:
            raise GrammarError("wrap_limit must be >= 1")
        object.__setattr__(self, "codons", tuple(int(c) for c in self.codons))

    def __len__(self) -> int:
        return len(self.codons)


def random_genotype(rng: np.random.Generator, length: int = 64,
                    wrap_limit: int = 3) -> Genotype:
    return Genotype(tuple(int(c) for c in rng.integers(0, 256, size=length)),
                    wrap_limit=wrap_limit)


def decode(genotype: Genotype, grammar: Grammar) -> Optional[str]:
    """Map a genotype to a phenotype string, or ``None`` if codons run out.

    Terminals are concatenated without separators, so the grammar carries its
    own punctuation tokens.
    """
    budget = len(genotype.codons) * genotype.wrap_limit
    used = 0
    out = []
    stack = [grammar.start]  # leftmost pending symbol kept at the end
    while stack:
        symbol = stack.pop()
        if not _is_nonterminal(symbol):
            out.append(symbol)
            continue
        alts = grammar.rules[symbol]
        if len(alts) == 1:
            choice = alts[0]
        else:
            if used >= budget:
                return None
            codon = genotype.codons[used % len(genotype.codons)]
            used += 1
            choice = alts[codon % len(alts)]
        if len(stack) + len(choice) > _MAX_EXPANSION:
            return None
        stack.extend(reversed(choice))
    return "".join(out)
