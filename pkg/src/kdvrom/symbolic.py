"""Noncommutative operator algebra for memory-term derivation.

Words over the letters ``PL``, ``QL``, ``L`` act right-to-left on the initial
Fourier coefficients.  The telescoping closure expands the memory integral of
the projected dynamics into polynomials in t whose words are fully projected
(every word begins with ``PL``), and those polynomials expand further into
convolution trees over the resolved field that can be evaluated numerically.
The engine is the authority for the high-order memory kernels; hand-written
counterparts are validated against it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

from .spectral import (
    ModePartition,
    SpectralField,
    conv_truncated,
    project_resolved,
    project_unresolved,
    scale_by_k_power,
)

PL = "PL"
QL = "QL"
L = "L"

Word = tuple  # tuple of letters, applied right-to-left


@dataclass(frozen=True)
class OperatorPoly:
    """Operator polynomial attached to a single power of t.

    ``terms`` maps each word to its rational coefficient, with the t^order
    prefactor's 1/order! and sign folded in.  ``integer_form`` recovers the
    conventional presentation scale * [sum of integer-weighted words].
    """

    order: int
    terms: dict

    def __post_init__(self):
        object.__setattr__(
            self, "terms", {w: Fraction(c) for w, c in self.terms.items() if c != 0}
        )

    def integer_form(self):
        """Return (scale, {word: int}) with scale = (-1)^(order+1)/order!."""
        scale = Fraction((-1) ** (self.order + 1), factorial(self.order))
        ints = {}
        for w, c in self.terms.items():
            q = c / scale
            if q.denominator != 1:
                raise ValueError(f"coefficient {c} of {w} not an integer multiple of {scale}")
            ints[w] = int(q)
        return scale, ints

    def scaled(self, s) -> "OperatorPoly":
        return OperatorPoly(self.order, {w: c * Fraction(s) for w, c in self.terms.items()})

    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        if self.order != other.order:
            raise ValueError("cannot add polynomials of different order")
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, Fraction(0)) + c
        return OperatorPoly(self.order, out)

    def to_sexpr(self) -> str:
        parts = []
        for w, c in sorted(self.terms.items()):
            parts.append(f"({c} ({' '.join(w)}))")
        return f"(t^{self.order} {' '.join(parts)})"


# --- telescoping closure of the memory integral --------------------------
#
# Closed polynomials are dicts {t_power: {projected_word: Fraction}}, every
# word beginning with PL, understood as sum_p t^p * word(state at time t).
# The derivative of such a term uses the projected-dynamics identity: the
# time derivative of a closed word W splits into the Markov-like piece PL*W
# plus a memory double sum whose entries carry leading Liouvillians; leading
# Liouvillians are in turn removed by differentiating the corresponding
# lower-order closed expansion.  Words strictly grow at every stage, so
# pruning on word length bounds the recursion.

_MAXLEN = 12  # plenty for the orders exercised here; raised automatically


def _add(poly: dict, p: int, word: Word, coeff: Fraction):
    if coeff == 0:
        return
    bucket = poly.setdefault(p, {})
    bucket[word] = bucket.get(word, Fraction(0)) + coeff
    if bucket[word] == 0:
        del bucket[word]


def _scale_shift(poly: dict, p0: int, coeff: Fraction, out: dict, budget: int):
    for p, words in poly.items():
        if p + p0 > budget:
            continue
        for w, c in words.items():
            _add(out, p + p0, w, c * coeff)


@lru_cache(maxsize=None)
def _closed(i: int, word: Word, budget: int, maxlen: int):
    """Closed expansion of the i-th time derivative of the word's evolution."""
    if len(word) + i > maxlen or budget < 0:
        return {}
    if i == 0:
        return {0: {word: Fraction(1)}}
    lower = _closed(i - 1, word, budget + 1, maxlen)
    return _differentiate(lower, budget, maxlen)


def _differentiate(poly: dict, budget: int, maxlen: int) -> dict:
    out: dict = {}
    for p, words in poly.items():
        for w, c in words.items():
            if p >= 1 and p - 1 <= budget:
                _add(out, p - 1, w, c * p)
            if p <= budget:
                _scale_shift(_word_derivative(w, budget - p, maxlen), p, c, out, budget)
    return out


@lru_cache(maxsize=None)
def _word_derivative(word: Word, budget: int, maxlen: int) -> dict:
    """d/dt of a closed word: Markov piece plus its own memory expansion."""
    out: dict = {}
    if len(word) + 1 <= maxlen:
        _add(out, 0, (PL,) + word, Fraction(1))
    for total in range(1, budget + 1):  # total = i + j + 1
        for i in range(total):
            j = total - 1 - i
            new_word = (PL,) + (QL,) * (j + 1) + word
            if len(new_word) + i > maxlen:
                continue
            coeff = Fraction((-1) ** i, factorial(i) * factorial(j) * total)
            sub = _closed(i, new_word, budget - total, maxlen)
            _scale_shift(sub, total, coeff, out, budget)
    return out


def complete_memory_operator_terms(n: int) -> list[OperatorPoly]:
    """Fully projected memory polynomials at orders t^1 .. t^n.

    Every emitted word begins with PL; at order i the words have exactly
    i + 1 letters (asserted).
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    maxlen = max(_MAXLEN, n + 2)
    mem: dict = {}
    for total in range(1, n + 1):
        for i in range(total):
            j = total - 1 - i
            word = (PL,) + (QL,) * (j + 1)
            coeff = Fraction((-1) ** i, factorial(i) * factorial(j) * total)
            sub = _closed(i, word, n - total, maxlen)
            _scale_shift(sub, total, coeff, mem, n)
    polys = []
    for order in range(1, n + 1):
        terms = mem.get(order, {})
        for w in terms:
            if len(w) != order + 1:
                raise AssertionError(
                    f"order-{order} word {w} has {len(w)} letters; expected {order + 1}"
                )
            if w[0] != PL:
                raise AssertionError(f"unprojected word {w} at order {order}")
        polys.append(OperatorPoly(order, terms))
    return polys


def bch_operator_terms(n: int) -> list[OperatorPoly]:
    """Memory polynomials under the commuting-dynamics approximation."""
    if n < 1:
        raise ValueError("order must be >= 1")
    out = []
    for j in range(1, n + 1):
        word = (PL,) * j + (QL,)
        out.append(OperatorPoly(j, {word: Fraction((-1) ** (j + 1), factorial(j))}))
    return out


def memory_kernel_polys(n: int) -> list[OperatorPoly]:
    """Kernels R^1..R^n with the (-1)^(i+1) t^i / i! prefactor divided out."""
    out = []
    for poly in complete_memory_operator_terms(n):
        scale = Fraction((-1) ** (poly.order + 1), factorial(poly.order))
        out.append(poly.scaled(1 / scale))
    return out


def canonicalize(poly: OperatorPoly, commuting: bool = False) -> OperatorPoly:
    """Merge duplicate words; optionally reduce under commuting dynamics.

    Plain canonicalization expands any literal ``L`` letter as PL + QL and
    merges equal words.  With ``commuting=True`` the projected and orthogonal
    steps are treated as interchangeable: letters sort to the form
    PL...PL QL...QL, and any word that can be rearranged to lead with an
    orthogonal step next to the outer projection -- i.e. any word carrying
    more than a single QL -- drops out, which is the reduction that collapses
    the complete expansion onto its commuting special case.
    """
    expanded: dict = {}
    for w, c in poly.terms.items():
        for w2, c2 in _expand_plain_l(w):
            expanded[w2] = expanded.get(w2, Fraction(0)) + c * c2
    if not commuting:
        return OperatorPoly(poly.order, expanded)
    out: dict = {}
    for w, c in expanded.items():
        n_ql = sum(1 for letter in w if letter == QL)
        if n_ql > 1:
            continue
        sorted_w = tuple(sorted(w, key=lambda s: 0 if s == PL else 1))
        out[sorted_w] = out.get(sorted_w, Fraction(0)) + c
    return OperatorPoly(poly.order, out)


def _expand_plain_l(word: Word):
    """Expand every literal L letter via L = PL + QL."""
    results = [((), Fraction(1))]
    for letter in word:
        if letter == L:
            results = [(w + (s,), c) for (w, c) in results for s in (PL, QL)]
        else:
            results = [(w + (letter,), c) for (w, c) in results]
    return results


# --- expansion into convolution trees -------------------------------------
#
# Trees are nested tuples:
#   ("u", resolved, kpow)              leaf: resolved/unresolved field, mode j
#                                      scaled by j**kpow
#   ("C", hat, kpow, left, right)      convolution retaining resolved (hat) or
#                                      buffer modes, output scaled by k**kpow
# Each monomial carries a rational coefficient and a power m of (i*eps^2)
# from the dispersive part of the Liouvillian.

_U_HAT = ("u", True, 0)
_U_TILDE = ("u", False, 0)


def _canon_tree(tree):
    if tree[0] == "u":
        return tree
    _, hat, kpow, a, b = tree
    a = _canon_tree(a)
    b = _canon_tree(b)
    if b < a:
        a, b = b, a
    return ("C", hat, kpow, a, b)


def _merge(terms):
    out = {}
    for coeff, m, tree in terms:
        key = (m, _canon_tree(tree))
        out[key] = out.get(key, Fraction(0)) + coeff
    return [(c, m, t) for (m, t), c in out.items() if c != 0]


def _liouville_leaf(resolved: bool, kpow: int):
    """Apply the generator to a bare (possibly k-scaled) field leaf."""
    out = [(Fraction(1), 1, ("u", resolved, kpow + 3))]
    for left in (_U_HAT, _U_TILDE):
        for right in (_U_HAT, _U_TILDE):
            out.append((Fraction(1), 0, ("C", resolved, kpow, left, right)))
    return out


def _apply_liouville(tree):
    """Product-rule application of the generator to one monomial tree."""
    if tree[0] == "u":
        return _liouville_leaf(tree[1], tree[2])
    _, hat, kpow, a, b = tree
    out = []
    for coeff, m, da in _apply_liouville(a):
        out.append((coeff, m, ("C", hat, kpow, da, b)))
    for coeff, m, db in _apply_liouville(b):
        out.append((coeff, m, ("C", hat, kpow, a, db)))
    return out


def _tree_has_unresolved(tree) -> bool:
    if tree[0] == "u":
        return not tree[1]
    return _tree_has_unresolved(tree[3]) or _tree_has_unresolved(tree[4])


def _apply_letter(terms, letter):
    new = []
    for coeff, m, tree in terms:
        for c2, m2, t2 in _apply_liouville(tree):
            new.append((coeff * c2, m + m2, t2))
    new = _merge(new)
    if letter == L:
        return new
    # The projection zeroes every unresolved leaf, so P keeps exactly the
    # monomials free of them and Q = I - P keeps the complement.
    if letter == PL:
        return [(c, m, t) for c, m, t in new if not _tree_has_unresolved(t)]
    if letter == QL:
        return [(c, m, t) for c, m, t in new if _tree_has_unresolved(t)]
    raise ValueError(f"unknown letter {letter!r}")


class ConvExpr:
    """Sum of convolution-tree monomials over the resolved field.

    ``terms`` is a list of (coefficient, m, tree) where the numeric weight is
    coefficient * (i*eps^2)**m.
    """

    def __init__(self, terms):
        self.terms = _merge(terms)

    def __len__(self):
        return len(self.terms)

    def has_unresolved_leaf(self) -> bool:
        return any(_tree_has_unresolved(t) for _, _, t in self.terms)

    def evaluate(self, u_hat: SpectralField, epsilon: float,
                 partition: ModePartition) -> SpectralField:
        """Numerically evaluate on a resolved-supported field."""
        if u_hat.k_max < partition.M - 1:
            raise ValueError("field must carry the full buffer range |k| < M")
        cache: dict = {}

        def ev(tree) -> np.ndarray:
            if tree in cache:
                return cache[tree]
            if tree[0] == "u":
                _, resolved, kpow = tree
                if not resolved:
                    raise ValueError("unresolved leaf in projected expression")
                base = u_hat
            else:
                _, hat, kpow, a, b = tree
                fa = SpectralField(ev(a))
                fb = SpectralField(ev(b))
                base = conv_truncated(
                    fa, fb, "resolved" if hat else "unresolved", partition
                )
            if kpow:
                base = scale_by_k_power(base, kpow)
            cache[tree] = base.coeffs
            return base.coeffs

        total = np.zeros(2 * u_hat.k_max + 1, dtype=complex)
        for coeff, m, tree in self.terms:
            weight = float(coeff) * (1j * epsilon ** 2) ** m
            if weight == 0:
                continue
            total = total + weight * ev(tree)
        return SpectralField(total)

    def to_sexpr(self) -> str:
        def fmt(tree):
            if tree[0] == "u":
                name = "u-hat" if tree[1] else "u-tilde"
                return f"({name} k^{tree[2]})" if tree[2] else name
            _, hat, kpow, a, b = tree
            name = "C-hat" if hat else "C-tilde"
            if kpow:
                name += f"^k{kpow}"
            return f"({name} {fmt(a)} {fmt(b)})"

        parts = [
            f"({c}{f' (i*eps^2)^{m}' if m else ''} {fmt(t)})"
            for c, m, t in sorted(self.terms, key=lambda x: repr(x[2]))
        ]
        return f"(+ {' '.join(parts)})"

    def to_json_obj(self):
        return [
            {"coeff": [c.numerator, c.denominator], "ieps2_power": m, "tree": _tree_json(t)}
            for c, m, t in self.terms
        ]


def _tree_json(tree):
    if tree[0] == "u":
        return {"leaf": "resolved" if tree[1] else "unresolved", "kpow": tree[2]}
    return {
        "conv": "resolved" if tree[1] else "unresolved",
        "kpow": tree[2],
        "args": [_tree_json(tree[3]), _tree_json(tree[4])],
    }


def expand_to_conv(poly: OperatorPoly) -> ConvExpr:
    """Expand a fully projected operator polynomial into convolution trees."""
    acc = []
    for word, coeff in poly.terms.items():
        if word[0] != PL:
            raise ValueError(f"word {word} is not projected prior to evolution")
        terms = [(Fraction(1), 0, _U_HAT)]
        for letter in reversed(word):
            terms = _apply_letter(terms, letter)
        acc.extend((coeff * c, m, t) for c, m, t in terms)
    expr = ConvExpr(acc)
    if expr.has_unresolved_leaf():
        raise AssertionError("unresolved leaf survived projection")
    return expr


@lru_cache(maxsize=None)
def memory_kernel_exprs(n: int) -> tuple:
    """Convolution-tree expressions for the kernels R^1..R^n."""
    return tuple(expand_to_conv(p) for p in memory_kernel_polys(n))
