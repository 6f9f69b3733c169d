"""
Deriving the memory closure symbolically
========================================

The reduced model for the resolved modes F = {|k| < N} carries memory terms
that are derived, not modeled.  The derivation works in a small
noncommutative algebra over the letters PL and QL (the projected and
orthogonal parts of the generator); every unprojected word is re-expanded
until only fully projected words remain.
"""

import numpy as np

from kdvrom.spectral import ModePartition, random_hermitian
from kdvrom.symbolic import (
    bch_operator_terms,
    canonicalize,
    complete_memory_operator_terms,
    memory_kernel_exprs,
)
from kdvrom.terms import KernelEvaluator

# Operator polynomials through fourth order.  Each term is a word in PL, QL
# with a rational coefficient; the order-n polynomial carries t^n.
for poly in complete_memory_operator_terms(4):
    scale, ints = poly.integer_form()
    words = ", ".join(f"{c:+d} {' '.join(w)}" for w, c in sorted(ints.items()))
    print(f"order {poly.order}:  ({scale}) t^{poly.order} [ {words} ]")

# If PL and QL commuted, each polynomial would collapse to a single word
# (the series one gets from a Baker-Campbell-Hausdorff-style rearrangement).
for order in (1, 2, 3, 4):
    full = complete_memory_operator_terms(order)[order - 1]
    collapsed = canonicalize(full, commuting=True)
    single = bch_operator_terms(order)[order - 1]
    assert collapsed.terms == single.terms
print("commuting collapse reproduces the single-word series, orders 1-4")

# Applied to the quadratic KdV nonlinearity, each word becomes a tree of
# convolutions restricted to the resolved (C-hat) or unresolved (C-tilde)
# output range.  Order 1 is the t-model.
exprs = memory_kernel_exprs(4)
print("t-model kernel:", exprs[0].to_sexpr())
print("monomials per kernel:", [len(e) for e in exprs])

# The production kernels are flat numpy transcriptions of these trees.
# Check them against the tree-walking evaluation on a random resolved field.
N = 8
part = ModePartition.for_rom(N)
rng = np.random.default_rng(0)
f = random_hermitian(part.M - 1, rng, support=part.resolved_mask(part.M - 1))
ev = KernelEvaluator(N, epsilon=0.1)
hand = ev.kernels(f.coeffs, 4)
for i, expr in enumerate(exprs, start=1):
    ref = expr.evaluate(f, 0.1, part).coeffs
    diff = np.max(np.abs(hand[i - 1] - ref)) / np.max(np.abs(ref))
    print(f"kernel R{i}: relative difference {diff:.1e}")
print(f"work: {ev.conv_calls} transform pairs for one order-4 evaluation")
