import math
from fractions import Fraction

import numpy as np
import pytest

from kdvrom.spectral import ModePartition, SpectralField, random_hermitian
from kdvrom.symbolic import (
    L,
    PL,
    QL,
    OperatorPoly,
    bch_operator_terms,
    canonicalize,
    complete_memory_operator_terms,
    expand_to_conv,
    memory_kernel_exprs,
    memory_kernel_polys,
)

F = Fraction


def word(s):
    return tuple(s.split())


class TestMemoryPolynomials:
    """Golden values for the fully projected memory expansion.

    Orders 1-3 are uncontested.  At order 4 the widely circulated written form
    of the bracket carries a global sign error (its BCH collapse would come
    out +t^4/24 (PL)^4 QL instead of -t^4/24); the values frozen here are the
    engine's, cross-checked by the collapse test below and by the numerical
    residual-order test in the acceptance suite.
    """

    def test_order_1_is_t_model(self):
        (p1,) = complete_memory_operator_terms(1)
        assert p1.terms == {word("PL QL"): F(1)}

    def test_order_2(self):
        p2 = complete_memory_operator_terms(2)[1]
        scale, ints = p2.integer_form()
        assert scale == F(-1, 2)
        assert ints == {word("PL PL QL"): 1, word("PL QL QL"): -1}

    def test_order_3(self):
        p3 = complete_memory_operator_terms(3)[2]
        scale, ints = p3.integer_form()
        assert scale == F(1, 6)
        assert ints == {
            word("PL PL PL QL"): 1,
            word("PL PL QL QL"): -2,
            word("PL QL PL QL"): -2,
            word("PL QL QL QL"): 1,
        }

    def test_order_4(self):
        p4 = complete_memory_operator_terms(4)[3]
        scale, ints = p4.integer_form()
        assert scale == F(-1, 24)
        assert ints == {
            word("PL PL PL PL QL"): 1,
            word("PL PL PL QL QL"): -3,
            word("PL PL QL PL QL"): -5,
            word("PL PL QL QL QL"): 3,
            word("PL QL PL PL QL"): -3,
            word("PL QL PL QL QL"): 5,
            word("PL QL QL PL QL"): 3,
            word("PL QL QL QL QL"): -1,
        }

    def test_order_4_negation_gives_transcribed_written_bracket(self):
        # the written form's bracket is the negation, coefficient for
        # coefficient, of the correct polynomial
        _, ints = complete_memory_operator_terms(4)[3].integer_form()
        written = {
            word("PL QL QL QL QL"): 1,
            word("PL QL QL PL QL"): -3,
            word("PL QL PL QL QL"): -5,
            word("PL PL QL QL QL"): -3,
            word("PL QL PL PL QL"): 3,
            word("PL PL QL PL QL"): 5,
            word("PL PL PL QL QL"): 3,
            word("PL PL PL PL QL"): -1,
        }
        assert {w: -c for w, c in ints.items()} == written

    def test_words_are_projected_and_sized(self):
        for i, poly in enumerate(complete_memory_operator_terms(5), start=1):
            assert poly.order == i
            for w in poly.terms:
                assert len(w) == i + 1
                assert w[0] == PL

    def test_rejects_nonpositive_order(self):
        with pytest.raises(ValueError):
            complete_memory_operator_terms(0)


class TestBchCollapse:
    def test_bch_coefficients(self):
        for j, poly in enumerate(bch_operator_terms(4), start=1):
            assert poly.terms == {
                (PL,) * j + (QL,): F((-1) ** (j + 1), math.factorial(j))
            }

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_commuting_canonicalization_collapses_to_bch(self, order):
        complete = complete_memory_operator_terms(order)[order - 1]
        bch = bch_operator_terms(order)[order - 1]
        assert canonicalize(complete, commuting=True).terms == bch.terms


class TestCanonicalize:
    def test_expands_literal_l(self):
        poly = OperatorPoly(1, {(PL, L): F(1)})
        out = canonicalize(poly)
        assert out.terms == {(PL, PL): F(1), (PL, QL): F(1)}

    def test_merges_duplicates_created_by_expansion(self):
        poly = OperatorPoly(1, {(PL, L): F(1), (PL, QL): F(-1)})
        out = canonicalize(poly)
        assert out.terms == {(PL, PL): F(1)}

    def test_idempotent(self):
        poly = complete_memory_operator_terms(3)[2]
        once = canonicalize(poly)
        assert canonicalize(once).terms == once.terms
        commuted = canonicalize(poly, commuting=True)
        assert canonicalize(commuted, commuting=True).terms == commuted.terms


class TestKernelExpressions:
    def test_t_model_tree(self):
        (expr,) = memory_kernel_exprs(1)
        u = ("u", True, 0)
        assert expr.terms == [(F(2), 0, ("C", True, 0, ("C", False, 0, u, u), u))]

    def test_second_kernel_monomials(self):
        expr = memory_kernel_exprs(2)[1]
        u = ("u", True, 0)
        uk3 = ("u", True, 3)
        ct = lambda a, b: ("C", False, 0, *sorted((a, b)))
        ch = lambda a, b: ("C", True, 0, *sorted((a, b)))
        tuu = ct(u, u)
        expected = {
            (0, ch(tuu, tuu)): F(-2),
            (1, ch(("C", False, 3, u, u), u)): F(-2),
            (0, ch(u, ct(u, tuu))): F(-4),
            (1, ch(u, ct(u, uk3))): F(4),
            (0, ch(u, ct(u, ch(u, u)))): F(4),
        }
        got = {(m, t): c for c, m, t in expr.terms}
        assert got == expected

    def test_monomial_counts_grow_as_derived(self):
        exprs = memory_kernel_exprs(4)
        assert [len(e) for e in exprs] == [1, 5, 23, 114]

    def test_kernel_prefactor_division(self):
        polys = memory_kernel_polys(2)
        assert polys[0].terms == {word("PL QL"): F(1)}
        # order 2: dividing -t^2/2 [PLPLQL - PLQLQL] by -1/2
        assert polys[1].terms == {word("PL PL QL"): F(1), word("PL QL QL"): F(-1)}

    def test_unprojected_word_rejected(self):
        with pytest.raises(ValueError):
            expand_to_conv(OperatorPoly(1, {(QL, PL): F(1)}))

    def test_epsilon_zero_drops_dispersive_monomials(self):
        rng = np.random.default_rng(2)
        part = ModePartition.for_rom(6)
        f = random_hermitian(part.M - 1, rng, support=part.resolved_mask(part.M - 1))
        expr = memory_kernel_exprs(2)[1]
        full = expr.evaluate(f, 0.0, part)
        pruned_terms = [(c, m, t) for c, m, t in expr.terms if m == 0]
        pruned = type(expr)(pruned_terms).evaluate(f, 0.3, part)
        assert np.allclose(full.coeffs, pruned.coeffs, atol=1e-13)

    def test_evaluate_requires_buffer_range(self):
        part = ModePartition.for_rom(6)
        with pytest.raises(ValueError):
            memory_kernel_exprs(1)[0].evaluate(SpectralField.sine(5), 0.1, part)

    def test_sexpr_and_json_are_stable(self):
        expr = memory_kernel_exprs(1)[0]
        assert expr.to_sexpr() == "(+ (2 (C-hat (C-tilde u-hat u-hat) u-hat)))"
        obj = expr.to_json_obj()
        assert obj[0]["coeff"] == [2, 1]
        assert obj[0]["tree"]["conv"] == "resolved"
