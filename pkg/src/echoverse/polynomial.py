"""Sparse multivariate polynomials used as static readouts."""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError

__all__ = ["Polynomial", "canonical_key"]


def canonical_key(exps: Sequence[int]):
    """Graded order; within a degree, higher powers of earlier variables first.

    For two variables ``(a, b)`` this yields ``1, a, b, a^2, ab, b^2``.
    """
    return (sum(exps), tuple(-e for e in exps))


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in ``nvars`` variables as ``(coefficient, exponents)`` terms.

    Terms are merged, zero coefficients dropped and the rest kept in
    :func:`canonical_key` order, so equal polynomials compare equal.
    """

    nvars: int
    terms: tuple = ()

    def __post_init__(self):
        if self.nvars < 0:
            raise ValueError("nvars must be non-negative")
        merged: dict[tuple, float] = {}
        for coeff, exps in self.terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars:
                raise DimensionError(f"exponent {exps} does not have {self.nvars} entries")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        terms = tuple(
            (c, e) for e, c in sorted(merged.items(), key=lambda kv: canonical_key(kv[0])) if c != 0.0
        )
        object.__setattr__(self, "terms", terms)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, value: float, nvars: int) -> "Polynomial":
        return cls(nvars, ((value, (0,) * nvars),))

    @classmethod
    def variable(cls, index: int, nvars: int, coeff: float = 1.0) -> "Polynomial":
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, ((coeff, tuple(exps)),))

    @classmethod
    def linear(cls, weights: Iterable[float], const: float = 0.0) -> "Polynomial":
        weights = [float(w) for w in weights]
        n = len(weights)
        terms = [(const, (0,) * n)]
        for i, w in enumerate(weights):
            exps = [0] * n
            exps[i] = 1
            terms.append((w, tuple(exps)))
        return cls(n, tuple(terms))

    @classmethod
    def from_coefficients(cls, coeffs: Sequence[float], monomials: Sequence[Sequence[int]]) -> "Polynomial":
        if len(coeffs) != len(monomials):
            raise DimensionError("one coefficient per monomial required")
        nvars = len(monomials[0]) if monomials else 0
        return cls(nvars, tuple(zip(map(float, coeffs), map(tuple, monomials))))

    # -- structure ---------------------------------------------------------

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0."""
        return max((sum(e) for _, e in self.terms), default=0)

    def __len__(self) -> int:
        return len(self.terms)

    def shift(self, offset: int, nvars: int) -> "Polynomial":
        """Same polynomial reading variables ``offset .. offset + self.nvars``
        of a larger ``nvars``-variable space."""
        if offset < 0 or offset + self.nvars > nvars:
            raise DimensionError(f"cannot place {self.nvars} variables at offset {offset} in {nvars}")
        pad_right = nvars - offset - self.nvars
        return Polynomial(nvars, tuple((c, (0,) * offset + e + (0,) * pad_right) for c, e in self.terms))

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise DimensionError(f"polynomials in {self.nvars} and {other.nvars} variables")
            return other
        if isinstance(other, Real):
            return Polynomial.constant(float(other), self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Polynomial(self.nvars, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Real):
            return Polynomial(self.nvars, tuple((c * float(other), e) for c, e in self.terms))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = [
            (c1 * c2, tuple(a + b for a, b in zip(e1, e2)))
            for c1, e1 in self.terms
            for c2, e2 in other.terms
        ]
        return Polynomial(self.nvars, tuple(terms))

    __rmul__ = __mul__

    # -- evaluation --------------------------------------------------------

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at a point ``(nvars,)`` or at each row of ``(M, nvars)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.nvars:
            raise DimensionError(f"expected {self.nvars} variables, got {X.shape[1]}")
        out = np.zeros(X.shape[0])
        for coeff, exps in self.terms:
            term = np.full(X.shape[0], coeff)
            for j, e in enumerate(exps):
                if e == 1:
                    term = term * X[:, j]
                elif e:
                    term = term * X[:, j] ** e
            out = out + term
        return float(out[0]) if single else out

    # -- serialization -----------------------------------------------------

    def to_json(self) -> list[dict]:
        return [{"coeff": c, "exponents": list(e)} for c, e in self.terms]

    @classmethod
    def from_json(cls, items: list[dict], nvars: int) -> "Polynomial":
        return cls(nvars, tuple((float(d["coeff"]), tuple(d["exponents"])) for d in items))
