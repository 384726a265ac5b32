"""
Test functions f on R^k and the functionals of increments built from them.

  V(f)_t     = sum_i f(dX_i)
  V'(f,k)_t  = sum_i f(dX_i / sqrt(tau_i), ..., dX_{i+k-1} / sqrt(tau_{i+k-1}))
  B(p)_t     = sum_i |dX_i|^p

V' sums windows i = 1 .. N - k + 1; windows reaching past the last
observation are not formed.
"""

import re
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, DataError


@dataclass(frozen=True)
class Term:
    """c * prod_j m_j(x_j) with m_j = x_j^p_j, or |x_j|^p_j when abs_flags[j]."""

    coefficient: float
    exponents: Tuple[float, ...]
    abs_flags: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.exponents) != len(self.abs_flags):
            raise ParameterError("term exponents and abs flags differ in length")
        for p, is_abs in zip(self.exponents, self.abs_flags):
            if p < 0:
                raise ParameterError(f"exponents must be nonnegative, got {p}")
            if not is_abs and p != int(p):
                raise ParameterError(f"signed power x^{p} needs an integer exponent; use |x|^{p}")

    @property
    def degree(self):
        return float(sum(self.exponents))

    @property
    def signed_degree(self):
        return int(sum(p for p, a in zip(self.exponents, self.abs_flags) if not a))


@dataclass(frozen=True)
class TestFunction:
    """
    f(x_1..x_k) as a monomial sum, or a general evaluator with declared metadata.

    General functions carry `evaluator` (maps an (m, k) array to m values),
    `growth_p` and evenness flags supplied by the caller.
    """

    __test__ = False  # not a pytest class

    k: int
    terms: Tuple[Term, ...] = ()
    growth_p: Optional[float] = None
    evaluator: Optional[Callable] = None
    declared_globally_even: bool = False
    declared_even_each: bool = False
    label: str = ""

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ParameterError(f"dimension k must be a positive integer, got {self.k}")
        if self.evaluator is None:
            if not self.terms:
                raise ParameterError("a monomial-sum test function needs at least one term")
            for t in self.terms:
                if len(t.exponents) != self.k:
                    raise ParameterError(f"term has {len(t.exponents)} exponents but k = {self.k}")
            top = max(max(t.exponents) for t in self.terms)
            if self.growth_p is None:
                object.__setattr__(self, "growth_p", top if top > 0 else 1.0)
            elif self.growth_p < top:
                raise ParameterError(f"growth_p {self.growth_p} is below the largest exponent {top}")
        elif self.growth_p is None or self.growth_p <= 0:
            raise ParameterError("a general test function must declare a positive growth_p")

    @classmethod
    def general(cls, evaluator, k, growth_p, globally_even=False, even_each=False, label="general"):
        """Extension hook for functions outside the monomial-sum form."""
        return cls(k=k, evaluator=evaluator, growth_p=growth_p, declared_globally_even=globally_even,
                   declared_even_each=even_each, label=label)

    @classmethod
    def monomial(cls, exponents, abs_flags=None, coefficient=1.0):
        exponents = tuple(float(p) for p in exponents)
        if abs_flags is None:
            abs_flags = (False,) * len(exponents)
        return cls(k=len(exponents), terms=(Term(coefficient, exponents, tuple(abs_flags)),))

    @property
    def is_monomial_sum(self):
        return self.evaluator is None

    @property
    def is_globally_even(self):
        """f(-x) = f(x): every term has even signed degree."""
        if not self.is_monomial_sum:
            return self.declared_globally_even or self.declared_even_each
        return all(t.signed_degree % 2 == 0 for t in self.terms)

    @property
    def is_even_each(self):
        """Even in each argument separately: every signed exponent is even."""
        if not self.is_monomial_sum:
            return self.declared_even_each
        return all(int(p) % 2 == 0 for t in self.terms for p, a in zip(t.exponents, t.abs_flags) if not a)

    @property
    def is_globally_odd(self):
        return self.is_monomial_sum and all(t.signed_degree % 2 == 1 for t in self.terms)

    def growth_bound_holds(self, x, k0=None):
        """Check |f(x)| <= K_0 prod_j (1 + |x_j|^p) on the rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if k0 is None:
            k0 = sum(abs(t.coefficient) for t in self.terms) if self.is_monomial_sum else 1.0
        bound = k0 * np.prod(1.0 + np.abs(x) ** self.growth_p, axis=1)
        return bool(np.all(np.abs(evaluate(self, x)) <= bound * (1.0 + 1e-12)))

    def __str__(self):
        return self.label or format_function(self)


def evaluate(f, x):
    """Vectorized evaluation of f on the rows of an (m, k) array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != f.k:
        raise ParameterError(f"expected an (m, {f.k}) array, got shape {x.shape}")
    if not f.is_monomial_sum:
        return np.asarray(f.evaluator(x), dtype=float).reshape(x.shape[0])
    total = np.zeros(x.shape[0])
    for term in f.terms:
        part = np.full(x.shape[0], float(term.coefficient))
        for j, (p, is_abs) in enumerate(zip(term.exponents, term.abs_flags)):
            if p == 0:
                continue
            col = x[:, j]
            if is_abs:
                part = part * np.abs(col) ** p
            else:
                part = part * col ** int(p)
        total = total + part
    return total


def eval_f(f, x):
    """Evaluate f at a single point x of length k."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != f.k:
        raise ParameterError(f"point has {x.size} coordinates but f has k = {f.k}")
    return float(evaluate(f, x.reshape(1, -1))[0])


# a sign after a mantissa digit and e/E belongs to the exponent
_TERM_SPLIT = re.compile(r"\s*(?<![0-9.][eE])([+-])\s*")
_FACTOR = re.compile(r"^(\|x(\d*)\||x(\d*))(?:\^([0-9]*\.?[0-9]+))?$")


def parse_function(text, k=None):
    """
    Parse the compact grammar used on the command line.

    Examples: `x^2`, `|x|^3`, `x1^2*x2^2`, `x^4 + 2*x^2`, `0.5*|x1|*|x2|`.
    `x` is `x1`; k defaults to the largest variable index.
    """
    source = text.strip()
    if not source:
        raise ParameterError("empty test function")
    # leading sign becomes part of the first term
    pieces = _TERM_SPLIT.split(source if source[0] in "+-" else "+" + source)
    raw_terms = []
    for sign, body in zip(pieces[1::2], pieces[2::2]):
        if not body:
            raise ParameterError(f"cannot parse test function '{text}'")
        coefficient = -1.0 if sign == "-" else 1.0
        factors = {}
        for factor in body.replace(" ", "").split("*"):
            match = _FACTOR.match(factor)
            if match is None:
                try:
                    coefficient *= float(factor)
                except ValueError:
                    raise ParameterError(f"cannot parse factor '{factor}' in '{text}'")
                continue
            index = int(match.group(2) or match.group(3) or 1)
            if index < 1:
                raise ParameterError(f"variable indices start at 1 in '{text}'")
            is_abs = match.group(1).startswith("|")
            power = float(match.group(4)) if match.group(4) else 1.0
            if index in factors:
                prev_p, prev_abs = factors[index]
                if prev_abs != is_abs:
                    raise ParameterError(f"mixing x{index} and |x{index}| in one term is not supported")
                power += prev_p
            factors[index] = (power, is_abs)
        raw_terms.append((coefficient, factors))

    top = max([max(f) for _, f in raw_terms if f] or [1])
    if k is None:
        k = top
    elif k < top:
        raise ParameterError(f"k = {k} is smaller than the largest variable index {top}")
    terms = []
    for coefficient, factors in raw_terms:
        exponents = tuple(factors.get(j + 1, (0.0, False))[0] for j in range(k))
        abs_flags = tuple(factors.get(j + 1, (0.0, False))[1] for j in range(k))
        terms.append(Term(coefficient, exponents, abs_flags))
    return TestFunction(k=k, terms=tuple(terms), label=source)


def format_function(f):
    if not f.is_monomial_sum:
        return f.label
    parts = []
    for t in f.terms:
        factors = []
        for j, (p, a) in enumerate(zip(t.exponents, t.abs_flags)):
            if p == 0:
                continue
            name = f"x{j + 1}" if f.k > 1 else "x"
            name = f"|{name}|" if a else name
            factors.append(name if p == 1 else f"{name}^{p:g}")
        if t.coefficient != 1 or not factors:
            factors.insert(0, f"{t.coefficient:g}")
        parts.append("*".join(factors))
    return " + ".join(parts)


@dataclass(frozen=True)
class FunctionalResult:
    value: float
    terms_used: int


def increments(obs):
    """Raw increments dX_i and durations tau_i of an observed series."""
    times = np.asarray(obs.times, dtype=float)
    x = np.asarray(obs.x, dtype=float)
    if times.size != x.size:
        raise DataError(f"times and values differ in length ({times.size} vs {x.size})")
    return np.diff(x), np.diff(times)


def normalized_increments(obs):
    dx, tau = increments(obs)
    if np.any(tau <= 0):
        raise DataError("non-positive duration between consecutive observations")
    return dx / np.sqrt(tau)


def v_functional(f, obs):
    """V(f) = sum f(dX_i) for a one-dimensional f."""
    if f.k != 1:
        raise ParameterError(f"V(f) needs k = 1, got k = {f.k}")
    dx, _ = increments(obs)
    if dx.size == 0:
        return FunctionalResult(0.0, 0)
    return FunctionalResult(float(np.sum(evaluate(f, dx.reshape(-1, 1)))), int(dx.size))


def window_values(f, obs):
    """f on each window of k consecutive normalized increments."""
    u = normalized_increments(obs)
    if u.size < f.k:
        return np.zeros(0)
    return evaluate(f, sliding_window_view(u, f.k))


def v_prime_functional(f, obs):
    """V'(f,k) over the N - k + 1 complete windows."""
    values = window_values(f, obs)
    if values.size == 0:
        logging.debug(f"V'({f}) on {len(obs.times) - 1} increments: fewer than k = {f.k}")
        return FunctionalResult(0.0, 0)
    return FunctionalResult(float(np.sum(values)), int(values.size))


def v_prime_partial_sums(f, obs, checkpoints):
    """V'(f,k)_s at each checkpoint s, counting windows that end at or before s."""
    times = np.asarray(obs.times, dtype=float)
    values = window_values(f, obs)
    cumulative = np.concatenate(([0.0], np.cumsum(values)))
    # observations at or before s, minus 1 for the increment count
    n_s = np.searchsorted(times, checkpoints, side="right") - 1
    windows = np.clip(n_s - f.k + 1, 0, values.size)
    return cumulative[windows]


def b_variation(p, obs):
    """B(p) = sum |dX_i|^p."""
    if not p > 0:
        raise ParameterError(f"power p must be positive, got {p}")
    dx, _ = increments(obs)
    if dx.size == 0:
        return FunctionalResult(0.0, 0)
    return FunctionalResult(float(np.sum(np.abs(dx) ** p)), int(dx.size))


def power_function(p):
    """|x|^p as a TestFunction, the integrand of B(p)."""
    if not p > 0:
        raise ParameterError(f"power p must be positive, got {p}")
    return TestFunction(k=1, terms=(Term(1.0, (float(p),), (True,)),), label=f"|x|^{p:g}")

