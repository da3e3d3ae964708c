"""
Exact coefficient arithmetic for the domains polyflip computes in.

Domains are spelled the same way in every file format and on the command line:
``Z2`` (GF(2)), ``Zp:5`` (GF(p)), ``Z2^20`` (integers mod 2^k), ``Q`` and ``Z``.

Vectors and schemes carry *raw* canonical values (int or Fraction) together with
their CoeffDomain; the Coefficient wrapper is the checked, domain-tagged value
used at API boundaries.
"""
from dataclasses import dataclass
from fractions import Fraction

from sympy import isprime

GF2 = "GF2"
GFP = "GFp"
ZPOW2 = "Zpow2"
RATIONAL = "Q"
INTEGER = "Z"


class PolyflipError(Exception):
    """Base class for every error raised by polyflip."""


class DomainError(PolyflipError):
    pass


@dataclass(frozen=True)
class CoeffDomain:
    kind: str
    p: int = 0
    k: int = 0

    def __post_init__(self):
        if self.kind == GFP and (self.p < 3 or not isprime(self.p)):
            raise DomainError(f"GF(p) needs an odd prime p >= 3, got {self.p}")
        if self.kind == ZPOW2 and not 1 <= self.k <= 64:
            raise DomainError(f"Z2^k needs 1 <= k <= 64, got {self.k}")
        if self.kind not in (GF2, GFP, ZPOW2, RATIONAL, INTEGER):
            raise DomainError(f"Unknown domain kind {self.kind!r}")

    @classmethod
    def gf2(cls):
        return cls(GF2)

    @classmethod
    def gfp(cls, p):
        return cls(GFP, p=p)

    @classmethod
    def zpow2(cls, k):
        return cls(ZPOW2, k=k)

    @classmethod
    def rational(cls):
        return cls(RATIONAL)

    @classmethod
    def integer(cls):
        return cls(INTEGER)

    @classmethod
    def parse(cls, text):
        """Parse the textual domain syntax (``Z2``, ``Zp:5``, ``Z2^20``, ``Q``, ``Z``)."""
        text = text.strip()
        if text == "Z2":
            return cls.gf2()
        if text == "Q":
            return cls.rational()
        if text == "Z":
            return cls.integer()
        try:
            if text.startswith("Zp:"):
                return cls.gfp(int(text[3:]))
            if text.startswith("Z2^"):
                return cls.zpow2(int(text[3:]))
        except ValueError:
            pass
        raise DomainError(f"Unknown domain {text!r}")

    def __str__(self):
        if self.kind == GF2:
            return "Z2"
        if self.kind == GFP:
            return f"Zp:{self.p}"
        if self.kind == ZPOW2:
            return f"Z2^{self.k}"
        return self.kind

    @property
    def modulus(self):
        """The characteristic-defining modulus, or None for Q and Z."""
        if self.kind == GF2:
            return 2
        if self.kind == GFP:
            return self.p
        if self.kind == ZPOW2:
            return 1 << self.k
        return None

    @property
    def is_field(self):
        return self.kind in (GF2, GFP, RATIONAL)

    @property
    def is_finite(self):
        return self.modulus is not None

    @property
    def zero(self):
        return 0

    @property
    def one(self):
        return 1

    def normalize(self, value):
        """Bring an int or Fraction into canonical form for this domain."""
        mod = self.modulus
        if mod is not None:
            if isinstance(value, Fraction):
                if value.denominator == 1:
                    return value.numerator % mod
                return (value.numerator * self._raw_inverse(value.denominator % mod)) % mod
            return int(value) % mod
        if self.kind == RATIONAL:
            value = Fraction(value)
            return value.numerator if value.denominator == 1 else value
        if isinstance(value, Fraction):
            if value.denominator != 1:
                raise DomainError(f"{value} is not an integer")
            return value.numerator
        return int(value)

    def add(self, a, b):
        return self._reduce(a + b)

    def sub(self, a, b):
        return self._reduce(a - b)

    def mul(self, a, b):
        return self._reduce(a * b)

    def neg(self, a):
        return self._reduce(-a)

    def _reduce(self, value):
        mod = self.modulus
        if mod is not None:
            return value % mod
        if isinstance(value, Fraction) and value.denominator == 1:
            return value.numerator
        return value

    def is_unit(self, a):
        if a == 0:
            return False
        if self.kind == ZPOW2:
            return a % 2 == 1
        if self.kind == INTEGER:
            return a in (1, -1)
        return True

    def inv(self, a):
        """Multiplicative inverse of a raw value; DomainError when none exists."""
        if a == 0:
            raise DomainError(f"0 has no inverse in {self}")
        if self.kind == INTEGER:
            if a in (1, -1):
                return a
            raise DomainError(f"{a} has no inverse in Z")
        if self.kind == ZPOW2 and a % 2 == 0:
            raise DomainError(f"{a} is even and has no inverse in {self}")
        if self.kind == RATIONAL:
            return self.normalize(1 / Fraction(a))
        return self._raw_inverse(a)

    def _raw_inverse(self, a):
        try:
            return pow(a, -1, self.modulus)
        except ValueError:
            raise DomainError(f"{a} has no inverse in {self}") from None

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def power(self, a, e):
        return self.normalize(a ** e) if self.modulus is None else pow(a, e, self.modulus)

    def elements(self):
        """All elements of a finite domain in canonical order."""
        if not self.is_finite:
            raise DomainError(f"{self} is infinite")
        return range(self.modulus)

    def parse_value(self, text):
        """Parse a coefficient string: a decimal integer or ``p/q``."""
        try:
            if "/" in text:
                num, den = text.split("/")
                return self.normalize(Fraction(int(num), int(den)))
            return self.normalize(int(text))
        except (ValueError, ZeroDivisionError):
            raise DomainError(f"Malformed coefficient {text!r} for {self}") from None

    def format_value(self, a):
        return str(a)


@dataclass(frozen=True)
class Coefficient:
    domain: CoeffDomain
    value: object

    @classmethod
    def of(cls, domain, value):
        return cls(domain, domain.normalize(value))

    def _check(self, other):
        if not isinstance(other, Coefficient):
            other = Coefficient.of(self.domain, other)
        if other.domain != self.domain:
            raise DomainError(f"Cannot combine {self.domain} with {other.domain}")
        return other

    def __add__(self, other):
        return arith("add", self, other)

    def __sub__(self, other):
        return arith("sub", self, other)

    def __mul__(self, other):
        return arith("mul", self, other)

    def __neg__(self):
        return Coefficient(self.domain, self.domain.neg(self.value))

    def __bool__(self):
        return self.value != 0

    def __str__(self):
        return self.domain.format_value(self.value)


def arith(op, a, b=None):
    """Exact ``add``/``sub``/``mul``/``neg`` on two coefficients of one domain."""
    if op == "neg":
        return -a
    if op not in ("add", "sub", "mul"):
        raise DomainError(f"Unknown operation {op!r}")
    b = a._check(b)
    return Coefficient(a.domain, getattr(a.domain, op)(a.value, b.value))


def inverse(a):
    return Coefficient(a.domain, a.domain.inv(a.value))
