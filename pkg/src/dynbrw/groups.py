"""Cayley-graph families, step laws and exact n-step distributions.

Three families are supported:

* ``LatticeZd(d)``  -- elements are integer tuples of length ``d``.
* ``FreeGroup(k)``  -- elements are reduced words over ``2k`` letters; letter
  ``2i`` is the i-th generator and ``2i+1`` its inverse (``i ^ 1``).
* ``HomTree(degree)`` -- the ``degree``-regular tree, realised as the Cayley
  graph of the free product of ``degree`` copies of Z/2.  Every letter is an
  involution, so a reduced word is one with no two equal adjacent letters.

Probabilities are float64 throughout; "exact" means exact up to rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .rng import RandomStream, as_generator

__all__ = [
    "LatticeZd",
    "FreeGroup",
    "HomTree",
    "GroupFamily",
    "Element",
    "StepLaw",
    "NStepDistribution",
    "DepthCapError",
    "DEFAULT_DEPTH_CAP",
    "identity",
    "multiply",
    "inverse",
    "format_element",
    "parse_element",
    "parse_family",
    "sample_step",
    "n_step_distribution",
    "convolve",
    "return_probability",
    "return_probabilities",
    "log_return_probabilities",
    "radial_distribution",
    "radial_log_return_probabilities",
]

Element = tuple  # tuple[int, ...] for every family

DEFAULT_DEPTH_CAP = 18


class DepthCapError(ValueError):
    """Requested step count exceeds the cap for exponential-support walks."""


@dataclass(frozen=True)
class LatticeZd:
    d: int

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError(f"lattice dimension must be >= 1, got {self.d}")

    def identity(self) -> Element:
        return (0,) * self.d

    def is_identity(self, a: Element) -> bool:
        return not any(a)

    def validate(self, a) -> Element:
        try:
            a = tuple(int(x) for x in a)
        except TypeError:
            raise ValueError(f"{a!r} is not a vector of Z^{self.d}") from None
        if len(a) != self.d:
            raise ValueError(f"{a!r} has length {len(a)}, expected a vector of Z^{self.d}")
        return a

    def multiply(self, a: Element, b: Element) -> Element:
        return tuple(x + y for x, y in zip(a, b))

    def inverse(self, a: Element) -> Element:
        return tuple(-x for x in a)

    def generators(self) -> list[Element]:
        """Unit vectors and their negatives, in the order +e1, -e1, +e2, ..."""
        out = []
        for i in range(self.d):
            for s in (1, -1):
                v = [0] * self.d
                v[i] = s
                out.append(tuple(v))
        return out

    def length(self, a: Element) -> int:
        return sum(abs(x) for x in a)

    def format(self, a: Element) -> str:
        return "(" + ",".join(str(x) for x in a) + ")"

    def parse(self, text: str) -> Element:
        body = text.strip()
        if not (body.startswith("(") and body.endswith(")")):
            raise ValueError(f"lattice element must look like '(1,-2)', got {text!r}")
        parts = [p for p in body[1:-1].split(",") if p.strip()]
        return self.validate(int(p) for p in parts)

    def __str__(self):
        return f"Z^{self.d}"


class _WordFamily:
    """Shared machinery for groups whose elements are reduced words."""

    n_letters: int

    def letter_inverse(self, i: int) -> int:
        raise NotImplementedError

    @property
    def degree(self) -> int:
        return self.n_letters

    def identity(self) -> Element:
        return ()

    def is_identity(self, a: Element) -> bool:
        return len(a) == 0

    def validate(self, a) -> Element:
        try:
            a = tuple(int(x) for x in a)
        except TypeError:
            raise ValueError(f"{a!r} is not a word over {self}") from None
        for x in a:
            if not 0 <= x < self.n_letters:
                raise ValueError(f"letter {x} out of range for {self} (word {a!r})")
        for x, y in zip(a, a[1:]):
            if y == self.letter_inverse(x):
                raise ValueError(f"word {a!r} is not reduced in {self}")
        return a

    def reduce(self, letters: Sequence[int]) -> Element:
        out: list[int] = []
        for x in letters:
            if out and out[-1] == self.letter_inverse(x):
                out.pop()
            else:
                out.append(x)
        return tuple(out)

    def multiply(self, a: Element, b: Element) -> Element:
        i = 0
        n = min(len(a), len(b))
        while i < n and a[len(a) - 1 - i] == self.letter_inverse(b[i]):
            i += 1
        return a[: len(a) - i] + b[i:]

    def inverse(self, a: Element) -> Element:
        return tuple(self.letter_inverse(x) for x in reversed(a))

    def generators(self) -> list[Element]:
        return [(i,) for i in range(self.n_letters)]

    def length(self, a: Element) -> int:
        return len(a)

    def sphere_size(self, r: int) -> int:
        if r == 0:
            return 1
        q = self.n_letters
        return q * (q - 1) ** (r - 1)

    def sphere(self, r: int) -> Iterator[Element]:
        """All reduced words of length exactly ``r``."""
        if r == 0:
            yield ()
            return
        for w in self.sphere(r - 1):
            for x in range(self.n_letters):
                if w and w[-1] == self.letter_inverse(x):
                    continue
                yield w + (x,)


@dataclass(frozen=True)
class FreeGroup(_WordFamily):
    k: int

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError(f"free group rank must be >= 1, got {self.k}")
        if self.k > 26:
            raise ValueError("free group rank limited to 26 letters")

    @property
    def n_letters(self) -> int:
        return 2 * self.k

    def letter_inverse(self, i: int) -> int:
        return i ^ 1

    def format(self, a: Element) -> str:
        if not a:
            return "1"
        return "".join(chr(ord("a") + x // 2) + ("'" if x & 1 else "") for x in a)

    def parse(self, text: str) -> Element:
        text = text.strip()
        if text in ("", "1"):
            return ()
        if not re.fullmatch(r"([a-z]'?)+", text):
            raise ValueError(f"cannot parse {text!r} as a word over {self}")
        letters = []
        for m in re.finditer(r"([a-z])('?)", text):
            g = ord(m.group(1)) - ord("a")
            if g >= self.k:
                raise ValueError(f"letter {m.group(1)!r} not a generator of {self}")
            letters.append(2 * g + (1 if m.group(2) else 0))
        return self.reduce(letters)

    def __str__(self):
        return f"F_{self.k}"


@dataclass(frozen=True)
class HomTree(_WordFamily):
    q: int

    def __post_init__(self):
        if int(self.q) < 3:
            raise ValueError(f"homogeneous tree degree must be >= 3, got {self.q}")
        if self.q > 26:
            raise ValueError("tree degree limited to 26 letters")

    @property
    def n_letters(self) -> int:
        return self.q

    def letter_inverse(self, i: int) -> int:
        return i

    def format(self, a: Element) -> str:
        if not a:
            return "1"
        return "".join(chr(ord("a") + x) for x in a)

    def parse(self, text: str) -> Element:
        text = text.strip()
        if text in ("", "1"):
            return ()
        if not re.fullmatch(r"[a-z]+", text):
            raise ValueError(f"cannot parse {text!r} as a word over {self}")
        letters = [ord(c) - ord("a") for c in text]
        if max(letters) >= self.q:
            raise ValueError(f"{text!r} uses letters beyond {self}")
        return self.reduce(letters)

    def __str__(self):
        return f"T_{self.q}"


GroupFamily = Union[LatticeZd, FreeGroup, HomTree]


def parse_family(text: str) -> GroupFamily:
    """Parse ``Z^d`` / ``Z`` / ``F_k`` / ``T_q`` (also ``Z2``, ``F2``, ``T3``)."""
    t = text.strip().replace(" ", "")
    m = re.fullmatch(r"Z(?:\^?(\d+))?", t)
    if m:
        return LatticeZd(int(m.group(1) or 1))
    m = re.fullmatch(r"F_?(\d+)", t)
    if m:
        return FreeGroup(int(m.group(1)))
    m = re.fullmatch(r"T_?(\d+)", t)
    if m:
        return HomTree(int(m.group(1)))
    raise ValueError(f"unknown group family {text!r}; expected Z^d, F_k or T_q")


def identity(family: GroupFamily) -> Element:
    return family.identity()


def multiply(family: GroupFamily, a: Element, b: Element) -> Element:
    return family.multiply(family.validate(a), family.validate(b))


def inverse(family: GroupFamily, a: Element) -> Element:
    return family.inverse(family.validate(a))


def format_element(family: GroupFamily, a: Element) -> str:
    return family.format(a)


def parse_element(family: GroupFamily, text: str) -> Element:
    return family.parse(text)


# ---------------------------------------------------------------------------
# step laws


@dataclass(frozen=True, eq=False)
class StepLaw:
    """Finite-support probability measure on a generating set of ``family``.

    ``generating=True`` declares that the support generates the group even if
    it does not contain every generator and inverse; it is accepted as-is.
    """

    family: GroupFamily
    support: tuple
    probs: tuple
    generating: bool = False
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fam = self.family
        support = tuple(fam.validate(s) for s in self.support)
        probs = tuple(float(p) for p in self.probs)
        if len(support) == 0 or len(support) != len(probs):
            raise ValueError("step law needs a nonempty support with one probability per element")
        if len(set(support)) != len(support):
            raise ValueError("step law support contains duplicates")
        if any(not (p > 0) for p in probs):
            raise ValueError(f"step law probabilities must be strictly positive, got {probs}")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"step law probabilities sum to {math.fsum(probs)!r}, not 1")
        if not self.generating:
            missing = [g for g in fam.generators() if g not in support]
            if missing:
                raise ValueError(
                    f"support does not contain generators {[fam.format(g) for g in missing]} of {fam}; "
                    "pass generating=True to declare a generating subset"
                )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def simple(cls, family: GroupFamily) -> "StepLaw":
        """Simple random walk: uniform on generators and inverses."""
        gens = family.generators()
        return cls(family, tuple(gens), tuple([1.0 / len(gens)] * len(gens)))

    @classmethod
    def from_mapping(cls, family: GroupFamily, mapping: Mapping, generating: bool = False) -> "StepLaw":
        items = list(mapping.items())
        support = [family.parse(k) if isinstance(k, str) else k for k, _ in items]
        return cls(family, tuple(support), tuple(p for _, p in items), generating=generating)

    def __len__(self):
        return len(self.support)

    @property
    def max_length(self) -> int:
        return max(self.family.length(s) for s in self.support)

    @property
    def is_radial(self) -> bool:
        """Isotropic nearest-neighbour law on a tree-like family."""
        fam = self.family
        if isinstance(fam, LatticeZd):
            return False
        if len(self.support) != fam.n_letters or any(len(s) != 1 for s in self.support):
            return False
        return max(self.probs) - min(self.probs) <= 1e-12

    @property
    def vectors(self) -> np.ndarray:
        """Support as an (S, d) int array; lattices only."""
        if not isinstance(self.family, LatticeZd):
            raise TypeError(f"{self.family} elements are words, not vectors")
        return np.array(self.support, dtype=np.int64).reshape(len(self.support), self.family.d)

    def sample_indices(self, gen: np.random.Generator, size) -> np.ndarray:
        u = gen.random(size)
        return np.searchsorted(self._cum, u, side="right").astype(np.int64)

    def describe(self) -> dict:
        return {self.family.format(s): p for s, p in zip(self.support, self.probs)}


def sample_step(law: StepLaw, rng: Union[RandomStream, np.random.Generator]) -> Element:
    gen = as_generator(rng)
    return law.support[int(law.sample_indices(gen, None))]


# ---------------------------------------------------------------------------
# exact n-step distributions


@dataclass
class NStepDistribution:
    """Law of ``S_n`` started at the identity.

    For radial (isotropic tree) walks ``probs`` is keyed by distance from the
    identity instead of by element; :meth:`mass` hides the difference.
    """

    family: GroupFamily
    n: int
    probs: dict
    radial: bool = False

    def mass(self, x: Element) -> float:
        if self.radial:
            r = len(x)
            return self.probs.get(r, 0.0) / self.family.sphere_size(r)
        return self.probs.get(tuple(x), 0.0)

    def total(self) -> float:
        return math.fsum(self.probs.values())

    @property
    def return_probability(self) -> float:
        return self.mass(self.family.identity())

    def items(self):
        """Elementwise (element, probability) pairs; expands radial classes."""
        if not self.radial:
            yield from self.probs.items()
            return
        for r, p in self.probs.items():
            share = p / self.family.sphere_size(r)
            for w in self.family.sphere(r):
                yield w, share

    def expand(self) -> "NStepDistribution":
        return NStepDistribution(self.family, self.n, dict(self.items()), radial=False)


def _dense_lattice(law: StepLaw, n: int) -> tuple[np.ndarray, int]:
    d = law.family.d
    R = n * law.max_length
    grid = np.zeros((2 * R + 1,) * d)
    grid[(R,) * d] = 1.0
    vecs = law.vectors
    for _ in range(n):
        grid = _lattice_step(grid, vecs, law.probs)
    return grid, R


def _lattice_step(grid: np.ndarray, vecs: np.ndarray, probs) -> np.ndarray:
    out = np.zeros_like(grid)
    size = grid.shape[0]
    for v, p in zip(vecs, probs):
        src, dst = [], []
        for s in v:
            s = int(s)
            if s >= 0:
                src.append(slice(0, size - s))
                dst.append(slice(s, size))
            else:
                src.append(slice(-s, size))
                dst.append(slice(0, size + s))
        out[tuple(dst)] += p * grid[tuple(src)]
    return out


def _word_convolution(law: StepLaw, n: int) -> dict:
    fam = law.family
    dist = {fam.identity(): 1.0}
    for _ in range(n):
        new: dict = {}
        for x, px in dist.items():
            for s, ps in zip(law.support, law.probs):
                y = fam.multiply(x, s)
                new[y] = new.get(y, 0.0) + px * ps
        dist = new
    return dist


def radial_distribution(degree: int, n: int) -> np.ndarray:
    """Distance-from-identity law after ``n`` steps of SRW on the ``degree``-regular tree."""
    v = np.zeros(n + 1)
    v[0] = 1.0
    out_p = np.full(n + 1, (degree - 1) / degree)
    out_p[0] = 1.0
    in_p = 1.0 / degree
    for _ in range(n):
        new = np.zeros_like(v)
        new[1:] += v[:-1] * out_p[:-1]
        new[:-1] += v[1:] * in_p
        v = new
    return v


def radial_log_return_probabilities(degree: int, n_max: int) -> np.ndarray:
    """``log p^(j)(e,e)`` for ``j = 0..n_max`` via the radial birth-death chain.

    Mass that cannot come back to the origin by step ``n_max`` is dropped and
    the remainder rescaled, so nothing underflows even for n_max ~ 1e4.
    """
    v = np.zeros(n_max // 2 + 2)
    v[0] = 1.0
    out_p = np.full(v.size, (degree - 1) / degree)
    out_p[0] = 1.0
    in_p = 1.0 / degree
    log_scale = 0.0
    out = np.full(n_max + 1, -np.inf)
    out[0] = 0.0
    with np.errstate(divide="ignore"):
        for j in range(1, n_max + 1):
            new = np.zeros_like(v)
            new[1:] += v[:-1] * out_p[:-1]
            new[:-1] += v[1:] * in_p
            reach = n_max - j
            if reach + 1 < new.size:
                new[reach + 1 :] = 0.0
            c = new.sum()
            if c <= 0:
                break
            v = new / c
            log_scale += math.log(c)
            out[j] = math.log(v[0]) + log_scale if v[0] > 0 else -np.inf
    return out


def n_step_distribution(
    law: StepLaw, n: int, method: str = "auto", depth_cap: int = DEFAULT_DEPTH_CAP
) -> NStepDistribution:
    """Exact law of ``S_n`` started at e, by iterated convolution.

    ``method`` is ``"auto"``, ``"convolution"`` or ``"radial"``.  Auto picks the
    radial reduction for isotropic nearest-neighbour walks on trees and free
    groups, which lifts the depth cap.
    """
    if n < 0:
        raise ValueError(f"step count must be >= 0, got {n}")
    fam = law.family
    if method not in ("auto", "convolution", "radial"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(fam, LatticeZd):
        if method == "radial":
            raise ValueError("radial reduction only applies to tree-like families")
        grid, R = _dense_lattice(law, n)
        probs = {}
        for idx in zip(*np.nonzero(grid)):
            probs[tuple(int(i) - R for i in idx)] = float(grid[idx])
        return NStepDistribution(fam, n, probs)
    if method == "radial" or (method == "auto" and law.is_radial):
        if not law.is_radial:
            raise ValueError("radial reduction needs the isotropic nearest-neighbour law")
        v = radial_distribution(fam.degree, n)
        return NStepDistribution(fam, n, {r: float(p) for r, p in enumerate(v) if p > 0}, radial=True)
    if n > depth_cap:
        raise DepthCapError(
            f"n={n} exceeds depth cap {depth_cap} for non-radial walk on {fam}; support grows exponentially"
        )
    return NStepDistribution(fam, n, _word_convolution(law, n))


def convolve(a: NStepDistribution, b: NStepDistribution) -> NStepDistribution:
    """Law of the product of independent samples from ``a`` and ``b``."""
    if a.family != b.family:
        raise ValueError(f"cannot convolve distributions on {a.family} and {b.family}")
    fam = a.family
    out: dict = {}
    bitems = list(b.items())
    for x, px in a.items():
        for y, py in bitems:
            z = fam.multiply(x, y)
            out[z] = out.get(z, 0.0) + px * py
    return NStepDistribution(fam, a.n + b.n, out)


def log_return_probabilities(
    law: StepLaw, n_max: int, depth_cap: int = DEFAULT_DEPTH_CAP, method: str = "auto"
) -> np.ndarray:
    """``log p^(j)(e,e)`` for ``j = 0..n_max`` (``-inf`` where the probability is 0).

    On word families ``method="convolution"`` forces the elementwise route even
    for radial laws (useful as a cross-check of the radial chain).
    """
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    if method not in ("auto", "convolution", "radial"):
        raise ValueError(f"unknown method {method!r}")
    fam = law.family
    if isinstance(fam, LatticeZd):
        return _lattice_log_returns(law, n_max)
    if method == "radial" and not law.is_radial:
        raise ValueError("radial reduction needs the isotropic nearest-neighbour law")
    if law.is_radial and method != "convolution":
        return radial_log_return_probabilities(fam.degree, n_max)
    # meet in the middle: p^(a+b)(e,e) = sum_x p^(a)(x) p^(b)(x^-1)
    half = (n_max + 1) // 2
    if half > depth_cap:
        raise DepthCapError(
            f"n_max={n_max} needs {half}-step distributions, beyond depth cap {depth_cap} on {fam}"
        )
    dists = [{fam.identity(): 1.0}]
    for _ in range(half):
        prev = dists[-1]
        new: dict = {}
        for x, px in prev.items():
            for s, ps in zip(law.support, law.probs):
                y = fam.multiply(x, s)
                new[y] = new.get(y, 0.0) + px * ps
        dists.append(new)
    out = np.full(n_max + 1, -np.inf)
    for j in range(n_max + 1):
        a, b = j // 2, j - j // 2
        da, db = dists[a], dists[b]
        p = math.fsum(px * db.get(fam.inverse(x), 0.0) for x, px in da.items())
        out[j] = math.log(p) if p > 0 else -np.inf
    return out


def _lattice_log_returns(law: StepLaw, n_max: int) -> np.ndarray:
    d = law.family.d
    L = law.max_length
    R = ((n_max + 1) // 2) * L
    size = 2 * R + 1
    grid = np.zeros((size,) * d)
    origin = (R,) * d
    grid[origin] = 1.0
    # Chebyshev distance of each cell to the origin, for dropping mass that cannot return
    axes = np.abs(np.arange(size) - R)
    cheb = axes
    for _ in range(d - 1):
        cheb = np.maximum.outer(cheb, axes)
    vecs = law.vectors
    max_inf = int(np.abs(vecs).max())
    out = np.full(n_max + 1, -np.inf)
    out[0] = 0.0
    log_scale = 0.0
    for j in range(1, n_max + 1):
        grid = _lattice_step(grid, vecs, law.probs)
        grid[cheb > (n_max - j) * max_inf] = 0.0
        c = grid.sum()
        if c <= 0:
            break
        grid /= c
        log_scale += math.log(c)
        p0 = grid[origin]
        out[j] = math.log(p0) + log_scale if p0 > 0 else -np.inf
    return out


def return_probabilities(
    law: StepLaw, n_max: int, depth_cap: int = DEFAULT_DEPTH_CAP, method: str = "auto"
) -> np.ndarray:
    return np.exp(log_return_probabilities(law, n_max, depth_cap, method))


def return_probability(
    law: StepLaw, n: int, depth_cap: int = DEFAULT_DEPTH_CAP, method: str = "auto"
) -> float:
    """``p^(n)(e,e)``, exact up to rounding."""
    if n < 0:
        raise ValueError(f"step count must be >= 0, got {n}")
    return float(return_probabilities(law, n, depth_cap, method)[n])
