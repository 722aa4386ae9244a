"""Key/mask term compilation and brute-force precomputation of cost tensors.

Every tensor site (qubit or qudit) owns a contiguous bit field inside a
64-bit key. A qudit level ``l`` is stored as plain binary in its field. A
term ``(key, mask, value)`` contributes ``value`` to every configuration whose
packed key satisfies ``packed & mask == key``.

Tensors are numpy arrays in C order with shape ``layout.shape``; qubit axes
come first, qudit axes last.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from math import ceil, log2, prod
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .problem import ConstrainedProblem, LinearFunction

__all__ = [
    "Site",
    "Layout",
    "TermSet",
    "poly_from_linear",
    "poly_add",
    "poly_mul",
    "poly_square",
    "poly_scale",
    "poly_evaluate",
    "compile_terms",
    "packed_keys",
    "bruteforce",
    "apply_step_penalties",
    "evaluation_cost",
    "violation_count",
    "tensor_of",
    "save_tensor",
    "load_tensor",
]

# A polynomial over binary variables: sorted variable tuple -> coefficient.
# Monomials are multilinear since x**2 == x.
Poly = dict


def poly_from_linear(f: LinearFunction) -> Poly:
    out: Poly = {}
    if f.constant:
        out[()] = f.constant
    for i, c in f.coefficients.items():
        out[(i,)] = c
    return out


def poly_add(*polys: Mapping) -> Poly:
    out: Poly = {}
    for p in polys:
        for mono, c in p.items():
            out[mono] = out.get(mono, 0) + c
    return {m: c for m, c in out.items() if c != 0}


def poly_scale(p: Mapping, s: float) -> Poly:
    return {m: c * s for m, c in p.items() if c * s != 0}


def poly_mul(a: Mapping, b: Mapping) -> Poly:
    out: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            mono = tuple(sorted(set(ma) | set(mb)))
            out[mono] = out.get(mono, 0) + ca * cb
    return {m: c for m, c in out.items() if c != 0}


def poly_square(p: Mapping) -> Poly:
    return poly_mul(p, p)


def poly_evaluate(p: Mapping, x) -> float:
    return sum(c * all(x[v] for v in mono) for mono, c in p.items())


@dataclass(frozen=True)
class Site:
    """A tensor leg. Qubits carry one variable; qudit level ``l`` sets ``variables[l]``."""

    dim: int
    variables: tuple[int, ...]
    slack: bool = False

    @property
    def is_qudit(self) -> bool:
        return len(self.variables) > 1

    @property
    def width(self) -> int:
        return max(1, ceil(log2(self.dim)))


@dataclass(frozen=True)
class Layout:
    sites: tuple[Site, ...]

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if self.total_bits > 64:
            raise ValueError(f"layout needs {self.total_bits} key bits, at most 64 are supported")
        seen = set()
        for s in self.sites:
            if s.is_qudit and len(s.variables) != s.dim:
                raise ValueError("qudit sites need one variable per level")
            for v in s.variables:
                if v in seen:
                    raise ValueError(f"variable {v} appears on two sites")
                seen.add(v)

    @classmethod
    def from_dims(cls, dims: Sequence[int]) -> "Layout":
        """Anonymous layout whose variables are numbered site by site."""
        sites, nxt = [], 0
        for d in dims:
            n = 1 if d == 2 else d
            sites.append(Site(d, tuple(range(nxt, nxt + n))))
            nxt += n
        return cls(tuple(sites))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sites)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @cached_property
    def starts(self) -> tuple[int, ...]:
        out, pos = [], 0
        for s in self.sites:
            out.append(pos)
            pos += s.width
        return tuple(out)

    @property
    def total_bits(self) -> int:
        return sum(s.width for s in self.sites)

    @cached_property
    def literals(self) -> dict[int, tuple[int, int]]:
        """Map variable -> (site index, level at which the variable is 1)."""
        out = {}
        for a, s in enumerate(self.sites):
            if s.is_qudit:
                for l, v in enumerate(s.variables):
                    out[v] = (a, l)
            else:
                out[s.variables[0]] = (a, 1)
        return out

    @property
    def qubit_axes(self) -> tuple[int, ...]:
        return tuple(a for a, s in enumerate(self.sites) if not s.is_qudit)

    @property
    def qudit_axes(self) -> tuple[int, ...]:
        return tuple(a for a, s in enumerate(self.sites) if s.is_qudit)

    @property
    def slack_axes(self) -> tuple[int, ...]:
        return tuple(a for a, s in enumerate(self.sites) if s.slack)

    def digest(self) -> bytes:
        return hashlib.sha256(repr(self.sites).encode()).digest()

    def site_poly(self, poly: Mapping) -> dict:
        """Rewrite a variable polynomial as a polynomial over (site, level) literals.

        Monomials asking two levels of one qudit at once are identically
        zero on this layout and are dropped.
        """
        out: dict = {}
        for mono, c in poly.items():
            lits = {}
            dead = False
            for v in mono:
                if v not in self.literals:
                    raise KeyError(f"variable {v} is not placed on any site")
                a, l = self.literals[v]
                if lits.get(a, l) != l:
                    dead = True
                    break
                lits[a] = l
            if dead:
                continue
            key = tuple(sorted(lits.items()))
            out[key] = out.get(key, 0) + c
        return {k: c for k, c in out.items() if c != 0}

    def decode(self, index: Sequence[int], n_vars: int) -> np.ndarray:
        """Assignment of the placed variables for one tensor multi-index."""
        x = np.zeros(n_vars, dtype=np.int8)
        for a, i in enumerate(index):
            s = self.sites[a]
            if s.is_qudit:
                x[s.variables[i]] = 1
            elif s.variables[0] < n_vars:
                x[s.variables[0]] = i
        return x


class TermSet(NamedTuple):
    keys: np.ndarray
    masks: np.ndarray
    values: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.values)

    def as_tuples(self) -> set:
        return {(int(k), int(m), float(v)) for k, m, v in zip(self.keys, self.masks, self.values)}


def compile_terms(cost: Mapping, layout: Layout) -> TermSet:
    """Compile a polynomial over ``(site, level)`` literals into key/mask terms.

    A qubit literal must use level 1. Qudit literals select one level and
    mask the whole bit field of that qudit.
    """
    acc: dict[tuple[int, int], float] = {}
    for mono, value in cost.items():
        key = mask = 0
        used = set()
        for a, l in mono:
            site = layout.sites[a]
            if a in used:
                raise ValueError(f"monomial touches site {a} twice")
            used.add(a)
            if not 0 <= l < site.dim:
                raise ValueError(f"level {l} out of range for site {a} with dimension {site.dim}")
            start = layout.starts[a]
            field = (1 << site.width) - 1
            if site.is_qudit:
                key |= l << start
                mask |= field << start
            else:
                if l == 0:
                    raise ValueError("qubit literals must use level 1")
                key |= 1 << start
                mask |= 1 << start
        acc[(key, mask)] = acc.get((key, mask), 0.0) + float(value)
    items = [(k, m, v) for (k, m), v in acc.items() if v != 0]
    if not items:
        empty = np.zeros(0, dtype=np.uint64)
        return TermSet(empty, empty.copy(), np.zeros(0))
    k, m, v = zip(*items)
    return TermSet(np.array(k, dtype=np.uint64), np.array(m, dtype=np.uint64), np.array(v, dtype=float))


def packed_keys(layout: Layout, shape: Sequence[int] | None = None) -> np.ndarray:
    """Packed 64-bit key of every tensor entry, shaped like the tensor."""
    shape = tuple(layout.shape if shape is None else shape)
    if len(shape) != len(layout.sites):
        raise ValueError(f"shape {shape} does not match layout with {len(layout.sites)} sites")
    keys = np.zeros(shape, dtype=np.uint64)
    for a, (dim, start) in enumerate(zip(shape, layout.starts)):
        idx = np.arange(dim, dtype=np.uint64) << np.uint64(start)
        bshape = [1] * len(shape)
        bshape[a] = dim
        keys |= idx.reshape(bshape)
    return keys


def bruteforce(terms: TermSet, layout: Layout, shape: Sequence[int] | None = None, keys: np.ndarray | None = None) -> np.ndarray:
    """Sum the matching term values for every configuration of the layout.

    Terms are grouped by mask; within a group the matching key is found by
    binary search, so the cost is ``O(#masks * S * log #terms)``.
    """
    if shape is None:
        shape = layout.shape if keys is None else keys.shape
    shape = tuple(shape)
    if len(shape) != len(layout.sites) or any(d > s.dim for d, s in zip(shape, layout.sites)):
        raise ValueError(f"shape {shape} does not match layout {layout.shape}")
    if keys is None:
        keys = packed_keys(layout, shape)
    out = np.zeros(shape, dtype=float)
    if terms.n_terms == 0:
        return out
    for mask in np.unique(terms.masks):
        sel = terms.masks == mask
        # merge repeated keys so the binary search sees each once
        tk, inv = np.unique(terms.keys[sel], return_inverse=True)
        tv = np.bincount(inv.reshape(-1), weights=terms.values[sel], minlength=len(tk))
        if mask == 0:
            out += tv.sum()
            continue
        masked = keys & mask
        pos = np.searchsorted(tk, masked)
        pos = np.minimum(pos, len(tk) - 1)
        hit = tk[pos] == masked
        out += np.where(hit, tv[pos], 0.0)
    return out


def tensor_of(poly: Mapping, layout: Layout, keys: np.ndarray | None = None) -> np.ndarray:
    """Brute-force a variable polynomial (or LinearFunction) over a layout."""
    if isinstance(poly, LinearFunction):
        poly = poly_from_linear(poly)
    return bruteforce(compile_terms(layout.site_poly(poly), layout), layout, keys=keys)


def apply_step_penalties(cost: np.ndarray, constraints: Iterable[np.ndarray], rho: float) -> np.ndarray:
    """Add ``rho`` once for every brute-forced constraint tensor that is negative."""
    out = np.array(cost, dtype=float, copy=True)
    for g in constraints:
        out += rho * (np.asarray(g) < -0.5)
    return out


def violation_count(problem: ConstrainedProblem, layout: Layout, keys: np.ndarray | None = None, shape=None) -> np.ndarray:
    """Number of violated inequalities plus violated one-hot groups per entry.

    Groups living on a single qudit site are satisfied by construction.
    """
    if keys is None:
        keys = packed_keys(layout, shape)
    out = np.zeros(keys.shape, dtype=float)
    for g in problem.inequalities:
        out += tensor_of(g, layout, keys) < -0.5
    for group in problem.one_hot_groups:
        if _single_site(group, layout):
            continue
        s = tensor_of({(v,): 1 for v in group}, layout, keys)
        out += np.abs(s - 1) > 0.5
    return out


def evaluation_cost(problem: ConstrainedProblem, eta: float, layout: Layout, keys: np.ndarray | None = None) -> np.ndarray:
    """Objective plus ``eta`` per violated inequality and per violated one-hot group."""
    if keys is None:
        keys = packed_keys(layout)
    return tensor_of(problem.objective, layout, keys) + eta * violation_count(problem, layout, keys)


def _single_site(group, layout: Layout) -> bool:
    sites = {layout.literals[v][0] for v in group}
    return len(sites) == 1 and layout.sites[next(iter(sites))].is_qudit


_MAGIC = b"CQT1"
_DTYPES = {b"f": np.dtype("<f8"), b"c": np.dtype("<c16")}


def save_tensor(path, tensor: np.ndarray, layout: Layout | None = None) -> None:
    """Binary dump: magic, dtype code, ndim, dims, 32-byte layout digest, LE payload."""
    tensor = np.asarray(tensor)
    code = b"c" if np.iscomplexobj(tensor) else b"f"
    digest = layout.digest() if layout is not None else bytes(32)
    with open(path, "wb") as fh:
        fh.write(_MAGIC + code)
        fh.write(struct.pack("<I", tensor.ndim))
        fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
        fh.write(digest)
        fh.write(np.ascontiguousarray(tensor, dtype=_DTYPES[code]).tobytes())


def load_tensor(path, layout: Layout | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(5)
        if head[:4] != _MAGIC:
            raise ValueError(f"{path}: not a tensor dump")
        dtype = _DTYPES[head[4:5]]
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        digest = fh.read(32)
        if layout is not None and digest != layout.digest():
            raise ValueError(f"{path}: layout digest mismatch")
        data = np.frombuffer(fh.read(), dtype=dtype)
    return data.reshape(shape).copy()
