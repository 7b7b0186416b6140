"""Source coding with a helper known at both terminals, and its list-coding twin.

A helper-at-both-sides code has a helper map phi: Y^n -> [L], a transmitter
map f(x^n, l) -> [M] and a decoder g(m, l) -> x^n; its error is
P{g(f(X^n, l), l) != X^n} with l = phi(Y^n).  An IB list code has an encoder
Y^n -> [L] and per-index lists of at most M sequences; its error is
P{X^n not on the list}, which is the excess probability of the uniform
estimate at level (1/n) log M.  The two maps below turn one kind of code into
the other without increasing the error, and after replacing each side's
decoder by its optimal one the error probabilities coincide.

Labels are 0-based; sequences are indices in lexicographic order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .coding import _floor_exp, _pair_mass, brute_force_optimal_pe, optimal_lists
from .prob import SizeCapError
from .exponents import (ProblemSpec, SolverConfig, SourceModel, error_exponent,
                        strong_converse_exponent)


@dataclass(frozen=True)
class HelperBothSidesCode:
    n: int
    helper_encoder: np.ndarray          # [|Y|^n] -> helper index
    tx_encoder: np.ndarray              # [|X|^n, L] -> message
    decoder: np.ndarray                 # [M, L] -> x index

    def __post_init__(self):
        for name in ("helper_encoder", "tx_encoder", "decoder"):
            a = np.array(getattr(self, name), dtype=np.int64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        m, l = self.decoder.shape
        if self.tx_encoder.shape[1] != l:
            raise ValueError("transmitter table and decoder disagree on the helper size")
        if self.helper_encoder.min() < 0 or self.helper_encoder.max() >= l:
            raise ValueError("helper index outside the decoder table")
        if self.tx_encoder.min() < 0 or self.tx_encoder.max() >= m:
            raise ValueError("message outside the decoder table")

    @property
    def num_messages(self) -> int:
        return self.decoder.shape[0]

    @property
    def helper_size(self) -> int:
        return self.decoder.shape[1]

    def to_json_obj(self) -> dict:
        return {"n": self.n, "helper_encoder": self.helper_encoder.tolist(),
                "tx_encoder": self.tx_encoder.tolist(), "decoder": self.decoder.tolist()}


@dataclass(frozen=True)
class IbCode:
    n: int
    encoder: np.ndarray                 # [|Y|^n] -> index
    lists: tuple[tuple[int, ...], ...]  # per index, x indices
    list_size: int                      # largest list allowed
    x_size: int                         # |X|^n

    def __post_init__(self):
        enc = np.array(self.encoder, dtype=np.int64)
        enc.setflags(write=False)
        object.__setattr__(self, "encoder", enc)
        lists = tuple(tuple(sorted(set(int(v) for v in lst))) for lst in self.lists)
        object.__setattr__(self, "lists", lists)
        if any(len(lst) == 0 for lst in lists):
            raise ValueError("lists must be nonempty")
        if any(len(lst) > self.list_size for lst in lists):
            raise ValueError("list longer than the allowed size")
        if enc.min() < 0 or enc.max() >= len(lists):
            raise ValueError("encoder index without a list")
        if any(x < 0 or x >= self.x_size for lst in lists for x in lst):
            raise ValueError("list entry outside X^n")

    def to_json_obj(self) -> dict:
        return {"n": self.n, "encoder": self.encoder.tolist(),
                "lists": [list(lst) for lst in self.lists], "list_size": self.list_size,
                "x_size": self.x_size}


# -- error probabilities ------------------------------------------------------

def helper_code_error(code: HelperBothSidesCode, model: SourceModel,
                      mass: np.ndarray | None = None) -> float:
    mass = _pair_mass(model, code.n) if mass is None else mass
    nx = mass.shape[0]
    l = code.helper_encoder[None, :]
    x = np.arange(nx)[:, None]
    out = code.decoder[code.tx_encoder[x, l], l]
    return float(mass[out != x].sum())


def ib_code_error(code: IbCode, model: SourceModel, mass: np.ndarray | None = None) -> float:
    mass = _pair_mass(model, code.n) if mass is None else mass
    member = np.zeros((len(code.lists), mass.shape[0]), dtype=bool)
    for i, lst in enumerate(code.lists):
        member[i, list(lst)] = True
    hit = member[code.encoder[None, :], np.arange(mass.shape[0])[:, None]]
    return float(mass[~hit].sum())


# -- transformations ----------------------------------------------------------

def helper_to_ib(code: HelperBothSidesCode) -> IbCode:
    """List for helper index l: every sequence the decoder can output under l."""
    lists = tuple(tuple(np.unique(code.decoder[:, l])) for l in range(code.helper_size))
    return IbCode(code.n, code.helper_encoder, lists, code.num_messages, code.tx_encoder.shape[0])


def ib_to_helper(code: IbCode) -> HelperBothSidesCode:
    """Number each list; the transmitter sends the position of x^n on the list
    (0 when absent, which is an error either way) and the decoder reads it back."""
    nl, m = len(code.lists), code.list_size
    decoder = np.zeros((m, nl), dtype=np.int64)
    tx = np.zeros((code.x_size, nl), dtype=np.int64)
    for l, lst in enumerate(code.lists):
        for k in range(m):
            decoder[k, l] = lst[k] if k < len(lst) else lst[0]
        for k, x in enumerate(lst):
            tx[x, l] = k
    return HelperBothSidesCode(code.n, code.encoder, tx, decoder)


def embed_wak_code(helper_encoder, tx_encoder_x, decoder, n: int) -> HelperBothSidesCode:
    """A code whose transmitter ignores the helper, as a helper-at-both-sides code."""
    dec = np.asarray(decoder)
    tx = np.repeat(np.asarray(tx_encoder_x)[:, None], dec.shape[1], axis=1)
    return HelperBothSidesCode(n, helper_encoder, tx, dec)


def optimal_ib_code(model: SourceModel, n: int, encoder, list_size: int,
                    num_indices: int | None = None, mass=None) -> IbCode:
    """Lists of the ``list_size`` most likely x^n given each index."""
    enc = np.asarray(encoder, dtype=np.int64)
    k = num_indices or int(enc.max()) + 1
    opt = optimal_lists(enc, model, n, list_size, mass)
    lists = tuple(tuple(opt[l][0]) if l in opt else (0,) for l in range(k))
    return IbCode(n, enc, lists, list_size, model.nx**n)


def optimal_helper_code(model: SourceModel, n: int, helper_encoder, num_messages: int,
                        num_indices: int | None = None, mass=None) -> HelperBothSidesCode:
    return ib_to_helper(optimal_ib_code(model, n, helper_encoder, num_messages,
                                        num_indices, mass))


# -- verification -------------------------------------------------------------

@dataclass
class EquivalenceReport:
    n: int
    messages: int
    helper_size: int
    codes_checked: int
    max_discrepancy: float                  # over the equalities that must hold exactly
    max_violation: float                    # over the inequalities (positive = violated)
    min_error_ib: float
    min_error_helper: float
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.max_discrepancy <= 1e-12 and self.max_violation <= 1e-12


def budgets(n: int, R: float, B: float) -> tuple[int, int]:
    """(messages = list size, helper indices): floor(e^{nR}) and ceil(e^{nB})."""
    m = max(_floor_exp(n * R), 1)
    l = max(1, math.ceil(math.exp(n * B) - 1e-9))
    return m, l


def _random_helper_code(rng, n, nx_n, ny_n, m, l) -> HelperBothSidesCode:
    return HelperBothSidesCode(n, rng.integers(0, l, ny_n), rng.integers(0, m, (nx_n, l)),
                               rng.integers(0, nx_n, (m, l)))


def _random_ib_code(rng, n, nx_n, ny_n, m, l) -> IbCode:
    lists = tuple(tuple(rng.choice(nx_n, size=rng.integers(1, min(m, nx_n) + 1), replace=False))
                  for _ in range(l))
    return IbCode(n, rng.integers(0, l, ny_n), lists, m, nx_n)


def _all_helper_codes(nx_n, ny_n, m, l):
    for phi in itertools.product(range(l), repeat=ny_n):
        for tx in itertools.product(range(m), repeat=nx_n * l):
            for dec in itertools.product(range(nx_n), repeat=m * l):
                yield (np.array(phi), np.array(tx).reshape(nx_n, l), np.array(dec).reshape(m, l))


def verify_equivalence(model: SourceModel, n: int, R: float, B: float, trials: int = 200,
                       seed: int = 0, enumerate_all: bool | None = None,
                       max_codes: int = 200_000) -> EquivalenceReport:
    """Check the code transformations on exhaustive or random codes.

    For each helper code: the derived IB code is no worse, and converting it
    back gives exactly its error.  For each IB code: the derived helper code has
    exactly its error.  For each helper map: the optimal IB error equals the
    error of the optimal helper code, and (when enumerating) the minimum over
    all transmitter/decoder pairs.
    """
    nx_n, ny_n = model.nx**n, model.ny**n
    if nx_n * ny_n > 10**6:
        raise SizeCapError("|X|^n |Y|^n exceeds 10^6")
    m, l = budgets(n, R, B)
    mass = _pair_mass(model, n)
    rng = np.random.default_rng(seed)
    space = l**ny_n * m ** (nx_n * l) * nx_n ** (m * l)
    if enumerate_all is None:
        enumerate_all = space <= max_codes
    disc, viol, checked = 0.0, 0.0, 0
    best_helper: dict[tuple, float] = {}

    if enumerate_all:
        if space > max_codes:
            raise SizeCapError(f"code space of size {space} exceeds max_codes")
        helper_iter = (HelperBothSidesCode(n, *c) for c in _all_helper_codes(nx_n, ny_n, m, l))
    else:
        helper_iter = (_random_helper_code(rng, n, nx_n, ny_n, m, l) for _ in range(trials))
    for code in helper_iter:
        lam = helper_code_error(code, model, mass)
        ib = helper_to_ib(code)
        e_ib = ib_code_error(ib, model, mass)
        viol = max(viol, e_ib - lam)
        back = ib_to_helper(ib)
        disc = max(disc, abs(helper_code_error(back, model, mass) - e_ib))
        key = tuple(code.helper_encoder.tolist())
        best_helper[key] = min(best_helper.get(key, math.inf), lam)
        checked += 1
    for _ in range(trials):
        ib = _random_ib_code(rng, n, nx_n, ny_n, m, l)
        e_ib = ib_code_error(ib, model, mass)
        disc = max(disc, abs(helper_code_error(ib_to_helper(ib), model, mass) - e_ib))
        checked += 1

    # optimal-decoder normalization per helper map
    min_ib = min_helper = math.inf
    for key, lam_best in best_helper.items():
        enc = np.asarray(key)
        opt_ib = optimal_ib_code(model, n, enc, m, l, mass)
        e_ib = ib_code_error(opt_ib, model, mass)
        e_h = helper_code_error(ib_to_helper(opt_ib), model, mass)
        disc = max(disc, abs(e_ib - e_h))
        viol = max(viol, e_ib - lam_best)          # optimal lists never lose
        if enumerate_all:
            disc = max(disc, abs(e_ib - lam_best))
        min_ib, min_helper = min(min_ib, e_ib), min(min_helper, e_h)
    details = {"enumerated": enumerate_all, "helper_maps": len(best_helper)}
    if ny_n <= 8 and l <= 4:
        bf = brute_force_optimal_pe(model, n, B, math.log(m) / n, messages=l)
        details["brute_force_optimal"] = bf
        if enumerate_all:
            disc = max(disc, abs(bf - min_ib))
        else:
            viol = max(viol, bf - min_ib)
    return EquivalenceReport(n, m, l, checked, disc, viol, min_ib, min_helper, details)


# -- exponent bounds for the helper problem -----------------------------------

def helper_error_exponent_bound(model: SourceModel, R: float, B: float,
                                cfg: SolverConfig | None = None, u_size: int | None = None):
    """Upper bound on the error exponent of the one-sided helper problem at
    transmission rate R and helper rate B: the list-coding exponent with
    description rate B and list rate R."""
    return error_exponent(model, ProblemSpec(R=B, delta=R, u_size=u_size), cfg)


def helper_strong_converse_exponent(model: SourceModel, R: float, B: float,
                                    cfg: SolverConfig | None = None, u_size: int | None = None):
    """Strong converse exponent of the helper problem (same function as the
    list-coding one with the rates exchanged)."""
    return strong_converse_exponent(model, ProblemSpec(R=B, delta=R, u_size=u_size), cfg)
