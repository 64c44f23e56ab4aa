"""Stochastic reaction network models with guarded mass-action propensities.

A channel's propensity is ``a_j(x) = c_j * g_j(x + shift_j)`` where ``g_j`` is a
product of per-species falling factorials (optionally gated by a threshold)
times a constant ``scale``.  The rate constants ``c_j`` live outside the model
so one model can be evaluated under many parameter guesses.

Every propensity is zero whenever the jump would leave the lattice, or the
shifted argument is off the lattice.  ``shift`` is zero for models read from
files; it is what lets :func:`reverse_model` return an ordinary
:class:`SRNModel`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PropensityFactor:
    """Falling factorial ``x_i (x_i - 1) ... (x_i - order + 1)``, optionally gated by ``x_i >= guard_min``."""

    species: int
    order: int = 1
    guard_min: int | None = None

    def value(self, x: Sequence[float]) -> float:
        z = x[self.species]
        if self.guard_min is not None and z < self.guard_min:
            return 0.0
        out = 1.0
        for k in range(self.order):
            out *= z - k
        return out


@dataclass(frozen=True)
class ReactionChannel:
    stoich: tuple[int, ...]
    factors: tuple[PropensityFactor, ...] = ()
    label: str = ""
    scale: float = 1.0
    shift: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "stoich", tuple(int(v) for v in self.stoich))
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.shift is not None:
            shift = tuple(int(v) for v in self.shift)
            object.__setattr__(self, "shift", shift if any(shift) else None)

    def argument_shift(self) -> tuple[int, ...]:
        return self.shift if self.shift is not None else (0,) * len(self.stoich)

    def monomial(self, x: Sequence[int]) -> float:
        """``g_j(x)`` including both lattice guards (effective monomial)."""
        s = self.argument_shift()
        z = [xi + si for xi, si in zip(x, s)]
        if min(z) < 0 or min(xi + vi for xi, vi in zip(x, self.stoich)) < 0:
            return 0.0
        # same multiplication order as the jitted kernel
        out = float(self.scale)
        for f in self.factors:
            w = z[f.species]
            if f.guard_min is not None and w < f.guard_min:
                return 0.0
            for k in range(f.order):
                out *= w - k
        return out


@dataclass(frozen=True)
class SRNModel:
    species_names: tuple[str, ...]
    channels: tuple[ReactionChannel, ...]
    name: str = ""
    #: optional generating parameters, carried for simulation only
    theta_true: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "species_names", tuple(self.species_names))
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.theta_true is not None:
            object.__setattr__(self, "theta_true", tuple(float(v) for v in self.theta_true))

    @property
    def d(self) -> int:
        return len(self.species_names)

    @property
    def J(self) -> int:
        return len(self.channels)

    @cached_property
    def stoich(self) -> np.ndarray:
        """Stoichiometric vectors as a ``(J, d)`` integer array (row j is nu_j)."""
        return np.array([c.stoich for c in self.channels], dtype=np.int64).reshape(self.J, self.d)

    @cached_property
    def compiled(self) -> "CompiledModel":
        return CompiledModel.from_model(self)

    @cached_property
    def reverse(self) -> "SRNModel":
        return reverse_model(self)

    def species_index(self, name_or_index: str | int) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            return int(name_or_index)
        return self.species_names.index(name_or_index)


@dataclass(frozen=True)
class CompiledModel:
    """Flat array form of a model, consumed by the jitted kernels."""

    stoich: np.ndarray  # (J, d) int64
    shift: np.ndarray  # (J, d) int64
    fac_species: np.ndarray  # (J, F) int64
    fac_order: np.ndarray  # (J, F) int64
    fac_guard: np.ndarray  # (J, F) int64, 0 means no gate
    n_factors: np.ndarray  # (J,) int64
    scale: np.ndarray  # (J,) float64

    @classmethod
    def from_model(cls, model: SRNModel) -> "CompiledModel":
        J, d = model.J, model.d
        F = max([len(c.factors) for c in model.channels] + [1])
        sp = np.zeros((J, F), dtype=np.int64)
        order = np.zeros((J, F), dtype=np.int64)
        guard = np.zeros((J, F), dtype=np.int64)
        nf = np.zeros(J, dtype=np.int64)
        shift = np.zeros((J, d), dtype=np.int64)
        for j, ch in enumerate(model.channels):
            nf[j] = len(ch.factors)
            shift[j] = ch.argument_shift()
            for k, f in enumerate(ch.factors):
                sp[j, k] = f.species
                order[j, k] = f.order
                guard[j, k] = f.guard_min or 0
        return cls(
            stoich=model.stoich.copy(),
            shift=shift,
            fac_species=sp,
            fac_order=order,
            fac_guard=guard,
            n_factors=nf,
            scale=np.array([c.scale for c in model.channels], dtype=np.float64),
        )

    def as_tuple(self):
        return (self.stoich, self.shift, self.fac_species, self.fac_order,
                self.fac_guard, self.n_factors, self.scale)


def as_theta(theta: Sequence[float], model: SRNModel) -> np.ndarray:
    c = np.asarray(theta, dtype=np.float64).reshape(-1)
    if c.shape != (model.J,):
        raise ValueError(f"expected {model.J} rate constants, got {c.shape[0]}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError(f"rate constants must be finite and non-negative, got {c.tolist()}")
    return c


def eval_propensity(model: SRNModel, theta: Sequence[float], x: Sequence[int], j: int) -> float:
    """Propensity ``a_j(x) = c_j g_j(x)``; zero if the jump leaves the lattice or a guard fails."""
    return float(theta[j]) * model.channels[j].monomial(x)


def total_propensity(model: SRNModel, theta: Sequence[float], x: Sequence[int]) -> float:
    return sum(eval_propensity(model, theta, x, j) for j in range(model.J))


def monomials(model: SRNModel, X: np.ndarray) -> np.ndarray:
    """Vectorised effective ``g_j`` over a batch of lattice states: ``(n, d) -> (n, J)``."""
    X = np.atleast_2d(np.asarray(X))
    cm = model.compiled
    out = np.empty((X.shape[0], model.J), dtype=np.float64)
    for j in range(model.J):
        Z = X + cm.shift[j]
        ok = np.all(Z >= 0, axis=1) & np.all(X + cm.stoich[j] >= 0, axis=1)
        val = np.full(X.shape[0], cm.scale[j])
        for k in range(cm.n_factors[j]):
            z = Z[:, cm.fac_species[j, k]].astype(np.float64)
            ok &= z >= cm.fac_guard[j, k]
            for r in range(cm.fac_order[j, k]):
                val = val * (z - r)
        out[:, j] = np.where(ok, val, 0.0)
    return out


def propensities(model: SRNModel, theta: Sequence[float], X: np.ndarray) -> np.ndarray:
    return monomials(model, X) * np.asarray(theta, dtype=np.float64)


def reverse_model(model: SRNModel) -> SRNModel:
    """Reverse-time network: channel j jumps by ``-nu_j`` at rate ``a_j(y - nu_j)``.

    Applying it twice gives back the forward jumps and propensities.
    """
    channels = []
    for ch in model.channels:
        s = np.array(ch.argument_shift()) - np.array(ch.stoich)
        channels.append(ReactionChannel(
            stoich=tuple(-v for v in ch.stoich),
            factors=ch.factors,
            label=f"reverse({ch.label})" if ch.label else "",
            scale=ch.scale,
            shift=tuple(int(v) for v in s),
        ))
    name = f"reverse({model.name})" if model.name else ""
    return SRNModel(model.species_names, tuple(channels), name=name)


def correction_c(model: SRNModel, theta: Sequence[float], y: Sequence[int]) -> float:
    """``c(y) = sum_j a_j(y - nu_j) - a_j(y)``, out-of-lattice terms counting as zero."""
    total = 0.0
    for j, ch in enumerate(model.channels):
        back = tuple(yi - vi for yi, vi in zip(y, ch.stoich))
        if min(back) >= 0:
            total += eval_propensity(model, theta, back, j)
        total -= eval_propensity(model, theta, y, j)
    return total


def validate_model(model: SRNModel) -> list[str]:
    """Every structural problem found, as human-readable strings; empty means valid."""
    problems: list[str] = []
    d = len(model.species_names)
    if d < 1:
        problems.append("model has no species")
    if len(set(model.species_names)) != d:
        problems.append("duplicate species names")
    if not model.channels:
        problems.append("model has no reaction channels")
    for j, ch in enumerate(model.channels):
        tag = f"channel {j}" + (f" ({ch.label})" if ch.label else "")
        if len(ch.stoich) != d:
            problems.append(f"{tag}: stoich dimension mismatch ({len(ch.stoich)} != {d})")
        if ch.shift is not None and len(ch.shift) != d:
            problems.append(f"{tag}: shift dimension mismatch ({len(ch.shift)} != {d})")
        if not (ch.scale >= 0 and np.isfinite(ch.scale)):
            problems.append(f"{tag}: scale must be finite and non-negative")
        for k, f in enumerate(ch.factors):
            if not 0 <= f.species < d:
                problems.append(f"{tag}, factor {k}: species index {f.species} out of range")
            if f.order < 0:
                problems.append(f"{tag}, factor {k}: negative order {f.order}")
            if f.guard_min is not None and f.guard_min < 0:
                problems.append(f"{tag}, factor {k}: negative guard_min {f.guard_min}")
    return problems
