"""Example networks with their generating parameters, initial states and seeds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PropensityFactor as PF
from .model import ReactionChannel, SRNModel


@dataclass(frozen=True)
class Fixture:
    model: SRNModel
    theta_true: tuple[float, ...]
    x0: tuple[int, ...]
    T: float
    dt: float
    seeds: tuple[tuple[float, ...], ...]

    def epochs(self) -> np.ndarray:
        n = int(round(self.T / self.dt))
        return np.linspace(0.0, self.T, n + 1)


def decay() -> SRNModel:
    return SRNModel(
        ("X",),
        (
            ReactionChannel((-1,), (PF(0),), "X -> 0"),
            ReactionChannel((-4,), (PF(0, 1, 4),), "4X -> 0"),
        ),
        name="decay",
        theta_true=(3.78, 7.20),
    )


def wear() -> SRNModel:
    # thickness in caliper units, so both jumps are whole lattice steps
    return SRNModel(
        ("X",),
        (
            ReactionChannel((-1,), (PF(0),), "wear by one unit"),
            ReactionChannel((-4,), (PF(0),), "wear by four units"),
        ),
        name="wear",
    )


def birth_death() -> SRNModel:
    return SRNModel(
        ("X",),
        (
            ReactionChannel((1,), (), "0 -> X"),
            ReactionChannel((-1,), (PF(0),), "X -> 0"),
        ),
        name="birth-death",
        theta_true=(1.0, 0.06),
    )


def pure_death() -> SRNModel:
    return SRNModel(("X",), (ReactionChannel((-1,), (PF(0),), "X -> 0"),), name="pure-death")


def sir(population: int = 305) -> SRNModel:
    """Infection rate ``beta S I / population``; pass ``population=1`` for plain ``beta S I``."""
    return SRNModel(
        ("S", "I", "R"),
        (
            ReactionChannel((-1, 1, 0), (PF(0), PF(1)), "S + I -> 2I", scale=1.0 / population),
            ReactionChannel((0, -1, 1), (PF(1),), "I -> R"),
        ),
        name="sir" if population != 1 else "sir-unscaled",
        theta_true=(1.66, 0.44),
    )


def gene_network() -> SRNModel:
    # species order DNA, DNA-P2, mRNA, P, P2
    return SRNModel(
        ("DNA", "DNA-P2", "mRNA", "P", "P2"),
        (
            ReactionChannel((-1, 1, 0, 0, -1), (PF(0), PF(4)), "DNA + P2 -> DNA-P2"),
            ReactionChannel((1, -1, 0, 0, 1), (PF(1),), "DNA-P2 -> DNA + P2"),
            ReactionChannel((0, 0, 1, 0, 0), (PF(0),), "DNA -> DNA + mRNA"),
            ReactionChannel((0, 0, -1, 0, 0), (PF(2),), "mRNA -> 0"),
            ReactionChannel((0, 0, 0, -2, 1), (PF(3, 2),), "P + P -> P2"),
            ReactionChannel((0, 0, 0, 2, -1), (PF(4),), "P2 -> P + P"),
            ReactionChannel((0, 0, 0, 1, 0), (PF(2),), "mRNA -> mRNA + P"),
            ReactionChannel((0, 0, 0, -1, 0), (PF(3),), "P -> 0"),
        ),
        name="gene-network",
        theta_true=(0.1, 0.7, 0.35, 0.3, 0.1, 0.9, 0.2, 0.1),
    )


FIXTURES = {
    "decay": lambda: Fixture(decay(), (3.78, 7.20), (100,), 1.0, 1 / 16,
                             ((1, 5), (6, 5), (1, 9), (6, 9))),
    # the wear data are field measurements with no generating parameters;
    # this theta only sets a plausible scale for synthetic runs
    "wear": lambda: Fixture(wear(), (8.94, 5.73), (100,), 1.0, 1 / 16,
                            ((1, 1), (10, 1), (1, 10), (10, 10))),
    "birth-death": lambda: Fixture(birth_death(), (1.0, 0.06), (17,), 200.0, 5.0,
                                   ((0.5, 0.04), (0.5, 0.08), (1.5, 0.04), (1.5, 0.08))),
    "sir": lambda: Fixture(sir(), (1.66, 0.44), (300, 5, 0), 10.0, 1.0,
                           ((0.40, 0.05), (0.40, 1.00), (3.00, 0.05), (3.00, 1.00))),
    "sir-unscaled": lambda: Fixture(sir(1), (1.66, 0.44), (300, 5, 0), 10.0, 1.0,
                                    ((0.40, 0.05), (0.40, 1.00), (3.00, 0.05), (3.00, 1.00))),
    "gene-network": lambda: Fixture(gene_network(), (0.1, 0.7, 0.35, 0.3, 0.1, 0.9, 0.2, 0.1),
                                    (7, 3, 10, 10, 10), 50.0, 0.5,
                                    (tuple([0.1] * 8), tuple([0.5] * 8))),
    "pure-death": lambda: Fixture(pure_death(), (1.0,), (1,), 1.0, 1.0, ((0.5,), (2.0,))),
}


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
