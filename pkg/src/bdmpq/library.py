"""Reference models used by the tests, the benchmark and the CLI examples."""
from __future__ import annotations

from .model import AND, EXP, Bdmp, Gate, Leaf, Trigger


def golden_model(lam: float = 1e-3, mu: float = 0.1, lam3: float | None = None) -> Bdmp:
    """Three-component cold-standby system.

    ``S1`` runs; ``S2`` takes over when ``S1`` fails and ``S3`` takes over when
    both are down.  The top event ``UE_1`` needs all three failed.
    """
    lam3 = lam if lam3 is None else lam3
    leaves = (
        Leaf("S1", EXP, lambda_active=lam, mu=mu, initiator=True),
        Leaf("S2", EXP, lambda_active=lam, mu=mu),
        Leaf("S3", EXP, lambda_active=lam3, mu=mu),
    )
    gates = (
        Gate("UE_1", AND, ("S1", "BACKUP")),
        Gate("BACKUP", AND, ("S2", "S3")),
    )
    triggers = (Trigger("S1", "BACKUP"), Trigger("S2", "S3"))
    return Bdmp(leaves, gates, triggers, "UE_1", {})


def standby_chain(n: int, lam: float = 1e-3, mu: float = 0.0, ordered: bool = True) -> Bdmp:
    """``n`` components behind one AND gate.

    With ``ordered`` each component is a cold spare of the previous one, so
    the only failure order is ``C1, C2, ..., Cn``; without it every
    component runs from the start and any order fails the system.
    """
    ids = [f"C{i + 1}" for i in range(n)]
    leaves = tuple(Leaf(name, EXP, lambda_active=lam, mu=mu, initiator=(i == 0)) for i, name in enumerate(ids))
    triggers = tuple(Trigger(ids[i], ids[i + 1]) for i in range(n - 1)) if ordered else ()
    return Bdmp(leaves, (Gate("TOP", AND, tuple(ids)),), triggers, "TOP", {})
