"""Four-step construction of a ground-state qubit pair from two coolants.

Ion labels are Q1, Q2 (qubits) and C1, C2 (coolants).  The sequence is

    I    SBS(Q2, C1)
    II   SBS(Q1, Q2) and SBS(C1, C2), simultaneously, both equal-mass
    III  SBS(Q2, C1)
    IV   combine(Q1, Q2) into one well

with a transport before each of II, III and IV.  Transport is modelled as
a fluctuation-preserving repositioning plus an optional additive heating
per moved ion; it carries no duration.

The state is an 8x8 covariance over the zero-point quadratures (x, y) of
the four ions, each in its own omega0 frame, so the vacuum is I/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SynthesisError
from .gaussian import ion_normalizer, mode_transform, simulate_waveform
from .synthesis import Waveform, synthesize_combine, synthesize_sbs
from .units import CollisionConfig, IonSpecies

IONS = ("Q1", "Q2", "C1", "C2")
STEP_KINDS = ("sbs", "simultaneous_sbs_pair", "combine", "transport")

#: stretch frequency of two equal ions in a single omega0 well
STRETCH_FREQUENCY = math.sqrt(3.0)


@dataclass(frozen=True)
class ProtocolStep:
    """One stage of the plan.

    ``pairs`` lists ``(first, second, waveform_key)`` for each collision in
    the stage; the first ion plays the mass-1 role of the waveform.
    Transport steps list the moved ions in ``participants`` and have no pairs.
    """

    label: str
    kind: str
    participants: tuple
    pairs: tuple = ()
    duration: float | None = None

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        seen = [ion for first, second, _ in self.pairs for ion in (first, second)]
        if len(seen) != len(set(seen)):
            raise ValueError(f"step {self.label}: an ion takes part in two simultaneous collisions")
        unknown = set(self.participants) - set(IONS)
        if unknown:
            raise ValueError(f"step {self.label}: unknown ions {sorted(unknown)}")


@dataclass
class ProtocolPlan:
    steps: list
    waveforms: dict
    species: dict
    transport_heating: float = 0.0

    def __post_init__(self):
        for step in self.steps:
            for first, second, key in step.pairs:
                if key not in self.waveforms:
                    raise ValueError(f"step {step.label} refers to missing waveform {key!r}")
                wf = self.waveforms[key]
                ratio = self.species[second].mass_u / self.species[first].mass_u
                if not math.isclose(ratio, wf.mu, rel_tol=1e-9):
                    raise SynthesisError(
                        f"step {step.label}: waveform {key!r} is for mu={wf.mu:g}, "
                        f"ions {first}/{second} have mass ratio {ratio:g}"
                    )
            if step.kind == "combine":
                first, second, _ = step.pairs[0]
                if not math.isclose(self.species[first].mass_u, self.species[second].mass_u):
                    raise SynthesisError("ion combination requires equal masses")

    @property
    def active_duration(self):
        """Sum of collision durations in scaled time; transports are excluded."""
        return float(sum(s.duration for s in self.steps if s.kind != "transport"))

    def timeline(self):
        """Rows (step, t_start, t_end, participants) over active time."""
        rows, t = [], 0.0
        for s in self.steps:
            d = s.duration or 0.0
            rows.append((s.label, t, t + d, " ".join(s.participants)))
            t += d
        return rows

    def as_dict(self):
        return {
            "steps": [
                {
                    "label": s.label,
                    "kind": s.kind,
                    "participants": list(s.participants),
                    "waveforms": [key for _, _, key in s.pairs],
                    "duration_scaled": s.duration,
                }
                for s in self.steps
            ],
            "waveforms": {
                key: {"kind": wf.kind, "mu": wf.mu, "T_scaled": wf.T} for key, wf in self.waveforms.items()
            },
            "species": {ion: sp.mass_u for ion, sp in self.species.items()},
            "transport_heating": self.transport_heating,
            "active_duration_scaled": self.active_duration,
        }


def plan_pair_protocol(config: CollisionConfig, transport_heating=None, qubit2: IonSpecies | None = None):
    """Synthesize the waveforms and lay out the four-step pair sequence.

    ``qubit2`` overrides the species of Q2 (the default is the configured
    qubit); combining unequal masses is rejected.
    """
    if config.coolants < 2:
        raise ConfigError(
            f"the pair protocol needs at least 2 ground-state coolants, got {config.coolants}",
            key="protocol.coolants",
        )
    h = config.transport_heating if transport_heating is None else transport_heating
    if h < 0:
        raise ConfigError("transport heating must be >= 0", key="protocol.transport_heating")
    species = {"Q1": config.qubit, "Q2": qubit2 or config.qubit, "C1": config.coolant, "C2": config.coolant}
    if not math.isclose(species["Q1"].mass_u, species["Q2"].mass_u):
        raise SynthesisError("ion combination requires equal masses")

    waveforms = {
        "sbs_qubit_coolant": synthesize_sbs(config),
        # qubit-qubit and coolant-coolant swaps share the equal-mass map
        "sbs_equal_mass": synthesize_sbs(config, mu=1.0),
        "combine": synthesize_combine(config),
    }
    T_qc = waveforms["sbs_qubit_coolant"].T
    T_eq = waveforms["sbs_equal_mass"].T
    T_comb = waveforms["combine"].T
    steps = [
        ProtocolStep("I", "sbs", ("Q2", "C1"), (("Q2", "C1", "sbs_qubit_coolant"),), T_qc),
        ProtocolStep("transport-II", "transport", IONS),
        ProtocolStep(
            "II",
            "simultaneous_sbs_pair",
            IONS,
            (("Q1", "Q2", "sbs_equal_mass"), ("C1", "C2", "sbs_equal_mass")),
            T_eq,
        ),
        ProtocolStep("transport-III", "transport", ("Q2", "C1")),
        ProtocolStep("III", "sbs", ("Q2", "C1"), (("Q2", "C1", "sbs_qubit_coolant"),), T_qc),
        ProtocolStep("transport-IV", "transport", ("Q1", "Q2")),
        ProtocolStep("IV", "combine", ("Q1", "Q2"), (("Q1", "Q2", "combine"),), T_comb),
    ]
    return ProtocolPlan(steps, waveforms, species, float(h))


@dataclass
class LedgerEntry:
    step: str
    kind: str
    before: dict
    after: dict
    provenance: str


@dataclass
class PhononLedger:
    initial: dict
    entries: list = field(default_factory=list)
    covariance: np.ndarray | None = None
    pair_modes: dict | None = None

    @property
    def final(self):
        return dict(self.entries[-1].after) if self.entries else dict(self.initial)

    def last_single(self, ion):
        """Last ledger value of ``ion`` while it was still trapped on its own."""
        value = self.initial[ion]
        for e in self.entries:
            if e.after[ion] is None:
                break
            value = e.after[ion]
        return value

    def as_dict(self):
        return {
            "initial": self.initial,
            "entries": [e.__dict__ for e in self.entries],
            "final": self.final,
            "pair_modes": self.pair_modes,
        }


def ion_phonons(V):
    """Mean phonon number per ion from a zero-point-frame covariance.

    Only meaningful for ions trapped singly at omega0.
    """
    return {ion: float(0.5 * (V[2 * i, 2 * i] + V[2 * i + 1, 2 * i + 1] - 1.0)) for i, ion in enumerate(IONS)}


def pair_mode_phonons(V, first="Q1", second="Q2", stretch_frequency=STRETCH_FREQUENCY):
    """(n_com, n_stretch) of two equal-mass ions sharing one omega0 well."""
    idx = [2 * IONS.index(first), 2 * IONS.index(first) + 1, 2 * IONS.index(second), 2 * IONS.index(second) + 1]
    block = V[np.ix_(idx, idx)]
    C = mode_transform(1.0)
    Vm = C @ block @ C.T
    w = stretch_frequency
    D = np.diag([1.0, 1.0, math.sqrt(w), 1 / math.sqrt(w)])
    Vm = D @ Vm @ D.T
    return float(0.5 * (Vm[0, 0] + Vm[1, 1] - 1.0)), float(0.5 * (Vm[2, 2] + Vm[3, 3] - 1.0))


def _embed(Sn, first, second):
    i, j = IONS.index(first), IONS.index(second)
    idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
    M = np.eye(8)
    M[np.ix_(idx, idx)] = Sn
    return M


def _normalized_map(wf: Waveform, steps_per_sample):
    N = ion_normalizer(wf.mu)
    S = simulate_waveform(wf, steps_per_sample=steps_per_sample).S
    return N @ S @ np.linalg.inv(N)


def simulate_protocol(plan: ProtocolPlan, initial=None, steps_per_sample=4) -> PhononLedger:
    """Propagate per-ion thermal excitations through the plan.

    ``initial`` maps ion labels to initial mean phonon numbers (thermal);
    missing ions start in the ground state.  Each collision applies the
    Gaussian map of its waveform; simultaneous collisions act on disjoint
    ions and are applied together at the step boundary.
    """
    initial = {ion: float((initial or {}).get(ion, 0.0)) for ion in IONS}
    for ion, n in initial.items():
        if n < 0:
            raise ValueError(f"initial phonon number for {ion} must be >= 0")
    V = np.diag(np.repeat([initial[ion] + 0.5 for ion in IONS], 2))
    maps = {}
    ledger = PhononLedger(initial=dict(initial))
    merged = set()
    for step in plan.steps:
        before = {ion: (None if ion in merged else n) for ion, n in ion_phonons(V).items()}
        if step.kind == "transport":
            for ion in step.participants:
                i = IONS.index(ion)
                V[2 * i, 2 * i] += plan.transport_heating
                V[2 * i + 1, 2 * i + 1] += plan.transport_heating
            provenance = f"transport of {', '.join(step.participants)}, +{plan.transport_heating:g} each"
        else:
            M = np.eye(8)
            for first, second, key in step.pairs:
                if key not in maps:
                    maps[key] = _normalized_map(plan.waveforms[key], steps_per_sample)
                M = _embed(maps[key], first, second) @ M
            V = M @ V @ M.T
            V = 0.5 * (V + V.T)
            provenance = "; ".join(f"{key}({a}, {b})" for a, b, key in step.pairs)
        after = ion_phonons(V)
        if step.kind == "combine":
            # single-ion numbers lose their meaning once the ions share a well
            first, second, _ = step.pairs[0]
            n_com, n_str = pair_mode_phonons(V, first, second)
            ledger.pair_modes = {"n_com": n_com, "n_stretch": n_str, "total": n_com + n_str}
            merged.update((first, second))
        for ion in merged:
            after[ion] = None
        ledger.entries.append(LedgerEntry(step.label, step.kind, before, after, provenance))
    ledger.covariance = V
    return ledger


def combine_residual(wf: Waveform, steps_per_sample=4):
    """Total mode excitation the combination adds to a ground-state pair."""
    Sn = _normalized_map(wf, steps_per_sample)
    V = np.eye(8) * 0.5
    M = _embed(Sn, "Q1", "Q2")
    n_com, n_str = pair_mode_phonons(M @ V @ M.T)
    return n_com + n_str


__all__ = [
    "IONS",
    "LedgerEntry",
    "PhononLedger",
    "ProtocolPlan",
    "ProtocolStep",
    "combine_residual",
    "ion_phonons",
    "pair_mode_phonons",
    "plan_pair_protocol",
    "simulate_protocol",
]
