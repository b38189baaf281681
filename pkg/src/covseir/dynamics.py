"""Ten-compartment daily difference equations for documented/undocumented COVID-19 spread.

Compartments: susceptible S, exposed E, documented and undocumented infected
(I_doc, I_undoc), documented and undocumented recovered (R_doc, R_undoc),
hospitalized H, ICU C, ventilator V, dead D. C counts a subset of H and V a
subset of C, so the conserved population sum is
S + E + I_doc + I_undoc + R_doc + R_undoc + H + D.

One quirk of the equations, implemented verbatim: the H update removes
rho_H * (H - C) recoveries but carries no recovery outflow for the ICU
sub-occupancy, so an ICU recovery decrements C without decrementing H. The
nesting V <= C <= H is likewise not guaranteed for arbitrary rates; steps
flag violations and never repair them.

All functions accept compartment and rate values that are either plain
floats or autodiff Nodes; see :mod:`covseir.autodiff`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Scalar, lincomb, value_of
from .errors import DomainError, NumericalError

__all__ = [
    "COMPARTMENTS",
    "RATE_NAMES",
    "CompartmentState",
    "RateSet",
    "Trajectory",
    "step",
    "simulate",
    "confirmed",
    "validate_rates",
    "effective_reproduction_number",
    "ngm_spectral_radius",
    "trajectory_to_csv",
]

COMPARTMENTS = ("S", "E", "I_doc", "I_undoc", "R_doc", "R_undoc", "H", "C", "V", "D")

RATE_NAMES = (
    "beta_doc",
    "beta_undoc",
    "eta",
    "alpha",
    "gamma",
    "h",
    "c_icu",
    "v_vent",
    "rho_I_doc",
    "rho_I_undoc",
    "rho_H",
    "rho_C",
    "rho_V",
    "kappa_I_doc",
    "kappa_H",
    "kappa_C",
    "kappa_V",
)

# Soft feasibility constraints: each tuple of rates must sum to at most 1.
# Penalized during training, hard-checked by validate_rates.
FEASIBILITY_GROUPS = (
    ("rho_I_doc", "kappa_I_doc", "h"),
    ("rho_I_undoc", "gamma"),
    ("c_icu", "kappa_H", "rho_H"),
    ("v_vent", "kappa_C", "rho_C"),
    ("kappa_V", "rho_V"),
)


@dataclass(frozen=True, slots=True)
class CompartmentState:
    """State of one location on one day, plus its fixed total population N.

    Construction does not validate so that training code can hold autodiff
    Nodes (and transiently negative values) in these fields; call
    :meth:`validated` at trust boundaries.
    """

    S: Scalar
    E: Scalar
    I_doc: Scalar
    I_undoc: Scalar
    R_doc: Scalar
    R_undoc: Scalar
    H: Scalar
    C: Scalar
    V: Scalar
    D: Scalar
    N: float
    negative_compartment: bool = False
    nesting_violated: bool = False

    def compartment_values(self) -> dict[str, float]:
        return {name: value_of(getattr(self, name)) for name in COMPARTMENTS}

    def conserved_sum(self) -> float:
        """S+E+I_doc+I_undoc+R_doc+R_undoc+H+D (C and V are inside H)."""
        v = self.compartment_values()
        return v["S"] + v["E"] + v["I_doc"] + v["I_undoc"] + v["R_doc"] + v["R_undoc"] + v["H"] + v["D"]

    def validated(self, require_nonnegative: bool = True) -> "CompartmentState":
        vals = self.compartment_values()
        for name, v in vals.items():
            if not math.isfinite(v):
                raise DomainError(f"compartment {name} is not finite: {v!r}")
        if not (math.isfinite(self.N) and self.N > 0):
            raise DomainError(f"population N must be positive and finite, got {self.N!r}")
        if require_nonnegative:
            for name, v in vals.items():
                if v < 0:
                    raise DomainError(f"compartment {name} is negative: {v!r}")
            if vals["V"] > vals["C"] or vals["C"] > vals["H"]:
                raise DomainError(
                    "nesting violated: need V <= C <= H, got "
                    f"V={vals['V']!r} C={vals['C']!r} H={vals['H']!r}"
                )
        return self


@dataclass(frozen=True, slots=True)
class RateSet:
    """Per-day transition rates. All dimensionless, nonnegative.

    beta_doc / beta_undoc: contacts with documented/undocumented infected;
    eta: loss of immunity; alpha: inverse latency; gamma: diagnosis;
    h: hospitalization; c_icu: ICU admission; v_vent: ventilator;
    rho_*: recoveries; kappa_*: deaths.
    """

    beta_doc: Scalar = 0.0
    beta_undoc: Scalar = 0.0
    eta: Scalar = 0.0
    alpha: Scalar = 0.0
    gamma: Scalar = 0.0
    h: Scalar = 0.0
    c_icu: Scalar = 0.0
    v_vent: Scalar = 0.0
    rho_I_doc: Scalar = 0.0
    rho_I_undoc: Scalar = 0.0
    rho_H: Scalar = 0.0
    rho_C: Scalar = 0.0
    rho_V: Scalar = 0.0
    kappa_I_doc: Scalar = 0.0
    kappa_H: Scalar = 0.0
    kappa_C: Scalar = 0.0
    kappa_V: Scalar = 0.0

    def rate_values(self) -> dict[str, float]:
        return {name: value_of(getattr(self, name)) for name in RATE_NAMES}


def validate_rates(rates: RateSet) -> RateSet:
    """Hard feasibility check; raises DomainError naming the first violation."""
    vals = rates.rate_values()
    for name, v in vals.items():
        if not math.isfinite(v):
            raise DomainError(f"rate {name} is not finite: {v!r}")
        if v < 0:
            raise DomainError(f"rate {name} is negative: {v!r}")
    for group in FEASIBILITY_GROUPS:
        total = sum(vals[name] for name in group)
        if total > 1.0:
            raise DomainError(
                f"infeasible rates: {' + '.join(group)} = {total!r} exceeds 1"
            )
    return rates


@dataclass(frozen=True, slots=True)
class Trajectory:
    """states[k+1] results from applying rates[k] to states[k]."""

    states: tuple[CompartmentState, ...]
    rates: tuple[RateSet, ...]
    start_time: int = 0

    def __post_init__(self) -> None:
        if len(self.rates) != len(self.states) - 1:
            raise DomainError(
                f"trajectory needs len(rates) == len(states)-1, got "
                f"{len(self.rates)} rates for {len(self.states)} states"
            )

    @property
    def days(self) -> range:
        return range(self.start_time, self.start_time + len(self.states))

    def any_negative(self) -> bool:
        return any(s.negative_compartment for s in self.states)

    def any_nesting_violation(self) -> bool:
        return any(s.nesting_violated for s in self.states)


def _check_step_inputs(state: CompartmentState, rates: RateSet) -> None:
    if not (math.isfinite(state.N) and state.N > 0):
        raise DomainError(f"population N must be positive and finite, got {state.N!r}")
    for name in COMPARTMENTS:
        v = value_of(getattr(state, name))
        if not math.isfinite(v):
            raise DomainError(f"compartment {name} is not finite: {v!r}")
    for name in RATE_NAMES:
        v = value_of(getattr(rates, name))
        if not math.isfinite(v):
            raise DomainError(f"rate {name} is not finite: {v!r}")
        if v < 0:
            raise DomainError(f"rate {name} is negative: {v!r}")


def step(state: CompartmentState, rates: RateSet) -> CompartmentState:
    """Propagate one day.

    Exact difference equations; no clamping. Negative outputs and broken
    V <= C <= H nesting set the corresponding flag on the returned state.
    """
    _check_step_inputs(state, rates)
    S, E = state.S, state.E
    Id, Iu = state.I_doc, state.I_undoc
    Rd, Ru = state.R_doc, state.R_undoc
    H, C, V, D = state.H, state.C, state.V, state.D
    r = rates

    infections = (r.beta_doc * Id + r.beta_undoc * Iu) * S * (1.0 / state.N)
    latency_out = r.alpha * E
    reinfection = r.eta * (Rd + Ru)
    undoc_out = (r.rho_I_undoc + r.gamma) * Iu
    diagnosed = r.gamma * Iu
    doc_out = lincomb([(1.0, r.rho_I_doc), (1.0, r.kappa_I_doc), (1.0, r.h)]) * Id
    hosp_in = r.h * Id
    ward = H - C  # hospitalized outside the ICU
    icu_only = C - V  # ICU patients not on a ventilator
    ward_out = (r.kappa_H + r.rho_H) * ward
    icu_death = r.kappa_C * icu_only
    vent_death = r.kappa_V * V

    new_S = lincomb([(1.0, S), (-1.0, infections), (1.0, reinfection)])
    new_E = lincomb([(1.0, E), (1.0, infections), (-1.0, latency_out)])
    new_Iu = lincomb([(1.0, Iu), (1.0, latency_out), (-1.0, undoc_out)])
    new_Id = lincomb([(1.0, Id), (1.0, diagnosed), (-1.0, doc_out)])
    new_Ru = lincomb([(1.0, Ru), (1.0, r.rho_I_undoc * Iu), (-1.0, r.eta * Ru)])
    new_Rd = lincomb(
        [(1.0, Rd), (1.0, r.rho_I_doc * Id), (1.0, r.rho_H * ward), (-1.0, r.eta * Rd)]
    )
    new_H = lincomb(
        [(1.0, H), (1.0, hosp_in), (-1.0, ward_out), (-1.0, icu_death), (-1.0, vent_death)]
    )
    new_C = lincomb(
        [
            (1.0, C),
            (1.0, r.c_icu * ward),
            (-1.0, lincomb([(1.0, r.kappa_C), (1.0, r.rho_C), (1.0, r.v_vent)]) * icu_only),
            (-1.0, vent_death),
        ]
    )
    new_V = lincomb([(1.0, V), (1.0, r.v_vent * icu_only), (-1.0, (r.kappa_V + r.rho_V) * V)])
    new_D = lincomb(
        [
            (1.0, D),
            (1.0, vent_death),
            (1.0, icu_death),
            (1.0, r.kappa_H * ward),
            (1.0, r.kappa_I_doc * Id),
        ]
    )

    out = (new_S, new_E, new_Id, new_Iu, new_Rd, new_Ru, new_H, new_C, new_V, new_D)
    vals = [value_of(x) for x in out]
    negative = any(v < 0 for v in vals)
    nesting = vals[8] > vals[7] or vals[7] > vals[6]  # V > C or C > H
    return CompartmentState(
        S=new_S,
        E=new_E,
        I_doc=new_Id,
        I_undoc=new_Iu,
        R_doc=new_Rd,
        R_undoc=new_Ru,
        H=new_H,
        C=new_C,
        V=new_V,
        D=new_D,
        N=state.N,
        negative_compartment=negative,
        nesting_violated=nesting,
    )


def simulate(
    initial: CompartmentState, rates_seq: Sequence[RateSet], start_time: int = 0
) -> Trajectory:
    """Iterate `step` over a rate sequence."""
    if not rates_seq:
        raise DomainError("simulate needs at least one RateSet")
    states = [initial]
    for k, rates in enumerate(rates_seq):
        try:
            states.append(step(states[-1], rates))
        except DomainError as exc:
            raise DomainError(f"day {start_time + k + 1}: {exc}") from exc
    return Trajectory(states=tuple(states), rates=tuple(rates_seq), start_time=start_time)


def confirmed(state: CompartmentState) -> Scalar:
    """Total confirmed cases: I_doc + R_doc + H + D."""
    return lincomb(
        [(1.0, state.I_doc), (1.0, state.R_doc), (1.0, state.H), (1.0, state.D)]
    )


def effective_reproduction_number(rates: RateSet) -> float:
    """Closed-form effective reproduction number.

    (beta_doc*gamma + beta_undoc*(rho_I_doc + kappa_I_doc + h))
    / ((gamma + rho_I_undoc) * (rho_I_doc + kappa_I_doc + h)).
    """
    v = rates.rate_values()
    doc_exit = v["rho_I_doc"] + v["kappa_I_doc"] + v["h"]
    undoc_exit = v["gamma"] + v["rho_I_undoc"]
    if undoc_exit <= 0.0:
        raise DomainError("effective_reproduction_number: gamma + rho_I_undoc must be positive")
    if doc_exit <= 0.0:
        raise DomainError(
            "effective_reproduction_number: rho_I_doc + kappa_I_doc + h must be positive"
        )
    if v["gamma"] == 0.0:
        # no documentation flow: the documented branch never receives
        # anyone, and the ratio must come out exact, not via the general
        # expression's extra roundings
        return v["beta_undoc"] / undoc_exit
    return (v["beta_doc"] * v["gamma"] + v["beta_undoc"] * doc_exit) / (undoc_exit * doc_exit)


def ngm_spectral_radius(rates: RateSet) -> float:
    """Reproduction number via the next-generation matrix K = F V^-1.

    Independent route used to cross-check the closed form: builds the 6x6
    new-infections matrix F and transitions matrix V over the infected
    subsystem [E, I_doc, I_undoc, H, C, V] and returns the spectral radius
    of F V^-1.
    """
    r = rates.rate_values()
    bd, bu = r["beta_doc"], r["beta_undoc"]
    al, g, h = r["alpha"], r["gamma"], r["h"]
    c, v = r["c_icu"], r["v_vent"]
    rid, riu, rh, rc, rv = (
        r["rho_I_doc"],
        r["rho_I_undoc"],
        r["rho_H"],
        r["rho_C"],
        r["rho_V"],
    )
    kid, kh, kc, kv = r["kappa_I_doc"], r["kappa_H"], r["kappa_C"], r["kappa_V"]

    F = np.zeros((6, 6))
    F[0, 1] = bd
    F[0, 2] = bu

    V = np.array(
        [
            [al, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, h + kid + rid, -g, 0.0, 0.0, 0.0],
            [-al, 0.0, g + riu, 0.0, 0.0, 0.0],
            [0.0, -h, 0.0, kh + rh, kc - kh - rh, -kc + kv],
            [0.0, 0.0, 0.0, -c, c + v + kc + rc, -kc + kv - rc - v],
            [0.0, 0.0, 0.0, 0.0, -v, kv + rv + v],
        ]
    )
    try:
        V_inv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("transitions matrix V is singular") from exc
    K = F @ V_inv
    eigenvalues = np.linalg.eigvals(K)
    return float(np.max(np.abs(eigenvalues)))


def trajectory_to_csv(trajectory: Trajectory) -> str:
    """CSV export: day,S,E,I_doc,I_undoc,R_doc,R_undoc,H,C,V,D,confirmed."""
    lines = ["day," + ",".join(COMPARTMENTS) + ",confirmed"]
    for day, state in zip(trajectory.days, trajectory.states):
        vals = state.compartment_values()
        q = vals["I_doc"] + vals["R_doc"] + vals["H"] + vals["D"]
        cells = [str(day)] + [repr(vals[name]) for name in COMPARTMENTS] + [repr(q)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
