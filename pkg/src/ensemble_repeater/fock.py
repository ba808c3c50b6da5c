"""Brute-force Fock-space simulation of the source, link and swap circuits.

States are sparse maps from occupation vectors to amplitudes over an
explicit list of labeled bosonic modes. Mixed states are kept as weighted
pure branches: every channel used here (beamsplitters, loss, photon-number
resolving detection) is a mixture of pure maps, so no density matrices are
needed. Loss is a beamsplitter onto a fresh environment mode that is traced
out immediately by branching on its photon number.

Only the single-excitation-per-ensemble regime is simulated; the results
check the mixed-state weights and success probabilities of
:mod:`ensemble_repeater.analytic`, independently of those formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .params import StateWeights

SPIN = "spin"
PHOTON = "anti-stokes"
ENV = "environment"
DETECTOR = "detector"

#: Default photon-number cutoff per mode.
N_MAX = 4

#: Amplitudes below this magnitude are dropped.
AMP_EPS = 1e-15

_env_counter = count()


class CutoffError(RuntimeError):
    """An operation produced an occupation above the photon-number cutoff."""


@dataclass(frozen=True)
class ModeLabel:
    role: str
    site: str
    index: int = 0

    def __str__(self):
        prefix = {SPIN: "s", PHOTON: "a'", ENV: "env", DETECTOR: "D"}.get(self.role, self.role)
        return f"{prefix}_{self.site}" + (f"#{self.index}" if self.index else "")


def spin(site):
    return ModeLabel(SPIN, site)


def photon(site):
    return ModeLabel(PHOTON, site)


def detector(site):
    return ModeLabel(DETECTOR, site)


@dataclass
class FockPureState:
    """Sparse pure state: ``amps`` maps occupation tuples (ordered as ``modes``) to amplitudes."""

    modes: tuple
    amps: dict
    cutoff: int = N_MAX

    @classmethod
    def basis(cls, modes, occupations=None, cutoff=N_MAX):
        modes = tuple(modes)
        occ = tuple(occupations) if occupations is not None else (0,) * len(modes)
        return cls(modes, {occ: 1.0 + 0j}, cutoff)

    @classmethod
    def from_terms(cls, modes, terms, cutoff=N_MAX):
        """Build from ``{mode: count}`` dicts; ``terms`` is a list of (amplitude, dict)."""
        modes = tuple(modes)
        amps = {}
        for amp, occ in terms:
            key = tuple(occ.get(m, 0) for m in modes)
            amps[key] = amps.get(key, 0j) + amp
        state = cls(modes, amps, cutoff)
        state.prune()
        return state

    def index(self, mode) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise KeyError(f"unknown mode {mode}") from None

    def norm2(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amps.values()))

    def prune(self):
        self.amps = {k: a for k, a in self.amps.items() if abs(a) > AMP_EPS}
        return self

    def scaled(self, factor):
        return FockPureState(self.modes, {k: a * factor for k, a in self.amps.items()}, self.cutoff)

    def copy(self):
        return FockPureState(self.modes, dict(self.amps), self.cutoff)

    def add_modes(self, new_modes):
        new_modes = tuple(new_modes)
        pad = (0,) * len(new_modes)
        return FockPureState(self.modes + new_modes, {k + pad: a for k, a in self.amps.items()}, self.cutoff)

    def relabel(self, mapping):
        return FockPureState(tuple(mapping.get(m, m) for m in self.modes), dict(self.amps), self.cutoff)

    def photon_number(self, mode) -> float:
        i = self.index(mode)
        return float(sum(abs(a) ** 2 * k[i] for k, a in self.amps.items()))

    def inner(self, other: "FockPureState") -> complex:
        """<self|other>; both states must have identical mode lists."""
        if self.modes != other.modes:
            raise ValueError("mode lists differ")
        return sum(np.conj(a) * other.amps.get(k, 0j) for k, a in self.amps.items())


def _binomial_expand(n, u0, u1):
    # (u0 x + u1 y)^n -> [(k, coeff)] where k is the power of x
    return [(k, math.comb(n, k) * u0**k * u1 ** (n - k)) for k in range(n + 1)]


def apply_linear_map(state: FockPureState, mode_pair, matrix) -> FockPureState:
    """Apply a passive two-mode linear transformation.

    ``matrix[k, i]`` is the amplitude for a photon entering mode ``i`` of
    ``mode_pair`` to leave in mode ``k``, i.e. creation operators transform as
    ``a_i^dag -> sum_k matrix[k, i] a_k^dag``. The matrix must be unitary.
    """
    m1, m2 = mode_pair
    if m1 == m2:
        raise ValueError("linear map needs two distinct modes")
    u = np.asarray(matrix, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12, rtol=0):
        raise ValueError("matrix must be a 2x2 unitary")
    i, j = state.index(m1), state.index(m2)
    out = {}
    for occ, amp in state.amps.items():
        ni, nj = occ[i], occ[j]
        if ni == 0 and nj == 0:
            out[occ] = out.get(occ, 0j) + amp
            continue
        pref = amp / math.sqrt(math.factorial(ni) * math.factorial(nj))
        # a_i^dag -> u00 a_i^dag + u10 a_j^dag ; a_j^dag -> u01 a_i^dag + u11 a_j^dag
        for ki, ci in _binomial_expand(ni, u[0, 0], u[1, 0]):
            for kj, cj in _binomial_expand(nj, u[0, 1], u[1, 1]):
                oi = ki + kj
                oj = ni + nj - oi
                coeff = ci * cj
                if coeff == 0:
                    continue
                new = list(occ)
                new[i], new[j] = oi, oj
                new = tuple(new)
                if oi > state.cutoff or oj > state.cutoff:
                    raise CutoffError(f"occupation {new} exceeds cutoff {state.cutoff}")
                out[new] = out.get(new, 0j) + pref * coeff * math.sqrt(math.factorial(oi) * math.factorial(oj))
    return FockPureState(state.modes, out, state.cutoff).prune()


def beamsplitter(transmission=0.5):
    t = math.sqrt(transmission)
    r = math.sqrt(1.0 - transmission)
    return np.array([[t, -r], [r, t]])


HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)


def partial_readout(state: FockPureState, spin_mode, photon_mode, alpha) -> FockPureState:
    """Read pulse converting ``s^dag -> alpha a'^dag + beta s^dag`` with beta = sqrt(1 - alpha^2)."""
    if state.photon_number(photon_mode) > 0:
        raise ValueError(f"photon mode {photon_mode} must start empty")
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    beta = math.sqrt(1.0 - alpha**2)
    return apply_linear_map(state, (spin_mode, photon_mode), [[beta, -alpha], [alpha, beta]])


@dataclass
class FockEnsemble:
    """Mixed state as weighted normalized pure branches over a common mode list."""

    branches: list = field(default_factory=list)

    @classmethod
    def pure(cls, state: FockPureState):
        n2 = state.norm2()
        return cls([(n2, state.scaled(1.0 / math.sqrt(n2)))])

    @property
    def modes(self):
        return self.branches[0][1].modes if self.branches else ()

    @property
    def total_weight(self) -> float:
        return float(sum(w for w, _ in self.branches))

    def map(self, op) -> "FockEnsemble":
        """Apply a pure-state map to every branch, folding norm changes into the weight."""
        out = []
        for w, s in self.branches:
            t = op(s)
            n2 = t.norm2()
            if w * n2 > 0.0:
                out.append((w * n2, t.scaled(1.0 / math.sqrt(n2))))
        return FockEnsemble(out)

    def tensor(self, other: "FockEnsemble") -> "FockEnsemble":
        out = []
        for w1, s1 in self.branches:
            for w2, s2 in other.branches:
                amps = {k1 + k2: a1 * a2 for k1, a1 in s1.amps.items() for k2, a2 in s2.amps.items()}
                out.append((w1 * w2, FockPureState(s1.modes + s2.modes, amps, max(s1.cutoff, s2.cutoff))))
        return FockEnsemble(out)

    def relabel(self, mapping):
        return FockEnsemble([(w, s.relabel(mapping)) for w, s in self.branches])

    def density_element(self, bra: dict, ket: dict) -> complex:
        """<bra|rho|ket> for occupation dicts (unlisted modes are empty)."""
        modes = self.modes
        kb = tuple(bra.get(m, 0) for m in modes)
        kk = tuple(ket.get(m, 0) for m in modes)
        return sum(w * s.amps.get(kb, 0j) * np.conj(s.amps.get(kk, 0j)) for w, s in self.branches)


def apply_loss(ensemble: FockEnsemble, mode, eta) -> FockEnsemble:
    """Transmit ``mode`` with efficiency ``eta`` (loss into a traced environment mode)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
    if eta == 1.0:
        return FockEnsemble(list(ensemble.branches))
    env = ModeLabel(ENV, str(mode), next(_env_counter) + 1)
    out = []
    for w, s in ensemble.branches:
        mixed = apply_linear_map(s.add_modes([env]), (mode, env), beamsplitter(eta))
        by_env = {}
        for occ, amp in mixed.amps.items():
            by_env.setdefault(occ[-1], {})[occ[:-1]] = amp
        for k in sorted(by_env):
            branch = FockPureState(s.modes, by_env[k], s.cutoff)
            n2 = branch.norm2()
            if w * n2 > 0.0:
                out.append((w * n2, branch.scaled(1.0 / math.sqrt(n2))))
    return FockEnsemble(out)


@dataclass
class ConditionalResult:
    """Outcome of a heralded measurement.

    ``weights``/``residual``/``coherence`` are filled in by
    :func:`extract_weights`; ``residual`` is the state weight outside
    span{Phi, four singles, vacuum} and ``coherence`` the largest off-diagonal
    density-matrix element inside that span.
    """

    probability: float
    ensemble: FockEnsemble
    weights: StateWeights | None = None
    residual: float | None = None
    coherence: float | None = None
    singles: tuple | None = None


def detect_pattern(ensemble: FockEnsemble, detector_modes, pattern) -> ConditionalResult:
    """Ideal photon-number-resolving projection of ``detector_modes`` onto ``pattern``.

    Detector efficiency is applied beforehand with :func:`apply_loss`. The
    returned ensemble is renormalized and no longer contains the detector modes.
    """
    detector_modes = tuple(detector_modes)
    pattern = tuple(int(k) for k in pattern)
    if len(pattern) != len(detector_modes):
        raise ValueError("pattern length does not match detector modes")
    modes = ensemble.modes
    for m in detector_modes:
        if m not in modes:
            raise KeyError(f"unknown detector mode {m}")
    idx = [modes.index(m) for m in detector_modes]
    keep = [i for i in range(len(modes)) if i not in idx]
    kept_modes = tuple(modes[i] for i in keep)
    out = []
    for w, s in ensemble.branches:
        amps = {}
        for occ, amp in s.amps.items():
            if all(occ[i] == k for i, k in zip(idx, pattern)):
                amps[tuple(occ[i] for i in keep)] = amp
        branch = FockPureState(kept_modes, amps, s.cutoff)
        n2 = branch.norm2()
        if w * n2 > 0.0:
            out.append((w * n2, branch.scaled(1.0 / math.sqrt(n2))))
    prob = float(sum(w for w, _ in out))
    if prob > 0.0:
        out = [(w / prob, s) for w, s in out]
    return ConditionalResult(prob, FockEnsemble(out))


def combine_results(results) -> ConditionalResult:
    """Merge disjoint heralding outcomes into one accepted event."""
    total = sum(r.probability for r in results)
    branches = []
    for r in results:
        if r.probability > 0.0:
            branches.extend((w * r.probability / total, s) for w, s in r.ensemble.branches)
    return ConditionalResult(total, FockEnsemble(branches))


# --- the mixed state of a pair of two-mode (h, v) ensembles ------------------

def pair_basis(left, right):
    """Label dicts {name: occupation dict} of the six span states for sites ``left``/``right``.

    ``left`` and ``right`` are ensemble names (e.g. "a", "b"); each owns an
    h and a v spin mode.
    """
    lh, lv, rh, rv = spin(f"{left}_h"), spin(f"{left}_v"), spin(f"{right}_h"), spin(f"{right}_v")
    return {
        "phi_hh": {lh: 1, rh: 1},
        "phi_vv": {lv: 1, rv: 1},
        "single": [{lh: 1}, {lv: 1}, {rh: 1}, {rv: 1}],
        "vacuum": {},
        "modes": (lh, lv, rh, rv),
    }


def weights_ensemble(weights: StateWeights, left, right, cutoff=N_MAX) -> FockEnsemble:
    """Ensemble realizing the weight decomposition for the pair ``left``-``right``."""
    basis = pair_basis(left, right)
    modes = basis["modes"]
    r = 1.0 / math.sqrt(2.0)
    branches = []
    if weights.c2 > 0:
        branches.append((weights.c2, FockPureState.from_terms(modes, [(r, basis["phi_hh"]), (r, basis["phi_vv"])], cutoff)))
    if weights.c1 > 0:
        for occ in basis["single"]:
            branches.append((weights.c1, FockPureState.from_terms(modes, [(1.0, occ)], cutoff)))
    if weights.c0 > 0:
        branches.append((weights.c0, FockPureState.basis(modes, cutoff=cutoff)))
    return FockEnsemble(branches)


def extract_weights(result: ConditionalResult, left, right) -> ConditionalResult:
    """Project the conditional state onto the span for the pair ``left``-``right``."""
    ens = result.ensemble
    basis = pair_basis(left, right)
    r = 1.0 / math.sqrt(2.0)
    # span vectors as lists of (amplitude, occupation dict)
    span = [[(r, basis["phi_hh"]), (r, basis["phi_vv"])]]
    span += [[(1.0, occ)] for occ in basis["single"]]
    span.append([(1.0, basis["vacuum"])])

    def element(a, b):
        return sum(ca * cb * ens.density_element(oa, ob) for ca, oa in a for cb, ob in b)

    gram = np.array([[element(a, b) for b in span] for a in span])
    diag = gram.diagonal().real
    off = gram - np.diag(gram.diagonal())
    singles = tuple(float(x) for x in diag[1:5])
    c2, c1, c0 = float(diag[0]), float(np.mean(diag[1:5])), float(diag[5])
    captured = c2 + sum(singles) + c0
    weights = StateWeights.normalized(c2, c1, c0)
    residual = max(ens.total_weight - captured, 0.0)
    return ConditionalResult(result.probability, ens, weights, residual,
                             float(np.max(np.abs(off))) if off.size else 0.0, singles)


# --- one-qubit corrections -------------------------------------------------

def flip_polarization(site):
    """Exchange the h and v spin modes of ensemble ``site`` (a bit flip)."""
    h, v = spin(f"{site}_h"), spin(f"{site}_v")
    return lambda s: _swap_modes(s, h, v)


def _swap_modes(s, m1, m2):
    i, j = s.index(m1), s.index(m2)
    amps = {}
    for occ, a in s.amps.items():
        new = list(occ)
        new[i], new[j] = occ[j], occ[i]
        amps[tuple(new)] = a
    return FockPureState(s.modes, amps, s.cutoff)


def phase_flip(site):
    """Sign change on the v spin mode of ensemble ``site`` (a phase flip)."""
    v = spin(f"{site}_v")

    def op(s):
        i = s.index(v)
        return FockPureState(s.modes, {k: (-a if k[i] % 2 else a) for k, a in s.amps.items()}, s.cutoff)

    return op


def identity(s):
    return s


# --- circuits ----------------------------------------------------------------

SOURCE_DETECTORS = (detector("d+"), detector("d-"), detector("dt+"), detector("dt-"))
SOURCE_PATTERNS = (("d+", "dt+"), ("d+", "dt-"), ("d-", "dt+"), ("d-", "dt-"))


def source_network(state: FockPureState) -> FockPureState:
    """Linear network of the local pair source.

    Takes the anti-Stokes modes a'_h, a'_v, b'_h, b'_v to the detection modes
    d+- = (a'_h + a'_v +- b'_h -+ b'_v)/2 and dt+- = (+-a'_h -+ a'_v + b'_h + b'_v)/2
    with two layers of balanced splitters, then renames the modes accordingly.
    """
    ah, av, bh, bv = photon("a_h"), photon("a_v"), photon("b_h"), photon("b_v")
    s = apply_linear_map(state, (ah, av), HADAMARD)   # (a_h + a_v), (a_h - a_v)
    s = apply_linear_map(s, (bh, bv), HADAMARD)       # (b_h + b_v), (b_h - b_v)
    s = apply_linear_map(s, (ah, bv), HADAMARD)       # d+, d-
    s = apply_linear_map(s, (av, bh), np.array([[1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(2.0))  # dt+, dt-
    d = {m.site: m for m in SOURCE_DETECTORS}
    return s.relabel({ah: d["d+"], bv: d["d-"], av: d["dt+"], bh: d["dt-"]})


#: Corrections mapping each accepted source pattern onto Phi_ab (derived from the ideal case).
SOURCE_CORRECTIONS = {
    ("d+", "dt+"): identity,
    ("d+", "dt-"): flip_polarization("b"),
    ("d-", "dt+"): flip_polarization("b"),
    ("d-", "dt-"): identity,
}


def _pattern_vector(detectors, clicked):
    return tuple(1 if m.site in clicked else 0 for m in detectors)


def charged_source_state(alpha2, cutoff=N_MAX) -> FockPureState:
    """Four charged ensembles after the partial read pulses (anti-Stokes modes populated)."""
    sites = ("a_h", "a_v", "b_h", "b_v")
    modes = tuple(spin(x) for x in sites) + tuple(photon(x) for x in sites)
    state = FockPureState.basis(modes, (1, 1, 1, 1, 0, 0, 0, 0), cutoff)
    alpha = math.sqrt(alpha2)
    for x in sites:
        state = partial_readout(state, spin(x), photon(x), alpha)
    return state


def source_pattern_results(alpha2, eta_m, eta_d, cutoff=N_MAX):
    """Corrected conditional result of each accepted source pattern, keyed by pattern."""
    ens = FockEnsemble.pure(charged_source_state(alpha2, cutoff))
    for x in ("a_h", "a_v", "b_h", "b_v"):
        ens = apply_loss(ens, photon(x), eta_m)
    ens = ens.map(source_network)
    for m in SOURCE_DETECTORS:
        ens = apply_loss(ens, m, eta_d)
    out = {}
    for pat in SOURCE_PATTERNS:
        res = detect_pattern(ens, SOURCE_DETECTORS, _pattern_vector(SOURCE_DETECTORS, pat))
        res.ensemble = res.ensemble.map(SOURCE_CORRECTIONS[pat])
        out[pat] = res
    return out


def run_source_circuit(alpha2, eta_m, eta_d, cutoff=N_MAX) -> ConditionalResult:
    """Heralded pair source: probability and weights summed over the four accepted patterns."""
    parts = source_pattern_results(alpha2, eta_m, eta_d, cutoff)
    return extract_weights(combine_results(list(parts.values())), "a", "b")


BELL_PATTERNS = (("+", "+"), ("+", "-"), ("-", "+"), ("-", "-"))


def _bell_detectors(inner_left, inner_right):
    names = [f"{inner_left}{inner_right}{s}" for s in "+-"] + [f"{inner_right}{inner_left}{s}" for s in "+-"]
    return tuple(detector(x) for x in names)


def bell_network(state, inner_left, inner_right):
    """Two-photon measurement network on the inner anti-Stokes modes.

    Detects D+-(lr) = (l'_h +- r'_v)/sqrt2 and D+-(rl) = (r'_h +- l'_v)/sqrt2.
    """
    lh, lv = photon(f"{inner_left}_h"), photon(f"{inner_left}_v")
    rh, rv = photon(f"{inner_right}_h"), photon(f"{inner_right}_v")
    s = apply_linear_map(state, (lh, rv), HADAMARD)
    s = apply_linear_map(s, (rh, lv), HADAMARD)
    d_lr_p, d_lr_m, d_rl_p, d_rl_m = _bell_detectors(inner_left, inner_right)
    return s.relabel({lh: d_lr_p, rv: d_lr_m, rh: d_rl_p, lv: d_rl_m})


def _bell_corrections(outer_right):
    # mixed-sign coincidences leave (h h - v v)/sqrt2: undo with a phase flip on the far side
    return {("+", "+"): identity, ("+", "-"): phase_flip(outer_right),
            ("-", "+"): phase_flip(outer_right), ("-", "-"): identity}


def bell_pattern_results(weights_left, weights_right, eta, eta_t, sites=("a", "b", "c", "d"), cutoff=N_MAX):
    """Corrected conditional result of each accepted two-photon pattern.

    ``sites`` are (outer_left, inner_left, inner_right, outer_right). The inner
    ensembles are fully read out; each photon passes efficiency ``eta`` and
    fiber transmission ``eta_t`` before the measurement network.
    """
    ol, il, ir, orr = sites
    ens = weights_ensemble(weights_left, ol, il, cutoff).tensor(weights_ensemble(weights_right, ir, orr, cutoff))
    photons = [photon(f"{x}_{pol}") for x in (il, ir) for pol in "hv"]
    ens = ens.map(lambda s: s.add_modes(photons))
    for x in (il, ir):
        for pol in "hv":
            ens = ens.map(lambda s, x=x, pol=pol: partial_readout(s, spin(f"{x}_{pol}"), photon(f"{x}_{pol}"), 1.0))
    for m in photons:
        ens = apply_loss(ens, m, eta)
        ens = apply_loss(ens, m, eta_t)
    ens = ens.map(lambda s: bell_network(s, il, ir))
    dets = _bell_detectors(il, ir)
    corrections = _bell_corrections(orr)
    inner = [spin(f"{x}_{pol}") for x in (il, ir) for pol in "hv"]
    out = {}
    for a, b in BELL_PATTERNS:
        pattern = (int(a == "+"), int(a == "-"), int(b == "+"), int(b == "-"))
        res = detect_pattern(ens, dets, pattern)
        if res.probability > 0:
            # inner spin modes are empty after full readout; project them out
            emptied = detect_pattern(res.ensemble, inner, (0,) * len(inner))
            res = ConditionalResult(res.probability * emptied.probability, emptied.ensemble)
        res.ensemble = res.ensemble.map(corrections[(a, b)])
        out[(a, b)] = res
    return out


def run_generation_circuit(weights_left, weights_right, eta, eta_t, cutoff=N_MAX) -> ConditionalResult:
    """Elementary-link creation between sources AB and CD; returns weights on A-D."""
    parts = bell_pattern_results(weights_left, weights_right, eta, eta_t, ("a", "b", "c", "d"), cutoff)
    return extract_weights(combine_results(list(parts.values())), "a", "d")


def run_swap_circuit(weights_left, weights_right, eta, cutoff=N_MAX) -> ConditionalResult:
    """Local swap of links A-D and E-H (no fiber); returns weights on A-H."""
    parts = bell_pattern_results(weights_left, weights_right, eta, 1.0, ("a", "d", "e", "h"), cutoff)
    return extract_weights(combine_results(list(parts.values())), "a", "h")


def run_postselection_circuit(weights, eta, cutoff=N_MAX) -> ConditionalResult:
    """Final readout of both ends, accepting one photon at each end in any polarization."""
    ens = weights_ensemble(weights, "a", "z", cutoff)
    photons = [photon(f"{x}_{pol}") for x in "az" for pol in "hv"]
    ens = ens.map(lambda s: s.add_modes(photons))
    for x in "az":
        for pol in "hv":
            ens = ens.map(lambda s, x=x, pol=pol: partial_readout(s, spin(f"{x}_{pol}"), photon(f"{x}_{pol}"), 1.0))
    for m in photons:
        ens = apply_loss(ens, m, eta)
    accepted = []
    for pa in ((1, 0), (0, 1)):
        for pz in ((1, 0), (0, 1)):
            accepted.append(detect_pattern(ens, photons, pa + pz))
    return combine_results(accepted)
