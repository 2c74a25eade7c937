"""5G NR ToA estimation model.

Coarse RTT from the timing-advance command, SRS-based refinement via the
CIR magnitude argmax, RTT composition, and the sawtooth clock-drift ramp.
Only the arithmetic of the signaling procedure is modeled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DelayOutOfWindow, EmptyCir, InvalidNumerology

DF_MAX = 480e3      # Hz, maximum subcarrier spacing
K_MAX = 4096        # maximum FFT size
TC = 1.0 / (DF_MAX * K_MAX)  # basic time unit, 1/1.96608e9 s


@dataclass(frozen=True)
class NrConfig:
    mu: int = 1              # numerology, 0..5
    f_s: float = 61.44e6     # sample rate, Hz (40 MHz-class default)
    cir_len: int = 256       # CIR window length in samples


@dataclass(frozen=True)
class SawtoothDrift:
    """Clock-drift ramp: `rate` seconds of offset per step, resetting to
    zero every `reset_period` steps."""
    rate: float = 0.0
    reset_period: int = 1


def _check_mu(mu: int):
    if mu not in (0, 1, 2, 3, 4, 5):
        raise InvalidNumerology(f"numerology {mu} not in 0..5")


def ta_unit(mu: int) -> float:
    """Seconds of RTT per timing-advance increment."""
    _check_mu(mu)
    return 16 * 64 * TC / 2 ** mu


def coarse_rtt(ta: int, mu: int) -> float:
    """Coarse RTT implied by a timing-advance value: ta * 16 * 64 * Tc / 2^mu."""
    _check_mu(mu)
    if ta < 0:
        raise ValueError("ta must be a nonnegative integer")
    return ta * ta_unit(mu)


def ta_from_rtt(rtt: float, mu: int) -> int:
    """Nearest timing-advance value for a given RTT (simulation-side inverse)."""
    _check_mu(mu)
    if rtt < 0:
        raise ValueError("rtt must be >= 0")
    return int(round(rtt / ta_unit(mu)))


def synth_cir(residual_delay: float, cfg: NrConfig, rng) -> np.ndarray:
    """Synthesize a CIR magnitude sequence with a single dominant tap.

    The peak sits at index round(residual_delay * f_s); the noise floor is
    uniform in [0, 0.5) and therefore strictly below the unit peak.
    """
    window = cfg.cir_len / cfg.f_s
    if not (0.0 <= residual_delay < window):
        raise DelayOutOfWindow(
            f"residual {residual_delay:.3e} s outside CIR window [0, {window:.3e})")
    idx = int(round(residual_delay * cfg.f_s)) % cfg.cir_len
    cir = 0.5 * rng.uniform(0.0, 1.0, cfg.cir_len)
    cir[idx] = 1.0
    return cir


def srs_refine(cir, f_s: float) -> float:
    """Refined delay estimate (argmax index)/f_s; ties go to the smallest index."""
    cir = np.asarray(cir)
    if cir.size == 0:
        raise EmptyCir("CIR is empty")
    return int(np.argmax(cir)) / f_s


def drift_offset(step: int, d: SawtoothDrift) -> float:
    """Sawtooth clock-drift offset at 1-based mission step: rate * ((n-1) mod P)."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return d.rate * ((step - 1) % d.reset_period)


def estimate_toa_nr(true_delay: float, cfg: NrConfig, drift: float, rng) -> float:
    """One-way delay estimate through the two-stage NR procedure.

    The round trip (2 * true_delay + drift) is first quantized to the nearest
    timing-advance unit; the leftover residual is localized by the CIR peak.
    The residual can be negative after round-to-nearest, so it is wrapped into
    the circular CIR window and peaks in the upper half of the window are read
    back as negative delays. Returns RTT/2.
    """
    if true_delay < 0:
        raise ValueError("true_delay must be >= 0")
    _check_mu(cfg.mu)
    rtt = 2.0 * true_delay + drift
    ta = ta_from_rtt(rtt, cfg.mu)
    coarse = coarse_rtt(ta, cfg.mu)
    residual = rtt - coarse
    window = cfg.cir_len / cfg.f_s
    if not (-window / 2 <= residual < window / 2):
        raise DelayOutOfWindow(
            f"residual {residual:.3e} s does not fit in half the CIR window "
            f"(+-{window / 2:.3e} s); increase cir_len")
    wrapped = residual % window
    if wrapped >= window:  # a tiny negative residual can round up to window
        wrapped = 0.0
    refined = srs_refine(synth_cir(wrapped, cfg, rng), cfg.f_s)
    if refined >= window / 2:
        refined -= window
    return (coarse + refined) / 2.0
