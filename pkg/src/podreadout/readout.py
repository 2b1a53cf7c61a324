"""Shot-sampled readout of a classically known solution state.

Three protocols over the same unit vector x:

* PODR: ancilla statistics of a Hadamard test against each compressed
  basis give the overlap; the solution is rebuilt from the exact bases.
* RSR: Z-basis sampling of all amplitudes, magnitudes from counts, signs
  from the truth when the sign oracle is on (baseline best case).
* FSR (idealized): sampling in the Fourier basis of the flat register,
  keeping modes whose estimated probability clears a cutoff, phases taken
  from the exact spectrum.

Every sampler is deterministic given its integer seed; the per-basis
streams inside PODR split off the seed by basis index.  An analytic mode
replaces sampled quantities with their expectations so the shot-noise term
can be isolated in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FieldError
from .mps import contract
from .pod import PodBasisSet, exact_projection_error

_NORM_TOL = 1e-8


@dataclass(frozen=True)
class ErrorBudget:
    e_proj: float
    e_enc: float
    e_sam_bound: float
    beta: float


@dataclass(frozen=True)
class ReadoutReport:
    method: str
    n_shot_total: int
    estimated_coefficients: np.ndarray
    reconstruction: np.ndarray
    epsilon: float
    seed: int
    analytic: bool
    budget: ErrorBudget | None = None
    kept_modes: int | None = None
    n_b: int | None = None


def _check_unit(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if abs(np.linalg.norm(x) - 1.0) > _NORM_TOL:
        raise FieldError(f"{name} deviates from unit norm by more than {_NORM_TOL:g}")
    return x


def hadamard_p0(x, u_tilde) -> float:
    """Ancilla |0> probability of the Hadamard test: (1 + <x, u>)/2."""
    x = _check_unit(x, "x")
    u_tilde = _check_unit(u_tilde, "u_tilde")
    if x.shape != u_tilde.shape:
        raise FieldError(f"length mismatch {x.shape} vs {u_tilde.shape}")
    return 0.5 * (1.0 + float(x @ u_tilde))


def coefficient_from_counts(z0: int, n_shot_basis: int) -> float:
    """Estimated coefficient 2 * z0 / n - 1 from ancilla zero counts."""
    return 2.0 * z0 / n_shot_basis - 1.0


def sample_coefficient(p0: float, n_shot_basis: int, rng_seed) -> float:
    """Draw binomial zero counts at probability p0 and convert."""
    if not (0.0 <= p0 <= 1.0):
        raise FieldError(f"p0={p0} outside [0, 1]")
    if n_shot_basis < 1:
        raise FieldError("need at least one shot")
    rng = np.random.default_rng(rng_seed)
    z0 = int(rng.binomial(n_shot_basis, p0))
    return coefficient_from_counts(z0, n_shot_basis)


def podr_readout(
    x,
    basis: PodBasisSet,
    approximants,
    n_shot_total: int,
    seed: int,
    subregion=None,
    analytic: bool = False,
    beta: float = 2.0,
) -> ReadoutReport:
    """Estimate the first n_b coefficients and rebuild with the exact bases.

    The shot budget must divide evenly across the bases.  The report's
    budget carries the exact projection and encoding errors of this x plus
    the Chebyshev-style sampling bound beta * sqrt(n_b / shots_per_basis).
    """
    x = _check_unit(x, "x")
    n_b = basis.n_b
    if len(approximants) != n_b:
        raise FieldError(f"{len(approximants)} approximants for n_b={n_b}")
    if n_shot_total % n_b != 0:
        raise FieldError(
            f"shot budget {n_shot_total} is not divisible by n_b={n_b}"
        )
    n_shot_basis = n_shot_total // n_b

    dense = np.stack([contract(a) for a in approximants])
    if dense.shape[1] != x.size:
        raise FieldError("approximants do not match the state length")
    overlaps = dense @ x
    if analytic:
        coeffs = overlaps.copy()
    else:
        p0s = np.clip(0.5 * (1.0 + overlaps), 0.0, 1.0)
        coeffs = np.array(
            [sample_coefficient(p0s[i], n_shot_basis, [seed, i]) for i in range(n_b)]
        )

    un = basis.u[:, :n_b]
    recon = un @ coeffs
    if subregion is not None:
        subregion = np.asarray(subregion, dtype=np.intp)
        recon = recon[subregion]
        epsilon = float(np.linalg.norm(x[subregion] - recon))
    else:
        epsilon = float(np.linalg.norm(x - recon))

    e_proj = exact_projection_error(x, basis, n_b)
    e_enc = float(np.linalg.norm(un.T @ x - overlaps))
    budget = ErrorBudget(
        e_proj=e_proj,
        e_enc=e_enc,
        e_sam_bound=beta * math.sqrt(n_b / n_shot_basis),
        beta=beta,
    )
    return ReadoutReport(
        method="PODR",
        n_shot_total=n_shot_total,
        estimated_coefficients=coeffs,
        reconstruction=recon,
        epsilon=epsilon,
        seed=seed,
        analytic=analytic,
        budget=budget,
        n_b=n_b,
    )


def rsr_readout(
    x,
    n_shot_total: int,
    seed: int,
    sign_oracle: bool = True,
    analytic: bool = False,
) -> ReadoutReport:
    """Sample grid indices from |x_j|^2 and estimate magnitudes from counts.

    Z-basis sampling cannot see signs, so by default they come from the
    true state, which makes this baseline optimistic.
    """
    x = _check_unit(x, "x")
    p = x * x
    p = p / p.sum()
    if analytic:
        freq = p
    else:
        if n_shot_total < 1:
            raise FieldError("need at least one shot")
        rng = np.random.default_rng([seed])
        freq = rng.multinomial(n_shot_total, p) / n_shot_total
    mags = np.sqrt(freq)
    signs = np.where(x < 0.0, -1.0, 1.0) if sign_oracle else np.ones_like(x)
    recon = signs * mags
    return ReadoutReport(
        method="RSR",
        n_shot_total=n_shot_total,
        estimated_coefficients=recon,
        reconstruction=recon,
        epsilon=float(np.linalg.norm(x - recon)),
        seed=seed,
        analytic=analytic,
    )


def fsr_readout(
    x,
    n_shot_total: int,
    cutoff: float,
    seed: int,
    analytic: bool = False,
) -> ReadoutReport:
    """Idealized Fourier-space baseline.

    Samples the unitary-DFT spectrum of x, keeps modes whose estimated
    probability exceeds the cutoff, assigns them sqrt(probability) with
    exact phases, and inverse-transforms.  Reported as "FSR (idealized)"
    in human-readable output; the method tag stays FSR.
    """
    x = _check_unit(x, "x")
    if not (0.0 < cutoff < 1.0):
        raise FieldError(f"cutoff {cutoff} outside (0, 1)")
    n_pts = x.size
    spectrum = np.fft.fft(x) / math.sqrt(n_pts)
    q = np.abs(spectrum) ** 2
    q = q / q.sum()
    if analytic:
        q_hat = q
    else:
        if n_shot_total < 1:
            raise FieldError("need at least one shot")
        rng = np.random.default_rng([seed])
        q_hat = rng.multinomial(n_shot_total, q) / n_shot_total
    keep = q_hat > cutoff
    mags = np.abs(spectrum)
    phases = np.where(mags > 0.0, spectrum / np.where(mags > 0.0, mags, 1.0), 1.0 + 0.0j)
    kept_spectrum = np.zeros(n_pts, dtype=np.complex128)
    kept_spectrum[keep] = np.sqrt(q_hat[keep]) * phases[keep]
    recon = np.real(np.fft.ifft(kept_spectrum) * math.sqrt(n_pts))
    return ReadoutReport(
        method="FSR",
        n_shot_total=n_shot_total,
        estimated_coefficients=kept_spectrum,
        reconstruction=recon,
        epsilon=float(np.linalg.norm(x - recon)),
        seed=seed,
        analytic=analytic,
        kept_modes=int(keep.sum()),
    )


def error_budget_check(report: ReadoutReport, beta: float | None = None) -> bool:
    """Does measured epsilon respect e_proj + e_enc + beta*sqrt(n_b/shots)?"""
    if report.budget is None or report.n_b is None:
        raise FieldError("error budget checks apply to PODR reports only")
    b = report.budget
    if beta is None:
        bound = b.e_sam_bound
    else:
        if beta < 2.0:
            raise FieldError("beta must be at least 2")
        n_shot_basis = report.n_shot_total // report.n_b
        bound = beta * math.sqrt(report.n_b / n_shot_basis)
    return report.epsilon <= b.e_proj + b.e_enc + bound
