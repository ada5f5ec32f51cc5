"""Échantillonneurs par EDS d'Itô hamiltonienne dissipative.

Positions U et vitesses V sont des matrices (nu, N) dont les colonnes suivent
la force du KDE. L'échantillonneur complet et l'échantillonneur réduit (qui fait
évoluer des coefficients sur une base de diffusion) partagent la même boucle
d'intégration.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from core import rng
from core.config import settings
from core.errors import DimensionMismatch, InvalidParameter, NumericalBlowup, NumericalFailure
from models.schemas import IsdeConfig
from .density_service import KdeModel, force

logger = logging.getLogger(__name__)

ForceFn = Callable[[np.ndarray], np.ndarray]
T = TypeVar("T")

BASIS_TOLERANCE = 1e-10


@dataclass
class IsdeState:
    U: np.ndarray
    V: np.ndarray
    step: int = 0


@dataclass
class ReducedBasis:
    g: np.ndarray
    a: np.ndarray

    @classmethod
    def from_basis(cls, g: np.ndarray) -> "ReducedBasis":
        """Construit a = g (g^T g)^{-1} et vérifie g^T a = I."""
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        gram = g.T @ g
        try:
            a = g @ np.linalg.inv(gram)
        except np.linalg.LinAlgError as e:
            raise NumericalFailure(f"diffusion basis is rank deficient: {e}")
        error = float(np.max(np.abs(g.T @ a - np.eye(g.shape[1]))))
        if error > BASIS_TOLERANCE:
            raise NumericalFailure(f"basis pseudo-inverse check failed: |g^T a - I| = {error:.3g}")
        return cls(g=g, a=a)

    @property
    def m(self) -> int:
        return self.g.shape[1]

    def reconstruct(self, Z: np.ndarray) -> np.ndarray:
        """Ramène des coefficients réduits dans l'espace des échantillons (nu, N)."""
        return Z @ self.g.T


def verlet_step(
    state: IsdeState,
    force_fn: ForceFn,
    f0: float,
    delta_r: float,
    noise: np.ndarray,
    threshold: Optional[float] = None,
) -> IsdeState:
    """Un pas de Störmer-Verlet dissipatif : demi-dérive, impulsion amortie, demi-dérive."""
    b = f0 * delta_r / 4.0
    U_half = state.U + 0.5 * delta_r * state.V
    V_next = ((1.0 - b) * state.V + delta_r * force_fn(U_half) + np.sqrt(f0 * delta_r) * noise) / (1.0 + b)
    U_next = U_half + 0.5 * delta_r * V_next
    step = state.step + 1

    threshold = settings.blowup_threshold if threshold is None else threshold
    magnitude = max(float(np.max(np.abs(U_next), initial=0.0)), float(np.max(np.abs(V_next), initial=0.0)))
    if not np.isfinite(magnitude) or magnitude > threshold:
        raise NumericalBlowup(step, threshold)
    return IsdeState(U=U_next, V=V_next, step=step)


def sample_steps(burn_in: int, stride: int, n_mc: int) -> List[int]:
    if burn_in < 1 or stride < 1:
        raise InvalidParameter(f"burn-in and stride must be >= 1, got {burn_in}, {stride}")
    return [burn_in + k * stride for k in range(n_mc)]


def extract_samples(trajectory: Sequence[T], burn_in: int, stride: int, n_mc: int) -> List[T]:
    """Extrait d'une trajectoire stockée les états aux pas burn_in, burn_in + stride, ...

    ``trajectory[k]`` est l'état après k pas.
    """
    steps = sample_steps(burn_in, stride, n_mc)
    if steps and steps[-1] >= len(trajectory):
        raise InvalidParameter(
            f"need step {steps[-1]} but the trajectory holds {len(trajectory)} states"
        )
    return [trajectory[k] for k in steps]


def _integrate(
    U0: np.ndarray,
    V0: np.ndarray,
    force_fn: ForceFn,
    project_noise: Callable[[np.ndarray], np.ndarray],
    noise_shape: tuple,
    f0: float,
    delta_r: float,
    burn_in: int,
    stride: int,
    n_mc: int,
    noise_stream: np.random.Generator,
) -> List[np.ndarray]:
    wanted = set(sample_steps(burn_in, stride, n_mc))
    last = max(wanted) if wanted else 0
    state = IsdeState(U=U0, V=V0)
    samples = []
    while state.step < last:
        noise = project_noise(noise_stream.standard_normal(noise_shape))
        state = verlet_step(state, force_fn, f0, delta_r, noise)
        if state.step in wanted:
            samples.append(state.U.copy())
    return samples


def _chain_sizes(n_mc: int, n_chains: int) -> List[int]:
    n_chains = max(1, min(n_chains, n_mc)) if n_mc else 1
    base, extra = divmod(n_mc, n_chains)
    return [base + (1 if c < extra else 0) for c in range(n_chains)]


def _run_chains(config: IsdeConfig, run_chain: Callable[[int, int], List[np.ndarray]]) -> List[np.ndarray]:
    sizes = _chain_sizes(config.n_mc, config.n_chains)
    if config.n_mc == 0:
        return []
    workers = min(settings.threads, len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(run_chain, range(len(sizes)), sizes))
    else:
        batches = [run_chain(c, size) for c, size in enumerate(sizes)]
    # fusion dans l'ordre des chaînes, quel que soit l'ordonnancement
    return [sample for batch in batches for sample in batch]


def simulate_full(kde: KdeModel, config: IsdeConfig) -> List[np.ndarray]:
    """
    Tire n_mc matrices (nu, N) de l'EDS dont la mesure invariante est le KDE.

    Args:
        kde: densité ajustée ; ses centres sont les positions initiales
        config: paramètres de l'échantillonneur (pas déduit de la largeur du KDE si absent)

    Returns:
        liste des matrices tirées, chaîne par chaîne
    """
    delta_r = _resolve_step(config, kde)
    shape = kde.centers.shape

    def run_chain(chain: int, size: int) -> List[np.ndarray]:
        V0 = rng.stream(config.seed, rng.ISDE_VELOCITY, chain).standard_normal(shape)
        return _integrate(
            kde.centers.copy(),
            V0,
            lambda U: force(kde, U),
            lambda noise: noise,
            shape,
            config.f0,
            delta_r,
            config.burn_in,
            config.stride,
            size,
            rng.stream(config.seed, rng.ISDE_NOISE, chain),
        )

    logger.info(
        f"Full ISDE: nu={kde.nu}, N={kde.n_samples}, f0={config.f0}, dr={delta_r:.4g}, "
        f"n_mc={config.n_mc}, chains={len(_chain_sizes(config.n_mc, config.n_chains))}"
    )
    return _run_chains(config, run_chain)


def simulate_reduced(kde: KdeModel, basis: ReducedBasis, config: IsdeConfig) -> List[np.ndarray]:
    """Tire n_mc matrices de coefficients (nu, m) sur la base de diffusion."""
    if basis.g.shape[0] != kde.n_samples:
        raise DimensionMismatch(
            f"basis has {basis.g.shape[0]} rows, KDE has {kde.n_samples} centers"
        )
    delta_r = _resolve_step(config, kde)
    shape = kde.centers.shape
    Z0 = kde.centers @ basis.a

    def run_chain(chain: int, size: int) -> List[np.ndarray]:
        Y0 = rng.stream(config.seed, rng.ISDE_VELOCITY, chain).standard_normal(shape) @ basis.a
        return _integrate(
            Z0.copy(),
            Y0,
            lambda Z: force(kde, basis.reconstruct(Z)) @ basis.a,
            lambda noise: noise @ basis.a,
            shape,
            config.f0,
            delta_r,
            config.burn_in,
            config.stride,
            size,
            rng.stream(config.seed, rng.ISDE_NOISE, chain),
        )

    logger.info(f"Reduced ISDE: nu={kde.nu}, m={basis.m}, n_mc={config.n_mc}")
    return _run_chains(config, run_chain)


def _resolve_step(config: IsdeConfig, kde: KdeModel) -> float:
    try:
        return config.resolved_step(kde.s_hat)
    except ValueError as e:
        raise InvalidParameter(str(e))
