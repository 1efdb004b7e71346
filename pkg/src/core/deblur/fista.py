"""TV-regularized deblurring with (monotone) FISTA."""
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from src.core.deblur.filters import (
    BlurKernel,
    ImageLike,
    as_array,
    blur,
    blur_adjoint,
    estimate_lipschitz,
    wiener_deconvolve,
)
from src.core.imaging.image import GrayImage
from src.utils.logger import get_logger
from src.utils.validators import DivergenceError

logger = get_logger(__name__)


class FistaConfig(BaseModel):
    """Settings of one FISTA deblurring run."""

    lam: float = Field(default=2e-3, gt=0.0, description="TV regularization threshold")
    max_iter: int = Field(default=150, ge=1)
    tol: float = Field(default=1e-5, ge=0.0)
    step_size: Optional[float] = Field(default=None, gt=0.0, description="Defaults to 1/Lipschitz")
    decay: float = Field(default=0.5, gt=0.0, le=1.0, description="Threshold decay per retry")
    monotone: bool = True
    inner_iter: int = Field(default=20, ge=1)
    max_step_halvings: int = Field(default=5, ge=0)

    def for_retry(self, retry: int) -> "FistaConfig":
        """Copy with the threshold decayed for the given retry index."""
        return self.model_copy(update={"lam": self.lam * self.decay ** retry})


def gradient(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Forward differences with a zero last row/column."""
    dx = np.zeros_like(u)
    dy = np.zeros_like(u)
    dx[:-1, :] = u[1:, :] - u[:-1, :]
    dy[:, :-1] = u[:, 1:] - u[:, :-1]
    return dx, dy


def divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`gradient`."""
    div = np.zeros_like(p)
    div[0, :] += p[0, :]
    div[1:-1, :] += p[1:-1, :] - p[:-2, :]
    div[-1, :] -= p[-2, :]
    div[:, 0] += q[:, 0]
    div[:, 1:-1] += q[:, 1:-1] - q[:, :-2]
    div[:, -1] -= q[:, -2]
    return div


def total_variation(u: np.ndarray) -> float:
    """Anisotropic TV: l1 norm of forward differences."""
    dx, dy = gradient(u)
    return float(np.abs(dx).sum() + np.abs(dy).sum())


def tv_prox(b: np.ndarray, weight: float, iterations: int = 20) -> np.ndarray:
    """Box-constrained prox of ``weight * TV`` by the fast dual projection method.

    Solves ``min_x 0.5 * ||x - b||^2 + weight * TV(x)`` with ``x`` in [0, 1].
    """
    if weight <= 0:
        return np.clip(b, 0.0, 1.0)
    if b.shape[0] < 2 or b.shape[1] < 2:
        return np.clip(b, 0.0, 1.0)

    p = np.zeros_like(b)
    q = np.zeros_like(b)
    r, s = p.copy(), q.copy()
    t = 1.0
    step = 1.0 / (8.0 * weight)
    for _ in range(iterations):
        x = np.clip(b + weight * divergence(r, s), 0.0, 1.0)
        gx, gy = gradient(x)
        p_new = np.clip(r + step * gx, -1.0, 1.0)
        q_new = np.clip(s + step * gy, -1.0, 1.0)
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        r = p_new + ((t - 1.0) / t_new) * (p_new - p)
        s = q_new + ((t - 1.0) / t_new) * (q_new - q)
        p, q, t = p_new, q_new, t_new
    return np.clip(b + weight * divergence(p, q), 0.0, 1.0)


class FistaResult:
    """Restored image with its objective trace."""

    def __init__(self, image: GrayImage, objective: List[float], iterations: int, converged: bool, step_size: float):
        self.image = image
        self.objective = objective
        self.iterations = iterations
        self.converged = converged
        self.step_size = step_size

    def trace_frame(self) -> pd.DataFrame:
        """Objective trace as a DataFrame with columns iteration, objective."""
        return pd.DataFrame({"iteration": np.arange(len(self.objective)), "objective": self.objective})

    def export_trace(self, path: str) -> None:
        self.trace_frame().to_csv(path, index=False)


def _objective(x: np.ndarray, y: np.ndarray, kernel: BlurKernel, lam: float) -> float:
    return 0.5 * float(np.sum((blur(x, kernel) - y) ** 2)) + lam * total_variation(x)


def _run(
    y: np.ndarray,
    kernel: BlurKernel,
    config: FistaConfig,
    step: float,
    x0: np.ndarray,
) -> Tuple[np.ndarray, List[float], int, bool]:
    x = x0.copy()
    z = x0.copy()
    t = 1.0
    trace = [_objective(x, y, kernel, config.lam)]
    growth_limit = 1e6 * max(trace[0], 1.0)
    converged = False
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        grad = blur_adjoint(blur(z, kernel) - y, kernel)
        candidate = tv_prox(z - step * grad, step * config.lam, config.inner_iter)
        value = _objective(candidate, y, kernel, config.lam)
        if not np.isfinite(value) or value > growth_limit:
            raise FloatingPointError(f"objective {value} at iteration {iteration}")

        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        if config.monotone:
            accepted = candidate if value <= trace[-1] else x
            value = min(value, trace[-1])
            z = accepted + (t / t_new) * (candidate - accepted) + ((t - 1.0) / t_new) * (accepted - x)
        else:
            accepted = candidate
            z = accepted + ((t - 1.0) / t_new) * (accepted - x)
        # a rejected candidate leaves x unchanged, so measure the proposal
        change = np.linalg.norm(candidate - x) / max(np.linalg.norm(x), 1e-12)
        x, t = accepted, t_new
        trace.append(value)

        if iteration > 1 and change < config.tol:
            converged = True
            break
    return x, trace, iteration, converged


def fista_deblur(
    image: ImageLike,
    kernel: BlurKernel,
    config: Optional[FistaConfig] = None,
    x0: Optional[np.ndarray] = None,
) -> FistaResult:
    """Minimize ``0.5 * ||K x - y||^2 + lam * TV(x)`` over images in [0, 1].

    With ``config.monotone`` the accepted iterate never increases the
    objective, so the returned trace is non-increasing.

    Args:
        image: Blurred observation y
        kernel: Blur operator K (replicate-edge)
        config: Solver settings
        x0: Optional warm start; defaults to y

    Returns:
        FistaResult with the restored image and objective trace

    Raises:
        DivergenceError: If the objective keeps exploding after all step halvings
    """
    config = config or FistaConfig()
    y = as_array(image)
    start = np.clip(x0 if x0 is not None else y, 0.0, 1.0).astype(np.float64)
    step = config.step_size or 1.0 / estimate_lipschitz(y.shape, kernel)

    for attempt in range(config.max_step_halvings + 1):
        try:
            x, trace, iterations, converged = _run(y, kernel, config, step, start)
        except FloatingPointError as e:
            logger.warning(f"FISTA diverged ({e}); halving step {step:.3g} -> {step / 2:.3g}")
            step /= 2.0
            continue
        logger.debug(
            f"FISTA {kernel.name} lam={config.lam:.3g}: {iterations} iterations, "
            f"objective {trace[0]:.4g} -> {trace[-1]:.4g}"
        )
        return FistaResult(GrayImage(x), trace, iterations, converged, step)

    raise DivergenceError(f"FISTA diverged after {config.max_step_halvings} step halvings")


def combined_deblur(
    image: ImageLike,
    kernel: BlurKernel,
    config: Optional[FistaConfig] = None,
    noise_power: float = 1e-3,
) -> FistaResult:
    """Wiener deconvolution followed by a TV pass warm-started from it."""
    warm = wiener_deconvolve(image, kernel, noise_power)
    return fista_deblur(image, kernel, config, x0=warm.pixels.astype(np.float64))
