"""End-to-end segmentation runs and Monte-Carlo repetitions."""
import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .engine import run_sdie
from .exceptions import InputError
from .expsolver import ForcedDiffusion
from .graph import Graph, dense_laplacian
from .imgpipe import (assemble_problem, load_image, load_mask,
                      segmentation_error, synthetic_pair)
from .lowrank import nystrom_qr, truncated_svd_baseline

DENSE_LIMIT = 5000
BUILTIN_SIZES = {"pair40": 40, "pair20": 20, "pair8": 8}


def load_inputs(cfg):
    """``(ref_img, ref_labels, target_img, truth_or_None)`` for a config."""
    if cfg.builtin:
        return synthetic_pair(BUILTIN_SIZES[cfg.builtin], cfg.noise, seed=0)
    missing = [key for key in ("ref_image", "ref_labels", "target_image")
               if not getattr(cfg, key)]
    if missing:
        raise InputError(f"missing input paths: {', '.join(missing)}")
    truth = load_mask(cfg.ground_truth) if cfg.ground_truth else None
    return (load_image(cfg.ref_image), load_mask(cfg.ref_labels),
            load_image(cfg.target_image), truth)


def build_problem(cfg, inputs=None):
    ref, labels, target, truth = inputs or load_inputs(cfg)
    problem = assemble_problem(ref, labels, target, cfg.mu_hat,
                               sigma=cfg.sigma, pixel_scale=cfg.pixel_scale)
    return problem, truth


def exact_factors(weight, normalization="symmetric"):
    """Full eigendecomposition of the normalised Laplacian (small graphs)."""
    if weight.n > DENSE_LIMIT:
        raise InputError(
            f"exact factors need a dense {weight.n}^2 Laplacian; the limit is "
            f"{DENSE_LIMIT} vertices")
    g = Graph(weight, "symmetric")
    Ls = dense_laplacian(g)
    lap = truncated_svd_baseline(Ls, g.n, degree=g.degrees())
    return lap.with_normalization(normalization)


def build_factors(problem, cfg, seed):
    if cfg.K == 0 or cfg.K >= problem.n:
        return exact_factors(problem.weight, cfg.normalization)
    return nystrom_qr(problem.weight, problem.fid.Z, cfg.K, seed=seed,
                      normalization=cfg.normalization)


@dataclass
class SegmentResult:
    u: np.ndarray
    mask: np.ndarray
    n_iter: int
    converged: bool
    seconds: float
    error: float = None


def segment(cfg, problem, truth=None, seed=None):
    """Factorise, iterate to convergence and threshold the target block."""
    seed = cfg.seed if seed is None else seed
    start = time.perf_counter()
    lap = build_factors(problem, cfg, seed)
    prop = ForcedDiffusion(cfg.propagator_config(), lap, problem.fid)
    result = run_sdie(problem.u0, cfg.sdie_params(), prop)
    seconds = time.perf_counter() - start
    mask = problem.target_labels(result.u)
    error = None if truth is None else segmentation_error(mask, truth)
    return SegmentResult(result.u, mask, result.n_iter, result.converged,
                         seconds, error)


def derived_seeds(seed, repeats):
    """Independent child streams of ``seed``, one per run."""
    return np.random.SeedSequence(seed).spawn(repeats)


def montecarlo(cfg, problem, repeats, truth=None, n_jobs=1):
    """Repeat :func:`segment` with independent landmark draws.

    Returns the per-run results and pointwise mean and standard deviation
    of the thresholded target labels.
    """
    if repeats < 2:
        raise InputError("Monte-Carlo needs at least 2 repeats")
    seeds = derived_seeds(cfg.seed, repeats)
    runs = Parallel(n_jobs=n_jobs)(
        delayed(segment)(cfg, problem, truth, s) for s in seeds)
    masks = np.array([r.mask for r in runs], dtype=float)
    return runs, masks.mean(axis=0), masks.std(axis=0)
