"""Desk-scale scene fitting by finite-difference gradient descent.

The composite objective combines per-view photometric L1, the flatness
(shortest-scale) prior, dense depth/normal priors where target views
carry them, and the multi-view NCC term between consecutive views.
Gradients come from central finite differences over every continuous
splat parameter, so the fitter is deliberately limited to small scenes
and small images; steps are accepted only when the loss decreases, which
makes the recorded trace non-increasing by construction.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import (
    LossWeights,
    depth_prior_loss,
    ncc_loss,
    normal_prior_loss,
    patches_from_render,
    scale_loss,
)
from .render import RenderOptions, render
from .scene import GaussianScene

MAX_FIT_SPLATS = 200
MAX_FIT_PIXELS = 64


@dataclass
class TargetView:
    camera: object
    rgb: np.ndarray                 # (H, W, 3) in [0, 1]
    depth: np.ndarray = None        # optional prior depth map
    normal: np.ndarray = None       # optional prior normal map


@dataclass
class FitResult:
    scene: GaussianScene
    trace: list                     # dicts: iteration, total, per-term
    accepted_steps: int
    final_gradient_norm: float = None

    @property
    def initial_loss(self):
        return self.trace[0]["total"]

    @property
    def final_loss(self):
        return self.trace[-1]["total"]


def _pack(scene):
    return np.concatenate([
        scene.means.ravel(),
        scene.log_scales.ravel(),
        scene.rotations.ravel(),
        scene.opacity_logits.ravel(),
        scene.sh.ravel(),
    ])


def _unpack(vector, template):
    n = len(template)
    k = template.sh.shape[2]
    sizes = [n * 3, n * 3, n * 4, n, n * 3 * k]
    parts = np.split(vector, np.cumsum(sizes)[:-1])
    return GaussianScene(
        parts[0].reshape(n, 3),
        parts[2].reshape(n, 4),
        parts[1].reshape(n, 3),
        parts[3],
        parts[4].reshape(n, 3, k),
        labels=template.labels,
        validate=False,
    )


def composite_loss(scene, views, weights, options=None):
    """Evaluate the composite objective; returns (total, term dict)."""
    options = options or RenderOptions()
    outputs = [render(scene, view.camera, options) for view in views]

    photometric = float(np.mean([
        np.mean(np.abs(out.rgb - view.rgb)) for out, view in zip(outputs, views)
    ]))
    terms = {"photometric": photometric, "scale": scale_loss(scene),
             "depth_prior": 0.0, "normal_prior": 0.0, "ncc": 0.0}

    if weights.depth_prior > 0:
        vals = [depth_prior_loss(out.depth, view.depth)
                for out, view in zip(outputs, views) if view.depth is not None]
        terms["depth_prior"] = float(np.mean(vals)) if vals else 0.0
    if weights.normal_prior > 0:
        vals = [normal_prior_loss(out.normal, view.normal)
                for out, view in zip(outputs, views) if view.normal is not None]
        terms["normal_prior"] = float(np.mean(vals)) if vals else 0.0
    if weights.ncc > 0 and len(views) > 1:
        vals = []
        for i in range(len(views) - 1):
            patches = patches_from_render(outputs[i], views[i].camera,
                                          patch_size=7, stride=6)
            if patches:
                res = ncc_loss(outputs[i].gray, outputs[i + 1].gray,
                               views[i].camera, views[i + 1].camera, patches,
                               patch_size=7)
                if res.used:
                    vals.append(res.value)
        terms["ncc"] = float(np.mean(vals)) if vals else 0.0

    total = (weights.photometric * terms["photometric"]
             + weights.scale * terms["scale"]
             + weights.depth_prior * terms["depth_prior"]
             + weights.normal_prior * terms["normal_prior"]
             + weights.ncc * terms["ncc"])
    return float(total), terms


def fd_gradient(scene, views, weights, options=None,
                rel_step=1e-4, abs_floor=1e-6):
    """Central finite-difference gradient over all continuous parameters."""
    params = _pack(scene)

    def loss_at(vector):
        return composite_loss(_unpack(vector, scene), views, weights, options)[0]

    steps = np.maximum(np.abs(params) * rel_step, abs_floor)

    def component(i):
        plus = params.copy()
        plus[i] += steps[i]
        minus = params.copy()
        minus[i] -= steps[i]
        return (loss_at(plus) - loss_at(minus)) / (2.0 * steps[i])

    try:
        threads = max(1, int(os.environ.get("GSFORGE_THREADS", "1")))
    except ValueError:
        threads = 1
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grad = np.fromiter(pool.map(component, range(params.size)),
                               dtype=np.float64, count=params.size)
    else:
        grad = np.fromiter((component(i) for i in range(params.size)),
                           dtype=np.float64, count=params.size)
    return grad


def fit_scene(initial_scene, views, weights=None, iterations=100,
              step_size=0.01, options=None, rel_step=1e-4, abs_floor=1e-6,
              backtrack_tries=5):
    """Gradient-descent fit of a small scene to target views.

    Each iteration computes the FD gradient, then tries step sizes
    ``step_size``, halving up to ``backtrack_tries`` times, accepting the
    first that strictly decreases the loss. Stops early when no step
    helps. Raises if the initial loss is not finite, the scene exceeds
    the FD budget, or any view is larger than 64x64.
    """
    weights = weights or LossWeights()
    if len(initial_scene) > MAX_FIT_SPLATS:
        raise ValueError(f"fit budget allows at most {MAX_FIT_SPLATS} splats")
    for view in views:
        if view.camera.width > MAX_FIT_PIXELS or view.camera.height > MAX_FIT_PIXELS:
            raise ValueError(f"fit budget allows views up to {MAX_FIT_PIXELS} px")

    scene = initial_scene.copy()
    total, terms = composite_loss(scene, views, weights, options)
    if not np.isfinite(total):
        raise ValueError("loss is not finite at the initial scene")
    trace = [{"iteration": 0, "total": total, **terms}]

    accepted = 0
    grad = None
    for it in range(1, iterations + 1):
        grad = fd_gradient(scene, views, weights, options, rel_step, abs_floor)
        params = _pack(scene)
        lr = step_size
        improved = False
        for _ in range(backtrack_tries):
            candidate = _unpack(params - lr * grad, scene)
            cand_total, cand_terms = composite_loss(candidate, views, weights, options)
            if np.isfinite(cand_total) and cand_total < total:
                scene, total, terms = candidate, cand_total, cand_terms
                improved = True
                accepted += 1
                break
            lr *= 0.5
        trace.append({"iteration": it, "total": total, **terms})
        if not improved:
            break

    return FitResult(scene=scene, trace=trace, accepted_steps=accepted,
                     final_gradient_norm=float(np.linalg.norm(grad))
                     if grad is not None else None)


def write_trace_csv(trace, path):
    """Emit the loss trace as CSV (iteration, total, per-term columns)."""
    fields = ["iteration", "total", "photometric", "scale", "depth_prior",
              "normal_prior", "ncc"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: row.get(k, "") for k in fields})
