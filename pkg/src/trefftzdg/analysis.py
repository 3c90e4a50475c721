"""Error norms, convergence-order estimation, and framework diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import BrokenSpace
from .dg_forms import AR_UPWIND, DAR_SIP, assemble_global_system, facet_alpha
from .embedding import build_embedding
from .local_ops import AR, KINDS, operator_row_count
from .quadrature import facet_quadrature
from .solver import solve_block_coupled, solve_embedded_trefftz


@dataclass
class ErrorReport:
    l2_error: float
    vh_error: float
    h: float
    p: int
    method: str
    ndof_full: int
    ndof_trefftz: int = None


@dataclass
class EocEstimate:
    """Per-step convergence slopes and the least-squares fit."""

    steps: list
    least_squares: float


@dataclass
class DiagnosticsReport:
    """Computable witnesses of the framework assumptions.

    ``rho_max`` measures the coupling of the kernel blocks (zero by
    construction), ``sigma_min_rel`` the relative size of the smallest used
    singular value (local stability), ``block_equivalence_gap`` the norm
    distance between the embedded and the coupled block solution.
    """

    rho_max: float
    sigma_min_rel: float
    dim_table: dict
    block_equivalence_gap: float
    block_equivalence_gap_rel: float
    p: int
    kind: str
    n_elements: int


def _facet_error_terms(solution, coeffs, weight_fn):
    """Sum of facet integrals weight(x, b_n) * jump(e)^2 over all facets.

    On interior facets the jump of the error reduces to the (negated) jump
    of u_h; on boundary facets the single-valued exact trace stays, giving
    the deviation of u_h from the Dirichlet data.
    """
    space = solution.space
    mesh = space.mesh
    exact = coeffs.exact_solution
    fpts, fw = facet_quadrature(mesh, 2 * space.degree + 2)
    total = 0.0
    interior = mesh.interior_facets
    if len(interior):
        pts = fpts[interior]
        tr_l = solution.element_values(mesh.facet_left[interior], pts)
        tr_r = solution.element_values(mesh.facet_right[interior], pts)
        jump = tr_r - tr_l  # exact solution cancels across the facet
        wvals = weight_fn(pts, mesh.facet_normals[interior], interior)
        total += np.sum(fw[interior] * wvals * jump**2)
    boundary = mesh.boundary_facets
    if len(boundary):
        pts = fpts[boundary]
        tr = solution.element_values(mesh.facet_left[boundary], pts)
        err = exact(pts[..., 0], pts[..., 1]) - tr
        wvals = weight_fn(pts, mesh.facet_normals[boundary], boundary)
        total += np.sum(fw[boundary] * wvals * err**2)
    return total


def compute_errors(solution, coeffs, kind):
    """L2 error and the kind's mesh-dependent norm of ``u_ex - u_h``."""
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if coeffs.exact_solution is None:
        raise ValueError("error computation requires an exact solution")
    space = solution.space
    mesh = space.mesh
    exact = coeffs.exact_solution
    exact_grad = coeffs.exact_gradient()
    elems = np.arange(mesh.n_elements)
    vals, grads = solution.element_values(elems, space.volume_points, gradients=True)
    x, y = space.volume_points[..., 0], space.volume_points[..., 1]
    w = space.volume_weights
    err = exact(x, y) - vals
    err_grad = exact_grad(x, y) - grads
    l2_sq = np.sum(w * err**2)

    if kind == AR:
        if coeffs.beta is None:
            raise ValueError("the advection-reaction error norm requires beta")
        beta_vals = coeffs.beta(x, y)
        beta_sup = float(np.max(np.linalg.norm(beta_vals, axis=-1)))
        directional = np.einsum("eqd,eqd->eq", beta_vals, err_grad) / beta_sup
        vh_sq = l2_sq
        vh_sq += np.sum(mesh.h[:, None] * w * directional**2)

        def weight(pts, normals, facets):
            b = np.einsum(
                "fqd,fd->fq", coeffs.beta(pts[..., 0], pts[..., 1]), normals
            )
            return np.abs(b) / beta_sup

        vh_sq += _facet_error_terms(solution, coeffs, weight)
    else:
        alpha_vals = coeffs.alpha(x, y)
        vh_sq = np.sum(w * alpha_vals * np.einsum("eqd,eqd->eq", err_grad, err_grad))
        gamma0 = 0.0
        if coeffs.gamma is not None:
            stab = coeffs.gamma(x, y)
            if coeffs.beta is not None:
                stab = stab - 0.5 * coeffs.beta.divergence()(x, y)
            gamma0 = max(0.0, float(np.min(stab)))
        vh_sq += gamma0 * l2_sq
        sigma = solution.sigma
        if sigma is None:
            sigma = 50.0 * space.degree**2
        af = facet_alpha(space, coeffs)

        def weight_pen(pts, normals, facets):
            base = sigma * af[facets] / mesh.facet_lengths[facets]
            return base[:, None] * np.ones(pts.shape[:2])

        vh_sq += _facet_error_terms(solution, coeffs, weight_pen)
        if coeffs.beta is not None:

            def weight_upw(pts, normals, facets):
                b = np.einsum(
                    "fqd,fd->fq", coeffs.beta(pts[..., 0], pts[..., 1]), normals
                )
                return 0.5 * np.abs(b)

            vh_sq += _facet_error_terms(solution, coeffs, weight_upw)

    return ErrorReport(
        l2_error=math.sqrt(l2_sq),
        vh_error=math.sqrt(vh_sq),
        h=float(mesh.h.max()),
        p=space.degree,
        method=solution.method,
        ndof_full=solution.ndof_full,
        ndof_trefftz=solution.ndof_trefftz,
    )


def estimate_eoc(pairs):
    """Convergence slopes from (h, error) pairs.

    Returns the per-step slopes ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})``
    and the least-squares slope of log(error) against log(h).
    """
    pairs = [(float(h), float(e)) for h, e in pairs]
    if len(pairs) < 2:
        raise ValueError("at least two (h, error) points are required")
    hs = np.array([p[0] for p in pairs])
    es = np.array([p[1] for p in pairs])
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    if np.any(es <= 0):
        raise ValueError("errors must be positive")
    steps = [
        math.log(es[i] / es[i + 1]) / math.log(hs[i] / hs[i + 1])
        for i in range(len(pairs) - 1)
    ]
    least_squares = float(np.polyfit(np.log(hs), np.log(es), 1)[0])
    return EocEstimate(steps=steps, least_squares=least_squares)


def run_diagnostics(
    mesh, p, kind, coeffs, sigma=None, box_scale=0.25, with_block_gap=True
):
    """Numerical witnesses for the decoupling and local-stability
    assumptions, plus the embedded/block equivalence gap."""
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    space = BrokenSpace(mesh, p)
    embedding = build_embedding(space, coeffs, kind, box_scale=box_scale)
    rho_max = 0.0
    sigma_min_rel = np.inf
    nt_values = set()
    for op, emb in zip(embedding.local_operators, embedding.embeddings):
        a_norm = np.linalg.norm(op.matrix)
        rho_max = max(rho_max, np.linalg.norm(op.matrix @ emb.T) / (1.0 + a_norm))
        if emb.rank_used > 0 and emb.sigma[0] > 0:
            sigma_min_rel = min(
                sigma_min_rel, emb.sigma[emb.rank_used - 1] / emb.sigma[0]
            )
        nt_values.add(emb.T.shape[1])
    sigma_min_rel = float(sigma_min_rel) if np.isfinite(sigma_min_rel) else float("nan")
    n_local = space.ndof_local
    dim_q = operator_row_count(kind, p)
    dim_table = {p: (n_local, n_local - dim_q, dim_q)}
    if nt_values != {n_local - dim_q}:
        dim_table[p] = (n_local, sorted(nt_values), dim_q)

    gap = gap_rel = float("nan")
    if with_block_gap:
        form = AR_UPWIND if kind == AR else DAR_SIP
        if form == DAR_SIP and sigma is None:
            sigma = 50.0 * p * p
        system = assemble_global_system(form, mesh, p, coeffs, sigma=sigma, space=space)
        u_emb = solve_embedded_trefftz(system, embedding)
        u_block = solve_block_coupled(embedding.local_operators, system, embedding)
        gap = float(np.linalg.norm(u_emb.coeffs - u_block.coeffs))
        denom = float(np.linalg.norm(u_emb.coeffs))
        gap_rel = gap / denom if denom > 0 else gap
    return DiagnosticsReport(
        rho_max=float(rho_max),
        sigma_min_rel=sigma_min_rel,
        dim_table=dim_table,
        block_equivalence_gap=gap,
        block_equivalence_gap_rel=gap_rel,
        p=p,
        kind=kind,
        n_elements=mesh.n_elements,
    )
