"""Per-element operator matrices A_K and load vectors for the local
problems, covering the volume-projected, box-restricted, and
point-derivative (quasi-Trefftz) operator kinds.

Rows are expressed against an L2-orthonormal test basis of the kind's
test space (or the plain multi-index entries for the quasi-Trefftz
kind), so dual norms of A_K u reduce to Euclidean vector norms. The
mesh-size scalings baked into each kind keep the induced norms uniform
in h; diagnostics downstream rely on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import ElementBasis, polynomial_exponents, space_dimension
from .quadrature import box_rule, triangle_rule

AR = "AR"
DAR = "DAR"
DAR_BOX = "DAR_BOX"
QT_DIFFUSION = "QT_DIFFUSION"
KINDS = frozenset({AR, DAR, DAR_BOX, QT_DIFFUSION})


class MultiIndexSet:
    """Fixed graded-lexicographic ordering of 2D multi-indices up to a
    total order."""

    def __init__(self, order):
        if order < 0:
            raise ValueError("multi-index order must be nonnegative")
        self.order = int(order)
        self.indices = polynomial_exponents(self.order)

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, i):
        return self.indices[i]


@dataclass(frozen=True)
class ElementBox:
    """Axis-aligned square used by the box-restricted operator kind."""

    center: np.ndarray
    side: float

    @property
    def h(self):
        """Diameter of the box (consistent with h_K = diam K)."""
        return self.side * math.sqrt(2.0)

    @property
    def corners(self):
        half = self.side / 2.0
        offsets = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
        return self.center[None, :] + half * offsets


@dataclass
class LocalOperator:
    kind: str
    element: int
    matrix: np.ndarray
    rhs: np.ndarray
    box: ElementBox = None

    @property
    def n_rows(self):
        return self.matrix.shape[0]


def operator_row_count(kind, p):
    """Row count of the local operator for polynomial degree ``p``."""
    if kind == AR:
        return space_dimension(p - 1)
    if kind in (DAR, DAR_BOX, QT_DIFFUSION):
        return space_dimension(p - 2) if p >= 2 else 0
    raise ValueError(f"unknown local operator kind {kind!r}")


def compute_box(mesh, element, scale):
    """Axis-aligned square inside element ``element``.

    Starts from a square of side ``scale * h_K`` centered at the incenter
    and shrinks by factor 0.9 until all four corners lie in the closed
    element. Fails after 50 shrink steps (degenerate element).
    """
    if scale <= 0:
        raise ValueError("box scale must be positive")
    geo = mesh.element_geometry(element)
    verts = mesh.vertices[mesh.triangles[element]]
    T = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    Tinv = np.linalg.inv(T)
    center = geo.incenter
    side = scale * geo.h
    for _ in range(50):
        box = ElementBox(center=center, side=side)
        lam = (Tinv @ (box.corners - verts[0]).T).T
        bary = np.column_stack([1.0 - lam.sum(axis=1), lam])
        if np.all(bary >= -1e-12):
            return box
        side *= 0.9
    raise RuntimeError(
        f"no box of relative size {scale} fits inside element {element} "
        f"after 50 shrink steps (degenerate element)"
    )


def _require_positive_alpha(alpha_vals):
    if np.any(alpha_vals <= 0.0):
        raise ValueError("diffusion coefficient must be strictly positive on all quadrature points")


def _second_order_integrand(basis, coeffs, points, scale):
    """scale * (-div(alpha grad phi) + beta.grad phi + gamma phi) at points."""
    x, y = points[:, 0], points[:, 1]
    ev = basis.eval(points, gradients=True, hessians=True)
    alpha_vals = coeffs.alpha(x, y)
    _require_positive_alpha(alpha_vals)
    ax = coeffs.alpha.derivative(1, 0)(x, y)
    ay = coeffs.alpha.derivative(0, 1)(x, y)
    lap = ev.hessians[..., 0, 0] + ev.hessians[..., 1, 1]
    vals = -(
        alpha_vals[:, None] * lap
        + ax[:, None] * ev.gradients[..., 0]
        + ay[:, None] * ev.gradients[..., 1]
    )
    if coeffs.beta is not None:
        b = coeffs.beta(x, y)
        vals += b[:, None, 0] * ev.gradients[..., 0] + b[:, None, 1] * ev.gradients[..., 1]
    if coeffs.gamma is not None:
        vals += coeffs.gamma(x, y)[:, None] * ev.values
    return scale * vals


def assemble_local_operator(
    kind, mesh, element, basis, coeffs, rule=None, box_scale=0.25, box=None
):
    """Matrix representation of the local operator on one element.

    ``basis`` is the element's orthonormal trial basis of degree p. The
    returned rows are tested against an orthonormal basis of the kind's
    test space; the load vector carries the same mesh-size scaling as the
    operator.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown local operator kind {kind!r}")
    p = basis.degree
    h_k = mesh.h[element]

    if kind == AR:
        if p < 1:
            raise ValueError("AR local operator requires degree p >= 1")
        if coeffs.beta is None:
            raise ValueError("AR local operator requires an advection field beta")
        if rule is None:
            rule = triangle_rule(
                mesh.vertices[mesh.triangles[element]], 2 * p + 4, positive=True
            )
        q_basis = ElementBasis.from_rule(
            basis.center, basis.scale, p - 1, rule, element=element
        )
        x, y = rule.points[:, 0], rule.points[:, 1]
        ev = basis.eval(rule.points, gradients=True)
        b = coeffs.beta(x, y)
        vals = b[:, None, 0] * ev.gradients[..., 0] + b[:, None, 1] * ev.gradients[..., 1]
        if coeffs.gamma is not None:
            vals += coeffs.gamma(x, y)[:, None] * ev.values
        scale = math.sqrt(h_k)
        qv = q_basis.eval(rule.points).values
        matrix = np.einsum("q,qi,qj->ij", rule.weights, qv, scale * vals)
        rhs = np.einsum("q,q,qi->i", rule.weights, scale * coeffs.f(x, y), qv)
        return LocalOperator(kind=kind, element=element, matrix=matrix, rhs=rhs)

    if p < 2:
        raise ValueError(f"{kind} local operator requires degree p >= 2")

    if kind == DAR:
        if coeffs.alpha is None:
            raise ValueError("DAR local operator requires a diffusion field alpha")
        if rule is None:
            rule = triangle_rule(
                mesh.vertices[mesh.triangles[element]], 2 * p + 4, positive=True
            )
        q_basis = ElementBasis.from_rule(
            basis.center, basis.scale, p - 2, rule, element=element
        )
        vals = _second_order_integrand(basis, coeffs, rule.points, h_k)
        qv = q_basis.eval(rule.points).values
        matrix = np.einsum("q,qi,qj->ij", rule.weights, qv, vals)
        x, y = rule.points[:, 0], rule.points[:, 1]
        rhs = np.einsum("q,q,qi->i", rule.weights, h_k * coeffs.f(x, y), qv)
        return LocalOperator(kind=kind, element=element, matrix=matrix, rhs=rhs)

    if kind == DAR_BOX:
        if coeffs.alpha is None:
            raise ValueError("DAR_BOX local operator requires a diffusion field alpha")
        if box is None:
            box = compute_box(mesh, element, box_scale)
        brule = box_rule(box.center, box.side, 2 * p + 4)
        q_basis = ElementBasis.from_rule(box.center, box.h, p - 2, brule, element=element)
        vals = _second_order_integrand(basis, coeffs, brule.points, box.h)
        qv = q_basis.eval(brule.points).values
        matrix = np.einsum("q,qi,qj->ij", brule.weights, qv, vals)
        x, y = brule.points[:, 0], brule.points[:, 1]
        rhs = np.einsum("q,q,qi->i", brule.weights, box.h * coeffs.f(x, y), qv)
        return LocalOperator(kind=kind, element=element, matrix=matrix, rhs=rhs, box=box)

    # quasi-Trefftz: scaled point derivatives of the PDE residual at the
    # element center; no quadrature involved
    if coeffs.alpha is None:
        raise ValueError("QT_DIFFUSION local operator requires a diffusion field alpha")
    if not coeffs.alpha.has_derivatives(p - 1):
        raise ValueError("quasi-Trefftz assembly needs alpha derivatives up to order p-1")
    if not coeffs.f.has_derivatives(p - 2):
        raise ValueError("quasi-Trefftz assembly needs source derivatives up to order p-2")
    indices = MultiIndexSet(p - 2)
    point = basis.center
    matrix = np.empty((len(indices), basis.dim))
    rhs = np.empty(len(indices))
    for row, idx in enumerate(indices):
        scale = h_k ** (1.5 + idx[0] + idx[1])
        matrix[row] = -scale * _leibniz_basis_rows(idx, basis, coeffs.alpha, point)
        rhs[row] = scale * coeffs.f.derivative(*idx)(point[0], point[1])
    return LocalOperator(kind=kind, element=element, matrix=matrix, rhs=rhs)


def assemble_local_operators(kind, space, coeffs, box_scale=0.25):
    """Local operators for every element of a broken space.

    The volume-projected kinds are assembled in element batches (shared
    quadrature, batched test-basis orthonormalization); the box and
    point-derivative kinds fall back to the per-element path.
    """
    mesh = space.mesh
    if kind in (AR, DAR):
        return _batch_volume_operators(kind, space, coeffs)
    ops = []
    for k in range(mesh.n_elements):
        ops.append(
            assemble_local_operator(
                kind, mesh, k, space.element_basis(k), coeffs, box_scale=box_scale
            )
        )
    return ops


def _batch_volume_operators(kind, space, coeffs, chunk=2048):
    from .basis import _orthonormalizer

    mesh = space.mesh
    p = space.degree
    if kind == AR:
        if p < 1:
            raise ValueError("AR local operator requires degree p >= 1")
        if coeffs.beta is None:
            raise ValueError("AR local operator requires an advection field beta")
    else:
        if p < 2:
            raise ValueError(f"{kind} local operator requires degree p >= 2")
        if coeffs.alpha is None:
            raise ValueError("DAR local operator requires a diffusion field alpha")
    m_dim = operator_row_count(kind, p)
    ops = []
    for start in range(0, mesh.n_elements, chunk):
        elems = np.arange(start, min(start + chunk, mesh.n_elements))
        pts = space.volume_points[elems]
        w = space.volume_weights[elems]
        x, y = pts[..., 0], pts[..., 1]
        ev = space.eval_elements(elems, pts, gradients=True, hessians=(kind == DAR))
        # test-space monomials are a graded-lex prefix of the trial ones
        mono_q = space.scaled_monomials(pts, elems)[..., :m_dim]
        Gq = _orthonormalizer(w, mono_q)
        qv = np.einsum("eqm,enm->eqn", mono_q, Gq)
        if kind == AR:
            b = coeffs.beta(x, y)
            vals = np.einsum("eqjd,eqd->eqj", ev.gradients, b)
            if coeffs.gamma is not None:
                vals += coeffs.gamma(x, y)[..., None] * ev.values
            scale = np.sqrt(mesh.h[elems])
        else:
            alpha_vals = coeffs.alpha(x, y)
            _require_positive_alpha(alpha_vals)
            ax = coeffs.alpha.derivative(1, 0)(x, y)
            ay = coeffs.alpha.derivative(0, 1)(x, y)
            lap = ev.hessians[..., 0, 0] + ev.hessians[..., 1, 1]
            vals = -(
                alpha_vals[..., None] * lap
                + ax[..., None] * ev.gradients[..., 0]
                + ay[..., None] * ev.gradients[..., 1]
            )
            if coeffs.beta is not None:
                vals += np.einsum("eqjd,eqd->eqj", ev.gradients, coeffs.beta(x, y))
            if coeffs.gamma is not None:
                vals += coeffs.gamma(x, y)[..., None] * ev.values
            scale = mesh.h[elems]
        matrices = np.einsum("e,eq,eqi,eqj->eij", scale, w, qv, vals)
        loads = np.einsum("e,eq,eq,eqi->ei", scale, w, coeffs.f(x, y), qv)
        for j, k in enumerate(elems):
            ops.append(
                LocalOperator(kind=kind, element=int(k), matrix=matrices[j], rhs=loads[j])
            )
    return ops


def _leibniz_basis_rows(index, basis, alpha, point):
    """D^index div(alpha grad phi_j)(point) for every basis function.

    Expands div(alpha grad w) = alpha lap(w) + grad(alpha).grad(w) and
    applies the Leibniz product rule; all polynomial derivatives are exact.
    """
    ix, iy = index
    pt = np.asarray(point, dtype=float)[None, :]
    cache = {}

    def dphi(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = basis.derivative(pt, (a, b))[0]
        return cache[(a, b)]

    px, py = float(point[0]), float(point[1])
    rows = np.zeros(basis.dim)
    for lx in range(ix + 1):
        for ly in range(iy + 1):
            binom = math.comb(ix, lx) * math.comb(iy, ly)
            rx, ry = ix - lx, iy - ly
            a_l = float(alpha.derivative(lx, ly)(px, py))
            rows += binom * a_l * (dphi(rx + 2, ry) + dphi(rx, ry + 2))
            a_x = float(alpha.derivative(lx + 1, ly)(px, py))
            a_y = float(alpha.derivative(lx, ly + 1)(px, py))
            rows += binom * (a_x * dphi(rx + 1, ry) + a_y * dphi(rx, ry + 1))
    return rows


def leibniz_point_derivative(index, basis, coefficients, alpha, point):
    """Exact value of D^index div(alpha grad w)(point) for the polynomial
    ``w`` given by coefficients in the element basis."""
    order = index[0] + index[1]
    if not alpha.has_derivatives(order + 1):
        raise ValueError(
            f"alpha derivative oracle does not reach order {order + 1}"
        )
    rows = _leibniz_basis_rows(index, basis, alpha, point)
    return float(rows @ np.asarray(coefficients, dtype=float))
