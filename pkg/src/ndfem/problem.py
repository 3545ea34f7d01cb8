"""Problem data for linear elliptic equations in nondivergence form.

An equation ``A : D^2 u + b . grad u - c u = f`` with Dirichlet data
``u = r`` is described by a :class:`ProblemSpec`.  This module verifies
uniform ellipticity and the Cordes conditions by dense sampling, provides
the scaling function ``gamma`` and the closed-form coercivity/continuity
constants, and ships a registry of named test problems with manufactured
exact solutions.

Coefficient callables are vectorized: given ``(x, y)`` arrays of shape
``(m,)``, ``A`` returns ``(m, 2, 2)``, ``b`` returns ``(m, 2)``, and
``c``/``f``/``u`` return ``(m,)``.
"""

from __future__ import annotations

import numpy as np

from .mesh import build_rectangle_mesh
from .spaces import make_quadrature, physical_points

__all__ = [
    "CoefficientField",
    "ProblemSpec",
    "ExactTriple",
    "CordesReport",
    "ConstantsReport",
    "check_ellipticity",
    "check_cordes",
    "cordes_ratio_special",
    "cordes_ratio_general",
    "gamma_at",
    "sup_gamma",
    "compute_constants",
    "poincare_constant",
    "default_sample_points",
    "get_problem",
    "PROBLEM_NAMES",
]


def constant_matrix_field(M):
    M = np.asarray(M, dtype=float)

    def A(x, y):
        return np.broadcast_to(M, (len(np.atleast_1d(x)),) + M.shape).copy()

    return A


def constant_vector_field(v):
    v = np.asarray(v, dtype=float)

    def b(x, y):
        return np.broadcast_to(v, (len(np.atleast_1d(x)), 2)).copy()

    return b


def constant_scalar_field(s):
    s = float(s)

    def c(x, y):
        return np.full(len(np.atleast_1d(x)), s)

    return c


class CoefficientField:
    """Coefficients (A, b, c) of the nondivergence-form operator.

    ``A`` must be symmetric and ``c`` nonnegative wherever sampled; both
    are enforced by :func:`check_ellipticity`.  ``smoothness`` is a hint
    used only for quadrature-adequacy warnings: one of ``"constant"``,
    ``"smooth"``, ``"piecewise-with-axis-jumps"``.
    """

    def __init__(self, A, b, c, smoothness="smooth"):
        self.A = A
        self.b = b
        self.c = c
        self.smoothness = smoothness


class ExactTriple:
    """Manufactured solution: u with its gradient and Hessian closures."""

    def __init__(self, u, grad_u, hess_u):
        self.u = u
        self.grad_u = grad_u
        self.hess_u = hess_u


class ProblemSpec:
    """A complete problem instance.

    Attributes
    ----------
    name : str
    bounds : ((x0, y0), (x1, y1)) rectangle corners of the domain
    coeffs : CoefficientField
    f : callable right-hand side
    r : callable Dirichlet data (zero callable for zero-BC problems)
    theta : float in [0, 1], gradient/recovered-gradient blend in the
        first-order term
    lam : float >= 0; 0 is allowed only when b and c vanish
    exact : ExactTriple or None
    zero_bc : bool, True when r is identically zero
    epsilon : float, the Cordes parameter this problem is checked at
    """

    def __init__(self, name, bounds, coeffs, f, r, theta, lam, exact=None,
                 zero_bc=False, epsilon=None):
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {theta}")
        if lam < 0.0:
            raise ValueError("lambda must be nonnegative")
        if lam == 0.0:
            # lambda = 0 is the special regime and needs b = 0, c = 0
            # (spot check at the domain center).
            cx = np.array([0.5 * (bounds[0][0] + bounds[1][0])])
            cy = np.array([0.5 * (bounds[0][1] + bounds[1][1])])
            if np.abs(coeffs.b(cx, cy)).max() > 0 or np.abs(coeffs.c(cx, cy)).max() > 0:
                raise ValueError("lambda = 0 requires vanishing b and c")
        self.name = name
        self.bounds = bounds
        self.coeffs = coeffs
        self.f = f
        self.r = r
        self.theta = float(theta)
        self.lam = float(lam)
        self.exact = exact
        self.zero_bc = bool(zero_bc)
        self.epsilon = epsilon

    @property
    def condition(self):
        """Cordes condition regime implied by lambda."""
        return "general" if self.lam > 0 else "special"

    def build_mesh(self, n):
        return build_rectangle_mesh(self.bounds[0], self.bounds[1], n)


class CordesReport:
    """Outcome of a sampled Cordes-condition check."""

    def __init__(self, condition, epsilon_tested, holds, worst_ratio, worst_point,
                 epsilon_max_estimate, sample_count):
        self.condition = condition
        self.epsilon_tested = float(epsilon_tested)
        self.holds = bool(holds)
        self.worst_ratio = float(worst_ratio)
        self.worst_point = worst_point
        self.epsilon_max_estimate = float(epsilon_max_estimate)
        self.sample_count = int(sample_count)

    def to_dict(self):
        return {
            "condition": self.condition,
            "epsilon_tested": self.epsilon_tested,
            "holds": self.holds,
            "worst_ratio": self.worst_ratio,
            "worst_point": list(map(float, self.worst_point)),
            "epsilon_max_estimate": self.epsilon_max_estimate,
            "sample_count": self.sample_count,
        }


class ConstantsReport:
    """Closed-form constants of the bilinear form, for reporting only."""

    def __init__(self, sup_gamma, C_P, C_coercive_hat, C_coercive_full, C_continuity):
        self.sup_gamma = float(sup_gamma)
        self.C_P = float(C_P)
        self.C_coercive_hat = float(C_coercive_hat)
        self.C_coercive_full = float(C_coercive_full)
        self.C_continuity = float(C_continuity)

    def to_dict(self):
        return {
            "sup_gamma": self.sup_gamma,
            "C_P": self.C_P,
            "C_coercive_hat": self.C_coercive_hat,
            "C_coercive_full": self.C_coercive_full,
            "C_continuity": self.C_continuity,
        }


def default_sample_points(bounds, grid=512, mesh_n=8):
    """Cell centers of a dense grid plus interior quadrature points.

    Cell centers avoid the coordinate axes (where the piecewise
    coefficients jump) for any even grid on a centered square, and the
    quadrature points of a coarse mesh add samples distributed the way
    assembly will see them.
    """
    (x0, y0), (x1, y1) = bounds
    xs = x0 + (np.arange(grid) + 0.5) * (x1 - x0) / grid
    ys = y0 + (np.arange(grid) + 0.5) * (y1 - y0) / grid
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    mesh = build_rectangle_mesh(bounds[0], bounds[1], mesh_n)
    quad = physical_points(mesh, make_quadrature(6).xy).reshape(-1, 2)
    return np.vstack([pts, quad])


def check_ellipticity(coeffs, samples):
    """Extreme eigenvalues of A over a sample set.

    Returns ``(lambda_flat, lambda_sharp)``, the smallest and largest
    eigenvalue seen.  Raises if any sampled matrix is nonsymmetric or has
    a nonpositive eigenvalue.
    """
    samples = np.atleast_2d(samples)
    if len(samples) == 0:
        raise ValueError("empty sample set")
    A = np.asarray(coeffs.A(samples[:, 0], samples[:, 1]), dtype=float)
    skew = np.abs(A - np.swapaxes(A, -2, -1)).max()
    if skew > 1e-12 * max(1.0, np.abs(A).max()):
        raise ValueError(f"nonsymmetric coefficient matrix (max skew {skew:g})")
    eigs = np.linalg.eigvalsh(A)
    lambda_flat = float(eigs.min())
    lambda_sharp = float(eigs.max())
    if lambda_flat <= 0.0:
        raise ValueError(f"coefficient matrix not uniformly elliptic (min eigenvalue {lambda_flat:g})")
    return lambda_flat, lambda_sharp


def cordes_ratio_special(A):
    """||A||_F^2 / (tr A)^2 for a stack of (m, d, d) matrices."""
    A = np.asarray(A, dtype=float)
    fro2 = (A**2).sum(axis=(-2, -1))
    tr = np.trace(A, axis1=-2, axis2=-1)
    with np.errstate(divide="ignore"):
        return np.where(tr > 0, fro2 / tr**2, np.inf)


def cordes_ratio_general(A, b, c, lam):
    """(||A||_F^2 + |b|^2/(2 lam) + (c/lam)^2) / (tr A + c/lam)^2."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    num = (A**2).sum(axis=(-2, -1)) + (b**2).sum(axis=-1) / (2.0 * lam) + (c / lam) ** 2
    den = np.trace(A, axis1=-2, axis2=-1) + c / lam
    with np.errstate(divide="ignore"):
        return np.where(den > 0, num / den**2, np.inf)


def check_cordes(spec, epsilon, samples=None, condition=None):
    """Verify a Cordes condition for ``spec`` by dense sampling.

    The general condition (lambda > 0) requires the sampled ratio to stay
    below ``1/(d + epsilon)``; the special condition (b = 0, c = 0)
    requires ``||A||^2/(tr A)^2 <= 1/(d - 1 + epsilon)``.  The bound is
    monotone decreasing in epsilon, so ``epsilon_max_estimate`` (the
    largest epsilon the sampled worst ratio would admit) summarizes the
    check independently of the tested value.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if condition is None:
        condition = spec.condition
    if condition not in ("general", "special"):
        raise ValueError(f"unknown condition {condition!r}")
    if condition == "general" and spec.lam <= 0.0:
        raise ValueError("general Cordes condition needs lambda > 0")
    if samples is None:
        samples = default_sample_points(spec.bounds)
    samples = np.atleast_2d(samples)
    x, y = samples[:, 0], samples[:, 1]
    A = np.asarray(spec.coeffs.A(x, y), dtype=float)
    d = A.shape[-1]
    if condition == "special":
        ratios = cordes_ratio_special(A)
        bound = 1.0 / (d - 1 + epsilon)
        offset = d - 1
    else:
        ratios = cordes_ratio_general(A, spec.coeffs.b(x, y), spec.coeffs.c(x, y), spec.lam)
        bound = 1.0 / (d + epsilon)
        offset = d
    worst = int(np.argmax(ratios))
    worst_ratio = float(ratios[worst])
    eps_max = 1.0 / worst_ratio - offset if np.isfinite(worst_ratio) and worst_ratio > 0 else -float("inf")
    return CordesReport(
        condition=condition,
        epsilon_tested=epsilon,
        holds=bool(worst_ratio <= bound),
        worst_ratio=worst_ratio,
        worst_point=tuple(samples[worst]),
        epsilon_max_estimate=eps_max,
        sample_count=len(samples),
    )


def gamma_at(spec, point):
    """Scaling function at one point (or an array of points).

    gamma = tr A / ||A||^2 when lambda = 0, and
    (tr A + c/lambda) / (||A||^2 + |b|^2/(2 lambda) + (c/lambda)^2)
    otherwise.
    """
    pts = np.atleast_2d(point)
    x, y = pts[:, 0], pts[:, 1]
    A = np.asarray(spec.coeffs.A(x, y), dtype=float)
    fro2 = (A**2).sum(axis=(-2, -1))
    tr = np.trace(A, axis1=-2, axis2=-1)
    if spec.lam == 0.0:
        den = fro2
        num = tr
    else:
        b = np.asarray(spec.coeffs.b(x, y), dtype=float)
        c = np.asarray(spec.coeffs.c(x, y), dtype=float)
        num = tr + c / spec.lam
        den = fro2 + (b**2).sum(axis=-1) / (2.0 * spec.lam) + (c / spec.lam) ** 2
    if np.any(den <= 0.0):
        raise ValueError("gamma denominator vanished; coefficients degenerate")
    out = num / den
    return float(out[0]) if np.ndim(point) == 1 else out


def sup_gamma(spec, samples=None):
    if samples is None:
        samples = default_sample_points(spec.bounds)
    return float(np.max(gamma_at(spec, np.atleast_2d(samples))))


def poincare_constant(bounds):
    """Constant C with ||grad phi||^2 >= C ||phi||_{H^1}^2 on H^1_0.

    Uses the exact first Dirichlet eigenvalue 2 pi^2 for the unit square
    and the strip bound pi^2/L^2 (L = longest side) for other boxes,
    mapped through lambda/(1 + lambda).  Reused unchanged for the vector
    space, where no sharp value is available (heuristic, reporting only).
    """
    (x0, y0), (x1, y1) = bounds
    sx, sy = abs(x1 - x0), abs(y1 - y0)
    if abs(sx - 1.0) <= 1e-14 and abs(sy - 1.0) <= 1e-14:
        lam1 = 2.0 * np.pi**2
    else:
        L = max(sx, sy)
        lam1 = np.pi**2 / L**2
    return lam1 / (1.0 + lam1)


def compute_constants(spec, epsilon, C_P=None, sup_A_inf=None, samples=None):
    """Evaluate the closed-form coercivity and continuity constants.

    All norms of coefficients are essential sups of pointwise values over
    the sample set; ``||A||`` is the Frobenius norm throughout.  The
    constants certify coercivity/continuity of the least-squares form and
    are used only in reporting and in the estimator sandwich check, never
    inside the solver.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if samples is None:
        samples = default_sample_points(spec.bounds)
    samples = np.atleast_2d(samples)
    x, y = samples[:, 0], samples[:, 1]
    if C_P is None:
        C_P = poincare_constant(spec.bounds)
    A = np.asarray(spec.coeffs.A(x, y), dtype=float)
    if sup_A_inf is None:
        sup_A_inf = float(np.sqrt((A**2).sum(axis=(-2, -1)).max()))
    d = A.shape[-1]
    sup_b = float(np.sqrt((np.asarray(spec.coeffs.b(x, y)) ** 2).sum(axis=-1).max()))
    sup_c = float(np.abs(np.asarray(spec.coeffs.c(x, y))).max())
    Cg = sup_gamma(spec, samples)
    theta, lam = spec.theta, spec.lam

    s = np.sqrt(1.0 - epsilon)
    if lam == 0.0:
        C_hat = (C_P / 2.0) * min(1.0, (1.0 - s) ** 2 * C_P / max(Cg**2, 1.0))
    else:
        q = (1.0 - epsilon) ** 0.25
        num = (q - s) ** 2 * min(C_P, 4.0 * lam**2)
        den = max(
            2.0 * (q - s) ** 2 * C_P + 2.0 * lam * (theta**2 + (1.0 - theta) ** 2) / (1.0 - s),
            max(1.0, Cg**2),
        )
        C_hat = num / den

    C_full = min(C_hat, 4.0 * sup_A_inf**2) / max(8.0, 16.0 * sup_A_inf**2)
    C_cont = 5.0 * max(
        sup_c,
        1.0 + d * (1.0 - theta) * sup_b,
        1.0 + d * theta * sup_b,
        1.0 + np.sqrt(2.0),
        1.0 + d**2 * sup_A_inf,
    ) ** 2
    return ConstantsReport(Cg, C_P, C_hat, C_full, C_cont)


# ---------------------------------------------------------------------------
# Test problem registry.  Every problem manufactures f from the exact
# triple, so f = A : hess_u + b . grad_u - c u holds by construction.


def manufactured_rhs(coeffs, exact):
    def f(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        A = np.asarray(coeffs.A(x, y), dtype=float)
        b = np.asarray(coeffs.b(x, y), dtype=float)
        c = np.asarray(coeffs.c(x, y), dtype=float)
        H = exact.hess_u(x, y)
        G = exact.grad_u(x, y)
        return (A * H).sum(axis=(-2, -1)) + (b * G).sum(axis=-1) - c * exact.u(x, y)

    return f


def _zero_scalar(x, y):
    return np.zeros(len(np.atleast_1d(x)))


def _poly_problem(theta, lam):
    exact = ExactTriple(
        u=lambda x, y: x**2 - x * y + 0.5 * y**2 + 3 * x + 2,
        grad_u=lambda x, y: np.stack([2 * x - y + 3, -x + y], axis=-1),
        hess_u=lambda x, y: np.broadcast_to(
            np.array([[2.0, -1.0], [-1.0, 1.0]]), (len(np.atleast_1d(x)), 2, 2)
        ).copy(),
    )
    coeffs = CoefficientField(
        constant_matrix_field(np.eye(2)),
        constant_vector_field([0.0, 0.0]),
        constant_scalar_field(0.0),
        smoothness="constant",
    )
    return ProblemSpec(
        "tp-poly", ((0.0, 0.0), (1.0, 1.0)), coeffs,
        manufactured_rhs(coeffs, exact), exact.u, theta, lam,
        exact=exact, zero_bc=False, epsilon=0.9,
    )


def _nonzero_bc_problem(theta, lam):
    pi = np.pi

    def a22(x, y):
        return np.arctan(5000.0 * (x**2 + y**2 - 1.0)) + 2.0

    def A(x, y):
        x = np.atleast_1d(x)
        out = np.zeros((len(x), 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = a22(x, np.atleast_1d(y))
        return out

    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y) + np.sin(pi * (x + y))

    def grad_u(x, y):
        gx = pi * np.cos(pi * x) * np.sin(pi * y) + pi * np.cos(pi * (x + y))
        gy = pi * np.sin(pi * x) * np.cos(pi * y) + pi * np.cos(pi * (x + y))
        return np.stack([gx, gy], axis=-1)

    def hess_u(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        ss = np.sin(pi * x) * np.sin(pi * y)
        spxy = np.sin(pi * (x + y))
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = -pi**2 * (ss + spxy)
        H[:, 1, 1] = -pi**2 * (ss + spxy)
        H[:, 0, 1] = H[:, 1, 0] = pi**2 * (np.cos(pi * x) * np.cos(pi * y) - spxy)
        return H

    exact = ExactTriple(u, grad_u, hess_u)
    coeffs = CoefficientField(
        A, constant_vector_field([0.0, 0.0]), constant_scalar_field(0.0),
        smoothness="smooth",
    )
    return ProblemSpec(
        "tp-nonzero-bc", ((-1.0, -1.0), (1.0, 1.0)), coeffs,
        manufactured_rhs(coeffs, exact), u, theta, lam,
        exact=exact, zero_bc=False, epsilon=0.37,
    )


def _lower_order_problem(theta, lam):
    def A(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        s = np.sign(x * y)
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = 2.0
        out[:, 0, 1] = out[:, 1, 0] = s
        return out

    def parts(t):
        E = np.exp(1.0 - np.abs(t))
        return 1.0 - E, np.sign(t) * E, -E        # F, F', F''

    def u(x, y):
        F, _, _ = parts(x)
        G, _, _ = parts(y)
        return x * y * F * G

    def grad_u(x, y):
        F, Fp, _ = parts(x)
        G, Gp, _ = parts(y)
        return np.stack([y * G * (F + x * Fp), x * F * (G + y * Gp)], axis=-1)

    def hess_u(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        F, Fp, Fpp = parts(x)
        G, Gp, Gpp = parts(y)
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = y * G * (2 * Fp + x * Fpp)
        H[:, 1, 1] = x * F * (2 * Gp + y * Gpp)
        H[:, 0, 1] = H[:, 1, 0] = (F + x * Fp) * (G + y * Gp)
        return H

    exact = ExactTriple(u, grad_u, hess_u)
    coeffs = CoefficientField(
        A, constant_vector_field([0.5, 0.5]), constant_scalar_field(1.0),
        smoothness="piecewise-with-axis-jumps",
    )
    return ProblemSpec(
        "tp-lower-order", ((-1.0, -1.0), (1.0, 1.0)), coeffs,
        manufactured_rhs(coeffs, exact), _zero_scalar, theta, lam,
        exact=exact, zero_bc=True, epsilon=0.22,
    )


def _adaptive_coeffs():
    def A(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        w2 = np.cbrt(x * y) ** 2
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 4.0
        out[:, 0, 1] = out[:, 1, 0] = w2
        return out

    def b(x, y):
        w = np.cbrt(np.atleast_1d(x) * np.atleast_1d(y))
        return np.stack([w, w], axis=-1)

    return CoefficientField(A, b, constant_scalar_field(2.0), smoothness="smooth")


def _peak_problem(theta, lam):
    ax, ay = 0.5, 0.117
    k = 1000.0

    def bump(x, y):
        E = np.exp(-k * ((x - ax) ** 2 + (y - ay) ** 2))
        Ex = -2 * k * (x - ax) * E
        Ey = -2 * k * (y - ay) * E
        Exx = (-2 * k + 4 * k**2 * (x - ax) ** 2) * E
        Eyy = (-2 * k + 4 * k**2 * (y - ay) ** 2) * E
        Exy = 4 * k**2 * (x - ax) * (y - ay) * E
        return E, Ex, Ey, Exx, Eyy, Exy

    def u(x, y):
        p, q = x * (x - 1), y * (y - 1)
        return p * q * bump(x, y)[0]

    def grad_u(x, y):
        p, q = x * (x - 1), y * (y - 1)
        pp, qp = 2 * x - 1, 2 * y - 1
        E, Ex, Ey, _, _, _ = bump(x, y)
        return np.stack([q * (pp * E + p * Ex), p * (qp * E + q * Ey)], axis=-1)

    def hess_u(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        p, q = x * (x - 1), y * (y - 1)
        pp, qp = 2 * x - 1, 2 * y - 1
        E, Ex, Ey, Exx, Eyy, Exy = bump(x, y)
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = q * (2 * E + 2 * pp * Ex + p * Exx)
        H[:, 1, 1] = p * (2 * E + 2 * qp * Ey + q * Eyy)
        H[:, 0, 1] = H[:, 1, 0] = pp * qp * E + pp * q * Ey + p * qp * Ex + p * q * Exy
        return H

    exact = ExactTriple(u, grad_u, hess_u)
    coeffs = _adaptive_coeffs()
    return ProblemSpec(
        "tp-peak", ((0.0, 0.0), (1.0, 1.0)), coeffs,
        manufactured_rhs(coeffs, exact), _zero_scalar, theta, lam,
        exact=exact, zero_bc=True, epsilon=0.04,
    )


def _singular_problem(theta, lam):
    # u = 2 (x - x^2)(y - y^2) (x^2 + y^2)^(-1/4); second derivatives blow
    # up at the origin like r^(-1/2), which stays square integrable.  The
    # closures are evaluated at interior points only; the origin returns 0
    # to stay finite under vectorized evaluation.

    def radial(x, y):
        s = x**2 + y**2
        safe = np.where(s > 0, s, 1.0)
        rho = safe**-0.25
        rho_x = -0.5 * x * safe**-1.25
        rho_y = -0.5 * y * safe**-1.25
        rho_xx = -0.5 * safe**-1.25 + 1.25 * x**2 * safe**-2.25
        rho_yy = -0.5 * safe**-1.25 + 1.25 * y**2 * safe**-2.25
        rho_xy = 1.25 * x * y * safe**-2.25
        mask = s > 0
        return mask, rho, rho_x, rho_y, rho_xx, rho_yy, rho_xy

    def u(x, y):
        mask, rho, *_ = radial(np.atleast_1d(x), np.atleast_1d(y))
        p, q = x - x**2, y - y**2
        return np.where(mask, 2 * p * q * rho, 0.0)

    def grad_u(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        mask, rho, rho_x, rho_y, *_ = radial(x, y)
        p, q = x - x**2, y - y**2
        pp, qp = 1 - 2 * x, 1 - 2 * y
        gx = 2 * q * (pp * rho + p * rho_x)
        gy = 2 * p * (qp * rho + q * rho_y)
        return np.stack([np.where(mask, gx, 0.0), np.where(mask, gy, 0.0)], axis=-1)

    def hess_u(x, y):
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        mask, rho, rho_x, rho_y, rho_xx, rho_yy, rho_xy = radial(x, y)
        p, q = x - x**2, y - y**2
        pp, qp = 1 - 2 * x, 1 - 2 * y
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = np.where(mask, 2 * q * (-2 * rho + 2 * pp * rho_x + p * rho_xx), 0.0)
        H[:, 1, 1] = np.where(mask, 2 * p * (-2 * rho + 2 * qp * rho_y + q * rho_yy), 0.0)
        hxy = 2 * (pp * qp * rho + pp * q * rho_y + p * qp * rho_x + p * q * rho_xy)
        H[:, 0, 1] = H[:, 1, 0] = np.where(mask, hxy, 0.0)
        return H

    exact = ExactTriple(u, grad_u, hess_u)
    coeffs = _adaptive_coeffs()
    return ProblemSpec(
        "tp-singular", ((0.0, 0.0), (1.0, 1.0)), coeffs,
        manufactured_rhs(coeffs, exact), _zero_scalar, theta, lam,
        exact=exact, zero_bc=True, epsilon=0.04,
    )


_BUILDERS = {
    "tp-poly": (_poly_problem, 0.0),
    "tp-nonzero-bc": (_nonzero_bc_problem, 0.0),
    "tp-lower-order": (_lower_order_problem, 1.0),
    "tp-peak": (_peak_problem, 1.0),
    "tp-singular": (_singular_problem, 1.0),
}

PROBLEM_NAMES = tuple(_BUILDERS)


def get_problem(name, theta=0.5, lam=None):
    """Instantiate a registry problem.

    ``lam`` defaults to the problem's standard value (0 for the two
    special-regime problems, 1 otherwise).
    """
    try:
        builder, default_lam = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choices: {', '.join(PROBLEM_NAMES)}") from None
    lam = default_lam if lam is None else float(lam)
    return builder(theta, lam)
