"""
Boundary side of the reconstruction on the unit disk.

The forward problem Lap u + b1 u_x + b2 u_y = 0, u = g on |z| = 1 is discretized
by polar spectral collocation: Fourier in theta and Chebyshev in r over [-1, 1]
using u(-r, theta) = u(r, theta + pi), so no node sits at the origin. The
Dirichlet-to-Neumann map is assembled from it on Fourier modes |n| <= M.

Traces of the exponentially growing solutions are recovered from the DtN map
with the series ansatz h = exp(izk) sum_{n=0}^{N} a_n z^{-n}, which satisfies
the exterior (Plemelj) condition by construction; the Hilbert-transform
condition and the zero-mean constraint are imposed in a ridge-regularized
least-squares sense.
"""

import logging
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve, toeplitz

from src.models.boundary import BoundaryFunction, DtNOperator, InteriorSolution, TraceSolveReport, theta_nodes
from src.models.config import SolverSettings
from src.models.convection import ConvectionField
from src.models.grids import ComplexGrid, GridSpec
from src.models.scattering import ScatteringTransform
from src.services.field_grids import spectral_interpolate
from src.utils.errors import PreconditionError, SingularSystemError
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

ZERO_MEAN_TOLERANCE = 1e-10
MAX_CONDITION = 1e15
HILBERT_WARNING = 1e-3
EINVB_FLOOR = 1e-8


def chebyshev_matrix(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Chebyshev differentiation matrix on x_j = cos(pi j / n), j = 0..n."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def fourier_matrices(m: int) -> Tuple[np.ndarray, np.ndarray]:
    """First and second periodic differentiation matrices on m equispaced nodes (m even)."""
    h = 2.0 * np.pi / m
    k = np.arange(1, m)
    sign = (-1.0) ** k
    first = np.concatenate([[0.0], 0.5 * sign / np.tan(k * h / 2.0)])
    D1 = toeplitz(first, np.concatenate([[0.0], -first[1:]]))
    second = np.concatenate([[-np.pi ** 2 / (3.0 * h ** 2) - 1.0 / 6.0], -0.5 * sign / np.sin(k * h / 2.0) ** 2])
    D2 = toeplitz(second)
    return D1, D2


def _resample(values: np.ndarray, m_out: int) -> np.ndarray:
    """Trigonometric resampling of equispaced periodic samples; Nyquist modes dropped."""
    m_in = values.size
    if m_in == m_out:
        return values
    spectrum = np.fft.fft(values) / m_in
    keep = min(m_in, m_out) // 2 - 1
    orders = np.arange(-keep, keep + 1)
    out = np.zeros(m_out, dtype=complex)
    out[orders % m_out] = spectrum[orders % m_in]
    return np.fft.ifft(out) * m_out


class ConvectionBVPSolver:
    """
    Dense collocation operator for one convection field, factorized once.

    Unknowns are u(r_i, theta_m) at the N2 positive Chebyshev radii, ordered
    radius-major. Boundary data enters the right-hand side through the r = 1
    and r = -1 columns of the radial matrices.
    """

    def __init__(self, f: ConvectionField, radial_degree: int = 48, theta_count: int = 128):
        if f.L <= 1.0:
            raise PreconditionError(f"grid half-width L={f.L:g} must exceed the unit disk", L=f.L)
        if f.support_radius > 0.8 + 1e-12:
            raise PreconditionError(
                f"b must be supported inside radius 0.8, got {f.support_radius:g}",
                support_radius=f.support_radius,
            )
        if theta_count % 2:
            raise PreconditionError(f"theta node count must be even, got {theta_count}")

        n = radial_degree if radial_degree % 2 else radial_degree + 1
        D, x = chebyshev_matrix(n)
        D2 = D @ D
        half = (n - 1) // 2
        pos = np.arange(1, half + 1)
        neg = np.arange(n - 1, half, -1)
        r = x[pos]

        m = theta_count
        theta = theta_nodes(m)
        D1t, D2t = fourier_matrices(m)
        shift = np.roll(np.eye(m), m // 2, axis=1)
        inv_r = np.diag(1.0 / r)
        eye_m = np.eye(m)

        laplacian = (
            np.kron(D2[np.ix_(pos, pos)] + inv_r @ D[np.ix_(pos, pos)], eye_m)
            + np.kron(D2[np.ix_(pos, neg)] + inv_r @ D[np.ix_(pos, neg)], shift)
            + np.kron(inv_r @ inv_r, D2t)
        )
        d_radial = np.kron(D[np.ix_(pos, pos)], eye_m) + np.kron(D[np.ix_(pos, neg)], shift)
        d_angular = np.kron(np.eye(half), D1t)

        points = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
        if f.is_zero():
            b1 = np.zeros(points.size)
            b2 = np.zeros(points.size)
        else:
            b1 = spectral_interpolate(f.b1, points, f.L).real
            b2 = spectral_interpolate(f.b2, points, f.L).real
        cos_t = np.tile(np.cos(theta), half)
        sin_t = np.tile(np.sin(theta), half)
        radius = np.repeat(r, m)
        self._b_radial = b1 * cos_t + b2 * sin_t
        b_angular = (-b1 * sin_t + b2 * cos_t) / radius

        matrix = laplacian + self._b_radial[:, None] * d_radial + b_angular[:, None] * d_angular

        self._lu = lu_factor(matrix)
        rcond, info = lapack.dgecon(self._lu[0], np.linalg.norm(matrix, 1), norm='1')
        self.condition = float(np.inf if rcond == 0 else 1.0 / rcond)
        if not np.isfinite(self.condition) or self.condition > MAX_CONDITION:
            raise SingularSystemError("collocation matrix is numerically singular", condition=self.condition)
        logger.debug(f"BVP collocation: {matrix.shape[0]} unknowns, condition ~ {self.condition:.2e}")

        self.D = D
        self.D2 = D2
        self.pos = pos
        self.neg = neg
        self.n = n
        self.radii = r
        self.theta = theta
        self.half = half
        self.m = m
        self.phantom_id = f.phantom_id

    def _boundary_rhs(self, g_plus: np.ndarray, g_minus: np.ndarray) -> np.ndarray:
        D, D2, pos, n = self.D, self.D2, self.pos, self.n
        inv_r = 1.0 / self.radii
        lap_plus = D2[pos, 0] + inv_r * D[pos, 0]
        lap_minus = D2[pos, n] + inv_r * D[pos, n]
        rhs = np.kron(lap_plus[:, None], g_plus) + np.kron(lap_minus[:, None], g_minus)
        radial = np.kron(D[pos, 0][:, None], g_plus) + np.kron(D[pos, n][:, None], g_minus)
        return -(rhs + self._b_radial[:, None] * radial)

    def _opposite(self, g: np.ndarray) -> np.ndarray:
        return np.roll(g, -(self.m // 2), axis=0)

    def solve_nodes(self, g: np.ndarray) -> np.ndarray:
        """Interior values for boundary data sampled on the solver's theta nodes (columns = data sets)."""
        g = np.asarray(g, dtype=complex)
        single = g.ndim == 1
        g = g.reshape(self.m, -1)
        rhs = self._boundary_rhs(g, self._opposite(g))
        u = lu_solve(self._lu, rhs.real) + 1j * lu_solve(self._lu, rhs.imag)
        u = u.reshape(self.half, self.m, -1)
        return u[..., 0] if single else u

    def normal_derivative_nodes(self, g: np.ndarray) -> np.ndarray:
        """du/dr at r = 1 on the solver's theta nodes."""
        g = np.asarray(g, dtype=complex)
        single = g.ndim == 1
        g = g.reshape(self.m, -1)
        u = self.solve_nodes(g)
        D, n = self.D, self.n
        u_opposite = np.roll(u, -(self.m // 2), axis=1)
        dudr = (
            D[0, 0] * g
            + np.einsum('i,imc->mc', D[0, self.pos], u)
            + np.einsum('i,imc->mc', D[0, self.neg], u_opposite)
            + D[0, n] * self._opposite(g)
        )
        return dudr[:, 0] if single else dudr


def solve_bvp(f: ConvectionField, g: BoundaryFunction, radial_degree: int = 48,
              theta_count: Optional[int] = None,
              solver: Optional[ConvectionBVPSolver] = None) -> InteriorSolution:
    """Real part of the solution with trace g, at the interior collocation nodes."""
    solver = solver or ConvectionBVPSolver(f, radial_degree, theta_count or g.m)
    u = solver.solve_nodes(_resample(g.values, solver.m))
    return InteriorSolution(solver.radii, solver.theta, u.real, solver.condition)


def dtn_apply(f: ConvectionField, g: BoundaryFunction, radial_degree: int = 48,
              theta_count: Optional[int] = None,
              solver: Optional[ConvectionBVPSolver] = None) -> BoundaryFunction:
    """Normal derivative du/dr on |z| = 1, sampled like g."""
    solver = solver or ConvectionBVPSolver(f, radial_degree, theta_count or g.m)
    dudr = solver.normal_derivative_nodes(_resample(g.values, solver.m))
    return BoundaryFunction(_resample(dudr, g.m))


def assemble_dtn(f: ConvectionField, modes: int = 32, radial_degree: int = 48,
                 theta_count: Optional[int] = None,
                 solver: Optional[ConvectionBVPSolver] = None) -> DtNOperator:
    """DtN matrix on Fourier coefficients n = -modes..modes."""
    theta_count = theta_count or 4 * modes
    if theta_count <= 2 * modes + 1:
        raise PreconditionError(
            f"{theta_count} theta nodes cannot resolve {modes} modes",
            theta_count=theta_count, modes=modes,
        )
    solver = solver or ConvectionBVPSolver(f, radial_degree, theta_count)
    orders = np.arange(-modes, modes + 1)
    data = np.exp(1j * np.outer(solver.theta, orders))
    images = solver.normal_derivative_nodes(data)
    spectrum = np.fft.fft(images, axis=0) / solver.m
    matrix = spectrum[orders % solver.m, :]
    logger.info(f"Assembled DtN map on {2 * modes + 1} modes (condition ~ {solver.condition:.2e})")
    return DtNOperator(modes, matrix, f.phantom_id)


def ds_inverse(fb: BoundaryFunction) -> BoundaryFunction:
    """Antiderivative along the circle from theta = 0; requires zero mean."""
    mean = fb.mean()
    if abs(mean) > ZERO_MEAN_TOLERANCE:
        raise PreconditionError(
            f"tangential antiderivative needs zero-mean data, mean is {abs(mean):.3e}",
            mean=mean,
        )
    m = fb.m
    orders = np.fft.fftfreq(m, d=1.0 / m)
    spectrum = np.fft.fft(fb.values) / m
    integrated = np.zeros(m, dtype=complex)
    nonzero = orders != 0
    integrated[nonzero] = spectrum[nonzero] / (1j * orders[nonzero])
    integrated[m // 2] = 0.0
    values = np.fft.ifft(integrated) * m
    return BoundaryFunction(values - values[0])


def hilbert_Hb(dtn: DtNOperator, fb: BoundaryFunction) -> BoundaryFunction:
    """H_b = -Lambda ds^{-1}."""
    image = dtn.apply(ds_inverse(fb))
    return BoundaryFunction(-image.values)


@lru_cache(maxsize=8)
def _principal_value_matrix(m: int) -> np.ndarray:
    """p.v. integral of w(zeta)/(zeta - z) dzeta by trapezoid over odd-offset nodes."""
    zeta = np.exp(1j * theta_nodes(m))
    rows, cols = np.nonzero((np.arange(m)[None, :] - np.arange(m)[:, None]) % 2 == 1)
    matrix = np.zeros((m, m), dtype=complex)
    matrix[rows, cols] = 2.0 * (2.0 * np.pi / m) * 1j * zeta[cols] / (zeta[cols] - zeta[rows])
    matrix.setflags(write=False)
    return matrix


def cauchy_singular(hb: BoundaryFunction, k: complex) -> BoundaryFunction:
    """
    S_k h(z) = (1/pi) p.v. int h(zeta) exp(-i(zeta - z)k) / (zeta - z) dzeta.

    For h = exp(izk) w with w analytic outside the disk and w -> a0,
    (I - i S_k) h = 2 a0 exp(izk).
    """
    z = hb.z
    w = np.exp(-1j * z * k) * hb.values
    return BoundaryFunction(np.exp(1j * z * k) * (_principal_value_matrix(hb.m) @ w) / np.pi)


def exterior_residual(w: np.ndarray, a0: complex) -> float:
    """Relative max residual of w + (1/(pi i)) P w = 2 a0, the exterior condition in the w variable."""
    w = np.asarray(w, dtype=complex)
    image = w + (_principal_value_matrix(w.size) @ w) / (1j * np.pi)
    return float(np.max(np.abs(image - 2.0 * a0)) / (2.0 * abs(a0)))


def hilbert_residual(dtn: DtNOperator, h: BoundaryFunction) -> float:
    """Relative max residual of H_b(Im(nu h) - mean) = Re(nu h)."""
    nu_h = h.z * h.values
    imag = nu_h.imag - np.mean(nu_h.imag)
    image = hilbert_Hb(dtn, BoundaryFunction(imag)).values.real
    scale = max(np.max(np.abs(nu_h)), 1e-300)
    return float(np.max(np.abs(image - nu_h.real)) / scale)


def _trace_columns(dtn: DtNOperator, k: complex, order: int, m: int):
    """Hilbert-condition rows and zero-mean row for each real unknown of the series."""
    z = np.exp(1j * theta_nodes(m))
    growth = np.exp(1j * z * k)
    count = order + 1
    hilbert_rows = np.empty((m, 2 * count))
    mean_row = np.empty(2 * count)
    for part, unit in enumerate((1.0, 1j)):
        for n in range(count):
            nu_h = z * growth * unit * z ** (-n)
            imag = nu_h.imag
            mean = float(np.mean(imag))
            image = hilbert_Hb(dtn, BoundaryFunction(imag - mean)).values.real
            column = part * count + n
            hilbert_rows[:, column] = image - nu_h.real
            mean_row[column] = mean
    return hilbert_rows, mean_row


def _solve_series(hilbert_rows: np.ndarray, mean_row: np.ndarray, order: int,
                  reg: float, a0: complex, m: int):
    count = order + 1
    weighted = hilbert_rows * np.sqrt(2.0 * np.pi / m)
    normal = weighted.T @ weighted
    scale = float(np.max(np.diag(normal))) if normal.size else 1.0
    ridge = np.ones(2 * count)
    ridge[0] = ridge[count] = 0.0
    normal = normal + reg * scale * np.diag(ridge)

    constraints = np.zeros((3, 2 * count))
    constraints[0] = mean_row
    constraints[1, 0] = 1.0
    constraints[2, count] = 1.0
    targets = np.array([0.0, a0.real, a0.imag])

    size = 2 * count
    kkt = np.zeros((size + 3, size + 3))
    kkt[:size, :size] = normal / scale
    kkt[:size, size:] = constraints.T
    kkt[size:, :size] = constraints
    rhs = np.concatenate([np.zeros(size), targets])

    condition = float(np.linalg.cond(kkt))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularSystemError("trace recovery system is rank deficient", condition=condition)
    solution = np.linalg.solve(kkt, rhs)[:size]
    return solution[:count] + 1j * solution[count:], condition


def _series_on_circle(coefficients: np.ndarray, m: int) -> np.ndarray:
    z = np.exp(1j * theta_nodes(m))
    powers = z[:, None] ** (-np.arange(coefficients.size))[None, :]
    return powers @ coefficients


def recover_traces(dtn: DtNOperator, k: complex, N: int = 16, reg: float = 1e-8,
                   m: int = 128) -> Tuple[BoundaryFunction, BoundaryFunction, TraceSolveReport]:
    """
    Traces h_r, h_i of W_r, W_i on |z| = 1 from the DtN map.

    h = exp(izk) sum_{n<=N} a_n z^{-n} with a_0 = 1 (h_r) or 1j (h_i). The
    Hilbert condition H_b(Im(nu h)) = Re(nu h) is fitted in least squares with
    ridge weight ``reg`` on a_n, n >= 1, and Im(nu h) is constrained to zero mean.
    """
    if N > m // 4:
        raise PreconditionError(f"series order {N} exceeds m/4 = {m // 4}", N=N, m=m)
    if reg < 0:
        raise PreconditionError(f"regularization must be non-negative, got {reg}", reg=reg)
    k = complex(k)
    hilbert_rows, mean_row = _trace_columns(dtn, k, N, m)
    z = np.exp(1j * theta_nodes(m))
    growth = np.exp(1j * z * k)

    traces = []
    coefficients = []
    conditions = []
    exterior = []
    hilbert = []
    means = []
    for a0 in (1.0 + 0j, 1j):
        a, condition = _solve_series(hilbert_rows, mean_row, N, reg, a0, m)
        w = _series_on_circle(a, m)
        h = BoundaryFunction(growth * w)
        traces.append(h)
        coefficients.append(a)
        conditions.append(condition)
        exterior.append(exterior_residual(w, a0))
        hilbert.append(hilbert_residual(dtn, h))
        means.append(abs(float(np.mean((z * h.values).imag))))

    warning = max(hilbert) > HILBERT_WARNING
    if warning:
        logger.warning(f"trace recovery at k={k}: Hilbert residual {max(hilbert):.2e} above {HILBERT_WARNING:g}")
    report = TraceSolveReport(
        coefficients=np.vstack(coefficients),
        reg=reg,
        residual_exterior=max(exterior),
        residual_hilbert=max(hilbert),
        zero_mean_residual=max(means),
        condition=max(conditions),
        warning=warning,
    )
    return traces[0], traces[1], report


def boundary_scattering_transform(h_r: BoundaryFunction, h_i: BoundaryFunction,
                                  einvb: BoundaryFunction, k: complex) -> complex:
    """
    t(k) = (i/(4 pi)) int conj(nu) (conj(psi_r) - conj(psi_i)) dsigma with
    psi_r = exp(-izk) h_r / einvb and psi_i = exp(-izk) h_i / (i einvb).
    """
    if not (h_r.m == h_i.m == einvb.m):
        raise PreconditionError("traces and exp(-C b) must share boundary nodes")
    modulus = np.abs(einvb.values)
    if np.min(modulus) <= EINVB_FLOOR * np.max(modulus):
        raise PreconditionError(
            "exp(-C b) vanishes on the boundary",
            min_modulus=float(np.min(modulus)),
        )
    z = h_r.z
    decay = np.exp(-1j * z * k)
    psi_r = decay * h_r.values / einvb.values
    psi_i = decay * h_i.values / (1j * einvb.values)
    integrand = np.conj(z) * (np.conj(psi_r) - np.conj(psi_i))
    return complex(1j / (4.0 * np.pi) * np.sum(integrand) * (2.0 * np.pi / h_r.m))


def einvb_limit(dtn: DtNOperator, Kmax: float = 8.0, directions: int = 8, N: int = 16,
                reg: float = 1e-8, m: int = 128, weighted: bool = True) -> BoundaryFunction:
    """
    exp(-C b) on the circle as the direction average of exp(-izk) h_r at |k| = Kmax.

    The trace fit controls h_r, so exp(-izk) h_r is accurate only where
    |exp(izk)| is large. By default each boundary point averages the directions
    with weights |exp(izk)|^2 normalized at that point; ``weighted=False`` gives
    the plain mean.
    """
    if directions < 1:
        raise PreconditionError("at least one direction is required", directions=directions)
    z = np.exp(1j * theta_nodes(m))
    estimates = np.empty((directions, m), dtype=complex)
    log_weights = np.zeros((directions, m))
    for j in range(directions):
        k = Kmax * np.exp(2j * np.pi * j / directions)
        _, _, report = recover_traces(dtn, k, N, reg, m)
        estimates[j] = _series_on_circle(report.coefficients[0], m)
        if weighted:
            # log |exp(izk)|^2
            log_weights[j] = -2.0 * np.imag(z * k)
    weights = np.exp(log_weights - np.max(log_weights, axis=0))
    return BoundaryFunction(np.sum(weights * estimates, axis=0) / np.sum(weights, axis=0))


def boundary_scattering_grid(dtn: DtNOperator, einvb: BoundaryFunction, kspec: GridSpec, K: float,
                             N: int = 16, reg: float = 1e-8,
                             settings: Optional[SolverSettings] = None) -> ScatteringTransform:
    """t from boundary data at every node of ``kspec`` with |k| <= K."""
    settings = settings or SolverSettings()
    knodes = kspec.nodes()
    indices = list(zip(*np.nonzero(np.abs(knodes) <= K)))
    m = einvb.m
    logger.info(f"Recovering traces and boundary transform at {len(indices)} k nodes")

    def one(k):
        h_r, h_i, _ = recover_traces(dtn, k, N, reg, m)
        return boundary_scattering_transform(h_r, h_i, einvb, k)

    results = ordered_map(one, [complex(knodes[idx]) for idx in indices],
                          workers=settings.workers, label='k')
    values = np.zeros((kspec.nx, kspec.nx), dtype=complex)
    for idx, value in zip(indices, results):
        values[idx] = value
    return ScatteringTransform(ComplexGrid(kspec.nx, kspec.L, values), float(K))
