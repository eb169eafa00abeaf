"""Periodic 1-D grid with Fourier-spectral calculus.

Fields live on an equispaced grid of M points (M a power of two) over a
configurable period.  Differentiation, the inverse Laplacian and Sobolev
norms act through the FFT; products are dealiased on a 3/2-padded grid
because the model's nonlinearities are polynomial in the layer thickness
up to degree 4N+3.

Grids and fields are immutable after construction; operations allocate
new fields.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonZeroMean

MEAN_TOL = 1e-10


class PeriodicGrid:
    """Equispaced periodic grid: nodes x_j = j*length/M, spectral modes
    xi_k = 2*pi*k/length for k = -M/2 .. M/2-1."""

    def __init__(self, M: int, length: float = 2.0 * np.pi):
        if M < 16 or (M & (M - 1)) != 0:
            raise ValueError(f"M must be a power of two >= 16, got {M}")
        self.M = M
        self.length = float(length)
        self.nodes = np.arange(M) * (self.length / M)
        self.wavenumbers = 2.0 * np.pi * np.fft.fftfreq(M, d=self.length / M)
        self._pad = 3 * M // 2
        self._deriv_mats = {}

    def __eq__(self, other):
        return (
            isinstance(other, PeriodicGrid)
            and self.M == other.M
            and self.length == other.length
        )

    def __hash__(self):
        return hash((self.M, self.length))

    def __repr__(self):
        return f"PeriodicGrid(M={self.M}, length={self.length!r})"

    @property
    def dx(self) -> float:
        return self.length / self.M

    def deriv_values(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral derivative of nodal values; Nyquist mode zeroed for odd
        orders (it has no well-defined odd derivative on a real grid)."""
        mult = (1j * self.wavenumbers) ** order
        if order % 2 == 1:
            mult[self.M // 2] = 0.0
        return np.fft.ifft(mult * np.fft.fft(values)).real

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise product formed on the 3/2-padded grid and truncated."""
        fa = np.fft.fft(a)
        fb = np.fft.fft(b)
        pa = _pad_spectrum(fa, self._pad) * (self._pad / self.M)
        pb = _pad_spectrum(fb, self._pad) * (self._pad / self.M)
        prod = np.fft.fft(np.fft.ifft(pa).real * np.fft.ifft(pb).real)
        return np.fft.ifft(_truncate_spectrum(prod, self.M) * (self.M / self._pad)).real

    def deriv_matrix(self, order: int = 1) -> np.ndarray:
        """Dense differentiation matrix consistent with deriv_values.

        The diagonal absorbs the off-diagonal row sums so constants are
        annihilated to round-off; the elliptic kernels rely on it.
        """
        if order not in self._deriv_mats:
            # row j of deriv_values(I) is the derivative of the j-th unit
            # impulse, i.e. the j-th column of the matrix acting as D @ v
            D = np.ascontiguousarray(self.deriv_values(np.eye(self.M), order=order).T)
            np.fill_diagonal(D, np.diag(D) - D.sum(axis=1))
            self._deriv_mats[order] = D
        return self._deriv_mats[order]

    def resample(self, values: np.ndarray, M2: int) -> np.ndarray:
        """Trigonometric interpolation onto a grid of M2 points."""
        spec = np.fft.fft(values)
        if M2 >= self.M:
            out = _pad_spectrum(spec, M2)
        else:
            out = _truncate_spectrum(spec, M2)
        return np.fft.ifft(out).real * (M2 / self.M)

    def quad(self, values: np.ndarray) -> float:
        """Trapezoid quadrature; exact for resolved trigonometric polynomials."""
        return float(values.sum() * self.dx)


def _pad_spectrum(spec: np.ndarray, M2: int) -> np.ndarray:
    M = spec.shape[0]
    out = np.zeros(M2, dtype=complex)
    half = M // 2
    out[:half] = spec[:half]
    out[M2 - half + 1:] = spec[half + 1:]
    # split the (real) Nyquist mode over +-M/2 to keep conjugate symmetry
    out[half] = 0.5 * spec[half]
    out[M2 - half] = 0.5 * spec[half]
    return out


def _truncate_spectrum(spec: np.ndarray, M2: int) -> np.ndarray:
    M = spec.shape[0]
    out = np.zeros(M2, dtype=complex)
    half = M2 // 2
    out[:half] = spec[:half]
    out[half + 1:] = spec[M - half + 1:]
    # the coarse Nyquist collects the +-M2/2 modes of the fine spectrum
    out[half] = (spec[half] + spec[M - half]).real
    return out


@dataclass(frozen=True)
class ScalarField:
    """Real periodic grid function. Arithmetic returns new fields;
    * is the dealiased pointwise product."""

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} values, got shape {v.shape}")
        # single-pass finiteness guard: any nan/inf poisons the sum
        if not np.isfinite(v.sum()):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.M))

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.M, float(c)))

    @classmethod
    def from_modes(cls, grid: PeriodicGrid, sin=None, cos=None) -> "ScalarField":
        """Build from integer-mode amplitudes: {k: amp} meaning
        amp*sin(2*pi*k*x/length) resp. cosine."""
        v = np.zeros(grid.M)
        base = 2.0 * np.pi / grid.length
        for k, amp in (sin or {}).items():
            v += amp * np.sin(base * k * grid.nodes)
        for k, amp in (cos or {}).items():
            v += amp * np.cos(base * k * grid.nodes)
        return cls(grid, v)

    def deriv(self, order: int = 1) -> "ScalarField":
        return ScalarField(self.grid, self.grid.deriv_values(self.values, order))

    def mean(self) -> float:
        return float(self.values.mean())

    def project_mean_free(self) -> "ScalarField":
        return ScalarField(self.grid, self.values - self.values.mean())

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other, self.grid))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other, self.grid))

    def __rsub__(self, other):
        return ScalarField(self.grid, _vals(other, self.grid) - self.values)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __mul__(self, other):
        if np.isscalar(other):
            return ScalarField(self.grid, self.values * other)
        ov = _vals(other, self.grid)
        # constant factors need no dealiasing; this also short-circuits the
        # zero and H^0 components that pervade the operator algebra
        if self.values[0] == self.values[-1] and np.ptp(self.values) == 0.0:
            return ScalarField(self.grid, self.values[0] * ov)
        if ov[0] == ov[-1] and np.ptp(ov) == 0.0:
            return ScalarField(self.grid, ov[0] * self.values)
        return ScalarField(self.grid, self.grid.multiply(self.values, ov))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        """Integer power by repeated dealiased multiplication."""
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only nonnegative integer powers")
        if k == 0:
            return ScalarField.constant(self.grid, 1.0)
        out = self
        for _ in range(int(k) - 1):
            out = out * self
        return out


def _vals(x, grid):
    if isinstance(x, ScalarField):
        if x.grid != grid:
            raise ValueError("fields live on different grids")
        return x.values
    if np.isscalar(x):
        return np.full(grid.M, float(x))
    return np.asarray(x, dtype=float)


class PotentialVec:
    """Stack of layer coefficient fields phi_{l,0..K-1} on one grid."""

    def __init__(self, components):
        comps = tuple(components)
        if not comps:
            raise ValueError("empty potential vector")
        grid = comps[0].grid
        if any(c.grid != grid for c in comps):
            raise ValueError("components live on different grids")
        self.grid = grid
        self.components = comps

    @classmethod
    def zeros(cls, grid: PeriodicGrid, count: int) -> "PotentialVec":
        return cls([ScalarField.zeros(grid) for _ in range(count)])

    @classmethod
    def from_matrix(cls, grid: PeriodicGrid, mat: np.ndarray) -> "PotentialVec":
        return cls([ScalarField(grid, row) for row in np.atleast_2d(mat)])

    @property
    def count(self) -> int:
        return len(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def as_matrix(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    def tail(self) -> "PotentialVec":
        """Components 1..K-1 (the primed part)."""
        if self.count == 1:
            return PotentialVec([ScalarField.zeros(self.grid)])
        return PotentialVec(self.components[1:])

    def __add__(self, other):
        return PotentialVec([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        return PotentialVec([a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, s):
        return PotentialVec([c * s for c in self.components])

    __rmul__ = __mul__

    def dot(self, weights) -> ScalarField:
        """Pointwise weighted sum sum_i w_i * phi_i (dealiased products)."""
        out = ScalarField.zeros(self.grid)
        for w, c in zip(weights, self.components):
            out = out + w * c
        return out


def inverse_laplacian(f: ScalarField) -> ScalarField:
    """Solve Laplace u = f with mean(u) = 0; requires mean-free f."""
    _require_mean_free(f, "inverse_laplacian")
    spec = np.fft.fft(f.values)
    xi = f.grid.wavenumbers
    out = np.zeros_like(spec)
    nz = xi != 0.0
    out[nz] = -spec[nz] / xi[nz] ** 2
    return ScalarField(f.grid, np.fft.ifft(out).real)


def sobolev_norm(f: ScalarField, s: int = 0) -> float:
    """H^s norm via the symbol (1+xi^2)^(s/2), normalized so the H^0 norm
    is the L^2 norm (integral of f^2)."""
    spec = np.fft.fft(f.values)
    xi = f.grid.wavenumbers
    weight = (1.0 + xi**2) ** s
    total = (np.abs(spec) ** 2 * weight).sum() * f.grid.length / f.grid.M**2
    return float(np.sqrt(total))


def half_inverse_laplacian_norm(f: ScalarField, s: int = 0) -> float:
    """H^s norm of (-Laplace)^(-1/2) f on the nonzero modes; mean-free input."""
    _require_mean_free(f, "half_inverse_laplacian_norm")
    spec = np.fft.fft(f.values)
    xi = f.grid.wavenumbers
    nz = xi != 0.0
    weight = (1.0 + xi[nz] ** 2) ** s / xi[nz] ** 2
    total = (np.abs(spec[nz]) ** 2 * weight).sum() * f.grid.length / f.grid.M**2
    return float(np.sqrt(total))


def l2_inner(f: ScalarField, g: ScalarField) -> float:
    return f.grid.quad(f.values * g.values)


def _require_mean_free(f: ScalarField, what: str):
    m = abs(f.mean())
    scale = max(f.max_abs(), 1.0)
    if m > MEAN_TOL * scale:
        raise NonZeroMean(f"{what}: |mean| = {m:.3e} exceeds tolerance")


def field_to_csv(f: ScalarField, path_or_file):
    """One value per row, headered by the grid metadata."""
    own = isinstance(path_or_file, (str, bytes))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        fh.write(f"# grid M={f.grid.M} length={f.grid.length:.17g}\n")
        fh.write("value\n")
        for v in f.values:
            fh.write(f"{v:.17g}\n")
    finally:
        if own:
            fh.close()


def field_from_csv(path_or_file) -> ScalarField:
    own = isinstance(path_or_file, (str, bytes))
    fh = open(path_or_file, "r") if own else path_or_file
    try:
        header = fh.readline().strip()
        if not header.startswith("# grid"):
            raise ValueError("missing grid header")
        meta = dict(tok.split("=") for tok in header[7:].split())
        fh.readline()  # column header
        values = np.array([float(line) for line in fh if line.strip()])
        grid = PeriodicGrid(int(meta["M"]), float(meta["length"]))
        return ScalarField(grid, values)
    finally:
        if own:
            fh.close()
