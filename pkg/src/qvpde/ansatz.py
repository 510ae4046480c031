"""Parameterized state-preparation circuits, simulated as statevector maps.

Two families:

* FourierAnsatz: exact amplitude encoding (a binary-tree rotation cascade) of
  a small register of Fourier coefficients, followed by zero-padding into the
  full spectrum and an inverse Fourier transform.  Band-limited functions can
  be read in exactly by inverting the cascade, which makes this family the
  workhorse for smooth initial conditions and warm starts.
* BrickworkAnsatz: alternating-pair layers of two-qubit real-rotation blocks.
  All-zero angles give the identity exactly, so depth can be grown
  incrementally during training without disturbing an already-trained state.

Qubit 0 is the most significant bit of the flattened grid index throughout.
"""

from __future__ import annotations

import numpy as np

from .core import Grid1D, Grid2D, ParamVector, ScaledState


# ---------------------------------------------------------------------------
# binary-tree rotation cascade (exact amplitude encoding)


def cascade_state(y: np.ndarray, z: np.ndarray, alpha: float) -> np.ndarray:
    """Unit state prepared by the rotation-tree cascade.

    Level t holds 2**t y-angles (magnitudes) and z-angles (relative phases) at
    flat offsets [2**t - 1, 2**(t+1) - 1); alpha is a global phase.  Walking a
    leaf's bits MSB-first, bit 0 multiplies cos(y/2) and subtracts z/2, bit 1
    multiplies sin(y/2) and adds z/2.
    """
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if y.shape != z.shape:
        raise ValueError("y and z angle arrays must have equal length")
    m = int(np.log2(y.size + 1))
    if 2**m - 1 != y.size:
        raise ValueError(f"angle count {y.size} is not 2**m - 1")
    mag = np.ones(1)
    phase = np.full(1, float(alpha))
    for t in range(m):
        beta = y[2**t - 1 : 2 ** (t + 1) - 1]
        phi = z[2**t - 1 : 2 ** (t + 1) - 1]
        c, s = np.cos(beta / 2), np.sin(beta / 2)
        mag = np.stack([mag * c, mag * s], axis=1).reshape(-1)
        phase = np.stack([phase - phi / 2, phase + phi / 2], axis=1).reshape(-1)
    return mag * np.exp(1j * phase)


def cascade_angles(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Invert cascade_state: angles reproducing the given unit vector.

    Dead branches (zero probability) get zero angles, so the inversion is
    total; cascade_state(*cascade_angles(v)) == v for any unit v.
    """
    v = np.asarray(v, dtype=np.complex128)
    m = int(np.log2(v.size))
    if 2**m != v.size:
        raise ValueError(f"dimension {v.size} is not a power of two")
    y = np.zeros(2**m - 1)
    z = np.zeros(2**m - 1)
    probs = np.abs(v) ** 2
    for t in reversed(range(m)):
        p0, p1 = probs[0::2], probs[1::2]
        y[2**t - 1 : 2 ** (t + 1) - 1] = 2 * np.arctan2(np.sqrt(p1), np.sqrt(p0))
        probs = p0 + p1
    omega = np.angle(v)
    for t in reversed(range(m)):
        w0, w1 = omega[0::2], omega[1::2]
        z[2**t - 1 : 2 ** (t + 1) - 1] = w1 - w0
        omega = (w0 + w1) / 2
    return y, z, float(omega[0])


# ---------------------------------------------------------------------------
# Fourier-mode ansatz


class FourierAnsatz:
    """Band-limited function representation with exactly invertible read-in.

    kind "real": one-sided modes 0..M-1 on a 2**m register; hermitian spectrum
    completion forces a real function for every parameter draw.  kind
    "complex": two-sided modes {0..M-1, -M..-1} on a 2**(m+1) register.  kind
    "complex2d": the two-sided construction on both axes of a Grid2D, with a
    single cascade over the flattened (mx+1)+(my+1)-qubit mode register.

    Flat parameters: [scale, y angles, z angles, alpha, one padding zero];
    the angle block has length 2 * register_dim.
    """

    def __init__(self, grid, m: int | None = None, kind: str = "real",
                 mx: int | None = None, my: int | None = None):
        self.grid = grid
        self.kind = kind
        if kind in ("real", "complex"):
            if not isinstance(grid, Grid1D):
                raise TypeError("1D ansatz kinds require a Grid1D")
            if m is None:
                raise ValueError("m is required")
            if m < 1 or m > grid.n - 2:
                raise ValueError(f"need 1 <= m <= n - 2, got m={m}, n={grid.n}")
            self.m = m
            self.register_dim = 2**m if kind == "real" else 2 ** (m + 1)
        elif kind == "complex2d":
            if not isinstance(grid, Grid2D):
                raise TypeError("complex2d requires a Grid2D")
            if mx is None or my is None:
                raise ValueError("mx and my are required")
            if mx < 1 or mx > grid.nx - 2 or my < 1 or my > grid.ny - 2:
                raise ValueError("need 1 <= m <= n - 2 on each axis")
            self.mx, self.my = mx, my
            self.register_dim = 2 ** (mx + my + 2)
        else:
            raise ValueError(f"unknown kind {kind!r}")

    @property
    def n_angles(self) -> int:
        return 2 * self.register_dim

    @property
    def n_params(self) -> int:
        """Flat length including the leading scale."""
        return self.n_angles + 1

    def _unpack(self, params: ParamVector):
        a = params.angles
        if a.shape[0] != self.n_angles:
            raise ValueError(
                f"expected {self.n_angles} angles, got {a.shape[0]}"
            )
        R = self.register_dim
        return a[: R - 1], a[R - 1 : 2 * R - 2], float(a[2 * R - 2])

    def _pack(self, y, z, alpha, scale) -> ParamVector:
        return ParamVector(
            float(scale), np.concatenate([y, z, [alpha], [0.0]])
        )

    def register_vector(self, params: ParamVector) -> np.ndarray:
        """Unit mode-coefficient vector encoded by the cascade angles."""
        y, z, alpha = self._unpack(params)
        return cascade_state(y, z, alpha)

    def _spectrum_from_register(self, v: np.ndarray) -> np.ndarray:
        """Place register coefficients into the full-grid spectrum array."""
        if self.kind == "real":
            N, M = self.grid.size, 2**self.m
            spec = np.zeros(N, dtype=np.complex128)
            spec[0] = np.sqrt(2) * v[0].real
            if M > 1:
                k = np.arange(1, M)
                spec[k] = v[1:M]
                spec[(-k) % N] = np.conj(v[1:M])
            return spec
        if self.kind == "complex":
            N, M = self.grid.size, 2**self.m
            spec = np.zeros(N, dtype=np.complex128)
            j = np.arange(2 * M)
            k = np.where(j < M, j, j - 2 * M)
            spec[k % N] = v
            return spec
        Nx, Ny = self.grid.shape
        Mx, My = 2**self.mx, 2**self.my
        spec = np.zeros((Nx, Ny), dtype=np.complex128)
        jx = np.arange(2 * Mx)
        kx = np.where(jx < Mx, jx, jx - 2 * Mx) % Nx
        jy = np.arange(2 * My)
        ky = np.where(jy < My, jy, jy - 2 * My) % Ny
        spec[np.ix_(kx, ky)] = v.reshape(2 * Mx, 2 * My)
        return spec

    def _function_from_spectrum(self, spec: np.ndarray) -> np.ndarray:
        if self.kind == "complex2d":
            Nx, Ny = self.grid.shape
            return (Nx * Ny * np.fft.ifft2(spec)).reshape(-1)
        return self.grid.size * np.fft.ifft(spec)

    def prepare(self, params: ParamVector) -> ScaledState:
        v = self.register_vector(params)
        f = self._function_from_spectrum(self._spectrum_from_register(v))
        nrm = np.linalg.norm(f)
        if nrm == 0.0:
            psi = np.zeros(self.grid.size, dtype=np.complex128)
            psi[0] = 1.0
            return ScaledState(0.0, psi)
        return ScaledState(params.scale, f / nrm)

    def span_basis(self) -> np.ndarray:
        """Columns spanning the reachable set over real combination weights.

        Images of every register unit vector and its i-multiple; the free
        scale makes the reachable states exactly the real span of these
        columns, whatever hermitian completion the kind applies.
        """
        R = self.register_dim
        cols = np.empty((self.grid.size, 2 * R), dtype=np.complex128)
        e = np.zeros(R, dtype=np.complex128)
        for j in range(R):
            for i, w in enumerate((1.0, 1j)):
                e[j] = w
                cols[:, 2 * j + i] = self._function_from_spectrum(
                    self._spectrum_from_register(e)
                )
            e[j] = 0.0
        return cols

    def _register_from_samples(self, samples: np.ndarray) -> np.ndarray:
        if self.kind == "real":
            N, M = self.grid.size, 2**self.m
            s = np.fft.fft(samples) / N
            v = np.zeros(2**self.m, dtype=np.complex128)
            v[0] = s[0].real / np.sqrt(2)
            v[1:M] = s[1:M]
            return v
        if self.kind == "complex":
            N, M = self.grid.size, 2**self.m
            s = np.fft.fft(samples) / N
            j = np.arange(2 * M)
            k = np.where(j < M, j, j - 2 * M)
            return s[k % N].astype(np.complex128)
        Nx, Ny = self.grid.shape
        s = np.fft.fft2(np.asarray(samples).reshape(Nx, Ny)) / (Nx * Ny)
        Mx, My = 2**self.mx, 2**self.my
        jx = np.arange(2 * Mx)
        kx = np.where(jx < Mx, jx, jx - 2 * Mx) % Nx
        jy = np.arange(2 * My)
        ky = np.where(jy < My, jy, jy - 2 * My) % Ny
        return s[np.ix_(kx, ky)].reshape(-1)

    def read_in(self, samples: np.ndarray) -> ParamVector:
        """Parameters whose prepared state is the band-limited truncation of
        the samples; exact (up to roundoff) whenever the samples are already
        band-limited to the register's modes."""
        samples = np.asarray(samples, dtype=np.complex128).reshape(-1)
        if samples.shape[0] != self.grid.size:
            raise ValueError(
                f"expected {self.grid.size} samples, got {samples.shape[0]}"
            )
        v_raw = self._register_from_samples(samples)
        r = np.linalg.norm(v_raw)
        if r == 0.0:
            return self._pack(
                np.zeros(self.register_dim - 1),
                np.zeros(self.register_dim - 1),
                0.0,
                0.0,
            )
        trunc = self._function_from_spectrum(self._spectrum_from_register(v_raw))
        y, z, alpha = cascade_angles(v_raw / r)
        return self._pack(y, z, alpha, np.linalg.norm(trunc))

    def truncation(self, samples: np.ndarray) -> np.ndarray:
        """The band-limited projection the read-in targets (diagnostic)."""
        samples = np.asarray(samples, dtype=np.complex128).reshape(-1)
        v_raw = self._register_from_samples(samples)
        return self._function_from_spectrum(self._spectrum_from_register(v_raw))

    def coefficients(self, params: ParamVector) -> np.ndarray:
        """Scaled mode coefficients (grid-size independent for fixed m)."""
        return params.scale * self.register_vector(params)


# ---------------------------------------------------------------------------
# brickwork ansatz


def _apply_ry(psi: np.ndarray, n: int, q: int, theta: float) -> None:
    shaped = psi.reshape(2**q, 2, 2 ** (n - q - 1))
    a = shaped[:, 0, :].copy()
    b = shaped[:, 1, :].copy()
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    shaped[:, 0, :] = c * a - s * b
    shaped[:, 1, :] = s * a + c * b


def _apply_cnot_adjacent(psi: np.ndarray, n: int, q: int) -> None:
    # control q, target q+1
    shaped = psi.reshape(2**q, 2, 2, 2 ** (n - q - 2))
    tmp = shaped[:, 1, 0, :].copy()
    shaped[:, 1, 0, :] = shaped[:, 1, 1, :]
    shaped[:, 1, 1, :] = tmp


def layer_pairs(n: int) -> list[tuple[int, int]]:
    """One layer's block positions: even-aligned pairs then odd-aligned."""
    pairs = [(q, q + 1) for q in range(0, n - 1, 2)]
    pairs += [(q, q + 1) for q in range(1, n - 1, 2)]
    return pairs


class BrickworkAnsatz:
    """Alternating-pair layers of 6-angle real two-qubit blocks.

    A block on pair (q, q+1) is Ry x Ry, CNOT, Ry x Ry, CNOT, Ry x Ry with
    the CNOT controlled on q.  Zero angles make every block the identity, so
    appending zero-initialized layers never changes the prepared state.
    """

    def __init__(self, n: int, depth: int):
        if n < 2:
            raise ValueError("need at least 2 qubits")
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.n = n
        self.depth = depth

    @property
    def n_angles(self) -> int:
        return 6 * (self.n - 1) * self.depth

    @property
    def n_params(self) -> int:
        return self.n_angles + 1

    def prepare(self, params: ParamVector) -> ScaledState:
        a = params.angles
        if a.shape[0] != self.n_angles:
            raise ValueError(f"expected {self.n_angles} angles, got {a.shape[0]}")
        n = self.n
        psi = np.zeros(2**n, dtype=np.complex128)
        psi[0] = 1.0
        idx = 0
        for _ in range(self.depth):
            for q, _t in layer_pairs(n):
                th = a[idx : idx + 6]
                idx += 6
                _apply_ry(psi, n, q, th[0])
                _apply_ry(psi, n, q + 1, th[1])
                _apply_cnot_adjacent(psi, n, q)
                _apply_ry(psi, n, q, th[2])
                _apply_ry(psi, n, q + 1, th[3])
                _apply_cnot_adjacent(psi, n, q)
                _apply_ry(psi, n, q, th[4])
                _apply_ry(psi, n, q + 1, th[5])
        return ScaledState(params.scale, psi)

    def extended(self, params: ParamVector, new_depth: int):
        """Same state on a deeper circuit: pad with zero-angle layers."""
        if new_depth < self.depth:
            raise ValueError("new depth must be >= current depth")
        pad = 6 * (self.n - 1) * (new_depth - self.depth)
        grown = BrickworkAnsatz(self.n, new_depth)
        return grown, ParamVector(
            params.scale, np.concatenate([params.angles, np.zeros(pad)])
        )


def expressibility_sweep(target, family: str, schedule, grid=None, n=None,
                         budget: int = 100000, seed: int = 0,
                         angle_halfwidth: float = np.pi / 2):
    """Fit error of one ansatz family against a fixed target vector.

    For each size in the schedule (register qubits m for the Fourier family,
    depth d for the brickwork family) the family is fitted to the target and
    the relative L2 error recorded.  The Fourier fit uses the exact read-in
    formulas; the brickwork fit runs the derivative-free optimizer on
    || scale * U(angles)|0> - target ||^2 from a zero start, so its rows
    depend on budget and seed.  Returns a list of dicts with keys size,
    params, error, evals.
    """
    from .optimize import timestep_optimize

    target = np.asarray(target, dtype=float).reshape(-1)
    tnorm = np.linalg.norm(target)
    if tnorm == 0.0:
        raise ValueError("target vector has zero norm")
    rows = []
    if family == "fourier":
        if grid is None:
            raise ValueError("the Fourier family needs a grid")
        for m in schedule:
            ans = FourierAnsatz(grid, m=m)
            fit = ans.prepare(ans.read_in(target)).vector().real
            rows.append(
                {
                    "size": int(m),
                    "params": ans.n_params,
                    "error": float(np.linalg.norm(fit - target) / tnorm),
                    "evals": 0,
                }
            )
        return rows
    if family != "brickwork":
        raise ValueError(f"unknown family {family!r}")
    if n is None:
        n = int(np.log2(target.shape[0]))
    for d in schedule:
        ans = BrickworkAnsatz(n, d)

        def fit_cost(p):
            vec = ans.prepare(p).vector().real
            return float(np.linalg.norm(vec - target) ** 2)

        init = ParamVector(tnorm, np.zeros(ans.n_angles))
        res = timestep_optimize(
            fit_cost,
            init,
            budget,
            np.random.default_rng([seed, d]),
            angle_halfwidth,
        )
        rows.append(
            {
                "size": int(d),
                "params": ans.n_params,
                "error": float(np.sqrt(max(0.0, res.cost)) / tnorm),
                "evals": res.evals,
            }
        )
    return rows
