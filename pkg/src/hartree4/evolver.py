"""4D spectral evolution of i∂ₜu + Δu − φ_{|u|²}u = 0 on a periodic box
[−L, L)⁴ with conservation, virial, symmetry and pseudo-conformal diagnostics.

Discretization: Strang splitting with unitary substeps — half potential phase
e^{−i(dt/2)φ}, full kinetic e^{i dt Δ} in Fourier space, half potential phase
with φ refreshed.  Mass is conserved to round-off per step; energy drift
converges at the splitting order (2nd).

Potential: φ̂(ξ) = −4π² ρ̂(ξ)/|ξ|² with the zero mode gauged to 0 (the literal
kernel −|x|⁻²∗ρ has Δφ = 4π²ρ; the gauge introduces a spatially constant
offset whose only effect is a global phase, which phase-sensitive diagnostics
fit out).

Conserved quantities (literal-kernel normalization; all verified exactly on
the ground state where ℰ(Q) = 0):

    mass = ∫|u|²,  ℰ = ½∫|∇u|² + ¼∫φ_{|u|²}|u|² = ½∫|∇u|² − (1/16π²)∫|∇φ|²,
    momentum = Im∫∇u·ū,  and the virial identity  d²/dt² ∫|x|²|u|² = 16ℰ.

The (1/8π²)-weighted energy form printed in the source material is recorded
in ConservedSet.energy_8pi2_form for comparison; it is not conserved under
the literal kernel and nothing asserts it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import map_coordinates

from .errors import BlowUpDetected, DomainError, InvalidArgumentError

DEFAULT_MEM_CAP_GB = 4.0


def _smooth235(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass
class Field4:
    """Complex scalar field on the uniform periodic grid [−L, L)⁴."""

    n: int
    L: float
    values: np.ndarray = field(repr=False)
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 8 or not _smooth235(self.n):
            raise InvalidArgumentError(
                f"n per axis must be >= 8 and 2,3,5-smooth for the FFT, got {self.n}")
        if self.values.shape != (self.n,) * 4:
            raise InvalidArgumentError("values must be an n^4 array")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dV(self) -> float:
        return self.h**4

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    def k_axis(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)

    def k2(self) -> np.ndarray:
        key = "_k2"
        cache = _GRID_CACHE.setdefault((self.n, round(self.L, 12)), {})
        if key not in cache:
            k = self.k_axis()
            k2 = (k[:, None, None, None] ** 2 + k[None, :, None, None] ** 2
                  + k[None, None, :, None] ** 2 + k[None, None, None, :] ** 2)
            cache[key] = k2
        return cache[key]

    def copy(self) -> "Field4":
        return Field4(self.n, self.L, self.values.copy(), self.time, dict(self.meta))

    def boundary_tail_fraction(self) -> float:
        """Mass fraction within two cells of any box face."""
        a = np.abs(self.values) ** 2
        total = float(a.sum())
        if total == 0:
            return 0.0
        inner = a[2:-2, 2:-2, 2:-2, 2:-2]
        return float((total - inner.sum()) / total)


_GRID_CACHE: dict = {}


def make_field(n: int, L: float, sampler=None, time: float = 0.0,
               mem_cap_gb: float = DEFAULT_MEM_CAP_GB) -> Field4:
    """Allocate a field; optionally fill from sampler(x0,x1,x2,x3) -> complex."""
    need = 16.0 * n**4 / 1e9
    if need > mem_cap_gb:
        raise DomainError(f"field of {need:.2f} GB exceeds the {mem_cap_gb} GB cap")
    vals = np.zeros((n,) * 4, dtype=np.complex128)
    f = Field4(n, float(L), vals, time)
    if sampler is not None:
        ax = f.axis()
        X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
        f.values[...] = sampler(*X)
    return f


def hartree_potential(f: Field4) -> Field4:
    """φ = −|x|⁻² ∗ |u|² on the periodic box: φ̂ = −4π² ρ̂/|ξ|², φ̂(0) = 0."""
    rho = np.abs(f.values) ** 2
    rho_hat = sfft.fftn(rho, workers=-1)
    k2 = f.k2()
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_hat = -4.0 * np.pi**2 * rho_hat / k2
    phi_hat.flat[0] = 0.0
    phi = np.real(sfft.ifftn(phi_hat, workers=-1))
    out = Field4(f.n, f.L, phi, f.time)
    tail = f.boundary_tail_fraction()
    if tail > 1e-6:
        out.meta["tail_warning"] = tail
    return out


def step(f: Field4, dt: float) -> Field4:
    """One Strang split step; advances time by dt in place and returns f."""
    phi = hartree_potential(f).values
    f.values *= np.exp(-0.5j * dt * phi)
    u_hat = sfft.fftn(f.values, workers=-1)
    u_hat *= np.exp(-1j * dt * f.k2())
    f.values = sfft.ifftn(u_hat, workers=-1)
    phi = hartree_potential(f).values
    f.values *= np.exp(-0.5j * dt * phi)
    f.time += dt
    if not np.isfinite(f.values.flat[::4097]).all():
        raise BlowUpDetected("non-finite values during step", last_state=None, t=f.time)
    return f


@dataclass
class ConservedSet:
    mass: float
    energy: float                 # ½‖∇u‖² + ¼∫φ|u|²  (conserved Hamiltonian)
    energy_8pi2_form: float       # ½‖∇u‖² − (1/8π²)‖∇φ‖²  (recorded only)
    momentum: np.ndarray          # Im ∫∇u·ū ∈ ℝ⁴
    variance: float               # ∫|x−centroid|²|u|², box-folded
    centroid: np.ndarray


def conserved(f: Field4) -> ConservedSet:
    u = f.values
    dV = f.dV
    ntot = f.n**4
    mass = float(np.sum(np.abs(u) ** 2) * dV)

    u_hat = sfft.fftn(u, workers=-1)
    k2 = f.k2()
    # Parseval with c_k = û/ntot over the box volume V = (2L)^4 = ntot·dV
    grad2 = float(np.sum(k2 * np.abs(u_hat) ** 2) / ntot * dV)
    # momentum uses the odd-derivative weight: the unpaired Nyquist mode has
    # no ±k partner and must carry zero weight (standard for real fields)
    k = f.k_axis().copy()
    if f.n % 2 == 0:
        k[f.n // 2] = 0.0
    mom = np.empty(4)
    prob = np.abs(u_hat) ** 2
    for a_ in range(4):
        shape = [1, 1, 1, 1]
        shape[a_] = f.n
        mom[a_] = float(np.sum(k.reshape(shape) * prob) / ntot * dV)

    phi = hartree_potential(f).values
    rho = np.abs(u) ** 2
    pot = float(np.sum(phi * rho) * dV)
    grad_phi2 = -4.0 * np.pi**2 * pot          # = ‖∇φ‖² via ∫φΔφ, gauge-free

    var, cen = variance_folded(f, rho=rho, mass=mass)
    return ConservedSet(mass=mass,
                        energy=0.5 * grad2 + 0.25 * pot,
                        energy_8pi2_form=0.5 * grad2 - grad_phi2 / (8 * np.pi**2),
                        momentum=mom, variance=var, centroid=cen)


def variance_folded(f: Field4, rho=None, mass=None):
    """∫ |x − centroid|² |u|² with box-folded coordinates centered on the mass
    centroid (avoids periodic wrap bias for localized fields)."""
    if rho is None:
        rho = np.abs(f.values) ** 2
    if mass is None:
        mass = float(rho.sum() * f.dV)
    if mass == 0:
        return 0.0, np.zeros(4)
    ax = f.axis()
    span = 2.0 * f.L
    # circular mean per axis for a wrap-safe centroid
    cen = np.empty(4)
    marg_axes = [tuple(b for b in range(4) if b != a_) for a_ in range(4)]
    for a_ in range(4):
        marg = rho.sum(axis=marg_axes[a_])
        ang = ax * (2 * np.pi / span)
        z = np.sum(marg * np.exp(1j * ang))
        cen[a_] = np.angle(z) * span / (2 * np.pi)
    var = 0.0
    for a_ in range(4):
        marg = rho.sum(axis=marg_axes[a_]) * f.dV
        d = ax - cen[a_]
        d = (d + f.L) % span - f.L
        var += float(np.sum(d**2 * marg))
    return var, cen


def free_space_energy(f: Field4) -> float:
    """ℰ with the potential term computed on the zero-padded double box.

    The periodic solver's zero-mode gauge shifts ∫φρ by c·mass with c the
    (nonzero) box average of the free potential; the virial identity
    references the free-space Hamiltonian, so this variant removes the gauge
    and the leading image contributions."""
    rho = np.abs(f.values) ** 2
    n2 = 2 * f.n
    big = np.zeros((n2,) * 4)
    sl = slice(f.n // 2, f.n // 2 + f.n)
    big[sl, sl, sl, sl] = rho
    rho_hat = sfft.fftn(big, workers=-1)
    k = 2.0 * np.pi * sfft.fftfreq(n2, d=f.h)
    k2 = (k[:, None, None, None] ** 2 + k[None, :, None, None] ** 2
          + k[None, None, :, None] ** 2 + k[None, None, None, :] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_hat = -4.0 * np.pi**2 * rho_hat / k2
    phi_hat.flat[0] = 0.0
    phi = np.real(sfft.ifftn(phi_hat, workers=-1))
    # remove the double-box gauge constant via the far-field anchor: the
    # corner of the big box sits at distance ~2L√4 from the support, where
    # the true potential is −M/r²
    M = float(rho.sum() * f.dV)
    corner = phi[0, 0, 0, 0]
    r_corner2 = 4 * (f.L) ** 2 * 4.0
    phi = phi - corner - M / r_corner2
    pot = float(np.sum(phi[sl, sl, sl, sl] * rho) * f.dV)

    u_hat = sfft.fftn(f.values, workers=-1)
    grad2 = float(np.sum(f.k2() * np.abs(u_hat) ** 2) / f.n**4 * f.dV)
    return 0.5 * grad2 + 0.25 * pot


def virial_check(snapshots: list[Field4], energy0: float | None = None) -> dict:
    """Centered second difference of the variance against 16ℰ(u₀), with ℰ the
    free-space Hamiltonian (see free_space_energy).

    Needs ≥ 5 equispaced snapshots; flags the result untrusted when the
    variance radius approaches the box scale."""
    if len(snapshots) < 5:
        raise InvalidArgumentError("need at least 5 snapshots")
    ts = np.array([s.time for s in snapshots])
    dts = np.diff(ts)
    if np.max(np.abs(dts - dts[0])) > 1e-10 * abs(dts[0]):
        raise InvalidArgumentError("snapshots must be equispaced in time")
    if energy0 is None:
        energy0 = free_space_energy(snapshots[0])
    var = np.array([conserved(s).variance for s in snapshots])
    d2 = (var[2:] - 2 * var[1:-1] + var[:-2]) / dts[0] ** 2
    target = 16.0 * energy0
    dev = np.abs(d2 - target)
    rel = float(np.max(dev) / max(abs(target), 1e-12))
    mass0 = conserved(snapshots[0]).mass
    rms_radius = np.sqrt(np.max(var) / max(mass0, 1e-300))
    untrusted = bool(rms_radius > 0.5 * snapshots[0].L)
    return {"second_difference": d2.tolist(), "sixteen_E": target,
            "max_rel_deviation": rel, "untrusted": untrusted}


# ---------------------------------------------------------------------------
# symmetries
# ---------------------------------------------------------------------------

def _support_radius(f: Field4, frac: float = 1e-5) -> float:
    """Sup-norm radius containing all but a `frac` mass fraction; mass beyond
    it wraps harmlessly at the tolerance of the symmetry diagnostics."""
    rho = np.abs(f.values) ** 2
    total = rho.sum()
    if total == 0:
        return 0.0
    ax = np.abs(f.axis())
    rad = np.maximum.reduce(np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=False))
    order = np.argsort(rad, axis=None)
    cum = np.cumsum(rho.flat[order])
    idx = np.searchsorted(cum, (1.0 - frac) * total)
    return float(rad.flat[order[min(idx, rad.size - 1)]])


def _resample(f: Field4, coords_phys: np.ndarray, out_shape) -> np.ndarray:
    """Periodic cubic interpolation of f at physical points (…, 4)."""
    idx = (coords_phys + f.L) / f.h
    idx = np.moveaxis(idx, -1, 0)
    re = map_coordinates(np.real(f.values), idx, order=3, mode="grid-wrap")
    im = map_coordinates(np.imag(f.values), idx, order=3, mode="grid-wrap")
    return (re + 1j * im).reshape(out_shape)


def apply_symmetry(f: Field4, lam: float = 1.0, alpha=(0, 0, 0, 0),
                   beta=(0, 0, 0, 0), gamma: float = 0.0,
                   t_eval: float | None = None) -> Field4:
    """Pointwise symmetry action

        u(x) ↦ λ² u(λx − α − β t) e^{i(½β·x − ¼|β|²t + γ)},

    evaluated at t = t_eval (defaults to the field's own time).  Mass is
    invariant.  Raises DomainError when the sampled region would wrap onto
    the field's support."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    t = f.time if t_eval is None else float(t_eval)
    shift = alpha + beta * t
    Rs = _support_radius(f)
    # sample points λx − shift beyond the box wrap; they must land where the
    # field is negligible: λL + |shift| + Rs ≤ 2L (up to one cell)
    if lam * f.L + np.max(np.abs(shift)) + Rs > 2.0 * f.L - f.h:
        raise DomainError("transformed support does not fit the periodic box")
    ax = f.axis()
    X = np.stack(np.meshgrid(ax, ax, ax, ax, indexing="ij"), axis=-1)
    vals = lam**2 * _resample(f, lam * X - shift, (f.n,) * 4)
    bx = sum(beta[a_] * X[..., a_] for a_ in range(4))
    phase = np.exp(1j * (0.5 * bx - 0.25 * np.sum(beta**2) * t + gamma))
    return Field4(f.n, f.L, vals * phase, f.time)


def pseudo_conformal(f: Field4, t: float, out_n: int | None = None,
                     out_L: float | None = None) -> Field4:
    """(𝒫u)(t, x) = t⁻² ū(1/t, x/t) e^{i|x|²/4t}: maps the field at time 1/t
    to the transformed field at time t.  Requires f.time == 1/t.

    At t = 1 the map is purely pointwise (no resampling).  For t ≠ 1 the
    output grid may be refined/shrunk via out_n/out_L to keep x/t resolved.
    """
    if t == 0:
        raise InvalidArgumentError("pseudo-conformal transform undefined at t = 0")
    if abs(f.time - 1.0 / t) > 1e-12 * max(1.0, abs(1 / t)):
        raise InvalidArgumentError(
            f"source field must be at time 1/t = {1.0/t!r}, is at {f.time!r}")
    out_n = out_n or f.n
    out_L = out_L or f.L
    g = make_field(out_n, out_L, time=t)
    ax = g.axis()
    if abs(t - 1.0) < 1e-15 and out_n == f.n and abs(out_L - f.L) < 1e-15:
        vals = np.conj(f.values)
    else:
        Rs = _support_radius(f)
        if out_L / abs(t) + Rs > 2.0 * f.L - f.h:
            raise DomainError("x/t sampling would wrap onto the field support")
        X = np.stack(np.meshgrid(ax, ax, ax, ax, indexing="ij"), axis=-1)
        vals = np.conj(_resample(f, X / t, (out_n,) * 4))
    X2 = sum(np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)[a_] ** 2
             for a_ in range(4))
    g.values[...] = vals / t**2 * np.exp(1j * X2 / (4.0 * t))
    return g


# ---------------------------------------------------------------------------
# evolution driver
# ---------------------------------------------------------------------------

def track_centroids(f: Field4, guesses: np.ndarray, radius: float = 4.0) -> np.ndarray:
    """Local-mass centroids in balls around the guessed soliton centers."""
    ax = f.axis()
    rho = np.abs(f.values) ** 2
    out = np.empty((len(guesses), 4))
    X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
    span = 2.0 * f.L
    for j, g in enumerate(np.atleast_2d(guesses)):
        d2 = sum((((X[a_] - g[a_] + f.L) % span - f.L)) ** 2 for a_ in range(4))
        w = rho * (d2 < radius**2)
        mass = w.sum()
        for a_ in range(4):
            d = ((X[a_] - g[a_] + f.L) % span - f.L)
            out[j, a_] = g[a_] + float((w * d).sum() / mass)
    return out


def evolve(init: Field4, t_end: float, dt: float, snapshot_stride: int = 0,
           checkpoint_dir=None, track=None, track_radius: float = 4.0) -> dict:
    """March the field to t_end; returns conserved time series, optional
    snapshots and tracked soliton centroids.  Deterministic given the config.

    On NaN the run stops with BlowUpDetected carrying the partial history in
    its .last_state attribute."""
    f = init.copy()
    nsteps = int(round((t_end - f.time) / dt))
    times = [f.time]
    series = [conserved(f)]
    snaps = [f.copy()] if snapshot_stride else []
    tracks = [track_centroids(f, track, track_radius)] if track is not None else []
    guesses = None if track is None else np.array(track, dtype=float)
    for k in range(1, nsteps + 1):
        try:
            step(f, dt)
        except BlowUpDetected as exc:
            exc.last_state = {"times": times, "series": series, "snapshots": snaps}
            raise
        if snapshot_stride and (k % snapshot_stride == 0 or k == nsteps):
            times.append(f.time)
            series.append(conserved(f))
            snaps.append(f.copy())
            if guesses is not None:
                guesses = track_centroids(f, guesses, track_radius)
                tracks.append(guesses.copy())
            if checkpoint_dir:
                save_checkpoint(f, os.path.join(checkpoint_dir, f"chk_{k:06d}"))
        elif not snapshot_stride:
            pass
    if not snapshot_stride:
        times.append(f.time)
        series.append(conserved(f))
        if guesses is not None:
            tracks.append(track_centroids(f, guesses, track_radius))
    return {"field": f, "times": np.array(times), "series": series,
            "snapshots": snaps, "tracks": np.array(tracks) if tracks else None}


# ---------------------------------------------------------------------------
# IO: JSON header + raw little-endian interleaved re/im float64
# ---------------------------------------------------------------------------

def save_checkpoint(f: Field4, basename) -> None:
    header = {"n": f.n, "L": f.L, "time": f.time, "dtype": "float64-interleaved-le",
              "meta": {k: v for k, v in f.meta.items() if isinstance(v, (int, float, str))}}
    with open(str(basename) + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    raw = np.empty((f.values.size, 2), dtype="<f8")
    raw[:, 0] = np.real(f.values).ravel()
    raw[:, 1] = np.imag(f.values).ravel()
    raw.tofile(str(basename) + ".bin")


def load_checkpoint(basename) -> Field4:
    with open(str(basename) + ".json") as fh:
        header = json.load(fh)
    raw = np.fromfile(str(basename) + ".bin", dtype="<f8").reshape(-1, 2)
    vals = (raw[:, 0] + 1j * raw[:, 1]).reshape((header["n"],) * 4)
    return Field4(header["n"], header["L"], vals, header["time"])


def save_timeseries_csv(times, series, fname, tracks=None) -> None:
    cols = ["t", "mass", "energy", "energy_8pi2_form",
            "momentum_0", "momentum_1", "momentum_2", "momentum_3", "variance"]
    ntr = 0 if tracks is None else tracks.shape[1]
    for j in range(ntr):
        cols += [f"centroid{j}_{c}" for c in range(4)]
    with open(fname, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, t in enumerate(times):
            s = series[i]
            row = [t, s.mass, s.energy, s.energy_8pi2_form, *s.momentum, s.variance]
            if tracks is not None:
                row += list(tracks[i].ravel())
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
