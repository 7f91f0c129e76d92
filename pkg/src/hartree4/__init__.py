"""hartree4 — numerical laboratory for multisoliton dynamics of the
L²-critical Hartree equation i∂ₜu + Δu − φ_{|u|²}u = 0 in ℝ⁴,
φ_ρ = −|x|⁻² ∗ ρ.

Subpackages cover the radial ground-state machinery, spherical-harmonic
sector realizations of the linearized operators, the multipole expansion of
the interaction potential, the inverse-square m-body dynamics driving the
soliton trajectories, the modulation-parameter ODE system, assembly of the
approximate multisoliton with its PDE residual, and a 4D spectral evolver
with conservation and symmetry diagnostics.
"""

__version__ = "0.1.0"
