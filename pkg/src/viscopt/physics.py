"""Gas properties, wavenumbers and frequency grids for viscothermal acoustics."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class AirProperties:
    """Quiescent properties of the acoustic medium (defaults: air near 21 C).

    ``tau_loss`` adds an artificial bulk loss by replacing the sound speed
    with ``c0 / (1 - i*tau_loss)``; it is zero for physical air.
    """

    rho0: float = 1.225           # kg/m^3
    c0: float = 341.2             # m/s
    mu: float = 18.29e-6          # Pa s
    lam: float = -1.22e-6         # Pa s (second viscosity)
    kappa: float = 25.18e-3       # W/(m K)
    Cp: float = 975.3             # J/(kg K)
    Cv: float = 693.8             # J/(kg K)
    gamma: float = 1.406
    T0: float = 294.3             # K
    p0: float = 1.015e5           # Pa
    tau_loss: float = 0.0

    def __post_init__(self):
        for name in ("rho0", "c0", "mu", "kappa", "Cp", "Cv", "T0", "p0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.tau_loss < 0.0:
            raise ValueError("tau_loss must be non-negative")
        if abs(self.gamma - self.Cp / self.Cv) / self.gamma >= 1e-3:
            raise ValueError("gamma inconsistent with Cp/Cv")

    @property
    def K0(self) -> float:
        """Bulk modulus rho0*c0^2 [Pa]."""
        return self.rho0 * self.c0 ** 2

    @property
    def c_complex(self) -> complex:
        """Sound speed including the optional bulk-loss factor."""
        if self.tau_loss == 0.0:
            return complex(self.c0)
        return self.c0 / (1.0 - 1j * self.tau_loss)

    @property
    def K_complex(self) -> complex:
        """Bulk modulus built from the (possibly complex) sound speed."""
        return self.rho0 * self.c_complex ** 2


def _principal_root(z: complex) -> complex:
    """Square root with positive real part (time factor exp(+i w t))."""
    r = cmath.sqrt(z)
    if r.real < 0.0:
        r = -r
    return r


@dataclass(frozen=True)
class Wavenumbers:
    """Acoustic, viscous and thermal wavenumbers at one angular frequency.

    Conventions: k0 = w/c0 (real unless bulk loss is on), k_v^2 = -i*w*rho0/mu,
    k_h^2 = -i*w*rho0*Cp/kappa, both with Re > 0 and Im < 0.
    """

    omega: float
    k0: complex
    k_v: complex
    k_h: complex

    @property
    def delta_v(self) -> float:
        """Viscous boundary-layer thickness -1/Im(k_v) [m]."""
        return -1.0 / self.k_v.imag

    @property
    def delta_h(self) -> float:
        """Thermal boundary-layer thickness -1/Im(k_h) [m]."""
        return -1.0 / self.k_h.imag

    @property
    def lambda_v(self) -> float:
        """Viscous wavelength 2*pi/|k_v| [m]."""
        return 2.0 * math.pi / abs(self.k_v)


def compute_wavenumbers(props: AirProperties, omega: float) -> Wavenumbers:
    """Evaluate the three wavenumbers of the viscothermal model at ``omega``."""
    if omega <= 0.0:
        raise ValueError("omega must be positive")
    k0 = omega / props.c_complex
    if props.tau_loss == 0.0:
        k0 = complex(k0.real)
    k_v = _principal_root(-1j * omega * props.rho0 / props.mu)
    k_h = _principal_root(-1j * omega * props.rho0 * props.Cp / props.kappa)
    return Wavenumbers(omega=omega, k0=k0, k_v=k_v, k_h=k_h)


@dataclass(frozen=True)
class FictitiousRigid:
    """Large fictitious density/bulk-modulus multipliers for the rigid phase."""

    c_r1: float = 1.0e13
    c_r2: float = 1.0e3

    def __post_init__(self):
        if self.c_r1 < 1e6:
            raise ValueError("c_r1 must be >= 1e6")
        if self.c_r2 < 1e2:
            raise ValueError("c_r2 must be >= 1e2")

    def rho_r(self, props: AirProperties) -> float:
        return self.c_r1 * props.rho0

    def K_r(self, props: AirProperties) -> float:
        return self.c_r2 * props.K0


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of n+1 angular frequencies on [omega_init, omega_fin]."""

    omega_init: float
    omega_fin: float
    n: int = 0

    def __post_init__(self):
        if not (0.0 < self.omega_init <= self.omega_fin):
            raise ValueError("need 0 < omega_init <= omega_fin")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    @property
    def delta_omega(self) -> float:
        if self.n == 0:
            return 0.0
        return (self.omega_fin - self.omega_init) / self.n

    @property
    def omegas(self) -> tuple[float, ...]:
        d = self.delta_omega
        return tuple(self.omega_init + k * d for k in range(self.n + 1))

    def __len__(self) -> int:
        return self.n + 1


def grid_from_hz(f_init: float, f_fin: float, n: int) -> FrequencyGrid:
    """Build a frequency grid from endpoints given in Hz."""
    return FrequencyGrid(2.0 * math.pi * f_init, 2.0 * math.pi * f_fin, n)
