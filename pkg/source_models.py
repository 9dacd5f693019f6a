"""
Localized sources as multipole moment functions.

A source (a scalar potential V or a permittivity epsilon) is stored as radial
profiles f_{lm}(r) of its spherical-harmonic expansion. Every profile returns
the value and its first two radial derivatives, which the Maxwell operator
assembly needs. Named models cover the smooth dielectric ball, the smoothed
square well and the Drude-model deformed sphere; arbitrary sources can be
read from a JSON source spec.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Callable, Dict, List, Literal, Mapping, Optional, Tuple, TypedDict, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import expit

from angular_coupling import SourceKey, spherical_harmonic
from config import Config

logger = logging.getLogger(__name__)

# Type aliases
SourceKind = Literal["potential", "permittivity"]
ProfileValues = Tuple[np.ndarray, np.ndarray, np.ndarray]
ArrayLike = Union[float, np.ndarray]


class MomentSpec(TypedDict, total=False):
    l: int
    m: int
    profile: str
    params: Dict[str, Any]


class SourceSpec(TypedDict, total=False):
    kind: str
    model: str
    params: Dict[str, Any]
    moments: List[MomentSpec]
    support_radius: float
    real: bool


# Constants
SQRT_FOUR_PI = math.sqrt(4.0 * math.pi)
_LOCALIZATION_TOL = 1e-10
_TANH_SUPPORT_WIDTHS = 40.0
_SINGULAR_TOL = 1e-14
_DRUDE_BRANCHES = ("principal", "negated")


class SingularParameterError(ValueError):
    """Raised when a model parameter combination has no finite value."""


# Radial profiles
@dataclass(frozen=True)
class TanhStep:
    """
    offset + height * (1 - tanh(s (r - radius))) / 2, with analytic
    derivatives. The step is written through the logistic function so the
    tail keeps full relative precision.
    """

    height: complex
    radius: float
    steepness: float
    offset: complex = 0.0

    def __call__(self, r: ArrayLike) -> ProfileValues:
        u = 2.0 * self.steepness * (np.asarray(r, dtype=float) - self.radius)
        inside = expit(-u)
        outside = expit(u)
        bump = inside * outside
        value = self.offset + self.height * inside
        first = -2.0 * self.height * self.steepness * bump
        second = 4.0 * self.height * self.steepness**2 * (outside - inside) * bump
        return (
            np.asarray(value, dtype=complex),
            np.asarray(first, dtype=complex),
            np.asarray(second, dtype=complex),
        )

    def support_radius(self) -> float:
        return self.radius + _TANH_SUPPORT_WIDTHS / self.steepness

    def scaled(self, factor: complex) -> "TanhStep":
        return TanhStep(self.height * factor, self.radius, self.steepness, self.offset * factor)


@dataclass(frozen=True)
class ConstantProfile:
    value: complex

    def __call__(self, r: ArrayLike) -> ProfileValues:
        shape = np.shape(r)
        return (
            np.full(shape, self.value, dtype=complex),
            np.zeros(shape, dtype=complex),
            np.zeros(shape, dtype=complex),
        )

    def support_radius(self) -> float:
        return 0.0


@dataclass(frozen=True)
class CallableProfile:
    """
    A user function of r without derivatives; f' and f'' come from central
    differences with the given step.
    """

    func: Callable[[np.ndarray], np.ndarray]
    step: float = 1e-4
    radius: float = 0.0

    def __call__(self, r: ArrayLike) -> ProfileValues:
        r = np.asarray(r, dtype=float)
        h = self.step
        f_minus = np.asarray(self.func(r - h), dtype=complex)
        f_mid = np.asarray(self.func(r), dtype=complex)
        f_plus = np.asarray(self.func(r + h), dtype=complex)
        return f_mid, (f_plus - f_minus) / (2.0 * h), (f_plus - 2.0 * f_mid + f_minus) / h**2

    def support_radius(self) -> float:
        return self.radius


@dataclass(frozen=True)
class TabulatedProfile:
    """
    Cubic-spline interpolation of sampled moment values. Beyond the last
    sample the profile is held at ``tail`` with zero derivatives.
    """

    radii: Tuple[float, ...]
    values: Tuple[complex, ...]
    tail: complex = 0.0
    _real: CubicSpline = field(init=False, repr=False, compare=False)
    _imag: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        radii = np.asarray(self.radii, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if radii.ndim != 1 or radii.size < 4 or radii.size != values.size:
            raise ValueError("tabulated profiles need at least four matching (radius, value) samples")
        if np.any(np.diff(radii) <= 0):
            raise ValueError("tabulated radii must be strictly increasing")
        object.__setattr__(self, "_real", CubicSpline(radii, values.real))
        object.__setattr__(self, "_imag", CubicSpline(radii, values.imag))

    def __call__(self, r: ArrayLike) -> ProfileValues:
        r = np.asarray(r, dtype=float)
        beyond = r > self.radii[-1]
        out = []
        for order in range(3):
            value = self._real(r, order) + 1j * self._imag(r, order)
            fill = self.tail if order == 0 else 0.0
            out.append(np.asarray(np.where(beyond, fill, value), dtype=complex))
        return out[0], out[1], out[2]

    def support_radius(self) -> float:
        return float(self.radii[-1])


Profile = Union[TanhStep, ConstantProfile, CallableProfile, TabulatedProfile]


# Multipole fields
@dataclass(frozen=True)
class MultipoleField:
    """
    A source given by its spherical-harmonic moments.

    Attributes:
        kind: "potential" (moments vanish at large r) or "permittivity"
            (epsilon_00 tends to sqrt(4 pi)).
        moments: (l, m) -> radial profile.
        support_radius: Radius beyond which every moment sits at its
            asymptotic value to within 1e-10.
        real: Whether the source is real in position space.
        name: Label used in logs and output metadata.
    """

    kind: SourceKind
    moments: Mapping[SourceKey, Profile]
    support_radius: float
    real: bool = True
    name: str = "source"

    def __post_init__(self) -> None:
        if self.kind not in ("potential", "permittivity"):
            raise ValueError(f"source kind must be 'potential' or 'permittivity', got {self.kind!r}")
        for l, m in self.moments:
            if l < 0 or abs(m) > l:
                raise ValueError(f"invalid moment index (l={l}, m={m})")
        if self.support_radius < 0:
            raise ValueError("support radius must be nonnegative")
        ordered = dict(sorted(self.moments.items()))
        object.__setattr__(self, "moments", MappingProxyType(ordered))

    @property
    def keys(self) -> Tuple[SourceKey, ...]:
        return tuple(self.moments.keys())

    @property
    def source_lmax(self) -> int:
        return max((l for l, _ in self.moments), default=0)

    def coupling_keys(self) -> Tuple[SourceKey, ...]:
        """Moments a coupling tensor must cover, including the vacuum (0, 0) of a permittivity."""
        keys = set(self.moments)
        if self.kind == "permittivity":
            keys.add((0, 0))
        return tuple(sorted(keys))

    def asymptotic(self, key: SourceKey) -> complex:
        if self.kind == "permittivity" and key == (0, 0):
            return SQRT_FOUR_PI
        return 0.0

    def evaluate(self, r: ArrayLike) -> ProfileValues:
        """
        Values and first two derivatives of every moment, stacked along
        axis 0 in ``keys`` order. Permittivities without an explicit (0, 0)
        moment behave as vacuum in that channel, which callers handle through
        ``moment_values``.
        """
        shape = (len(self.moments),) + np.shape(r)
        if not self.moments:
            empty = np.zeros(shape, dtype=complex)
            return empty, empty.copy(), empty.copy()
        parts = [profile(r) for profile in self.moments.values()]
        return tuple(np.stack([p[order] for p in parts]) for order in range(3))  # type: ignore[return-value]

    def moment_jet(self, r: float) -> Tuple[Dict[SourceKey, complex], ...]:
        """
        Values, first and second radial derivatives of every moment at a
        single radius, including the vacuum sqrt(4 pi) of a permittivity
        with no (0, 0) profile.
        """
        stacked = self.evaluate(r)
        out = tuple({key: complex(v) for key, v in zip(self.keys, stacked[order])} for order in range(3))
        if self.kind == "permittivity" and (0, 0) not in self.moments:
            for order, jet in enumerate(out):
                jet[(0, 0)] = SQRT_FOUR_PI if order == 0 else 0.0
        return out

    def moment_values(self, r: float, order: int = 0) -> Dict[SourceKey, complex]:
        """One radial derivative order of every moment at a single radius."""
        return self.moment_jet(r)[order]

    def field_value(self, theta: ArrayLike, phi: ArrayLike, r: float) -> np.ndarray:
        """Resummed source at a point: sum of f_lm(r) Y_l^m(theta, phi)."""
        total = np.zeros(np.broadcast(np.asarray(theta), np.asarray(phi)).shape, dtype=complex)
        for (l, m), value in self.moment_values(r).items():
            if value != 0:
                total = total + value * spherical_harmonic(l, m, theta, phi)
        return total

    def without(self, *keys: SourceKey) -> "MultipoleField":
        """Copy of the field with the given moments removed."""
        kept = {key: p for key, p in self.moments.items() if key not in keys}
        return replace(self, moments=kept, name=f"{self.name}-without-{'-'.join(f'{l}{m}' for l, m in keys)}")

    def reality_violation(self, radii: ArrayLike) -> float:
        """max |f_{l,-m} - (-1)^m conj(f_lm)| over the given radii."""
        radii = np.asarray(radii, dtype=float)
        worst = 0.0
        for (l, m), profile in self.moments.items():
            partner = self.moments.get((l, -m))
            value = profile(radii)[0]
            mirrored = np.zeros_like(value) if partner is None else partner(radii)[0]
            worst = max(worst, float(np.max(np.abs(mirrored - (-1) ** m * np.conj(value)))))
        return worst

    def is_localized(self, tol: float = _LOCALIZATION_TOL) -> bool:
        return self.localization_violation() < tol

    def localization_violation(self, n_samples: int = 50) -> float:
        """max |moment - asymptotic| on radii beyond the support radius."""
        radii = self.support_radius + np.linspace(0.0, 10.0, n_samples) * max(self.support_radius, 1.0)
        worst = 0.0
        for key, profile in self.moments.items():
            value = profile(radii)[0]
            worst = max(worst, float(np.max(np.abs(value - self.asymptotic(key)))))
        return worst


# Named models
def vacuum(kind: SourceKind = "potential") -> MultipoleField:
    """The empty source: V = 0, or epsilon = 1."""
    moments: Dict[SourceKey, Profile] = {}
    if kind == "permittivity":
        moments[(0, 0)] = ConstantProfile(SQRT_FOUR_PI)
    return MultipoleField(kind, moments, 0.0, True, f"vacuum-{kind}")


def smooth_ball(h: float, w: float, s: float) -> MultipoleField:
    """
    Smooth dielectric ball:
    epsilon_00(r) = sqrt(4 pi) (1 + h (1 - tanh(s (r - w))) / 2).
    """
    if w <= 0 or s <= 0:
        raise ValueError(f"smooth_ball needs w > 0 and s > 0, got w={w}, s={s}")
    step = TanhStep(SQRT_FOUR_PI * h, w, s, SQRT_FOUR_PI)
    return MultipoleField(
        "permittivity",
        {(0, 0): step},
        step.support_radius(),
        bool(np.isreal(h)),
        f"smooth_ball(h={h}, w={w}, s={s})",
    )


def square_well(V0: float, a: float, s: float) -> MultipoleField:
    """
    Smoothed spherical square well:
    V_00(r) = sqrt(4 pi) V0 (1 - tanh(s (r - a))) / 2, which tends to V0
    inside r < a and to 0 outside as s grows.
    """
    if a <= 0 or s <= 0:
        raise ValueError(f"square_well needs a > 0 and s > 0, got a={a}, s={s}")
    step = TanhStep(SQRT_FOUR_PI * V0, a, s)
    moments: Dict[SourceKey, Profile] = {} if V0 == 0 else {(0, 0): step}
    return MultipoleField(
        "potential",
        moments,
        step.support_radius(),
        bool(np.isreal(V0)),
        f"square_well(V0={V0}, a={a}, s={s})",
    )


def _negated_square(k: complex) -> complex:
    k2 = complex(k) * complex(k)
    # -0.0 + 0.0 == +0.0 keeps real k on the upper side of the branch cut
    return complex(-k2.real + 0.0, -k2.imag + 0.0)


def drude_prefactor(lambda_p: float, sigma_p: float, k: complex, branch: Optional[str] = None) -> complex:
    """
    (2 pi)^2 / ((pi / sigma_p) sqrt(-k^2) - (lambda_p k)^2).

    Args:
        branch: "principal" (default from Config.DRUDE_BRANCH) takes the
            principal square root; "negated" flips its sign.
    Raises:
        SingularParameterError: If the denominator vanishes.
    """
    branch = branch or Config.DRUDE_BRANCH
    if branch not in _DRUDE_BRANCHES:
        raise ValueError(f"branch must be one of {_DRUDE_BRANCHES}, got {branch!r}")
    k = complex(k)
    if k == 0:
        raise SingularParameterError("the Drude model is singular at k = 0")
    root = np.sqrt(_negated_square(k))
    if branch == "negated":
        root = -root
    damping = (math.pi / sigma_p) * root
    inertia = (lambda_p * k) ** 2
    denominator = damping - inertia
    if abs(denominator) <= _SINGULAR_TOL * (abs(damping) + abs(inertia)):
        raise SingularParameterError(
            f"Drude denominator vanishes at k={k} (lambda_p={lambda_p}, sigma_p={sigma_p})"
        )
    return complex((2.0 * math.pi) ** 2 / denominator)


def drude_deformed(
    lambda_p: float,
    sigma_p: float,
    w: float,
    s: float,
    k: complex,
    branch: Optional[str] = None,
) -> MultipoleField:
    """
    Drude-model deformed sphere at wave number k:
    epsilon_00 = sqrt(4 pi) + P p_00(r), epsilon_10 = P p_10(r), with P the
    Drude prefactor, p_00 = sqrt(4 pi) (1 - tanh(s (r - w))) / 2 and
    p_10 = (1 - tanh(s (r - w))) / 2.
    """
    if min(lambda_p, sigma_p, w, s) <= 0:
        raise ValueError("drude_deformed parameters must be positive")
    pref = drude_prefactor(lambda_p, sigma_p, k, branch)
    monopole = TanhStep(SQRT_FOUR_PI * pref, w, s, SQRT_FOUR_PI)
    dipole = TanhStep(pref, w, s)
    return MultipoleField(
        "permittivity",
        {(0, 0): monopole, (1, 0): dipole},
        monopole.support_radius(),
        abs(pref.imag) <= _SINGULAR_TOL * abs(pref),
        f"drude_deformed(lambda_p={lambda_p}, sigma_p={sigma_p}, w={w}, s={s}, k={k})",
    )


# JSON source specs
_MODELS: Dict[str, Callable[..., MultipoleField]] = {
    "smooth_ball": smooth_ball,
    "square_well": square_well,
    "drude_deformed": drude_deformed,
}
_K_DEPENDENT_MODELS = ("drude_deformed",)


def _build_profile(spec: MomentSpec) -> Profile:
    profile = spec.get("profile", "tanh_step")
    params = dict(spec.get("params", {}))
    if profile == "tanh_step":
        return TanhStep(
            complex(params.get("height", 1.0)),
            float(params["radius"]),
            float(params["steepness"]),
            complex(params.get("offset", 0.0)),
        )
    if profile == "constant":
        return ConstantProfile(complex(params["value"]))
    if profile == "tabulated":
        values = params["values"]
        if values and isinstance(values[0], (list, tuple)):
            values = [complex(re, im) for re, im in values]
        return TabulatedProfile(
            tuple(float(r) for r in params["r"]),
            tuple(complex(v) for v in values),
            complex(params.get("tail", 0.0)),
        )
    raise ValueError(f"unknown moment profile {profile!r}")


def is_k_dependent(spec: SourceSpec) -> bool:
    return spec.get("model") in _K_DEPENDENT_MODELS


def load_source_spec(source: Union[str, os.PathLike, SourceSpec], k: Optional[complex] = None) -> MultipoleField:
    """
    Build a MultipoleField from a JSON source spec (path or parsed dict).

    Either ``{"model": name, "params": {...}}`` for a named model, or
    ``{"kind": ..., "moments": [{"l", "m", "profile", "params"}], "support_radius": ...}``.

    Args:
        k: Wave number, required by k-dependent models.
    Raises:
        ValueError: For malformed specs.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            spec: SourceSpec = json.load(handle)
    else:
        spec = source

    model = spec.get("model")
    if model is not None:
        if model == "vacuum":
            return vacuum(spec.get("kind", "potential"))  # type: ignore[arg-type]
        if model not in _MODELS:
            raise ValueError(f"unknown source model {model!r}; expected one of {sorted(_MODELS) + ['vacuum']}")
        params = dict(spec.get("params", {}))
        if model in _K_DEPENDENT_MODELS:
            if k is None:
                raise ValueError(f"model {model!r} depends on the wave number; pass k")
            params["k"] = k
        return _MODELS[model](**params)

    kind = spec.get("kind")
    if kind not in ("potential", "permittivity"):
        raise ValueError(f"source spec needs kind 'potential' or 'permittivity', got {kind!r}")
    moments: Dict[SourceKey, Profile] = {}
    for entry in spec.get("moments", []):
        key = (int(entry["l"]), int(entry["m"]))
        if key in moments:
            raise ValueError(f"duplicate moment {key} in source spec")
        moments[key] = _build_profile(entry)

    support = spec.get("support_radius")
    if support is None:
        support = max((p.support_radius() for p in moments.values()), default=0.0)
    field_ = MultipoleField(kind, moments, float(support), bool(spec.get("real", True)), "custom")
    logger.info("Loaded %s source with %d moments (support radius %.4g)", kind, len(moments), field_.support_radius)
    return field_
