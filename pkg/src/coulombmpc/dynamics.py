"""Point-mass dynamics of collinear, electrostatically actuated spacecraft formations.

Positions are scalar (the formation line is the coordinate axis).  Charges are
expressed in units of 10 mC so the Coulomb constant can be scaled down to
8.99e5 N m^2/(10 mC)^2; accelerations then come out in m/s^2 for metre
positions and kilogram masses.  The acceleration of each craft is the sum of
inverse-square pair forces, each proportional to the product of the two
charges involved, so the dynamics are linear in the vector of pairwise charge
products rather than in the charges themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

COULOMB_CONSTANT = 8.99e5  # N m^2 / (10 mC)^2


class SingularityError(ValueError):
    """Two spacecraft are closer than the configured minimum separation."""


def _as_float_vector(value, length: int | None = None, name: str = "array") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if length is not None and arr.size != length:
        raise ValueError(f"{name} must have length {length}, got {arr.size}")
    return arr


@lru_cache(maxsize=None)
def _pair_table(num_spacecraft: int) -> np.ndarray:
    first, second = np.triu_indices(num_spacecraft, k=1)
    table = np.column_stack([first, second])
    table.setflags(write=False)
    return table


def spacecraft_pairs(num_spacecraft: int) -> np.ndarray:
    """All index pairs (i, j), i < j, ordered (0,1), (0,2), ..., (n-2, n-1).

    This fixed ordering defines which spacecraft pair each flattened
    charge-product index refers to, everywhere in the package.
    """
    if num_spacecraft < 2:
        raise ValueError("a formation needs at least two spacecraft")
    return _pair_table(num_spacecraft)


def pair_count(num_spacecraft: int) -> int:
    return num_spacecraft * (num_spacecraft - 1) // 2


@dataclass(frozen=True)
class PairIndex:
    """Bijection between flattened charge-product indices and spacecraft pairs."""

    num_spacecraft: int

    @property
    def pairs(self) -> np.ndarray:
        return spacecraft_pairs(self.num_spacecraft)

    def __len__(self) -> int:
        return pair_count(self.num_spacecraft)

    def pair(self, index: int) -> tuple[int, int]:
        i, j = self.pairs[index]
        return int(i), int(j)


@dataclass(frozen=True)
class FormationConfig:
    """Physical description of the formation and its operating limits.

    Charges and charge bounds are in 10 mC units; charge-product bounds, when
    present, are in (10 mC)^2.  State bounds stack positions then velocities
    of the relative coordinates, length ``2 * (num_spacecraft - 1)``.
    """

    num_spacecraft: int
    masses: np.ndarray
    state_min: np.ndarray
    state_max: np.ndarray
    charge_min: np.ndarray
    charge_max: np.ndarray
    coulomb_constant: float = COULOMB_CONSTANT
    product_min: np.ndarray | None = None
    product_max: np.ndarray | None = None
    min_separation: float = 1e-3  # m, below this pair forces are treated as singular

    def __post_init__(self):
        ns = int(self.num_spacecraft)
        if ns < 2:
            raise ValueError("num_spacecraft must be at least 2")
        object.__setattr__(self, "num_spacecraft", ns)
        n_state = 2 * (ns - 1)
        m = pair_count(ns)

        masses = _as_float_vector(self.masses, name="masses")
        if masses.size == 1:
            masses = np.full(ns, masses[0])
        if masses.size != ns:
            raise ValueError(f"masses must have length {ns}")
        if np.any(masses <= 0):
            raise ValueError("all masses must be strictly positive")
        object.__setattr__(self, "masses", masses)

        if self.coulomb_constant <= 0:
            raise ValueError("coulomb_constant must be strictly positive")
        if self.min_separation <= 0:
            raise ValueError("min_separation must be strictly positive")

        for lo_name, hi_name, length in (
            ("state_min", "state_max", n_state),
            ("charge_min", "charge_max", ns),
        ):
            lo = _as_float_vector(getattr(self, lo_name), name=lo_name)
            hi = _as_float_vector(getattr(self, hi_name), name=hi_name)
            if lo.size == 1:
                lo = np.full(length, lo[0])
            if hi.size == 1:
                hi = np.full(length, hi[0])
            if lo.size != length or hi.size != length:
                raise ValueError(f"{lo_name}/{hi_name} must have length {length}")
            if np.any(lo >= hi):
                raise ValueError(f"{lo_name} must be elementwise below {hi_name}")
            object.__setattr__(self, lo_name, lo)
            object.__setattr__(self, hi_name, hi)

        if (self.product_min is None) != (self.product_max is None):
            raise ValueError("product bounds must be given as a pair or not at all")
        if self.product_min is not None:
            lo = _as_float_vector(self.product_min, m, "product_min")
            hi = _as_float_vector(self.product_max, m, "product_max")
            if np.any(lo >= hi):
                raise ValueError("product_min must be elementwise below product_max")
            object.__setattr__(self, "product_min", lo)
            object.__setattr__(self, "product_max", hi)

    @property
    def pair_count(self) -> int:
        return pair_count(self.num_spacecraft)

    @property
    def state_dim(self) -> int:
        return 2 * (self.num_spacecraft - 1)


@dataclass(frozen=True)
class AbsoluteState:
    """Inertial positions and velocities of every spacecraft on the line."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        pos = _as_float_vector(self.positions, name="positions")
        vel = _as_float_vector(self.velocities, pos.size, "velocities")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    def to_relative(self) -> "RelativeState":
        return RelativeState(
            self.positions[1:] - self.positions[0],
            self.velocities[1:] - self.velocities[0],
        )


@dataclass(frozen=True)
class RelativeState:
    """Positions and velocities of craft 2..N relative to craft 1."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        pos = _as_float_vector(self.positions, name="positions")
        vel = _as_float_vector(self.velocities, pos.size, "velocities")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @classmethod
    def from_vector(cls, packed: np.ndarray) -> "RelativeState":
        packed = _as_float_vector(packed, name="packed state")
        if packed.size % 2:
            raise ValueError("packed state must have even length")
        half = packed.size // 2
        return cls(packed[:half], packed[half:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.positions, self.velocities])


def charge_products(charges: np.ndarray) -> np.ndarray:
    """All pairwise products q_i * q_j in :func:`spacecraft_pairs` order."""
    q = _as_float_vector(charges, name="charges")
    pairs = spacecraft_pairs(q.size)
    return q[pairs[:, 0]] * q[pairs[:, 1]]


def _pair_force_terms(positions: np.ndarray, cfg: FormationConfig) -> np.ndarray:
    """Force per unit charge product on the first craft of each pair, kappa*(x_i-x_j)/|..|^3."""
    pairs = spacecraft_pairs(cfg.num_spacecraft)
    diff = positions[pairs[:, 0]] - positions[pairs[:, 1]]
    dist = np.abs(diff)
    if np.any(dist < cfg.min_separation):
        worst = int(np.argmin(dist))
        i, j = pairs[worst]
        raise SingularityError(
            f"spacecraft {i} and {j} are {dist[worst]:.3e} m apart "
            f"(minimum separation {cfg.min_separation:g} m)"
        )
    return cfg.coulomb_constant * diff / dist**3


def absolute_input_matrix(positions: np.ndarray, cfg: FormationConfig) -> np.ndarray:
    """Matrix mapping pairwise charge products to absolute accelerations.

    Column l holds the acceleration pattern of pair (i, j): the force acts
    equally and oppositely on the two craft, divided by their masses.
    """
    x = _as_float_vector(positions, cfg.num_spacecraft, "positions")
    pairs = spacecraft_pairs(cfg.num_spacecraft)
    terms = _pair_force_terms(x, cfg)
    mat = np.zeros((cfg.num_spacecraft, len(pairs)))
    cols = np.arange(len(pairs))
    mat[pairs[:, 0], cols] = terms / cfg.masses[pairs[:, 0]]
    mat[pairs[:, 1], cols] = -terms / cfg.masses[pairs[:, 1]]
    return mat


def relative_input_matrix(rel_positions: np.ndarray, cfg: FormationConfig) -> np.ndarray:
    """Matrix mapping charge products to relative accelerations.

    Row i is row i+1 minus row 0 of the absolute matrix, evaluated at the
    positions implied by placing craft 1 at the origin.
    """
    rel = _as_float_vector(rel_positions, cfg.num_spacecraft - 1, "relative positions")
    x = np.concatenate([[0.0], rel])
    absolute = absolute_input_matrix(x, cfg)
    return absolute[1:] - absolute[0]


def continuous_rhs(state: RelativeState, charges: np.ndarray, cfg: FormationConfig) -> np.ndarray:
    """Time derivative of the packed relative state [positions; velocities]."""
    accel = relative_input_matrix(state.positions, cfg) @ charge_products(charges)
    return np.concatenate([state.velocities, accel])


def rk4_step(
    state: RelativeState, charges: np.ndarray, dt: float, cfg: FormationConfig
) -> RelativeState:
    """One classical fourth-order Runge-Kutta step with the charges held constant."""
    if dt <= 0:
        raise ValueError("step size must be positive")
    products = charge_products(charges)

    def rhs(packed: np.ndarray) -> np.ndarray:
        half = packed.size // 2
        accel = relative_input_matrix(packed[:half], cfg) @ products
        return np.concatenate([packed[half:], accel])

    y = state.as_vector()
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return RelativeState.from_vector(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


@dataclass(frozen=True)
class DiscreteModel:
    """Linear prediction model frozen at a reference relative geometry.

    With the input matrix frozen, the relative dynamics are a double
    integrator driven by charge products, whose zero-order-hold
    discretization over one sample period is exact:

        A = [[I, h I], [0, I]],   B = [[h^2/2 * G], [h * G]],

    where G is the relative input matrix at the reference positions.
    """

    sample_period: float
    A: np.ndarray
    B: np.ndarray
    reference_positions: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


def build_discrete_model(
    reference_positions: np.ndarray, sample_period: float, cfg: FormationConfig
) -> DiscreteModel:
    """Exact zero-order-hold discretization of the frozen-coefficient dynamics."""
    if sample_period <= 0:
        raise ValueError("sample_period must be positive")
    ref = _as_float_vector(
        reference_positions, cfg.num_spacecraft - 1, "reference positions"
    )
    gain = relative_input_matrix(ref, cfg)
    half = cfg.num_spacecraft - 1
    h = float(sample_period)
    A = np.eye(2 * half)
    A[:half, half:] = h * np.eye(half)
    B = np.vstack([0.5 * h * h * gain, h * gain])
    return DiscreteModel(h, A, B, ref)
