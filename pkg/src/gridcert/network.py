"""Network model and assembly of the constant state-space matrices.

Buses are held generator-first internally. The dynamic state is ordered

    x = [generator angle deviations (m), generator velocities (m),
         load angle deviations (n - m)]

so every matrix produced here follows that convention.
"""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .exceptions import GridModelError

GENERATOR_KINDS = ("conventional-generator", "renewable-generator")
BUS_KINDS = GENERATOR_KINDS + ("load",)

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class Bus:
    """A single bus: generator (conventional or renewable) or load.

    injection is the net per-unit active power: mechanical input for
    generators, negative nominal demand for loads. Inertia is only
    meaningful for generator kinds and must be None for loads.
    """

    id: int
    kind: str
    voltage: float
    injection: float
    damping: float
    inertia: float | None = None

    @property
    def is_generator(self) -> bool:
        return self.kind in GENERATOR_KINDS

    @property
    def tunable(self) -> bool:
        return self.kind == "renewable-generator"

    def validate(self):
        if self.kind not in BUS_KINDS:
            raise GridModelError(f"bus {self.id}: unknown kind {self.kind!r}")
        if self.voltage <= 0:
            raise GridModelError(f"bus {self.id}: voltage must be positive")
        if self.damping <= 0:
            raise GridModelError(f"bus {self.id}: damping must be positive")
        if self.is_generator:
            if self.inertia is None or self.inertia <= 0:
                raise GridModelError(
                    f"bus {self.id}: generator needs positive inertia")
        elif self.inertia is not None:
            raise GridModelError(f"bus {self.id}: loads carry no inertia")


@dataclass(frozen=True)
class Line:
    """Transmission line between two buses, identified by user bus ids."""

    endpoints: tuple[int, int]
    susceptance: float
    status: str = "in-service"

    def validate(self):
        u, v = self.endpoints
        if u == v:
            raise GridModelError(f"line {self.endpoints}: endpoints coincide")
        if self.susceptance <= 0:
            raise GridModelError(
                f"line {self.endpoints}: susceptance must be positive")
        if self.status not in ("in-service", "tripped"):
            raise GridModelError(
                f"line {self.endpoints}: bad status {self.status!r}")


@dataclass
class Network:
    """Validated network with generator-first internal bus ordering.

    ``buses`` is the reordered list; ``order`` records the user bus id at
    each internal position so external reports can translate back.
    """

    buses: list[Bus]
    lines: list[Line]
    order: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.order:
            self.order = [b.id for b in self.buses]
        self._index = {bid: k for k, bid in enumerate(self.order)}
        self.n = len(self.buses)
        self.m = sum(1 for b in self.buses if b.is_generator)
        self.ne = len(self.lines)
        self._validate()

    def _validate(self):
        if self.n == 0:
            raise GridModelError("network has no buses")
        if self.ne == 0:
            raise GridModelError("network has no lines")
        for b in self.buses:
            b.validate()
        for ln in self.lines:
            ln.validate()
            for bid in ln.endpoints:
                if bid not in self._index:
                    raise GridModelError(f"line {ln.endpoints}: unknown bus {bid}")
        seen = set()
        for ln in self.lines:
            key = frozenset(ln.endpoints)
            if key in seen:
                raise GridModelError(f"duplicate line {ln.endpoints}")
            seen.add(key)
        # generator-first ordering is a hard internal invariant
        kinds = [b.is_generator for b in self.buses]
        if kinds != sorted(kinds, reverse=True):
            raise GridModelError("internal bus ordering is not generator-first")
        balance = sum(b.injection for b in self.buses)
        if abs(balance) > BALANCE_TOL:
            raise GridModelError(
                f"injections do not balance: sum = {balance:.3e}")
        if not self._connected():
            raise GridModelError("network graph is disconnected")

    def _connected(self) -> bool:
        adj = [[] for _ in range(self.n)]
        for ln in self.lines:
            u, v = (self._index[b] for b in ln.endpoints)
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    # -- index helpers -------------------------------------------------

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise GridModelError(f"unknown bus id {bus_id}") from None

    def line_index(self, endpoints) -> int:
        want = frozenset(endpoints)
        for e, ln in enumerate(self.lines):
            if frozenset(ln.endpoints) == want:
                return e
        raise GridModelError(f"line {tuple(endpoints)} not in network")

    # -- derived quantities --------------------------------------------

    def couplings(self) -> np.ndarray:
        """Per-line coupling a_kj = V_k V_j B_kj, recomputed on demand."""
        out = np.empty(self.ne)
        for e, ln in enumerate(self.lines):
            u, v = (self._index[b] for b in ln.endpoints)
            out[e] = self.buses[u].voltage * self.buses[v].voltage * ln.susceptance
        return out

    def incidence(self) -> np.ndarray:
        """Signed incidence matrix, |E| x n, oriented low to high index."""
        E = np.zeros((self.ne, self.n))
        for e, ln in enumerate(self.lines):
            u, v = sorted(self._index[b] for b in ln.endpoints)
            E[e, u] = 1.0
            E[e, v] = -1.0
        return E

    def injections(self) -> np.ndarray:
        return np.array([b.injection for b in self.buses])

    def nominal_inertia(self) -> np.ndarray:
        return np.array([b.inertia for b in self.buses[:self.m]])

    def nominal_damping(self) -> np.ndarray:
        return np.array([b.damping for b in self.buses])

    def tunable_generators(self) -> list[int]:
        """Internal indices of generators whose (m, d) may be retuned."""
        return [k for k in range(self.m) if self.buses[k].tunable]

    def generator_line_indices(self) -> list[int]:
        """Lines whose both endpoints are generator buses."""
        out = []
        for e, ln in enumerate(self.lines):
            u, v = (self._index[b] for b in ln.endpoints)
            if u < self.m and v < self.m:
                out.append(e)
        return out

    def user_endpoints(self, e: int) -> tuple[int, int]:
        return self.lines[e].endpoints


def build_network(config: dict) -> Network:
    """Build a Network from a parsed grid description.

    Buses may be listed in any order; they are sorted generator-first
    (stable within each group) and the permutation is recorded.
    """
    try:
        bus_entries = config["buses"]
        line_entries = config["lines"]
    except (KeyError, TypeError):
        raise GridModelError("grid description needs 'buses' and 'lines'")
    buses = []
    for entry in bus_entries:
        try:
            buses.append(Bus(
                id=int(entry["id"]),
                kind=str(entry["kind"]),
                voltage=float(entry["voltage"]),
                injection=float(entry["injection"]),
                damping=float(entry["damping"]),
                inertia=(float(entry["inertia"]) if "inertia" in entry
                         and entry["inertia"] is not None else None),
            ))
        except (KeyError, TypeError, ValueError) as ex:
            raise GridModelError(f"bad bus entry {entry!r}: {ex}") from None
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        raise GridModelError("duplicate bus ids")
    buses.sort(key=lambda b: not b.is_generator)
    lines = []
    seen = set()
    for entry in line_entries:
        try:
            u, v = int(entry["from"]), int(entry["to"])
            line = Line(endpoints=(min(u, v), max(u, v)),
                        susceptance=float(entry["susceptance"]))
        except (KeyError, TypeError, ValueError) as ex:
            raise GridModelError(f"bad line entry {entry!r}: {ex}") from None
        if frozenset(line.endpoints) in seen:
            raise GridModelError(f"duplicate line {line.endpoints}")
        seen.add(frozenset(line.endpoints))
        lines.append(line)
    return Network(buses=buses, lines=lines)


def load_grid_file(path) -> Network:
    """Parse a grid description file (YAML) and build the Network."""
    with open(path) as fh:
        try:
            config = yaml.safe_load(fh)
        except yaml.YAMLError as ex:
            raise GridModelError(f"cannot parse {path}: {ex}") from None
    if not isinstance(config, dict):
        raise GridModelError(f"{path}: top level must be a mapping")
    return build_network(config)


@dataclass
class SystemMatrices:
    """Constant matrices of the compact dynamics for a given (m, d).

    E is the signed incidence matrix, C maps the state to per-line
    angle-difference deviations, S holds the couplings on its diagonal,
    and A, B are the drift and input matrices. The inertia and damping
    vectors the matrices were built from are kept for reference.
    """

    E: np.ndarray
    C: np.ndarray
    S: np.ndarray
    A: np.ndarray
    B: np.ndarray
    state_dim: int
    n: int
    m: int
    inertia: np.ndarray
    damping: np.ndarray

    def gauge_direction(self) -> np.ndarray:
        """Uniform angle shift: the structural null direction of the dynamics."""
        z = np.zeros(self.state_dim)
        z[:self.m] = 1.0
        if self.n > self.m:
            z[2 * self.m:] = 1.0
        return z


def assemble_matrices(net: Network, inertia=None, damping=None) -> SystemMatrices:
    """Assemble A, B, C, S for the given inertia/damping vectors.

    inertia has one entry per generator, damping one per bus; both default
    to the nominal values on the buses. Deterministic for fixed input.
    """
    n, m, ne = net.n, net.m, net.ne
    mv = net.nominal_inertia() if inertia is None else np.asarray(inertia, float)
    dv = net.nominal_damping() if damping is None else np.asarray(damping, float)
    if mv.shape != (m,):
        raise GridModelError(f"inertia vector must have {m} entries")
    if dv.shape != (n,):
        raise GridModelError(f"damping vector must have {n} entries")
    if np.any(mv <= 0) or np.any(dv <= 0):
        raise GridModelError("inertia and damping must be positive")

    E = net.incidence()
    a = net.couplings()
    S = np.diag(a)
    nx = n + m

    C = np.zeros((ne, nx))
    C[:, :m] = E[:, :m]
    if n > m:
        C[:, 2 * m:] = E[:, m:]

    A = np.zeros((nx, nx))
    A[:m, m:2 * m] = np.eye(m)
    A[m:2 * m, m:2 * m] = np.diag(-dv[:m] / mv)

    # M = diag(generator inertias, load dampings); B = [0; M^-1 E^T S]
    EtS = E.T * a
    B = np.zeros((nx, ne))
    B[m:2 * m, :] = EtS[:m] / mv[:, None]
    if n > m:
        B[2 * m:, :] = EtS[m:] / dv[m:, None]

    return SystemMatrices(E=E, C=C, S=S, A=A, B=B, state_dim=nx,
                          n=n, m=m, inertia=mv.copy(), damping=dv.copy())


def extraction_vector(net: Network, line) -> np.ndarray:
    """Unit vector selecting the given line's entry among the edges."""
    e = net.line_index(line)
    out = np.zeros(net.ne)
    out[e] = 1.0
    return out
