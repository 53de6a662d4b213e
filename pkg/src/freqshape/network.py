"""Bus/branch network, admittance matrix and Newton-Raphson power flow."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

SLACK, PV, PQ = "slack", "pv", "pq"


class NetworkError(ValueError):
    pass


class PowerFlowError(RuntimeError):
    def __init__(self, msg, mismatch=None, iterations=None):
        super().__init__(msg)
        self.mismatch = mismatch
        self.iterations = iterations


@dataclass(frozen=True)
class Bus:
    id: object
    kind: str = PQ
    base_kv: float = 1.0
    v_set: float = 1.0
    g_sh: float = 0.0
    b_sh: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: object
    to_bus: object
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0


@dataclass
class Network:
    buses: list
    branches: list = field(default_factory=list)
    s_base: float = 100.0
    f0: float = 50.0

    def __post_init__(self):
        self._index = {b.id: k for k, b in enumerate(self.buses)}
        if len(self._index) != len(self.buses):
            raise NetworkError("duplicate bus ids")

    @property
    def n(self) -> int:
        return len(self.buses)

    def index(self, bus_id) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus {bus_id!r}") from None

    def with_kinds(self, kinds: dict) -> "Network":
        """Copy with bus types (and voltage setpoints) replaced, e.g. from unit dispatch."""
        buses = []
        for b in self.buses:
            kind, v = kinds.get(b.id, (PQ, b.v_set))
            buses.append(Bus(b.id, kind, b.base_kv, v, b.g_sh, b.b_sh))
        return Network(buses, list(self.branches), self.s_base, self.f0)

    def validate(self, require_slack: bool = True):
        if require_slack:
            n_slack = sum(b.kind == SLACK for b in self.buses)
            if n_slack != 1:
                raise NetworkError(f"exactly one slack bus required, found {n_slack}")
        for br in self.branches:
            self.index(br.from_bus), self.index(br.to_bus)
            if br.r == 0 and br.x == 0:
                raise NetworkError(f"zero-impedance branch {br.from_bus}-{br.to_bus}")
        if not self.is_connected():
            raise NetworkError("network graph is not connected")

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        adj = {k: set() for k in range(self.n)}
        for br in self.branches:
            i, j = self.index(br.from_bus), self.index(br.to_bus)
            adj[i].add(j)
            adj[j].add(i)
        seen, stack = {0}, [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n


def assemble_ybus(net: Network) -> np.ndarray:
    Y = np.zeros((net.n, net.n), dtype=complex)
    for br in net.branches:
        if br.r == 0 and br.x == 0:
            raise NetworkError(f"zero-impedance branch {br.from_bus}-{br.to_bus}")
        i, j = net.index(br.from_bus), net.index(br.to_bus)
        y = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        t = br.tap
        Y[i, i] += (y + ysh) / t**2
        Y[j, j] += y + ysh
        Y[i, j] -= y / t
        Y[j, i] -= y / t
    for k, b in enumerate(net.buses):
        Y[k, k] += complex(b.g_sh, b.b_sh)
    return Y


@dataclass
class PowerFlowSolution:
    vm: np.ndarray
    va: np.ndarray
    p: np.ndarray
    q: np.ndarray
    iterations: int
    mismatch: float
    bus_ids: list

    @property
    def v(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)

    def losses(self, net: Network) -> float:
        """Series and shunt branch losses (pu), evaluated branch by branch."""
        v = self.v
        total = 0.0
        for br in net.branches:
            i, j = net.index(br.from_bus), net.index(br.to_bus)
            y = 1.0 / complex(br.r, br.x)
            vi = v[i] / br.tap
            total += (abs(vi - v[j]) ** 2 * y.conjugate()).real
        for k, b in enumerate(net.buses):
            total += b.g_sh * self.vm[k] ** 2
        return float(total)


def solve_power_flow(net: Network, p_spec, q_spec, Y=None, tol: float = 1e-8,
                     max_iter: int = 25) -> PowerFlowSolution:
    """Polar Newton-Raphson from a flat start.

    ``p_spec``/``q_spec`` are net bus injections in pu (generation minus load);
    entries at the slack bus, and ``q_spec`` at PV buses, are ignored. Voltage
    setpoints come from ``Bus.v_set``. ``Y`` may carry extra shunts such as
    constant-impedance loads.
    """
    net.validate()
    if Y is None:
        Y = assemble_ybus(net)
    n = net.n
    p_spec = np.asarray(p_spec, dtype=float)
    q_spec = np.asarray(q_spec, dtype=float)
    kinds = [b.kind for b in net.buses]
    pv = [k for k in range(n) if kinds[k] == PV]
    pq = [k for k in range(n) if kinds[k] == PQ]
    non_slack = [k for k in range(n) if kinds[k] != SLACK]
    vm = np.array([b.v_set if b.kind != PQ else 1.0 for b in net.buses])
    va = np.zeros(n)

    def mismatch(vm, va):
        v = vm * np.exp(1j * va)
        s = v * np.conj(Y @ v)
        return s, np.concatenate([p_spec[non_slack] - s.real[non_slack], q_spec[pq] - s.imag[pq]])

    s, dF = mismatch(vm, va)
    it = 0
    while np.max(np.abs(dF), initial=0.0) >= tol:
        if it >= max_iter:
            raise PowerFlowError(f"power flow did not converge in {max_iter} iterations "
                                 f"(max mismatch {np.max(np.abs(dF)):.3e})", dF, it)
        v = vm * np.exp(1j * va)
        ibus = Y @ v
        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_vn = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - Y @ diag_v)
        ds_dvm = diag_v @ np.conj(Y @ diag_vn) + np.conj(diag_i) @ diag_vn
        J = np.block([
            [ds_dva.real[np.ix_(non_slack, non_slack)], ds_dvm.real[np.ix_(non_slack, pq)]],
            [ds_dva.imag[np.ix_(pq, non_slack)], ds_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, dF)
        va[non_slack] += dx[:len(non_slack)]
        vm[pq] += dx[len(non_slack):]
        s, dF = mismatch(vm, va)
        it += 1
    return PowerFlowSolution(vm, va, s.real.copy(), s.imag.copy(), it,
                             float(np.max(np.abs(dF), initial=0.0)), [b.id for b in net.buses])


def dispatch_network(net: Network, units, loads):
    """Assign bus types from unit dispatch and build the power-flow inputs.

    Every unit bus becomes PV at the unit's voltage setpoint; the bus of the
    largest-rated unit is the slack. Returns ``(net_pf, p_spec, q_spec, Y)``
    where ``Y`` includes constant-impedance loads.
    """
    if not units:
        raise NetworkError("scenario has no generating units")
    seen = {}
    for u in units:
        if u.bus in seen:
            raise NetworkError(f"bus {u.bus!r} hosts both {seen[u.bus]} and {u.name}")
        seen[u.bus] = u.name
    largest = max(units, key=lambda u: u.params.S_rated)
    kinds = {u.bus: (SLACK if u is largest else PV, u.V_pu) for u in units}
    net_pf = net.with_kinds(kinds)
    Y = assemble_ybus(net_pf)
    p_spec = np.zeros(net.n)
    q_spec = np.zeros(net.n)
    for u in units:
        p_spec[net.index(u.bus)] += u.P_mw / net.s_base
    for ld in loads:
        k = net.index(ld.bus)
        s = complex(ld.params.P, ld.params.Q) / net.s_base
        if ld.params.kind == "constant_impedance":
            Y[k, k] += np.conj(s)
        else:
            p_spec[k] -= s.real
            q_spec[k] -= s.imag
    return net_pf, p_spec, q_spec, Y


def init_scenario(net: Network, units, loads, pf: PowerFlowSolution | None = None):
    """Power flow plus back-solved component states.

    Returns ``(x0, resolved_units, pf)``; ``x0`` concatenates unit states in
    the order of ``units``.
    """
    from dataclasses import replace

    from .components import gfor_init, sg_init

    net_pf, p_spec, q_spec, Y = dispatch_network(net, units, loads)
    if pf is None:
        pf = solve_power_flow(net_pf, p_spec, q_spec, Y=Y)
    v = pf.v
    # unit injection = bus injection plus what the local loads draw
    p_unit = pf.p.copy()
    q_unit = pf.q.copy()
    for ld in loads:
        if ld.params.kind == "constant_power":
            k = net.index(ld.bus)
            p_unit[k] += ld.params.P / net.s_base
            q_unit[k] += ld.params.Q / net.s_base
    # constant-impedance load power already sits inside Y: pf.p/pf.q are computed from Y
    xs, resolved = [], []
    for u in units:
        k = net.index(u.bus)
        s = complex(p_unit[k], q_unit[k])
        if u.kind == "sg":
            x0, par = sg_init(u.params, v[k], s, net.s_base, net.f0)
        else:
            x0, par = gfor_init(u.params, v[k], s, net.s_base)
        xs.append(x0)
        resolved.append(replace(u, params=par))
    return np.concatenate(xs), resolved, pf
