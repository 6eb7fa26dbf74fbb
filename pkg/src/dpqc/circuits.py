"""Circuit intermediate representation for dynamic parameterized circuits.

A circuit is a layered sequence of OpSpec values over an architecture graph.
Layers are applied in order; ops within a layer are applied in list order,
with the invariant that two-qubit ops inside one layer act on disjoint qubits.

Op kinds and their parameter/constant conventions:

  two_qubit_gate    gate in {haar, cnot, cz, cv, cvdg, cu1, rxx, ryy, rzz}
                    rxx/ryy/rzz carry one angle (slot or constant);
                    cu1 carries constants (varphi, phi); qubit order for
                    controlled gates is (control, target)
  single_qubit_gate gate in {haar, u3, rx, ry, rz}; u3 carries three angles
  feedforward       constants (varphi, phi) plus either one slot (trainable
                    application probability sin^2(theta/2)) or a third
                    constant theta (fixed application probability)
  reset             deterministic reset onto |0>; no parameters
  noise             constants (gamma, delta)
  depolarizing      one mixing weight (slot or constant)

Parameter slots index a global parameter vector; every slot parameterizes
exactly one op.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

TWO_QUBIT_GATE = "two_qubit_gate"
SINGLE_QUBIT_GATE = "single_qubit_gate"
FEEDFORWARD = "feedforward"
NOISE = "noise"
DEPOLARIZING = "depolarizing"
RESET = "reset"

OP_KINDS = (TWO_QUBIT_GATE, SINGLE_QUBIT_GATE, FEEDFORWARD, NOISE, DEPOLARIZING, RESET)

TWO_QUBIT_GATES = ("haar", "cnot", "cz", "cv", "cvdg", "cu1", "rxx", "ryy", "rzz")
SINGLE_QUBIT_GATES = ("haar", "u3", "rx", "ry", "rz")

# number of angles each parameterized gate consumes
GATE_ANGLES = {"u3": 3, "rx": 1, "ry": 1, "rz": 1, "rxx": 1, "ryy": 1, "rzz": 1}


class InvalidLayoutError(ValueError):
    """Raised when a circuit violates a structural invariant."""


@dataclass(frozen=True)
class OpSpec:
    kind: str
    qubits: tuple[int, ...]
    gate: str | None = None
    param_slots: tuple[int, ...] = ()
    constants: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "param_slots", tuple(int(s) for s in self.param_slots))
        object.__setattr__(self, "constants", tuple(float(c) for c in self.constants))
        self._check()

    def _check(self):
        if self.kind not in OP_KINDS:
            raise InvalidLayoutError(f"unknown op kind {self.kind!r}")
        nq = len(self.qubits)
        if self.kind == TWO_QUBIT_GATE:
            if nq != 2 or self.qubits[0] == self.qubits[1]:
                raise InvalidLayoutError("two-qubit ops need two distinct qubits")
            if self.gate not in TWO_QUBIT_GATES:
                raise InvalidLayoutError(f"unknown two-qubit gate {self.gate!r}")
        elif self.kind == SINGLE_QUBIT_GATE:
            if nq != 1:
                raise InvalidLayoutError("single-qubit ops act on one qubit")
            if self.gate not in SINGLE_QUBIT_GATES:
                raise InvalidLayoutError(f"unknown single-qubit gate {self.gate!r}")
        elif nq != 1:
            raise InvalidLayoutError(f"{self.kind} ops act on one qubit")
        n_angles = self.n_angles
        if n_angles is not None and len(self.param_slots) not in (0, n_angles):
            raise InvalidLayoutError(
                f"{self.gate or self.kind} takes {n_angles} angles, "
                f"got {len(self.param_slots)} slots"
            )
        if self.kind == FEEDFORWARD:
            if len(self.constants) not in (2, 3):
                raise InvalidLayoutError("feedforward needs constants (varphi, phi[, theta])")
            if len(self.param_slots) + len(self.constants) != 3:
                raise InvalidLayoutError("feedforward theta must be a slot or a constant")
        if self.kind == NOISE and len(self.constants) != 2:
            raise InvalidLayoutError("noise needs constants (gamma, delta)")
        if self.gate == "cu1" and len(self.constants) != 2:
            raise InvalidLayoutError("cu1 needs constants (varphi, phi)")
        if n_angles is None and self.kind != FEEDFORWARD and self.param_slots:
            raise InvalidLayoutError(f"{self.gate or self.kind} takes no parameter slots")

    @property
    def n_angles(self) -> int | None:
        """Angle count for parameterizable ops; None when not angle-based."""
        if self.kind in (SINGLE_QUBIT_GATE, TWO_QUBIT_GATE):
            return GATE_ANGLES.get(self.gate)
        if self.kind in (FEEDFORWARD, DEPOLARIZING):
            return 1
        return None

    @property
    def is_parameterized(self) -> bool:
        return bool(self.param_slots)

    @property
    def is_feedforward_source(self) -> bool:
        return self.kind in (FEEDFORWARD, RESET)

    def feedforward_angles(self) -> tuple[float, float, float | None]:
        """(varphi, phi, theta) with theta None when slot-controlled."""
        if self.kind == RESET:
            return math.pi / 2, 0.0, math.pi
        varphi, phi = self.constants[0], self.constants[1]
        theta = self.constants[2] if len(self.constants) == 3 else None
        return varphi, phi, theta


@dataclass(frozen=True)
class Architecture:
    """Qubit graph; edges are the pairs allowed to host two-qubit ops."""

    n_qubits: int
    edges: frozenset
    system_qubits: tuple[int, ...]

    def __post_init__(self):
        edges = frozenset(tuple(sorted((int(a), int(b)))) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "system_qubits", tuple(sorted(int(q) for q in self.system_qubits)))
        for a, b in edges:
            if a == b:
                raise InvalidLayoutError("self-loop edge")
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise InvalidLayoutError(f"edge ({a}, {b}) references an invalid qubit")
        if len(set(self.system_qubits)) != len(self.system_qubits):
            raise InvalidLayoutError("duplicate system qubit")
        for q in self.system_qubits:
            if not 0 <= q < self.n_qubits:
                raise InvalidLayoutError(f"system qubit {q} out of range")

    @property
    def ancilla_qubits(self) -> tuple[int, ...]:
        system = set(self.system_qubits)
        return tuple(q for q in range(self.n_qubits) if q not in system)

    def has_edge(self, a: int, b: int) -> bool:
        return tuple(sorted((a, b))) in self.edges


@dataclass(frozen=True)
class EdgeColoring:
    """Edge -> color index; color 0 means "no gate". Colors > 0 are matchings."""

    color_of: dict

    def __post_init__(self):
        normalized = {tuple(sorted(e)): int(c) for e, c in self.color_of.items()}
        object.__setattr__(self, "color_of", normalized)
        if any(c < 0 for c in normalized.values()):
            raise InvalidLayoutError("colors must be >= 0")
        for color in self.colors():
            seen: set[int] = set()
            for (a, b), c in normalized.items():
                if c != color:
                    continue
                if a in seen or b in seen:
                    raise InvalidLayoutError(f"color {color} is not a matching")
                seen.update((a, b))

    def colors(self) -> list[int]:
        return sorted({c for c in self.color_of.values() if c > 0})

    def edges_of(self, color: int) -> list[tuple[int, int]]:
        return sorted(e for e, c in self.color_of.items() if c == color)

    def validate_on(self, arch: Architecture) -> None:
        for e in self.color_of:
            if e not in arch.edges:
                raise InvalidLayoutError(f"colored edge {e} is not in the architecture")


def greedy_edge_coloring(arch: Architecture) -> EdgeColoring:
    """Deterministic greedy coloring: smallest color >= 1 free at both endpoints."""
    used: dict[int, set[int]] = {q: set() for q in range(arch.n_qubits)}
    color_of = {}
    for a, b in sorted(arch.edges):
        c = 1
        while c in used[a] or c in used[b]:
            c += 1
        color_of[(a, b)] = c
        used[a].add(c)
        used[b].add(c)
    return EdgeColoring(color_of)


@dataclass(frozen=True)
class FeedforwardSpec:
    """How a scheduled feedforward is parameterized.

    theta=None assigns a trainable probability slot; a float theta fixes the
    application probability to sin^2(theta/2).
    """

    varphi: float = math.pi / 2
    phi: float = 0.0
    theta: float | None = None


@dataclass(frozen=True)
class Circuit:
    architecture: Architecture
    layers: tuple
    n_params: int
    trace_out: tuple[int, ...] = ()

    def __post_init__(self):
        layers = tuple(tuple(layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "trace_out", tuple(int(q) for q in self.trace_out))
        self._check()

    def _check(self):
        n = self.architecture.n_qubits
        seen_slots: set[int] = set()
        for layer in self.layers:
            busy: set[int] = set()
            for op in layer:
                for q in op.qubits:
                    if not 0 <= q < n:
                        raise InvalidLayoutError(f"op qubit {q} out of range")
                if op.kind == TWO_QUBIT_GATE:
                    if not self.architecture.has_edge(*op.qubits):
                        raise InvalidLayoutError(f"two-qubit op on non-edge {op.qubits}")
                    if busy & set(op.qubits):
                        raise InvalidLayoutError(
                            f"overlapping two-qubit ops within a layer at {op.qubits}"
                        )
                    busy.update(op.qubits)
                for s in op.param_slots:
                    if not 0 <= s < self.n_params:
                        raise InvalidLayoutError(f"param slot {s} out of range")
                    if s in seen_slots:
                        raise InvalidLayoutError(f"param slot {s} parameterizes two ops")
                    seen_slots.add(s)
        if len(seen_slots) != self.n_params:
            raise InvalidLayoutError(
                f"{self.n_params} params declared but {len(seen_slots)} slots used"
            )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_qubits(self) -> int:
        return self.architecture.n_qubits

    def ops(self):
        """Flattened (layer_index, op_index, op) in application order."""
        for t, layer in enumerate(self.layers):
            for i, op in enumerate(layer):
                yield t, i, op

    def has_ensemble_ops(self) -> bool:
        return any(op.gate == "haar" for _, _, op in self.ops())


def line_architecture(n: int, system_qubits=None) -> Architecture:
    edges = frozenset((i, i + 1) for i in range(n - 1))
    return Architecture(n, edges, tuple(range(n)) if system_qubits is None else system_qubits)


def ring_architecture(n: int, system_qubits=None) -> Architecture:
    edges = {(i, (i + 1) % n) for i in range(n)}
    return Architecture(n, frozenset(edges), tuple(range(n)) if system_qubits is None else system_qubits)


def assemble_dpqc(arch: Architecture, coloring: EdgeColoring, ff_schedule, depth: int,
                  gate: str = "haar") -> Circuit:
    """Build a brickwork-style dynamic circuit.

    Layer t hosts two-qubit `gate` ops on the edges of color (t mod n_colors)+1,
    followed by the feedforwards scheduled at (t, qubit). Parameter slots are
    assigned sequentially, one per parameterized gate or feedforward.
    """
    coloring.validate_on(arch)
    for (t, q) in ff_schedule:
        if not 0 <= q < arch.n_qubits:
            raise InvalidLayoutError(f"scheduled feedforward qubit {q} out of range")
        if not 0 <= t < depth:
            raise InvalidLayoutError(f"scheduled feedforward layer {t} out of range")
    colors = coloring.colors()
    next_slot = 0
    layers = []
    for t in range(depth):
        layer = []
        if colors:
            color = colors[t % len(colors)]
            for edge in coloring.edges_of(color):
                slots = ()
                if gate in GATE_ANGLES:
                    slots = tuple(range(next_slot, next_slot + GATE_ANGLES[gate]))
                    next_slot += GATE_ANGLES[gate]
                layer.append(OpSpec(TWO_QUBIT_GATE, edge, gate=gate, param_slots=slots))
        for (tt, q) in sorted(ff_schedule):
            if tt != t:
                continue
            ff = ff_schedule[(tt, q)]
            if ff.theta is None:
                layer.append(OpSpec(FEEDFORWARD, (q,), param_slots=(next_slot,),
                                    constants=(ff.varphi, ff.phi)))
                next_slot += 1
            else:
                layer.append(OpSpec(FEEDFORWARD, (q,),
                                    constants=(ff.varphi, ff.phi, ff.theta)))
        layers.append(tuple(layer))
    return Circuit(arch, tuple(layers), next_slot)


def backward_lightcone(c: Circuit, support, k: int):
    """Depth-k backward light cone of a qubit subset.

    Returns the set of (layer_index, op_index) pairs for ops in the last k+1
    layers that can influence the support, via the recursive construction
    G_{j-1} = ops in layer j-1 whose support meets the cone so far.
    """
    if k > c.depth:
        raise ValueError(f"k={k} exceeds depth {c.depth}")
    cone: set[tuple[int, int]] = set()
    active = set(support)
    if not active:
        return cone
    for t in range(c.depth - 1, max(c.depth - 2 - k, -1), -1):
        # ops within a layer apply in list order, so scan them in reverse
        for i in range(len(c.layers[t]) - 1, -1, -1):
            op = c.layers[t][i]
            if active & set(op.qubits):
                cone.add((t, i))
                active.update(op.qubits)
    return cone


def feedforward_distance(c: Circuit, support=None, count_init_as_source: bool = True):
    """Per-qubit feedforward distances and the worst case over a support.

    The distance of qubit j is the minimum number of two-qubit-gate crossings
    on any space-time path from a feedforward/reset op (or, when
    count_init_as_source, the initial state) to j at the end of the circuit.
    Staying on a qubit acted on by a two-qubit gate also counts as a crossing.
    Unreachable qubits get math.inf.
    """
    n = c.n_qubits
    dist = [0.0 if count_init_as_source else math.inf] * n
    for _, _, op in c.ops():
        if op.kind == TWO_QUBIT_GATE:
            a, b = op.qubits
            dist[a] = dist[b] = min(dist[a], dist[b]) + 1
        elif op.is_feedforward_source:
            dist[op.qubits[0]] = 0.0
    per_qubit = {q: dist[q] for q in range(n)}
    qubits = list(range(n)) if support is None else sorted(set(support))
    if not qubits:
        raise ValueError("support must be nonempty")
    worst = max(per_qubit[q] for q in qubits)
    return per_qubit, worst


def _deterministic_gadget(sys_q: int, anc: int, varphi: float, phi: float):
    return [
        (OpSpec(TWO_QUBIT_GATE, (sys_q, anc), gate="cnot"),),
        (OpSpec(TWO_QUBIT_GATE, (anc, sys_q), gate="cu1", constants=(varphi, phi)),),
    ]


def _probabilistic_gadget(sys_q: int, a1: int, a2: int, op: OpSpec, varphi: float,
                          phi: float, theta: float | None):
    if op.param_slots:
        rx = OpSpec(SINGLE_QUBIT_GATE, (a1,), gate="rx", param_slots=op.param_slots)
    else:
        rx = OpSpec(SINGLE_QUBIT_GATE, (a1,), gate="rx", constants=(theta,))
    # Toffoli(a1, sys -> a2) as CV/CNOT pieces, then the conditioned gate.
    return [
        (rx,),
        (OpSpec(TWO_QUBIT_GATE, (a1, a2), gate="cv"),),
        (OpSpec(TWO_QUBIT_GATE, (a1, sys_q), gate="cnot"),),
        (OpSpec(TWO_QUBIT_GATE, (sys_q, a2), gate="cvdg"),),
        (OpSpec(TWO_QUBIT_GATE, (a1, sys_q), gate="cnot"),),
        (OpSpec(TWO_QUBIT_GATE, (sys_q, a2), gate="cv"),),
        (OpSpec(TWO_QUBIT_GATE, (a2, sys_q), gate="cu1", constants=(varphi, phi)),),
    ]


def purify(c: Circuit) -> Circuit:
    """Replace feedforward/reset channels by unitary gadgets on fresh ancillas.

    Deterministic feedforwards get the CNOT + controlled-U1 gadget on one
    ancilla; probabilistic ones additionally carry their RX(theta) probability
    control on a second ancilla. New ancillas are appended to the register and
    listed in trace_out; tracing them out recovers the original channel.
    """
    n = c.n_qubits
    new_layers = []
    new_edges = set(c.architecture.edges)
    next_anc = n
    for layer in c.layers:
        current: list[OpSpec] = []
        for op in layer:
            if not op.is_feedforward_source:
                current.append(op)
                continue
            if current:
                new_layers.append(tuple(current))
                current = []
            q = op.qubits[0]
            varphi, phi, theta = op.feedforward_angles()
            deterministic = not op.param_slots and theta is not None and \
                math.isclose(math.sin(theta / 2) ** 2, 1.0, abs_tol=1e-12)
            if deterministic:
                anc = next_anc
                next_anc += 1
                new_edges.add(tuple(sorted((q, anc))))
                new_layers.extend(_deterministic_gadget(q, anc, varphi, phi))
            else:
                a1, a2 = next_anc, next_anc + 1
                next_anc += 2
                new_edges.update({tuple(sorted(e)) for e in ((a1, a2), (a1, q), (q, a2))})
                new_layers.extend(_probabilistic_gadget(q, a1, a2, op, varphi, phi, theta))
        if current:
            new_layers.append(tuple(current))
    arch = Architecture(next_anc, frozenset(new_edges), c.architecture.system_qubits)
    added = tuple(range(n, next_anc))
    return Circuit(arch, tuple(new_layers), c.n_params, trace_out=c.trace_out + added)


def circuit_to_dict(c: Circuit) -> dict:
    return {
        "n_qubits": c.n_qubits,
        "system_qubits": list(c.architecture.system_qubits),
        "edges": sorted(list(e) for e in c.architecture.edges),
        "n_params": c.n_params,
        "trace_out": list(c.trace_out),
        "layers": [
            [
                {
                    "kind": op.kind,
                    "qubits": list(op.qubits),
                    **({"gate": op.gate} if op.gate is not None else {}),
                    "param_slots": list(op.param_slots),
                    "constants": list(op.constants),
                }
                for op in layer
            ]
            for layer in c.layers
        ],
    }


def circuit_from_dict(d: dict) -> Circuit:
    arch = Architecture(d["n_qubits"], frozenset(tuple(e) for e in d["edges"]),
                        tuple(d["system_qubits"]))
    layers = tuple(
        tuple(
            OpSpec(o["kind"], tuple(o["qubits"]), gate=o.get("gate"),
                   param_slots=tuple(o["param_slots"]), constants=tuple(o["constants"]))
            for o in layer
        )
        for layer in d["layers"]
    )
    return Circuit(arch, layers, d["n_params"], trace_out=tuple(d.get("trace_out", ())))


def circuit_to_json(c: Circuit) -> str:
    return json.dumps(circuit_to_dict(c), indent=1)


def circuit_from_json(text: str) -> Circuit:
    return circuit_from_dict(json.loads(text))
