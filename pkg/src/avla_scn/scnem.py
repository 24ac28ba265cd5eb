"""Supply chain network equilibrium model.

A network is a DAG of spots (suppliers, manufacturers, wholesalers,
retailers, markets) joined by transport links.  A decision vector holds the
link flows, a profit rate for every non-market spot and an extraction for
every supplier, in that order.  Propagating a decision through the tiers
gives quantities, costs and prices at every spot.  The objective sums the
per-link equilibrium gaps ``f * PA + (f_max - f) * PB``.  Fitness adds a
linear penalty on negative holdings and supplier oversell.
"""
from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import Bounds, Problem, StructuralError

ROLES = ("supplier", "manufacturer", "wholesaler", "retailer", "market")
FORMAT_VERSION = 1
BUNDLED = ("scn1", "scn2", "scn3", "scn4", "scn5")


class InstanceError(ValueError):
    """The network document is malformed or violates a model invariant."""


# ---------------------------------------------------------------- data model

@dataclass(frozen=True)
class Coeff:
    """Quadratic cost ``a * q + b * q**2``."""

    a: float = 0.0
    b: float = 0.0

    def __call__(self, q: float) -> float:
        return self.a * q + self.b * q * q


@dataclass(frozen=True)
class Recipe:
    ratios: Tuple[Tuple[str, float], ...]
    r_t: float
    material_hc: Tuple[Tuple[str, Coeff], ...]

    @property
    def materials(self) -> Tuple[str, ...]:
        return tuple(k for k, _ in self.ratios)


@dataclass(frozen=True)
class Market:
    """Inverse demand ``max(0, p_max - a*Q - b*Q**q_exp)``."""

    p_max: float
    a: float
    b: float
    q_exp: float = 2.0


@dataclass(frozen=True)
class Spot:
    id: str
    role: str
    product: Optional[str] = None
    fc: float = 0.0
    vc: Coeff = Coeff()
    hc: Coeff = Coeff()
    tc: Coeff = Coeff()
    recipe: Optional[Recipe] = None
    market: Optional[Market] = None
    q_e_max: Optional[float] = None
    lambda_max: float = 1.0


@dataclass(frozen=True)
class Link:
    id: int
    src: str
    dst: str
    product: str
    a: float
    b: float
    c: float
    f_max: float

    def cost(self, f: float) -> float:
        return transport_cost(self, f)


@dataclass(frozen=True)
class SupplyChainNetwork:
    name: str
    spots: Tuple[Spot, ...]
    links: Tuple[Link, ...]
    order: Tuple[str, ...] = ()

    def __post_init__(self):
        _validate(self)
        object.__setattr__(self, "order", _topological_order(self))

    @property
    def spot_map(self) -> Dict[str, Spot]:
        return {s.id: s for s in self.spots}

    @property
    def priced_spots(self) -> Tuple[Spot, ...]:
        """Non-market spots, in file order; one profit rate each."""
        return tuple(s for s in self.spots if s.role != "market")

    @property
    def suppliers(self) -> Tuple[Spot, ...]:
        return tuple(s for s in self.spots if s.role == "supplier")

    @property
    def dim(self) -> int:
        return len(self.links) + len(self.priced_spots) + len(self.suppliers)

    def bounds(self) -> Bounds:
        lo = np.zeros(self.dim)
        hi = np.concatenate([
            [lk.f_max for lk in self.links],
            [s.lambda_max for s in self.priced_spots],
            [s.q_e_max for s in self.suppliers],
        ])
        return Bounds(lo, hi)

    def inbound(self, sid: str) -> Tuple[Link, ...]:
        return tuple(lk for lk in self.links if lk.dst == sid)

    def outbound(self, sid: str) -> Tuple[Link, ...]:
        return tuple(lk for lk in self.links if lk.src == sid)


def _validate(net: SupplyChainNetwork) -> None:
    ids = [s.id for s in net.spots]
    if len(set(ids)) != len(ids):
        raise InstanceError(f"{net.name}: duplicate spot ids")
    spots = {s.id: s for s in net.spots}
    link_ids = [lk.id for lk in net.links]
    if len(set(link_ids)) != len(link_ids):
        raise InstanceError(f"{net.name}: duplicate link ids")
    if list(link_ids) != sorted(link_ids):
        raise InstanceError(f"{net.name}: links must be listed in id order")
    for s in net.spots:
        if s.role not in ROLES:
            raise InstanceError(f"spot {s.id}: unknown role {s.role!r}")
        if s.role == "market":
            if s.market is None:
                raise InstanceError(f"market {s.id}: missing pricing parameters")
            continue
        if s.product is None:
            raise InstanceError(f"spot {s.id}: missing product")
        if not s.lambda_max >= 0:
            raise InstanceError(f"spot {s.id}: lambda_max must be >= 0")
        if s.role == "supplier" and not (s.q_e_max is not None and s.q_e_max >= 0):
            raise InstanceError(f"supplier {s.id}: q_e_max must be given and >= 0")
        if s.role == "manufacturer":
            if s.recipe is None:
                raise InstanceError(f"manufacturer {s.id}: missing recipe")
            total = sum(r for _, r in s.recipe.ratios)
            if abs(total - 1.0) > 1e-9:
                raise InstanceError(f"manufacturer {s.id}: recipe ratios sum to {total:g}, not 1")
            if any(r <= 0 for _, r in s.recipe.ratios):
                raise InstanceError(f"manufacturer {s.id}: recipe ratios must be positive")
            if not s.recipe.r_t > -1:
                raise InstanceError(f"manufacturer {s.id}: r_t must exceed -1")
    for lk in net.links:
        if lk.src not in spots or lk.dst not in spots:
            raise InstanceError(f"link {lk.id}: unknown endpoint {lk.src}->{lk.dst}")
        if lk.src == lk.dst:
            raise InstanceError(f"link {lk.id}: self loop at {lk.src}")
        if spots[lk.src].role == "market":
            raise InstanceError(f"link {lk.id}: markets have no outbound links")
        if not lk.f_max > 0:
            raise InstanceError(f"link {lk.id}: f_max must be positive")
        if spots[lk.src].product != lk.product:
            raise InstanceError(f"link {lk.id}: carries {lk.product} but {lk.src} sells {spots[lk.src].product}")
    for s in net.spots:
        ins = [lk for lk in net.links if lk.dst == s.id]
        outs = [lk for lk in net.links if lk.src == s.id]
        if s.role == "market" and not ins:
            raise InstanceError(f"market {s.id}: needs at least one inbound link")
        if s.role == "supplier" and ins:
            raise InstanceError(f"supplier {s.id}: suppliers have no inbound links")
        if s.role in ("manufacturer", "wholesaler", "retailer"):
            if not ins or not outs:
                raise InstanceError(f"spot {s.id}: needs at least one inbound and one outbound link")
            needed = s.recipe.materials if s.role == "manufacturer" else (s.product,)
            have = {lk.product for lk in ins}
            missing = [k for k in needed if k not in have]
            if missing:
                raise InstanceError(f"spot {s.id}: no inbound link for {', '.join(missing)}")
            extra = have - set(needed)
            if extra:
                raise InstanceError(f"spot {s.id}: inbound product(s) {sorted(extra)} are not used")


def _topological_order(net: SupplyChainNetwork) -> Tuple[str, ...]:
    ts = graphlib.TopologicalSorter({s.id: set() for s in net.spots})
    for lk in net.links:
        ts.add(lk.dst, lk.src)
    try:
        order = list(ts.static_order())
    except graphlib.CycleError as exc:
        raise InstanceError(f"{net.name}: network has a cycle through {exc.args[1]}") from None
    rank = {sid: i for i, sid in enumerate(order)}
    # stable tie-break by role tier, then topological position
    tier = {s.id: ROLES.index(s.role) for s in net.spots}
    return tuple(sorted(order, key=lambda sid: (rank[sid], tier[sid])))


# ---------------------------------------------------------------- loading

def _coeff(d, where) -> Coeff:
    if d is None:
        return Coeff()
    try:
        return Coeff(float(d.get("a", 0.0)), float(d.get("b", 0.0)))
    except (AttributeError, TypeError, ValueError):
        raise InstanceError(f"{where}: expected {{a, b}} table") from None


def _req(d: Mapping, key: str, where: str):
    if key not in d:
        raise InstanceError(f"{where}: missing field {key!r}")
    return d[key]


def load_network(document: Union[Mapping, str, Path]) -> SupplyChainNetwork:
    """Build a validated network from a parsed document or a TOML path."""
    doc = _read(document)
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InstanceError(f"unsupported format_version {version}")
    name = str(doc.get("name", "network"))
    spots = []
    for i, sd in enumerate(_req(doc, "spots", name)):
        where = f"spots[{i}]"
        sid = str(_req(sd, "id", where))
        role = str(_req(sd, "role", sid))
        if role == "market":
            m = _req(sd, "market", sid)
            try:
                market = Market(float(_req(m, "p_max", sid)), float(m.get("a", 0.0)),
                                float(m.get("b", 0.0)), float(m.get("q_exp", 2.0)))
            except (TypeError, ValueError):
                raise InstanceError(f"{sid}: bad market parameters") from None
            spots.append(Spot(sid, role, market=market))
            continue
        caps = sd.get("caps", {})
        recipe = None
        if "recipe" in sd:
            rd = sd["recipe"]
            ratios = tuple((str(k), float(v)) for k, v in _req(rd, "ratios", sid).items())
            mhc = rd.get("material_hc", {})
            recipe = Recipe(ratios, float(rd.get("r_t", 0.0)),
                            tuple((k, _coeff(mhc.get(k), f"{sid}.material_hc.{k}")) for k, _ in ratios))
        q_e_max = caps.get("q_e_max")
        spots.append(Spot(
            sid, role, str(_req(sd, "product", sid)), float(sd.get("fc", 0.0)),
            _coeff(sd.get("vc"), f"{sid}.vc"), _coeff(sd.get("hc"), f"{sid}.hc"),
            _coeff(sd.get("tc"), f"{sid}.tc"), recipe, None,
            None if q_e_max is None else float(q_e_max), float(caps.get("lambda_max", 1.0)),
        ))
    links = []
    for i, ld in enumerate(_req(doc, "links", name)):
        where = f"links[{i}]"
        try:
            links.append(Link(int(_req(ld, "id", where)), str(_req(ld, "from", where)),
                              str(_req(ld, "to", where)), str(_req(ld, "product", where)),
                              float(ld.get("a", 0.0)), float(ld.get("b", 0.0)),
                              float(ld.get("c", 0.0)), float(_req(ld, "f_max", where))))
        except (TypeError, ValueError):
            raise InstanceError(f"{where}: bad numeric field") from None
    return SupplyChainNetwork(name, tuple(spots), tuple(links))


def _read(document) -> Mapping:
    if isinstance(document, Mapping):
        return document
    path = Path(document)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InstanceError(f"{path}: {exc}") from None


def bundled_path(kind: str, name: str) -> Path:
    """Path of a bundled instance (``kind='instances'``) or solution file."""
    ref = resources.files("avla_scn").joinpath(f"data/{kind}/{name.lower()}.toml")
    return Path(str(ref))


def load_bundled(name: str) -> SupplyChainNetwork:
    return load_network(bundled_path("instances", name))


# ---------------------------------------------------------------- decisions

@dataclass(frozen=True)
class ScnemDecision:
    flows: np.ndarray
    rates: np.ndarray
    extractions: np.ndarray

    def flow_of(self, net: SupplyChainNetwork) -> Dict[int, float]:
        return {lk.id: float(f) for lk, f in zip(net.links, self.flows)}

    def rate_of(self, net: SupplyChainNetwork) -> Dict[str, float]:
        return {s.id: float(r) for s, r in zip(net.priced_spots, self.rates)}

    def extraction_of(self, net: SupplyChainNetwork) -> Dict[str, float]:
        return {s.id: float(q) for s, q in zip(net.suppliers, self.extractions)}


def decode(x, net: SupplyChainNetwork) -> ScnemDecision:
    """Split ``x`` into ``[flows | profit rates | supplier extractions]``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != net.dim:
        raise StructuralError(f"{net.name}: decision length {x.size}, expected {net.dim} "
                              f"({len(net.links)} flows + {len(net.priced_spots)} rates + "
                              f"{len(net.suppliers)} extractions)")
    nl, ns = len(net.links), len(net.priced_spots)
    return ScnemDecision(x[:nl].copy(), x[nl:nl + ns].copy(), x[nl + ns:].copy())


def encode(decision: ScnemDecision) -> np.ndarray:
    return np.concatenate([decision.flows, decision.rates, decision.extractions])


def solution_vector(net: SupplyChainNetwork, flows: Mapping, rates: Mapping,
                    extractions: Mapping) -> np.ndarray:
    """Assemble a decision vector from id-keyed tables; missing keys are errors."""
    try:
        f = [float(flows[str(lk.id)] if str(lk.id) in flows else flows[lk.id]) for lk in net.links]
        r = [float(rates[s.id]) for s in net.priced_spots]
        q = [float(extractions[s.id]) for s in net.suppliers]
    except KeyError as exc:
        raise StructuralError(f"{net.name}: solution is missing entry {exc.args[0]!r}") from None
    return np.array(f + r + q)


# ---------------------------------------------------------------- model pieces

def transport_cost(link: Link, flow: float) -> float:
    """``a f + b f^2 + c``."""
    return link.a * flow + link.b * flow * flow + link.c


def manufacture(recipe: Recipe, arrived: Mapping[str, float]) -> Tuple[float, Dict[str, float]]:
    """Fixed-ratio production: output and leftover raw materials."""
    scale = min(arrived.get(k, 0.0) / r for k, r in recipe.ratios)
    produced = (1.0 + recipe.r_t) * scale
    # the bottleneck material is used up exactly; clamp its rounding noise
    residual = {k: max(0.0, arrived.get(k, 0.0) - scale * r) for k, r in recipe.ratios}
    return produced, residual


def market_price(params: Market, arrived: float) -> float:
    q = max(arrived, 0.0)
    return max(0.0, params.p_max - params.a * q - params.b * q ** params.q_exp)


@dataclass(frozen=True)
class PricingOptions:
    """How to price a spot whose available quantity is (nearly) zero.

    ``mode='epsilon'`` evaluates the average cost at quantity ``eps``;
    ``mode='fixed'`` returns ``fixed_price``.
    """

    mode: str = "epsilon"
    eps: float = 1e-6
    fixed_price: float = 0.0

    def __post_init__(self):
        if self.mode not in ("epsilon", "fixed"):
            raise ValueError(f"unknown degenerate pricing mode {self.mode!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


DEFAULT_PRICING = PricingOptions()
DEFAULT_PENALTY = 1e6


@dataclass
class SpotState:
    id: str
    role: str
    arrived: Dict[str, float] = field(default_factory=dict)
    produced: float = 0.0
    available: float = 0.0
    sold: float = 0.0
    held: float = 0.0
    residual: Dict[str, float] = field(default_factory=dict)
    cost: float = 0.0
    rate: float = 0.0
    p_out: float = float("nan")
    p_in: Dict[str, float] = field(default_factory=dict)
    offers: Dict[int, float] = field(default_factory=dict)
    degenerate: bool = False


def total_cost(spot: Spot, state: SpotState) -> float:
    """Fixed + purchase + variable + holding + transaction cost of a spot."""
    c = spot.fc
    if spot.role == "supplier":
        c += spot.vc(state.available)
    elif spot.role == "manufacturer":
        c += sum(state.p_in[k] * q for k, q in state.arrived.items())
        c += spot.vc(state.produced)
        c += sum(h(state.residual.get(k, 0.0)) for k, h in spot.recipe.material_hc)
    else:
        c += sum(state.p_in[k] * q for k, q in state.arrived.items())
        c += spot.vc(sum(state.arrived.values()))
    c += spot.hc(state.held) + spot.tc(state.sold)
    return c


def _unit_cost_at(spot: Spot, state: SpotState, eps: float) -> float:
    """Average cost of handling ``eps`` units, everything sold."""
    c = spot.fc + spot.tc(eps)
    if spot.role == "supplier":
        c += spot.vc(eps)
    elif spot.role == "manufacturer":
        base = eps / (1.0 + spot.recipe.r_t)
        c += sum(state.p_in[k] * base * r for k, r in spot.recipe.ratios)
        c += spot.vc(eps)
    else:
        c += state.p_in[spot.product] * eps + spot.vc(eps)
    return c / eps


def selling_price(cost: float, sold: float, held: float, rate: float,
                  unit_cost_eps: Optional[float] = None,
                  pricing: PricingOptions = DEFAULT_PRICING) -> float:
    """``C / (Q_O + Q_H) * (1 + lambda)``, with the degenerate-quantity fallback."""
    q = sold + held
    if q > pricing.eps:
        return cost / q * (1.0 + rate)
    if pricing.mode == "fixed":
        return pricing.fixed_price
    if unit_cost_eps is None:
        unit_cost_eps = cost / pricing.eps
    return unit_cost_eps * (1.0 + rate)


def buying_prices(net: SupplyChainNetwork, sid: str, flows: Mapping[int, float],
                  p_out: Mapping[str, float]) -> Tuple[Dict[int, float], Dict[str, float]]:
    """Offered price per inbound link and the cheapest offer per product."""
    offers, best = {}, {}
    for lk in net.inbound(sid):
        offer = p_out[lk.src] + transport_cost(lk, flows[lk.id])
        offers[lk.id] = offer
        best[lk.product] = min(best.get(lk.product, math.inf), offer)
    return offers, best


def propagate(net: SupplyChainNetwork, decision: ScnemDecision,
              pricing: PricingOptions = DEFAULT_PRICING) -> Dict[str, SpotState]:
    """Tier-ordered pass producing quantities, costs and prices at every spot."""
    flows = decision.flow_of(net)
    rates = decision.rate_of(net)
    ext = decision.extraction_of(net)
    spots = net.spot_map
    states: Dict[str, SpotState] = {}
    p_out: Dict[str, float] = {}
    for sid in net.order:
        s = spots[sid]
        st = SpotState(sid, s.role)
        for lk in net.inbound(sid):
            st.arrived[lk.product] = st.arrived.get(lk.product, 0.0) + flows[lk.id]
        if s.role != "supplier":
            st.offers, st.p_in = buying_prices(net, sid, flows, p_out)
        if s.role == "market":
            q = sum(st.arrived.values())
            st.available = q
            price = market_price(s.market, q)
            st.p_in = {k: price for k in st.arrived} or {"product": price}
            st.p_out = price
            states[sid] = st
            continue
        st.sold = sum(flows[lk.id] for lk in net.outbound(sid))
        if s.role == "supplier":
            st.available = ext[sid]
        elif s.role == "manufacturer":
            st.produced, st.residual = manufacture(s.recipe, st.arrived)
            st.available = st.produced
        else:
            st.available = sum(st.arrived.values())
        st.held = st.available - st.sold
        st.rate = rates[sid]
        st.cost = total_cost(s, st)
        st.degenerate = st.sold + st.held <= pricing.eps
        ueps = _unit_cost_at(s, st, pricing.eps) if st.degenerate else None
        st.p_out = selling_price(st.cost, st.sold, st.held, st.rate, ueps, pricing)
        p_out[sid] = st.p_out
        states[sid] = st
    return states


@dataclass(frozen=True)
class LinkRecord:
    id: int
    src: str
    dst: str
    flow: float
    f_max: float
    p_from: float
    cost: float
    p_to: float
    residual: float
    pa: float
    pb: float
    contribution: float


def _link_records(net, states, decision) -> List[LinkRecord]:
    out = []
    for lk, f in zip(net.links, decision.flows):
        f = float(f)
        p_from = states[lk.src].p_out
        c = transport_cost(lk, f)
        dst = states[lk.dst]
        p_to = dst.p_out if dst.role == "market" else dst.p_in[lk.product]
        r = p_to - c - p_from
        pa, pb = max(0.0, -r), max(0.0, r)
        out.append(LinkRecord(lk.id, lk.src, lk.dst, f, lk.f_max, p_from, c, p_to, r,
                              pa, pb, f * pa + (lk.f_max - f) * pb))
    return out


def objective(net: SupplyChainNetwork, states: Mapping[str, SpotState],
              decision: ScnemDecision) -> float:
    """Sum over links of ``f * PA + (f_max - f) * PB``."""
    return float(sum(r.contribution for r in _link_records(net, states, decision)))


def violation(net: SupplyChainNetwork, states: Mapping[str, SpotState]) -> float:
    """Total shortfall ``max(0, -Q_H)`` over non-market spots.

    A supplier's holding is extraction minus sales, so its oversell is this
    same term and is counted once.
    """
    return float(sum(max(0.0, -states[s.id].held) for s in net.spots if s.role != "market"))


@dataclass(frozen=True)
class ViRow:
    link: LinkRecord
    case: str
    passed: bool


@dataclass
class EvaluationReport:
    network: str
    spots: Dict[str, SpotState]
    links: List[LinkRecord]
    objective: float
    violation: float
    penalty: float
    fitness: float
    vi: List[ViRow]

    @property
    def vi_pass(self) -> bool:
        return all(r.passed for r in self.vi)


def vi_report(net: SupplyChainNetwork, states: Mapping[str, SpotState],
              decision: ScnemDecision, tol: float = 1e-2,
              flow_tol: Optional[float] = None) -> List[ViRow]:
    """Classify each link residual ``p_to - c - p_from`` against its flow.

    Negative residual needs zero flow, positive residual needs full
    capacity, and a residual within ``tol`` admits any flow.
    """
    ftol = tol if flow_tol is None else flow_tol
    rows = []
    for rec in _link_records(net, states, decision):
        if rec.residual < -tol:
            rows.append(ViRow(rec, "zero", rec.flow <= ftol))
        elif rec.residual > tol:
            rows.append(ViRow(rec, "full", rec.flow >= rec.f_max - ftol))
        else:
            rows.append(ViRow(rec, "any", True))
    return rows


def evaluate_report(net: SupplyChainNetwork, x, penalty_weight: float = DEFAULT_PENALTY,
                    pricing: PricingOptions = DEFAULT_PRICING, tol: float = 1e-2) -> EvaluationReport:
    d = decode(x, net)
    states = propagate(net, d, pricing)
    links = _link_records(net, states, d)
    obj = float(sum(r.contribution for r in links))
    viol = violation(net, states)
    pen = penalty_weight * viol
    return EvaluationReport(net.name, states, links, obj, viol, pen, obj + pen,
                            vi_report(net, states, d, tol))


def fitness(net: SupplyChainNetwork, x, penalty_weight: float = DEFAULT_PENALTY,
            pricing: PricingOptions = DEFAULT_PRICING) -> float:
    """Objective plus ``penalty_weight`` times the total constraint violation."""
    d = decode(x, net)
    states = propagate(net, d, pricing)
    return objective(net, states, d) + penalty_weight * violation(net, states)


# ---------------------------------------------------------------- fast path

def compile_fitness(net: SupplyChainNetwork, penalty_weight: float = DEFAULT_PENALTY,
                    pricing: PricingOptions = DEFAULT_PRICING):
    """A specialised scalar fitness function for ``net``.

    Generates straight-line Python for this network's topology, so a call
    costs a few microseconds instead of walking dictionaries.  It computes
    exactly what ``fitness`` computes; the test suite checks the two agree.
    """
    src = _codegen(net, penalty_weight, pricing)
    ns: dict = {"math": math, "inf": math.inf}
    exec(compile(src, f"<scnem:{net.name}>", "exec"), ns)
    fn = ns["_fitness"]
    fn.source = src
    return fn


def _codegen(net: SupplyChainNetwork, W: float, pricing: PricingOptions) -> str:
    spots = net.spot_map
    lidx = {lk.id: i for i, lk in enumerate(net.links)}
    ridx = {s.id: len(net.links) + i for i, s in enumerate(net.priced_spots)}
    qidx = {s.id: len(net.links) + len(net.priced_spots) + i for i, s in enumerate(net.suppliers)}
    eps = pricing.eps
    L = ["def _fitness(x):", "    x = x.tolist() if hasattr(x, 'tolist') else list(x)", "    viol = 0.0"]
    f = lambda lid: f"f{lidx[lid]}"  # noqa: E731
    for lk in net.links:
        L.append(f"    {f(lk.id)} = x[{lidx[lk.id]}]")
        L.append(f"    c{lidx[lk.id]} = {lk.a!r} * {f(lk.id)} + {lk.b!r} * {f(lk.id)} * {f(lk.id)} + {lk.c!r}")

    def poly(co: Coeff, q: str) -> str:
        return f"({co.a!r} * {q} + {co.b!r} * {q} * {q})"

    for sid in net.order:
        s = spots[sid]
        v = f"s_{_ident(sid)}"
        ins = net.inbound(sid)
        outs = net.outbound(sid)
        if s.role != "supplier":
            prods = sorted({lk.product for lk in ins})
            for k in prods:
                ks = _ident(k)
                ls = [lk for lk in ins if lk.product == k]
                L.append(f"    {v}_q_{ks} = " + " + ".join(f(lk.id) for lk in ls))
                offers = [f"p_{_ident(lk.src)} + c{lidx[lk.id]}" for lk in ls]
                L.append(f"    {v}_pe_{ks} = " + (offers[0] if len(offers) == 1 else f"min({', '.join(offers)})"))
        if s.role == "market":
            m = s.market
            q = " + ".join(f"{v}_q_{_ident(k)}" for k in prods)
            L.append(f"    {v}_Q = {q}")
            L.append(f"    {v}_Qp = {v}_Q if {v}_Q > 0.0 else 0.0")
            L.append(f"    p_{_ident(sid)} = {m.p_max!r} - {m.a!r} * {v}_Qp - {m.b!r} * {v}_Qp ** {m.q_exp!r}")
            L.append(f"    if p_{_ident(sid)} < 0.0: p_{_ident(sid)} = 0.0")
            continue
        sold = " + ".join(f(lk.id) for lk in outs) if outs else "0.0"
        L.append(f"    {v}_sold = {sold}")
        lam = f"x[{ridx[sid]}]"
        if s.role == "supplier":
            L.append(f"    {v}_av = x[{qidx[sid]}]")
            L.append(f"    {v}_C = {s.fc!r} + {poly(s.vc, f'{v}_av')}")
            ueps = f"({s.fc!r} + {poly(s.vc, repr(eps))} + {poly(s.tc, repr(eps))}) / {eps!r}"
        elif s.role == "manufacturer":
            rt = s.recipe.r_t
            mats = s.recipe.ratios
            scale = "min(" + ", ".join(f"{v}_q_{_ident(k)} / {r!r}" for k, r in mats) + ")"
            L.append(f"    {v}_sc = {scale}")
            L.append(f"    {v}_av = {1.0 + rt!r} * {v}_sc")
            L.append(f"    {v}_C = {s.fc!r} + " + " + ".join(f"{v}_pe_{_ident(k)} * {v}_q_{_ident(k)}" for k, _ in mats)
                     + f" + {poly(s.vc, f'{v}_av')}")
            for k, r in mats:
                ks = _ident(k)
                L.append(f"    {v}_res_{ks} = {v}_q_{ks} - {v}_sc * {r!r}")
                L.append(f"    if {v}_res_{ks} < 0.0: {v}_res_{ks} = 0.0")
            hcs = dict(s.recipe.material_hc)
            L.append(f"    {v}_C += " + " + ".join(poly(hcs[k], f"{v}_res_{_ident(k)}") for k, _ in mats))
            unit = " + ".join(f"{v}_pe_{_ident(k)} * {r / (1.0 + rt)!r}" for k, r in mats)
            ueps = f"({s.fc!r} + ({unit}) * {eps!r} + {poly(s.vc, repr(eps))} + {poly(s.tc, repr(eps))}) / {eps!r}"
        else:
            k = _ident(s.product)
            L.append(f"    {v}_av = {v}_q_{k}")
            L.append(f"    {v}_C = {s.fc!r} + {v}_pe_{k} * {v}_q_{k} + {poly(s.vc, f'{v}_av')}")
            ueps = f"({s.fc!r} + {v}_pe_{k} * {eps!r} + {poly(s.vc, repr(eps))} + {poly(s.tc, repr(eps))}) / {eps!r}"
        L.append(f"    {v}_held = {v}_av - {v}_sold")
        L.append(f"    if {v}_held < 0.0: viol -= {v}_held")
        L.append(f"    {v}_C += {poly(s.hc, f'{v}_held')} + {poly(s.tc, f'{v}_sold')}")
        L.append(f"    {v}_tot = {v}_sold + {v}_held")
        L.append(f"    if {v}_tot > {eps!r}:")
        L.append(f"        p_{_ident(sid)} = {v}_C / {v}_tot * (1.0 + {lam})")
        L.append("    else:")
        if pricing.mode == "fixed":
            L.append(f"        p_{_ident(sid)} = {pricing.fixed_price!r}")
        else:
            L.append(f"        p_{_ident(sid)} = {ueps} * (1.0 + {lam})")
    L.append("    obj = 0.0")
    for lk in net.links:
        i = lidx[lk.id]
        dst = spots[lk.dst]
        p_to = f"p_{_ident(lk.dst)}" if dst.role == "market" else f"s_{_ident(lk.dst)}_pe_{_ident(lk.product)}"
        L.append(f"    r = {p_to} - c{i} - p_{_ident(lk.src)}")
        L.append(f"    if r < 0.0: obj -= f{i} * r")
        L.append(f"    elif r > 0.0: obj += ({lk.f_max!r} - f{i}) * r")
    L.append(f"    return obj + {W!r} * viol")
    return "\n".join(L) + "\n"


def _ident(s: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in s)


def make_problem(net: SupplyChainNetwork, penalty_weight: float = DEFAULT_PENALTY,
                 pricing: PricingOptions = DEFAULT_PRICING) -> Problem:
    return Problem(net.name, net.bounds(), compile_fitness(net, penalty_weight, pricing))


# ---------------------------------------------------------------- solutions

@dataclass(frozen=True)
class Solution:
    instance: str
    x: np.ndarray
    reported_objective: Optional[float]
    printed: Optional[np.ndarray] = None


def load_solution(document, net: SupplyChainNetwork) -> Solution:
    """Read an id-keyed solution file (flows, profit_rates, extractions)."""
    doc = _read(document)
    for key in ("flows", "profit_rates", "extractions"):
        if key not in doc:
            raise StructuralError(f"solution is missing table [{key}]")
    x = solution_vector(net, doc["flows"], doc["profit_rates"], doc["extractions"])
    printed = None
    if "printed" in doc:
        p = doc["printed"]
        printed = solution_vector(net, p["flows"], p["profit_rates"], p["extractions"])
    return Solution(str(doc.get("instance", net.name)), x, doc.get("reported_objective"), printed)
