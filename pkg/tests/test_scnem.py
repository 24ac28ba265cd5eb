import copy
import time

import numpy as np
import pytest

from avla_scn import scnem
from avla_scn.core import StructuralError
from avla_scn.scnem import (Coeff, InstanceError, Link, Market, Recipe, decode, load_bundled,
                            load_network, manufacture, market_price, selling_price,
                            transport_cost)

DIMS = {"scn1": 15, "scn2": 17, "scn3": 39, "scn4": 38, "scn5": 41}


def scn1_report(**kw):
    net = load_bundled("scn1")
    sol = scnem.load_solution(scnem.bundled_path("solutions", "scn1"), net)
    return net, sol, scnem.evaluate_report(net, sol.x, **kw)


def toy_doc():
    """Two suppliers feeding one manufacturer that sells to one market."""
    sup = dict(role="supplier", fc=1.0, vc={"a": 0.1}, caps={"q_e_max": 10.0})
    return {
        "format_version": 1, "name": "toy",
        "spots": [
            dict(sup, id="s1", product="m1"),
            dict(sup, id="s2", product="m2"),
            dict(id="p1", role="manufacturer", product="prod", fc=1.0, vc={"a": 0.1},
                 recipe={"ratios": {"m1": 0.5, "m2": 0.5}, "r_t": 0.0}),
            dict(id="k1", role="market", market={"p_max": 20.0, "a": 1.0}),
        ],
        "links": [
            dict(id=1, **{"from": "s1"}, to="p1", product="m1", a=0.1, c=0.5, f_max=10.0),
            dict(id=2, **{"from": "s2"}, to="p1", product="m2", a=0.1, c=0.5, f_max=10.0),
            dict(id=3, **{"from": "p1"}, to="k1", product="prod", a=0.1, c=0.5, f_max=10.0),
        ],
    }


# ---------------------------------------------------------------- loading

@pytest.mark.parametrize("name,dim", sorted(DIMS.items()))
def test_bundled_dimensions(name, dim):
    net = load_bundled(name)
    assert net.dim == dim
    d = decode(np.zeros(dim), net)
    assert d.flows.size == len(net.links) and not d.flows.any()
    assert d.rates.size == len(net.priced_spots) and d.extractions.size == len(net.suppliers)


def test_bundled_sizes():
    net1 = load_bundled("scn1")
    assert (len(net1.spots), len(net1.links)) == (7, 8)
    net3 = load_bundled("scn3")
    assert (len(net3.spots), len(net3.links)) == (13, 26)
    net5 = load_bundled("scn5")
    assert [lk.id for lk in net5.links] == list(range(1, 9)) + list(range(13, 31))


def test_decode_dimension_error():
    net = load_bundled("scn1")
    with pytest.raises(StructuralError, match="expected 15"):
        decode(np.zeros(14), net)


def test_recipe_must_sum_to_one():
    doc = toy_doc()
    doc["spots"][2]["recipe"]["ratios"] = {"m1": 0.4, "m2": 0.5}
    with pytest.raises(InstanceError):
        load_network(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d["links"].append(dict(id=4, **{"from": "k1"}, to="p1", product="prod", f_max=1.0)),
    lambda d: d["links"][0].update(to="s1"),
    lambda d: d["links"][2].update(f_max=0.0),
    lambda d: d["spots"][2]["recipe"].update(r_t=-1.0),
    lambda d: d["links"][0].update(to="nowhere"),
    lambda d: d["spots"].append(dict(id="s1", role="supplier", product="m1")),
])
def test_validation_errors(mutate):
    doc = toy_doc()
    mutate(doc)
    with pytest.raises(InstanceError):
        load_network(doc)


def test_toy_network_loads():
    net = load_network(toy_doc())
    assert net.dim == 3 + 3 + 2
    assert net.order.index("s1") < net.order.index("p1") < net.order.index("k1")


# ---------------------------------------------------------------- model pieces

def test_transport_cost_examples():
    net = load_bundled("scn1")
    assert transport_cost(net.links[0], 0.4875) == pytest.approx(0.5002, abs=1e-4)
    assert transport_cost(net.links[0], 0.0) == net.links[0].c
    assert transport_cost(Link(1, "a", "b", "p", 1.0, 1.0, 0.0, 5.0), 1.0) == 2.0


def test_manufacture_examples():
    r = Recipe((("m1", 0.3), ("m2", 0.7)), 1.0, ())
    q, res = manufacture(r, {"m1": 0.4875, "m2": 1.1375})
    assert q == pytest.approx(3.2499, abs=1e-3)
    assert res["m1"] == pytest.approx(0.0, abs=1e-12) and res["m2"] == pytest.approx(0.0, abs=1e-12)
    q, res = manufacture(r, {"m1": 0.0, "m2": 2.5})
    assert q == 0.0 and res == {"m1": 0.0, "m2": 2.5}
    q, res = manufacture(Recipe((("a", 0.5), ("b", 0.5)), 0.0, ()), {"a": 2.0, "b": 1.0})
    assert q == 2.0 and res == {"a": 1.0, "b": 0.0}


def test_market_price_examples():
    net = load_bundled("scn1")
    m = net.spot_map
    assert market_price(m["m1"].market, 0.0) == 82.9
    assert market_price(m["m2"].market, 3.2499) == pytest.approx(92.787, abs=1e-2)
    assert market_price(Market(92.8, 0.004, 0.000045), 3.2499) == pytest.approx(92.787, abs=1e-2)
    assert market_price(Market(10.0, 1.0, 1.0), 1e6) == 0.0


def test_selling_price_examples():
    assert selling_price(34.0107, 0.4875, 0.0, 0.3465) == pytest.approx(93.9405, abs=1e-2)
    assert selling_price(5.0, 5.0, 0.0, 0.0) == 1.0
    assert selling_price(7.0, 0.0, 0.0, 0.0, unit_cost_eps=7e6) == 7e6
    fixed = scnem.PricingOptions(mode="fixed", fixed_price=10.0)
    assert selling_price(7.0, 0.0, 0.0, 0.5, pricing=fixed) == 10.0


def test_total_cost_trivial():
    spot = scnem.Spot("s", "supplier", "m", fc=7.0)
    st = scnem.SpotState("s", "supplier")
    assert scnem.total_cost(spot, st) == 7.0


def test_scn1_spot_costs_and_prices():
    net, sol, rep = scn1_report()
    s1 = rep.spots["s1"]
    assert s1.cost == pytest.approx(34.0107, abs=1e-3)
    assert s1.p_out == pytest.approx(93.9405, abs=1e-2)
    assert rep.spots["p1"].p_out == pytest.approx(54.7340, abs=1e-2)
    assert rep.spots["r1"].p_out == pytest.approx(92.2858, abs=1e-2)


def test_buying_prices_take_min_offer():
    net = load_bundled("scn1")
    flows = {lk.id: 0.0 for lk in net.links}
    offers, best = scnem.buying_prices(net, "m2", flows, {"r1": 5.0, "r2": 7.0})
    assert offers == {6: 5.0 + net.links[5].c, 8: 7.0 + net.links[7].c}
    assert best["product"] == min(offers.values())


def test_scn1_link_table():
    net, sol, rep = scn1_report()
    rec = {r.id: r for r in rep.links}
    assert rec[1].cost == pytest.approx(0.5002, abs=1e-2)
    assert rec[1].p_to == pytest.approx(94.4408, abs=1e-2)
    assert rec[5].residual == pytest.approx(-9.8858, abs=1e-2)
    assert rec[1].residual == pytest.approx(0.0, abs=1e-2)
    rows = {r.link.id: r for r in rep.vi}
    assert rows[5].case == "zero" and rows[5].passed
    assert rows[1].passed


def test_scn1_solution_objective_and_fitness():
    net, sol, rep = scn1_report()
    assert rep.objective <= 1e-2 and rep.violation == 0.0
    assert rep.fitness == rep.objective + rep.penalty
    assert scnem.fitness(net, sol.x) <= 1e-2


def test_refined_solutions_stay_within_printed_rounding():
    for name in ("scn1", "scn3", "scn4", "scn5"):
        net = load_bundled(name)
        sol = scnem.load_solution(scnem.bundled_path("solutions", name), net)
        assert sol.printed is not None
        gap = np.abs(sol.x - sol.printed)
        # 4 decimals, or 4 significant figures for the values printed in E notation
        half = np.maximum(5e-5 + 1e-12, 5e-4 * np.abs(sol.printed) + 1e-12)
        assert np.all(gap <= half), name
        nl = len(net.links)
        assert np.all(sol.x[:nl][sol.printed[:nl] == 0] == 0), name


def test_zero_decision_propagates_fixed_costs():
    net = load_bundled("scn1")
    d = decode(np.zeros(net.dim), net)
    st = scnem.propagate(net, d)
    assert st["m1"].p_out == 82.9 and st["m2"].p_out == 92.8
    assert st["s1"].available == 0.0 and st["s1"].degenerate
    assert st["p1"].produced == 0.0


def test_overselling_retailer_is_penalised():
    net, sol, base = scn1_report()
    x = sol.x.copy()
    x[5] += 1.0  # link 6 r1 -> m2 sells one unit more than r1 received
    rep = scnem.evaluate_report(net, x)
    assert rep.spots["r1"].held == pytest.approx(base.spots["r1"].held - 1.0)
    assert rep.spots["r1"].held < -0.99
    assert rep.fitness >= 0.99e6


def test_vi_flags_flow_on_negative_residual():
    net, sol, _ = scn1_report()
    x = sol.x.copy()
    x[4] = 1.0  # link 5 has residual near -9.9
    rep = scnem.evaluate_report(net, x)
    assert not rep.vi_pass


def test_pa_pb_exclusive_on_bundled_solutions():
    for name in DIMS:
        net = load_bundled(name)
        sol = scnem.load_solution(scnem.bundled_path("solutions", name), net)
        for r in scnem.evaluate_report(net, sol.x).links:
            assert r.pa * r.pb == 0.0


def test_compiled_fitness_matches_reference():
    rng = np.random.default_rng(1)
    for name in DIMS:
        net = load_bundled(name)
        fast = scnem.compile_fitness(net)
        b = net.bounds()
        for _ in range(20):
            x = b.lower + rng.uniform(size=net.dim) * np.minimum(b.upper - b.lower, 10.0)
            ref = scnem.fitness(net, x)
            assert fast(x) == pytest.approx(ref, rel=1e-10, abs=1e-9)


def test_propagate_is_pure():
    net, sol, _ = scn1_report()
    a = scnem.evaluate_report(net, sol.x)
    b = scnem.evaluate_report(net, sol.x)
    assert a.objective == b.objective and a.fitness == b.fitness


def test_solution_missing_entry():
    net = load_bundled("scn1")
    doc = {"flows": {str(i): 0.0 for i in range(1, 8)}, "profit_rates": {}, "extractions": {}}
    with pytest.raises(StructuralError):
        scnem.load_solution(doc, net)


def test_scn1_verify_fast():
    t0 = time.perf_counter()
    scn1_report()
    assert time.perf_counter() - t0 < 1.0
