import ast
import inspect

import numpy as np
import pytest

from wlsbp import dwls, gbp
from wlsbp.analysis import equivalence_audit
from wlsbp.assembly import assemble_information
from wlsbp.dwls import dwls_run
from wlsbp.gbp import gbp_init, gbp_round, gbp_run
from wlsbp.graph import MeasurementGraph, diameter
from wlsbp.oracle import solve_global
from wlsbp.scenario import ScenarioSpec, generate

from conftest import complete_info, random_instance


def test_two_node_init(two_node):
    st = gbp_init(assemble_information(two_node))
    assert st.P_msg[(0, 1)][0, 0] == 1.0
    assert st.h_msg[(0, 1)][0] == 0.0
    assert len(st.P_msg) == 2


def test_zero_self_node_keeps_alpha():
    g, _ = generate(ScenarioSpec("loopy13", seed=1))
    info = assemble_information(g)
    st = gbp_init(info)
    assert not st.P_self[1].any() and not st.P_self[4].any()
    np.testing.assert_array_equal(st.h_self[1], info.alpha[1])


def test_message_count_after_init():
    g, _ = generate(ScenarioSpec("ring", n=7, seed=1))
    st = gbp_init(assemble_information(g))
    assert len(st.P_msg) == len(st.h_msg) == 14


def test_two_node_first_beliefs_match_dwls_init(two_node):
    info = assemble_information(two_node)
    st = gbp_round(gbp_init(info))
    # dwls round 0 estimates: Psi_ii^-1 alpha_i = (1, -2)
    np.testing.assert_allclose([st.mu_belief[0][0], st.mu_belief[1][0]], [1.0, -2.0], atol=1e-15)


def test_no_edges_beliefs_constant():
    g = MeasurementGraph.build([1, 1], [dict(node=1, A=2.0, R=1.0, z=1.0), dict(node=2, A=1.0, R=4.0, z=3.0)])
    tr = gbp_run(assemble_information(g), 5, 0.0)
    for est in tr.estimates:
        np.testing.assert_allclose(np.concatenate(est), [0.5, 3.0])


def test_random_tree_exact_at_diameter_plus_one():
    g, _ = random_instance(9, topology="tree", n_range=(5, 30), max_dim=3)
    info = assemble_information(g)
    d = diameter(g)
    st = gbp_init(info)
    for _ in range(d + 1):
        st = gbp_round(st)
    x = solve_global(info).vector()
    np.testing.assert_allclose(np.concatenate(st.mu_belief), x, atol=1e-9 * (1 + np.abs(x).max()))


@pytest.mark.parametrize("seed", range(8))
def test_trace_offset_equivalence(seed):
    g, _ = random_instance(40 + seed, n_range=(4, 20), max_dim=1 + seed % 3)
    info = assemble_information(g)
    dw = dwls_run(info, 20, 0.0)
    bp = gbp_run(info, 21, 0.0)
    for t in dw.round_numbers:
        for a, b in zip(dw.estimate(t), bp.estimate(t + 1)):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_acyclic_converged_by_diameter_plus_one():
    g, _ = generate(ScenarioSpec("tree", n=25, seed=3))
    info = assemble_information(g)
    tr = gbp_run(info, 100, 1e-12)
    x = solve_global(info).vector()
    d = diameter(g)
    np.testing.assert_allclose(np.concatenate(tr.estimate(d + 1)), x, atol=1e-9)
    assert tr.stop_reason == "converged"


def test_max_rounds_validation(two_node):
    with pytest.raises(ValueError):
        gbp_run(assemble_information(two_node), 0, 1e-9)


def test_message_identities_white_box():
    g, _ = random_instance(77, n_range=(8, 15), max_dim=2)
    info = assemble_information(g)
    dw = dwls_run(info, 10, 0.0, log_messages=True)
    bp = gbp_run(info, 11, 0.0, log_messages=True)
    for t in dw.round_numbers:
        dm, bm = dw.message_log(t), bp.message_log(t + 1)
        for key, S in dm["sigma"].items():
            Sinv = np.linalg.inv(S)
            np.testing.assert_allclose(Sinv, info.gamma[key] + bm["P0"][key], rtol=1e-9, atol=1e-10)
            np.testing.assert_allclose(Sinv @ dm["x"][key], bm["P0mu0"][key], rtol=1e-9, atol=1e-10)


def test_precisions_stay_symmetric():
    g, _ = random_instance(5, n_range=(10, 20), max_dim=3)
    bp = gbp_run(assemble_information(g), 25, 0.0, log_messages=True)
    for log in bp.messages:
        for P in log["P"].values():
            assert np.max(np.abs(P - P.T)) <= 1e-12 * max(1.0, np.abs(P).max())
    for row in bp.precisions:
        for P in row:
            assert np.max(np.abs(P - P.T)) <= 1e-12 * max(1.0, np.abs(P).max())


def test_breakdown_shifted_by_one_round():
    info = complete_info(3, 0.6)
    bp = gbp_run(info, 100, 0.0)
    dw = dwls_run(info, 100, 0.0)
    assert bp.stop_reason == dw.stop_reason == "breakdown"
    assert bp.breakdown.round == dw.breakdown.round + 1
    assert equivalence_audit(dw, bp).passed


def _imported_modules(mod):
    tree = ast.parse(inspect.getsource(mod))
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            names.add(node.module)
        elif isinstance(node, ast.Import):
            names.update(a.name for a in node.names)
    return names


def test_engines_share_no_update_code():
    assert "dwls" not in _imported_modules(gbp)
    assert "gbp" not in _imported_modules(dwls)
