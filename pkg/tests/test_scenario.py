import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wlsbp.analysis import error_trace
from wlsbp.assembly import assemble_information
from wlsbp.dwls import dwls_run
from wlsbp.graph import diameter, is_acyclic, is_connected
from wlsbp.oracle import solve_global
from wlsbp.scenario import (LOOPY13_EDGES, ScenarioError, ScenarioParseError, ScenarioSpec,
                            dumps_scenario, export_trace_csv, generate, load_scenario,
                            loads_scenario, save_scenario)
from wlsbp.trace import RunTrace


def test_chain_scenario():
    g, _ = generate(ScenarioSpec("chain", n=5, seed=1))
    assert is_connected(g) and is_acyclic(g) and diameter(g) == 4


def test_loopy13():
    g, _ = generate(ScenarioSpec("loopy13", seed=1))
    assert g.n == 13 and not is_acyclic(g)
    assert [(e.i, e.j) for e in g.edges] == list(LOOPY13_EDGES)
    assert not g.has_self_information(2) and not g.has_self_information(5)
    assert all(g.has_self_information(i) for i in range(1, 14) if i not in (2, 5))


def test_same_spec_same_bytes():
    spec = ScenarioSpec("random_connected", n=12, dims=2, seed=42)
    a = dumps_scenario(*generate(spec))
    b = dumps_scenario(*generate(spec))
    assert a == b
    assert a != dumps_scenario(*generate(ScenarioSpec("random_connected", n=12, dims=2, seed=43)))


def test_generation_needs_a_self_measurement():
    with pytest.raises(ScenarioError, match="unidentifiable"):
        generate(ScenarioSpec("chain", n=10, seed=0, self_density=0.01))
    with pytest.raises(ScenarioError):
        generate(ScenarioSpec("chain", n=2, seed=0, zero_self=(1, 2)))


@pytest.mark.parametrize("spec", [
    ScenarioSpec("nope", n=3),
    ScenarioSpec("chain", n=0),
    ScenarioSpec("ring", n=2),
    ScenarioSpec("loopy13", n=12),
    ScenarioSpec("chain", n=3, dims=(1, 2)),
])
def test_invalid_specs(spec):
    with pytest.raises(ScenarioError):
        generate(spec)


def test_explicit_topology():
    g, _ = generate(ScenarioSpec("explicit", n=4, seed=3, edges=((1, 2), (2, 3), (3, 4), (4, 1))))
    assert len(g.edges) == 4 and not is_acyclic(g)


def test_explicit_disconnected_rejected():
    with pytest.raises(ScenarioError, match="connected"):
        generate(ScenarioSpec("explicit", n=4, seed=3, edges=((1, 2), (3, 4))))


def _recompute_z(g, truth):
    for s in g.self_measurements:
        if s.rows:
            yield s.z, s.A @ truth.x_true[s.node - 1] + truth.self_noise[s.node]
    for e, v in zip(g.edges, truth.edge_noise):
        yield e.z, e.B_ij @ truth.x_true[e.i - 1] + e.B_ji @ truth.x_true[e.j - 1] + v


@settings(max_examples=500, deadline=None)
@given(
    topo=st.sampled_from(["chain", "star", "ring", "tree", "random_connected", "loopy13"]),
    n=st.integers(3, 30),
    dim=st.integers(1, 3),
    seed=st.integers(0, 2**63 - 1),
    density=st.floats(0.05, 1.0),
)
def test_generated_scenarios_satisfy_assumptions(topo, n, dim, seed, density):
    try:
        g, truth = generate(ScenarioSpec(topo, n=0 if topo == "loopy13" else n, dims=dim,
                                         seed=seed, self_density=density))
    except ScenarioError as exc:
        assert "unidentifiable" in str(exc)
        assert round(density * n) == 0
        return
    assert is_connected(g)
    assert any(g.has_self_information(i) for i in range(1, g.n + 1))
    for e in g.edges:
        assert e.B_ij.any() and e.B_ji.any()
        assert np.linalg.eigvalsh(e.R).min() > 0
    for stored, recomputed in _recompute_z(g, truth):
        np.testing.assert_array_equal(stored, recomputed)


def test_round_trip_is_exact(tmp_path):
    g, truth = generate(ScenarioSpec("random_connected", n=9, dims=(1, 2, 3, 1, 2, 3, 1, 2, 3), seed=5))
    p = tmp_path / "s.scn"
    save_scenario(p, g, truth, {"topology": "random_connected"})
    g2, truth2, meta = load_scenario(p)
    assert meta["topology"] == "random_connected"
    assert g2.dims == g.dims
    for a, b in zip(g.self_measurements, g2.self_measurements):
        for f in ("A", "R", "z"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
    for a, b in zip(g.edges, g2.edges):
        assert (a.i, a.j) == (b.i, b.j)
        for f in ("B_ij", "B_ji", "R", "z"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
    for a, b in zip(truth.x_true, truth2.x_true):
        assert np.array_equal(a, b)
    assert dumps_scenario(g2, truth2, {"topology": "random_connected"}) == p.read_text()


def test_reloaded_scenario_gives_identical_trace(tmp_path):
    g, truth = generate(ScenarioSpec("loopy13", seed=4))
    p = tmp_path / "s.scn"
    save_scenario(p, g, truth)
    g2, _, _ = load_scenario(p)
    a = dwls_run(assemble_information(g), 50, 0.0)
    b = dwls_run(assemble_information(g2), 50, 0.0)
    assert all(x.tobytes() == y.tobytes() for ra, rb in zip(a.estimates, b.estimates) for x, y in zip(ra, rb))


MINIMAL = """wlsbp-scenario 1
nodes 2
dims 1 1
self 1 1
  A 1 1 1
  R 1 1 1
  z 1 0
edge 1 2 1
  Bij 1 1 1
  Bji 1 1 -1
  R 1 1 {R}
  z 1 2
end
"""


def test_minimal_file_parses():
    g, truth, meta = loads_scenario(MINIMAL.format(R=1))
    assert g.n == 2 and truth is None and meta == {}
    np.testing.assert_allclose(solve_global(assemble_information(g)).vector(), [0, -2], atol=1e-14)


def test_zero_edge_covariance_names_edge():
    with pytest.raises(ScenarioError, match=r"edge \(1,2\)"):
        loads_scenario(MINIMAL.format(R=0))


def test_edge_to_missing_node():
    with pytest.raises(ScenarioError, match="unknown node"):
        loads_scenario(MINIMAL.format(R=1).replace("edge 1 2 1", "edge 1 3 1"))


@pytest.mark.parametrize("mutate,match", [
    (lambda s: s.replace("wlsbp-scenario 1", "something 1"), "line 1"),
    (lambda s: s.replace("  A 1 1 1", "  A 1 1 x"), "line 5"),
    (lambda s: s.replace("  A 1 1 1", "  A 1 2 1"), "expected 2 values"),
    (lambda s: s.replace("end\n", ""), "end of file"),
    (lambda s: s.replace("  z 1 2", "  q 1 2"), "expected 'z'"),
    (lambda s: s.replace("dims 1 1", "dims 1"), "dims lists"),
])
def test_parse_errors_carry_context(mutate, match):
    with pytest.raises(ScenarioParseError, match=match):
        loads_scenario(mutate(MINIMAL.format(R=1)))


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_csv_two_node_three_rounds(tmp_path, two_node):
    info = assemble_information(two_node)
    tr = dwls_run(info, 2, 0.0)
    err = error_trace(tr, solve_global(info))
    export_trace_csv(tr, err, tmp_path / "t.csv")
    rows = _read(tmp_path / "t.csv")
    assert rows[0] == ["round", "node_id", "est_1", "abs_error", "y1", "bound_envelope"]
    assert len(rows) == 1 + 6
    assert [(r[0], r[1]) for r in rows[1:]] == [(str(t), str(i)) for t in range(3) for i in (1, 2)]


def test_csv_empty_trace(tmp_path):
    tr = RunTrace("dwls", "x", (1, 2), 0)
    export_trace_csv(tr, None, tmp_path / "e.csv")
    rows = _read(tmp_path / "e.csv")
    assert len(rows) == 1 and rows[0][2:4] == ["est_1", "est_2"]


def test_csv_bad_path(tmp_path, two_node):
    tr = dwls_run(assemble_information(two_node), 1, 0.0)
    with pytest.raises(OSError, match="nope"):
        export_trace_csv(tr, None, tmp_path / "nope" / "t.csv")
