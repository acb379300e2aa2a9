import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import dqrp


def test_oracle_values():
    wave = dqrp.ModelSpec("wave")
    assert wave.dim == 1
    assert dqrp.oracle_quantile(wave, np.array([0.5]), 0.5) == pytest.approx(0.0, abs=1e-12)
    expected = 0.25 + math.sin(0.125 * math.pi) * 1.6448536269514722
    assert dqrp.oracle_quantile(wave, np.array([0.125]), 0.95) == pytest.approx(expected, abs=1e-8)


def test_generate_is_deterministic():
    model = dqrp.ModelSpec("triangle")
    a = dqrp.generate(model, 64, 3)
    b = dqrp.generate(model, 64, 3)
    assert len(a) == 64 and a.dim == 1
    assert a.x.shape == (64, 1)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.to_csv() == b.to_csv()


def test_train_and_evaluate_small():
    model = dqrp.ModelSpec("wave")
    data = dqrp.generate(model, 128, 1)
    cfg = dqrp.TrainConfig()
    cfg.epochs = 3
    cfg.batch_size = 32
    cfg.hidden = [16, 16]
    cfg.seed = 7
    seen = []
    result = dqrp.train(data, cfg, lambda r: seen.append(r.epoch))
    assert len(seen) == 3
    assert result.lambda_ == pytest.approx(math.log(128))
    net = result.network
    assert net.widths == [2, 16, 16, 1]
    x = np.linspace(0.05, 0.95, 7).reshape(-1, 1)
    f = net(x, 0.5)
    assert f.shape == (7,)
    tau = np.full(7, 0.5)
    np.testing.assert_allclose(net(x, tau), f)
    assert np.all(np.isfinite(net.derivative(x, 0.5)))
    assert dqrp.l1_error(net, model, 0.5, 2000, 1) >= 0.0
    risk, penalty = dqrp.mc_risk_and_penalty(net, model, 2000, 1)
    assert risk > 0.0 and penalty >= 0.0
    assert 0.0 <= dqrp.crossing_rate(net, model, 500, 1) <= 1.0


def test_network_json_round_trip(tmp_path):
    net = dqrp.init_network([3, 5, 1], 11)
    doc = json.loads(net.to_json())
    assert doc["kind"] == "requ"
    assert dqrp.Network.from_json(net.to_json()) == net
    path = str(tmp_path / "net.json")
    net.save(path)
    assert dqrp.Network.load(path) == net
    with pytest.raises(dqrp.ParseError):
        dqrp.Network.from_json("{")


def test_shape_errors_map_to_python():
    net = dqrp.init_network([2, 4, 1], 1)
    with pytest.raises(dqrp.ShapeError):
        net(np.zeros((3, 2)), 0.5)
    with pytest.raises(dqrp.Error):
        dqrp.ModelSpec("nope")


def test_polynomial_constructions_are_exact():
    p = dqrp.Polynomial.univariate([1.0, -2.0, 0.5, 3.0])
    net = dqrp.construct_univariate_poly(p)
    xs = np.linspace(-2.0, 2.0, 41).reshape(-1, 1)
    direct = 1.0 - 2.0 * xs[:, 0] + 0.5 * xs[:, 0] ** 2 + 3.0 * xs[:, 0] ** 3
    np.testing.assert_allclose(net(xs), direct, rtol=1e-10, atol=1e-10)

    q = dqrp.random_polynomial(3, 2, 5)
    mnet = dqrp.construct_multivariate_poly(q)
    pts = np.random.default_rng(0).uniform(-1, 1, size=(50, 3))
    np.testing.assert_allclose(mnet(pts), [q(p) for p in pts], atol=1e-9)
    assert mnet.size.depth <= 3


def test_derivative_network_matches_tangent():
    net = dqrp.init_network([3, 6, 4, 1], 2)
    dnet = dqrp.compile_derivative_network(net)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(20, 2))
    tau = rng.uniform(0, 1, size=20)
    np.testing.assert_allclose(dnet(np.column_stack([x, tau])), net.derivative(x, tau), atol=1e-9)


def test_quantile_plot_is_valid_svg():
    model = dqrp.ModelSpec("wave")
    data = dqrp.generate(model, 40, 2)
    net = dqrp.init_network([2, 8, 1], 3)
    svg = dqrp.quantile_plot_svg(data, net, model, taus=[0.25, 0.75], title="wave")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    lines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(lines) == 4
    with pytest.raises(dqrp.UsageError):
        dqrp.quantile_plot_svg(dqrp.generate(dqrp.ModelSpec("additive"), 10, 1),
                               dqrp.init_network([9, 4, 1], 1))
