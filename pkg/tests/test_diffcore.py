import numpy as np
import pytest

from adeqvaet.diffcore import Graph, ParamStore, adam_step, grad_check
from adeqvaet.errors import NonScalarLoss, ShapeMismatch


def fd_grads(build_loss, store, eps=1e-6):
    """Plain central finite differences, independent of Graph.backward."""
    def value():
        return float(build_loss(Graph(), store).value[0, 0])

    out = {}
    for name, tensor in store.tensors.items():
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = value()
            flat[i] = orig - eps
            fm = value()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * eps)
        out[name] = grad
    return out


class TestForwardValues:
    def test_softmax_closed_form(self):
        g = Graph()
        out = g.softmax_rows(g.input([[np.log(2.0), 0.0]]))
        assert np.allclose(out.value, [[2 / 3, 1 / 3]], atol=1e-12)

    def test_layer_norm_constant_row(self):
        g = Graph()
        out = g.layer_norm_rows(g.input([[4.0, 4.0, 4.0]]), eps=1e-5)
        assert np.array_equal(out.value, np.zeros((1, 3)))

    def test_matmul_identity(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3))
        g = Graph()
        out = g.matmul(g.input(np.eye(3)), g.input(a))
        assert np.allclose(out.value, a, atol=1e-15)

    def test_add_broadcast_bias(self):
        g = Graph()
        out = g.add(g.input(np.zeros((3, 2))), g.input([[1.0, 2.0]]))
        assert np.array_equal(out.value, np.tile([1.0, 2.0], (3, 1)))

    def test_shape_mismatch_raises(self):
        g = Graph()
        with pytest.raises(ShapeMismatch):
            g.matmul(g.input(np.ones((2, 3))), g.input(np.ones((2, 3))))
        with pytest.raises(ShapeMismatch):
            g.mul(g.input(np.ones((2, 3))), g.input(np.ones((3, 2))))

    def test_softmax_rows_stochastic_property(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = Graph()
            x = rng.normal(size=(int(rng.integers(1, 6)), int(rng.integers(2, 7)))) * 10
            s = g.softmax_rows(g.input(x)).value
            assert np.abs(s.sum(axis=1) - 1.0).max() < 1e-12
            assert (s > 0).all() and (s < 1).all()


class TestBackward:
    def test_quadratic_gradient(self):
        store = ParamStore()
        store.add("x", [[3.0]])
        g = Graph()
        x = g.param("x", store.get("x"))
        loss = g.mean_all(g.mul(x, x))
        grads = g.backward(loss)
        assert np.allclose(grads["x"], [[6.0]], atol=1e-12)

    def test_disconnected_parameter_gets_zero(self):
        store = ParamStore()
        store.add("used", [[2.0]])
        store.add("unused", [[5.0]])
        g = Graph()
        used = g.param("used", store.get("used"))
        g.param("unused", store.get("unused"))
        grads = g.backward(g.mean_all(g.mul(used, used)))
        assert np.array_equal(grads["unused"], [[0.0]])

    def test_fanout_additivity(self):
        store = ParamStore()
        store.add("x", [[1.5]])
        g = Graph()
        x = g.param("x", store.get("x"))
        zero = g.input([[0.0]])
        single = g.backward(g.mse(x, zero))["x"].copy()
        g2 = Graph()
        x2 = g2.param("x", store.get("x"))
        zero2 = g2.input([[0.0]])
        double = g2.backward(g2.add(g2.mse(x2, zero2), g2.mse(x2, zero2)))["x"]
        assert np.allclose(double, 2 * single, atol=1e-15)

    def test_non_scalar_loss_rejected(self):
        g = Graph()
        node = g.input(np.ones((2, 2)))
        with pytest.raises(NonScalarLoss):
            g.backward(node)

    def test_sigmoid_bce_closed_form(self):
        # At logit 0 the gradient of BCE(sigmoid(w*x), y) w.r.t. w is (p - y) * x.
        store = ParamStore()
        store.add("w", [[0.0]])
        x_val, y_val = 1.7, 1.0

        def build(g, s):
            w = g.param("w", s.get("w"))
            p = g.sigmoid(g.matmul(g.input([[x_val]]), w))
            return g.binary_cross_entropy(p, g.input([[y_val]]))

        g = Graph()
        grads = g.backward(build(g, store))
        assert abs(grads["w"][0, 0] - (0.5 - y_val) * x_val) < 1e-7

    def test_input_grad_exposed(self):
        g = Graph()
        x = g.input([[2.0]])
        g.backward(g.mean_all(g.mul(x, x)))
        assert np.allclose(x.grad, [[4.0]])

    def test_accumulation_order_independent(self):
        rng = np.random.default_rng(3)
        vals = [rng.normal(size=(2, 2)) for _ in range(4)]
        store = ParamStore()
        store.add("p", rng.normal(size=(2, 2)))

        def build(order):
            g = Graph()
            p = g.param("p", store.get("p"))
            terms = [g.mse(p, g.input(v)) for v in (vals[i] for i in order)]
            total = terms[0]
            for t in terms[1:]:
                total = g.add(total, t)
            return g.backward(total)["p"]

        a = build([0, 1, 2, 3])
        b = build([3, 1, 0, 2])
        assert np.abs(a - b).max() < 1e-12


class TestEveryPrimitiveAgainstFiniteDifferences:
    def test_random_shapes_and_values(self):
        # >= 100 random (primitive, shape, values) cases per the core contract.
        rng = np.random.default_rng(42)
        cases = 0
        while cases < 110:
            rows = int(rng.integers(1, 5))
            cols = int(rng.integers(1, 5))
            inner = int(rng.integers(1, 5))
            kind = cases % 11
            store = ParamStore()
            if kind == 0:
                store.add("a", rng.normal(size=(rows, inner)))
                store.add("b", rng.normal(size=(inner, cols)))
                build = lambda g, s: g.mean_all(
                    g.matmul(g.param("a", s.get("a")), g.param("b", s.get("b")))
                )
            elif kind == 1:
                store.add("a", rng.normal(size=(rows, cols)))
                store.add("b", rng.normal(size=(1, cols)))
                build = lambda g, s: g.mean_all(
                    g.mul(
                        g.add(g.param("a", s.get("a")), g.param("b", s.get("b"))),
                        g.add(g.param("a", s.get("a")), g.param("b", s.get("b"))),
                    )
                )
            elif kind == 2:
                store.add("a", rng.normal(size=(rows, cols)))
                store.add("b", rng.normal(size=(rows, cols)))
                build = lambda g, s: g.mean_all(
                    g.mul(g.param("a", s.get("a")), g.param("b", s.get("b")))
                )
            elif kind == 3:
                # keep relu inputs away from the kink
                store.add("a", rng.normal(size=(rows, cols)) + np.where(rng.random((rows, cols)) > 0.5, 2.0, -2.0))
                build = lambda g, s: g.mean_all(g.relu(g.param("a", s.get("a"))))
            elif kind == 4:
                store.add("a", rng.normal(size=(rows, cols)))
                build = lambda g, s: g.mean_all(g.sigmoid(g.param("a", s.get("a"))))
            elif kind == 5:
                store.add("a", rng.normal(size=(rows, cols)))
                build = lambda g, s: g.mean_all(g.tanh(g.param("a", s.get("a"))))
            elif kind == 6:
                shape = (rows, max(cols, 2))
                store.add("a", rng.normal(size=shape))
                c = rng.normal(size=shape)
                build = lambda g, s, c=c: g.mean_all(
                    g.mul(g.softmax_rows(g.param("a", s.get("a"))), g.input(c))
                )
            elif kind == 7:
                shape = (rows, max(cols, 2))
                store.add("a", rng.normal(size=shape))
                c = rng.normal(size=shape)
                build = lambda g, s, c=c: g.mean_all(
                    g.mul(g.layer_norm_rows(g.param("a", s.get("a")), 1e-5), g.input(c))
                )
            elif kind == 8:
                store.add("p", rng.uniform(0.2, 0.8, size=(rows, cols)))
                y = (rng.random((rows, cols)) > 0.5).astype(float)
                build = lambda g, s: g.binary_cross_entropy(g.param("p", s.get("p")), g.input(y))
            elif kind == 9:
                store.add("a", rng.normal(size=(rows, cols)))
                store.add("b", rng.normal(size=(rows, cols)))
                build = lambda g, s: g.mse(g.param("a", s.get("a")), g.param("b", s.get("b")))
            else:
                t = int(rng.integers(1, 4))
                blocks = int(rng.integers(1, 3))
                d = int(rng.integers(1, 5))
                for name in ("q", "k", "v"):
                    store.add(name, rng.normal(size=(blocks * t, d)))
                build = lambda g, s, t=t: g.mean_all(
                    g.attention(
                        g.param("q", s.get("q")), g.param("k", s.get("k")), g.param("v", s.get("v")), t
                    )
                )
            err = grad_check(build, store, eps=1e-5)
            assert err < 1e-5, f"case kind={kind} rel err {err}"
            cases += 1


class TestGradCheck:
    def test_quadratic_is_near_exact(self):
        store = ParamStore()
        store.add("w", np.random.default_rng(0).normal(size=(3, 2)))

        def build(g, s):
            w = g.param("w", s.get("w"))
            return g.mean_all(g.mul(w, w))

        assert grad_check(build, store, eps=1e-5) < 1e-7

    def test_matches_independent_fd(self):
        rng = np.random.default_rng(7)
        store = ParamStore()
        store.add("w", rng.normal(size=(2, 3)))
        store.add("b", rng.normal(size=(1, 3)))
        x = rng.normal(size=(4, 2))
        y = rng.normal(size=(4, 3))

        def build(g, s):
            out = g.tanh(g.add(g.matmul(g.input(x), g.param("w", s.get("w"))), g.param("b", s.get("b"))))
            return g.mse(out, g.input(y))

        g = Graph()
        analytic = g.backward(build(g, store))
        numeric = fd_grads(build, store)
        for name in store.names():
            assert np.abs(analytic[name] - numeric[name]).max() < 1e-7


class TestAdam:
    def test_zero_grad_zero_decay_fixed_point(self):
        store = ParamStore()
        p0 = store.add("p", [[1.0, -2.0]]).copy()
        adam_step(store, {"p": np.zeros((1, 2))}, lr=0.1)
        assert np.array_equal(store.get("p"), p0)

    def test_first_step_is_signed_lr(self):
        store = ParamStore()
        store.add("p", [[0.0, 0.0]])
        g = np.array([[0.3, -0.7]])
        adam_step(store, {"p": g}, lr=0.01)
        expected = -0.01 * np.sign(g) * (np.abs(g) / (np.abs(g) + 1e-8))
        assert np.allclose(store.get("p"), expected, atol=1e-9)

    def test_decoupled_decay_scales_parameter(self):
        store = ParamStore()
        store.add("p", [[2.0]])
        adam_step(store, {"p": np.zeros((1, 1))}, lr=0.01, weight_decay=0.1)
        assert np.allclose(store.get("p"), [[2.0 * 0.999]], atol=1e-15)

    def test_shape_mismatch(self):
        store = ParamStore()
        store.add("p", np.ones((2, 2)))
        with pytest.raises(ShapeMismatch):
            adam_step(store, {"p": np.ones((1, 2))}, lr=0.1)


class TestParamStoreSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        store = ParamStore()
        store.add("alpha", rng.normal(size=(3, 4)))
        store.add("beta.bias", rng.normal(size=(1, 7)))
        path = tmp_path / "weights.bin"
        store.save(path)
        loaded = ParamStore.load(path)
        assert loaded.names() == store.names()
        for name in store.names():
            assert np.array_equal(loaded.get(name), store.get(name))

    def test_magic_header(self, tmp_path):
        path = tmp_path / "weights.bin"
        store = ParamStore()
        store.add("t", np.zeros((1, 1)))
        store.save(path)
        assert path.read_bytes()[:4] == b"QVT1"
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOPE" + path.read_bytes()[4:])
        with pytest.raises(ValueError):
            ParamStore.load(bad)

    def test_deterministic_bytes(self, tmp_path):
        store = ParamStore()
        store.add("t", [[1.0, 2.0], [3.0, 4.0]])
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        store.save(a)
        store.save(b)
        assert a.read_bytes() == b.read_bytes()
