import math

import pytest

from gspbench.numerics import adaptive_simpson, bisect, golden_max


class TestBisect:
    def test_finds_sqrt_two(self):
        assert bisect(lambda x: x * x - 2.0, 0.0, 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_requires_sign_change(self):
        with pytest.raises(ValueError):
            bisect(lambda x: x * x + 1.0, -1.0, 1.0)

    def test_endpoint_root(self):
        assert bisect(lambda x: x, 0.0, 1.0) == 0.0


class TestGoldenMax:
    def test_interior_maximum(self):
        x, fx, _ = golden_max(lambda x: -(x - 0.3) ** 2, 0.0, 1.0, xtol=1e-12)
        assert x == pytest.approx(0.3, abs=1e-6)
        assert fx == pytest.approx(0.0, abs=1e-12)

    def test_monotone_objective_returns_endpoint(self):
        x, fx, _ = golden_max(lambda x: x, 0.0, 2.0)
        assert x == 2.0 and fx == 2.0


class TestAdaptiveSimpson:
    @pytest.mark.parametrize(
        "f, a, b, exact",
        [
            (math.sin, 0.0, math.pi, 2.0),
            (lambda y: 1.0 / (1.0 - y), 0.0, 0.9, math.log(10.0)),
            (math.exp, -1.0, 1.0, math.e - 1.0 / math.e),
        ],
    )
    def test_known_integrals(self, f, a, b, exact):
        assert adaptive_simpson(f, a, b) == pytest.approx(exact, abs=1e-9)

    def test_empty_interval(self):
        assert adaptive_simpson(math.exp, 1.0, 1.0) == 0.0
