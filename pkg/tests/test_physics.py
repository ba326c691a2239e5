import numpy as np
import pytest

from dhretro.physics import counterflow_effectiveness, hx_conductance, hx_from_ntu, pipe_pressure_drop

RHO, MU = 983.0, 4.67e-4


def _fd(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestPipeFriction:
    L, D, EPS = 300.0, 0.1, 1e-4

    def _re(self, q):
        return RHO * abs(q) / (0.25 * np.pi * self.D**2) * self.D / MU

    def test_laminar_matches_hagen_poiseuille(self):
        q = 5e-6
        assert self._re(q) < 2000
        dp, ddp = pipe_pressure_drop(q, self.L, self.D, self.EPS, RHO, MU)
        expected = 128 * MU * self.L * q / (np.pi * self.D**4)
        assert dp == pytest.approx(expected, rel=1e-12)
        assert ddp == pytest.approx(expected / q, rel=1e-12)

    def test_turbulent_matches_haaland(self):
        q = 0.02
        re = self._re(q)
        assert re > 3000
        f = (-1.8 * np.log10((self.EPS / self.D / 3.7) ** 1.11 + 6.9 / re)) ** -2
        v = q / (0.25 * np.pi * self.D**2)
        expected = f * self.L / self.D * RHO * v * v / 2
        dp, _ = pipe_pressure_drop(q, self.L, self.D, self.EPS, RHO, MU)
        assert dp == pytest.approx(expected, rel=1e-12)

    def test_odd_in_flow(self):
        q = np.array([-0.02, -1e-4, 1e-4, 0.02])
        dp, ddp = pipe_pressure_drop(q, self.L, self.D, self.EPS, RHO, MU)
        np.testing.assert_allclose(dp[:2], -dp[[3, 2]], rtol=1e-14)
        np.testing.assert_allclose(ddp[:2], ddp[[3, 2]], rtol=1e-14)

    @pytest.mark.parametrize("re", [500.0, 2100.0, 2500.0, 2990.0, 5e4])
    def test_derivative_matches_finite_difference(self, re):
        q = re * MU * 0.25 * np.pi * self.D**2 / (RHO * self.D)
        dp, ddp = pipe_pressure_drop(q, self.L, self.D, self.EPS, RHO, MU)
        fd = _fd(lambda z: pipe_pressure_drop(z, self.L, self.D, self.EPS, RHO, MU)[0], q, q * 1e-6)
        assert ddp == pytest.approx(fd, rel=1e-6)

    def test_continuous_across_transition_edges(self):
        for re in (2000.0, 3000.0):
            q = re * MU * 0.25 * np.pi * self.D**2 / (RHO * self.D)
            lo, _ = pipe_pressure_drop(q * (1 - 1e-9), self.L, self.D, self.EPS, RHO, MU)
            hi, _ = pipe_pressure_drop(q * (1 + 1e-9), self.L, self.D, self.EPS, RHO, MU)
            assert hi == pytest.approx(lo, rel=1e-7)


class TestHeatExchanger:
    @pytest.mark.parametrize("ua,c1,c2", [(1e4, 2e4, 5e4), (3e5, 1e5, 2e4), (5e3, 1e4, 1e4), (1e6, 1e3, 1e5)])
    def test_matches_textbook_effectiveness(self, ua, c1, c2):
        cmin, cmax = min(c1, c2), max(c1, c2)
        eps = counterflow_effectiveness(ua / cmin, cmin / cmax)
        # independent closed form of the counter-flow effectiveness
        cr = cmin / cmax
        ntu = ua / cmin
        if np.isclose(cr, 1.0):
            ref = ntu / (1 + ntu)
        else:
            e = np.exp(-ntu * (1 - cr))
            ref = (1 - e) / (1 - cr * e)
        assert eps == pytest.approx(ref, rel=1e-12)
        H = hx_conductance(ua, c1, c2)[0]
        assert H == pytest.approx(ref * cmin, rel=1e-9)

    def test_symmetric_in_sides(self):
        a = hx_conductance(2e4, 3e4, 7e4)
        b = hx_conductance(2e4, 7e4, 3e4)
        assert a[0] == pytest.approx(b[0], rel=1e-14)
        assert a[2] == pytest.approx(b[3], rel=1e-12)

    def test_smooth_through_balanced_flow(self):
        c = 4e4
        vals = [hx_conductance(1e4, c, c * (1 + s))[0] for s in (-1e-7, 0.0, 1e-7)]
        assert vals[1] == pytest.approx(c * 0.25 / 1.25, rel=1e-12)
        assert abs(vals[2] - 2 * vals[1] + vals[0]) < 1e-9 * vals[1]

    @pytest.mark.parametrize("args", [(1e4, 2e4, 5e4), (3e5, 1e5, 2e4), (7e3, 1e4, 1.0000001e4)])
    def test_partials_match_finite_differences(self, args):
        H, *d = hx_conductance(*args)
        for k in range(3):
            h = args[k] * 1e-6

            def f(v, k=k):
                a = list(args)
                a[k] = v
                return hx_conductance(*a)[0]

            assert d[k] == pytest.approx(_fd(f, args[k], h), rel=1e-6, abs=1e-9 * H)

    def test_zero_ntu_side_gives_zero_conductance(self):
        H, *_ = hx_from_ntu(1e4, 0.0, 0.0)
        assert H == pytest.approx(1e4 / 1.0)  # g(0) = 1, max(n) = 0 -> H = UA
        H, *_ = hx_from_ntu(0.0, 0.5, 2.0)
        assert H == 0.0
