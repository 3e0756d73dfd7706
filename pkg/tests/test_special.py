import numpy as np
import pytest
from scipy import special as sps, stats

from synstego.special import betainc, t_sf_two_sided


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (2.0, 0.5), (149.5, 0.5), (1.0, 3.0), (10.0, 20.0)])
def test_betainc_matches_reference(a, b):
    for x in np.linspace(0.0, 1.0, 41):
        assert betainc(a, b, float(x)) == pytest.approx(sps.betainc(a, b, x), rel=1e-11, abs=1e-300)


@pytest.mark.parametrize("df", [1, 2, 4, 29, 299])
def test_two_sided_t_tail(df):
    for t in (0.0, 0.3, -1.1, 2.5, 8.0, -25.0):
        assert t_sf_two_sided(t, df) == pytest.approx(2 * stats.t.sf(abs(t), df), rel=1e-10, abs=1e-300)


def test_domain_errors():
    with pytest.raises(ValueError):
        betainc(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        betainc(1.0, 1.0, 1.5)
    assert t_sf_two_sided(float("inf"), 3) == 0.0
