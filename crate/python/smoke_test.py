"""Quick check that the extension module loads and agrees with known values."""

import math

import pyfockspec as fs

WATSON = 0.505462019717326


def main():
    grid = fs.Grid(8, "base")
    assert len(grid) == 512
    vol = grid.integrate([1.0] * len(grid))
    assert abs(vol - (2 * math.pi) ** 3) < 1e-9

    base = fs.Params()
    (mu10, mu11), (mu20, mu21) = base.thresholds(16)
    expected = 1.0 / ((2 * math.pi) ** 3 * (9 * WATSON - 3))
    assert abs(mu10 / expected - 1) < 1e-4, (mu10, expected)
    assert mu10 < mu11 and mu20 < mu21

    neg = fs.Params(mu1=2 * mu11, mu2=2 * mu21, v0_amplitude=0.1)
    fam = fs.Family(neg, fs.Grid(4, "base"))
    assert fam.classify(1, 5)[0] == "NEG"
    ess = fam.essential_spectrum(5)
    assert 2 <= len(ess["intervals"]) <= 4
    print("essential spectrum", ess["intervals"], "case", ess["sigma_case"])

    roots = fam.roots((0.0, 0.0, 0.0))
    assert 1 <= len(roots) <= 3

    z = ess["tau_ess"] - 0.5
    w = fam.weinberg(z)
    assert w.xi == (1.0, 1.0)
    ranks = {name: rank for name, _, rank in w.hs_norms()}
    assert ranks["W01"] == ranks["W10"] == ranks["W20"] == 1

    small = fs.Grid(2, "base")
    dense = fs.lowest_eigenvalues(neg, small, k=5)
    assert len(dense) == 5 and dense == sorted(dense)

    decoupled = fs.Params(c=(0, 0, 0), d=(0, 0, 0), w0=-0.5)
    fps = fs.fixed_points(decoupled, small, k=1)
    assert fps and abs(fps[0][0] + 0.5) < 1e-12 and fps[0][2] < 1e-12

    try:
        fs.Grid(3, "double")
    except ValueError:
        pass
    else:
        raise AssertionError("odd double-cover grid accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
