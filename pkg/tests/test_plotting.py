import numpy as np

from npiv_indep import plotting


def _png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_all_figures(tmp_path):
    g = np.linspace(0, 1, 21)
    rng = np.random.default_rng(0)
    paths = [
        plotting.plot_curves(tmp_path / "c.png", g, {"a": g, "b": g**2}, truth=g, title="t",
                             points=(rng.uniform(size=30), rng.uniform(size=30))),
        plotting.plot_trace(tmp_path / "t.png", [3.0, 2.0, 1.5], 2, 1.6),
        plotting.plot_band(tmp_path / "b.png", g, g, g - 0.1, g + 0.1, truth=g, title="band"),
        plotting.plot_sample(tmp_path / "s.png", rng.uniform(size=30), rng.uniform(size=30),
                             rng.integers(0, 2, 30), g, g),
        plotting.plot_rate(tmp_path / "r.png", [
            {"n": 100, "median_mise": 0.2, "median_mise_initial": 0.3},
            {"n": 200, "median_mise": 0.1, "median_mise_initial": 0.2}]),
    ]
    assert all(_png(p) for p in paths)


def test_png_bytes_stable(tmp_path):
    g = np.linspace(0, 1, 11)
    a = plotting.plot_band(tmp_path / "a.png", g, g, g - 1, g + 1)
    b = plotting.plot_band(tmp_path / "b.png", g, g, g - 1, g + 1)
    assert a.read_bytes() == b.read_bytes()
