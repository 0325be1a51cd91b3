import os

import numpy as np
import pytest
from PIL import Image

from heliumrr_figures.cli import main
from heliumrr_figures.histogram import HEADER, read_histogram
from heliumrr_figures.render import FigureSpec, gray_levels, render

DATA = os.path.join(os.path.dirname(__file__), "data", "desk_histogram.csv")


def write_grid_csv(path, e_edges, m_edges, masses, counts=None):
    """masses: (ne, nm) with -inf for empty cells."""
    masses = np.asarray(masses, dtype=np.float64)
    ne, nm = masses.shape
    with open(path, "w") as fh:
        fh.write(HEADER + "\n")
        for i in range(ne):
            for j in range(nm):
                n = 0 if counts is None else counts[i][j]
                if not np.isfinite(masses[i, j]):
                    n = 0
                elif counts is None:
                    n = 1
                fh.write(f"{float(e_edges[i])!r},{float(e_edges[i + 1])!r},"
                         f"{float(m_edges[j])!r},{float(m_edges[j + 1])!r},"
                         f"{float(masses[i, j])!r},{n}\n")


def gray_pixels(path):
    return np.asarray(Image.open(path).convert("L"))


# --- the log-to-gray mapping -------------------------------------------------

def test_gray_levels_linear_in_log():
    g = gray_levels(np.array([-300.0, -150.0, 0.0]), -300.0, 0.0)
    np.testing.assert_allclose(g, [0.0, 0.5, 1.0], atol=1e-12)


def test_gray_levels_empty_cells_stay_nan():
    g = gray_levels(np.array([-np.inf, -10.0]), -10.0, -10.0)
    assert np.isnan(g[0]) and g[1] == 1.0


def test_synthetic_extreme_cells_map_to_distinct_grays(tmp_path):
    # three cells 150 decades apart: a linear-in-density mapping would
    # crush the lower two onto black; linear-in-log mapping spaces them
    csv = tmp_path / "two.csv"
    write_grid_csv(csv, [0.0, 1.0], [0.0, 1.0, 2.0, 3.0],
                   [[0.0, -150.0, -300.0]])
    out = tmp_path / "two.png"
    assert main(["--kind", "heatmap", "--in", str(csv),
                 "--out", str(out)]) == 0
    px = gray_pixels(out)
    dark = int(np.sum(px <= 40))
    mid = int(np.sum((px >= 103) & (px <= 152)))
    light = int(np.sum(px >= 215))
    assert dark > 2000 and mid > 2000 and light > 2000


def test_single_cell_histogram_renders_one_block(tmp_path):
    csv = tmp_path / "one.csv"
    write_grid_csv(csv, [0.0, 1.0], [0.0, 1.0], [[-5.0]])
    out = tmp_path / "one.png"
    assert main(["--kind", "heatmap", "--in", str(csv),
                 "--out", str(out)]) == 0
    px = gray_pixels(out)
    # the lone occupied cell maps to the top of the gray range
    assert int(np.sum(px >= 250)) > 10_000


# --- figure kinds ------------------------------------------------------------

@pytest.mark.parametrize("kind", ["surface", "heatmap", "zoom"])
def test_all_kinds_render_from_desk_histogram(tmp_path, kind):
    out = tmp_path / f"{kind}.png"
    assert main(["--kind", kind, "--in", DATA, "--out", str(out)]) == 0
    px = gray_pixels(out)
    assert px.size > 10_000
    assert px.min() < 250  # something was actually drawn


def test_zoom_accepts_ranges(tmp_path):
    grid = read_histogram(DATA)
    e_mid = 0.5 * (grid.e_edges[0] + grid.e_edges[-1])
    out = tmp_path / "zoom.png"
    code = main(["--kind", "zoom", "--in", DATA, "--out", str(out),
                 "--e-range", str(grid.e_edges[0]), str(e_mid)])
    assert code == 0 and out.exists()


def test_out_of_bounds_range_clips_with_warning(tmp_path, capsys):
    out = tmp_path / "clip.png"
    code = main(["--kind", "heatmap", "--in", DATA, "--out", str(out),
                 "--e-range", "-1000000", "1000000"])
    assert code == 0
    assert "clipped" in capsys.readouterr().err


def test_rendering_is_deterministic(tmp_path):
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    spec = dict(kind="heatmap", input_path=DATA)
    render(FigureSpec(output_path=str(a), **spec))
    render(FigureSpec(output_path=str(b), **spec))
    assert a.read_bytes() == b.read_bytes()


# --- failure modes -----------------------------------------------------------

def test_unreadable_input_fails(tmp_path, capsys):
    code = main(["--kind", "heatmap", "--in", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "x.png")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_bad_header_fails(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("not,a,histogram\n1,2,3\n")
    code = main(["--kind", "heatmap", "--in", str(csv),
                 "--out", str(tmp_path / "x.png")])
    assert code == 1


def test_unknown_flag_errors():
    with pytest.raises(SystemExit) as exc:
        main(["--kind", "heatmap", "--in", "x", "--out", "y", "--nope"])
    assert exc.value.code != 0
