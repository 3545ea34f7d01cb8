import pytest

import matplotlib.pyplot as plt

from plots import PlotSpec, main, render

HEADER = ("problem,k,theta,mode,level,ndof,h_max,err_L2_u,err_H1_u,"
          "err_H1_g,err_L2_H,err_Y,eta_total,tang_trace,eoc_H1_u,"
          "eoc_H1_g,eoc_L2_H,eoc_Y")


def write_study(path, problem="tp-peak", k=2, mode="uniform",
                ndofs=(100, 400, 1600, 6400), scale=1.0):
    lines = [HEADER]
    for i, n in enumerate(ndofs):
        err = scale * float(n) ** (-k / 2.0)
        cells = [problem, str(k), "0.5", mode, str(i), str(n),
                 f"{1.0 / 2**i:.16e}"]
        cells += [f"{err:.16e}"] * 5
        cells += [f"{err:.16e}", f"{0.1:.16e}"]
        cells += [""] * 4 if i == 0 else [f"{float(k):.16e}"] * 4
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def test_single_uniform_series(tmp_path):
    src = tmp_path / "uniform.csv"
    write_study(src, mode="uniform")
    fig, axes = render(PlotSpec([str(src)], ["err_H1_u"],
                                str(tmp_path / "fig.svg")))
    try:
        assert len(axes) == 1
        ax = axes[0]
        assert ax.get_xscale() == "log"
        assert ax.get_yscale() == "log"
        series = [l for l in ax.get_lines() if l.get_label().startswith("tp-")]
        assert len(series) == 1
        assert series[0].get_color() == "tab:blue"
        assert series[0].get_label() == "tp-peak k=2 uniform"
    finally:
        plt.close(fig)


def test_uniform_and_adaptive_colors_and_guide(tmp_path):
    a = tmp_path / "uniform.csv"
    b = tmp_path / "adaptive.csv"
    out = tmp_path / "fig.svg"
    write_study(a, mode="uniform")
    write_study(b, mode="adaptive", ndofs=(90, 250, 700, 2000), scale=0.3)
    assert main(["--csv", str(a), "--csv", str(b),
                 "--cols", "err_Y", "--out", str(out)]) == 0
    svg = out.read_text()
    assert svg.lstrip().startswith("<?xml")
    assert "#1f77b4" in svg
    assert "#d62728" in svg

    fig, axes = render(PlotSpec([str(a), str(b)], ["err_Y"], str(out)))
    try:
        colors = {l.get_label(): l.get_color() for l in axes[0].get_lines()
                  if l.get_label().startswith("tp-")}
        assert colors == {
            "tp-peak k=2 uniform": "tab:blue",
            "tp-peak k=2 adaptive": "tab:red",
        }
        texts = [t.get_text() for t in axes[0].texts]
        assert "2" in texts
    finally:
        plt.close(fig)


def test_one_panel_per_column(tmp_path):
    src = tmp_path / "study.csv"
    out = tmp_path / "fig.svg"
    write_study(src)
    fig, axes = render(PlotSpec([str(src)], ["err_Y", "err_H1_u"], str(out)))
    try:
        assert len(axes) == 2
        assert [ax.get_ylabel() for ax in axes] == ["err_Y", "err_H1_u"]
    finally:
        plt.close(fig)


def test_missing_column_is_input_error(tmp_path, capsys):
    src = tmp_path / "study.csv"
    write_study(src)
    code = main(["--csv", str(src), "--cols", "err_nope",
                 "--out", str(tmp_path / "fig.svg")])
    assert code == 1
    assert "err_nope" in capsys.readouterr().err
    assert not (tmp_path / "fig.svg").exists()


def test_empty_csv_is_input_error(tmp_path, capsys):
    header_only = tmp_path / "header.csv"
    header_only.write_text(HEADER + "\n")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    for src in (header_only, empty):
        code = main(["--csv", str(src), "--cols", "err_Y",
                     "--out", str(tmp_path / "fig.svg")])
        assert code == 1
        assert "empty" in capsys.readouterr().err.lower()


def test_unreadable_csv_is_input_error(tmp_path, capsys):
    code = main(["--csv", str(tmp_path / "nope.csv"), "--cols", "err_Y",
                 "--out", str(tmp_path / "fig.svg")])
    assert code == 1
    assert "nope.csv" in capsys.readouterr().err


def test_missing_required_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["--cols", "err_Y", "--out", str(tmp_path / "fig.svg")])
    assert exc.value.code == 2


def test_svg_output_is_deterministic(tmp_path):
    src = tmp_path / "study.csv"
    write_study(src)
    a = tmp_path / "a.svg"
    b = tmp_path / "b.svg"
    for out in (a, b):
        assert main(["--csv", str(src), "--cols", "err_Y",
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
