import csv

import pytest

from synstego.errors import ValidationError
from synstego.harness import config_from_dict, run_experiment
from synstego.render import render_report


@pytest.fixture(scope="module")
def small_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("render-run")
    raw = {"corpus": {"path": "sample"}, "dataset": {"n_entries": 16, "seed": 3}, "run": {"out": str(out)}}
    return run_experiment(config_from_dict(raw), render=False)


def test_accuracy_bars_at_one(small_report, tmp_path):
    files, warnings = render_report(small_report, tmp_path, ("csv", "svg"))
    assert warnings == []
    names = {f.name for f in files}
    assert {"fig1_color_accuracy.svg", "fig2_confusion_direct.svg", "fig3_score_distributions.svg",
            "fig4_paired_differences.svg", "table1.csv", "capacity.csv"} <= names
    with open(tmp_path / "color_accuracy.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    present = [r for r in rows if r["direct"] != ""]
    assert present and all(float(r["direct"]) == 1.0 for r in present)
    svg = (tmp_path / "fig1_color_accuracy.svg").read_text()
    assert "100.0%" in svg and "chance (12.5%)" in svg


def test_empty_detection_warns(small_report, tmp_path):
    report = {**small_report, "detection": {"pairs": []}}
    files, warnings = render_report(report, tmp_path, ("svg",))
    assert warnings and "detection" in warnings[0]
    assert not (tmp_path / "fig3_score_distributions.svg").exists()
    assert (tmp_path / "fig1_color_accuracy.svg").exists()


def test_svg_is_stable(small_report, tmp_path):
    render_report(small_report, tmp_path / "a", ("svg",))
    render_report(small_report, tmp_path / "b", ("svg",))
    for name in ("fig1_color_accuracy.svg", "fig4_paired_differences.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_format(small_report, tmp_path):
    with pytest.raises(ValidationError):
        render_report(small_report, tmp_path, ("pdf",))
