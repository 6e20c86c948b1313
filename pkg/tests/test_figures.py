import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from triladder.config import ExperimentConfig, spawn_seeds
from triladder.experiment import run_point
from triladder.figures import bonds_svg, distance_svg, emit_figures, heatmap_matrix, heatmap_svg, report_from_json

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def sampled():
    cfg = ExperimentConfig.load()
    return {r: run_point(cfg, r, spawn_seeds(cfg.seed, 1)[0]).report for r in (-1.22, 0.98)}


def cell_values(svg: str) -> list[float]:
    root = ET.fromstring(svg)
    return [float(e.get("data-value")) for e in root.iter(f"{SVG}rect") if e.get("data-value") is not None]


@pytest.mark.parametrize("draw", [heatmap_svg, distance_svg, bonds_svg])
def test_svgs_are_well_formed(sampled, draw):
    root = ET.fromstring(draw(sampled[-1.22], title="t"))
    assert root.tag == f"{SVG}svg"
    assert float(root.get("width")) > 0 and float(root.get("height")) > 0


def test_heatmap_symmetric_within_shot_noise(sampled):
    rep = sampled[-1.22]
    m = heatmap_matrix(rep)
    err = rep.errors["g_matrix"]
    for (i, j), e in err.items():
        assert abs(m[j, i] - m[i, j]) < 5 * e
    assert np.isnan(m[0, 1]) and np.isnan(m[3, 3])
    values = cell_values(heatmap_svg(rep))
    assert sum(np.isnan(values)) == 49 - 30


def test_pi_flux_heatmap_is_positive(sampled):
    m = heatmap_matrix(sampled[-1.22])
    assert np.all(m[np.isfinite(m)] > 0)


def test_emit_from_json_round_trip(sampled, tmp_path):
    rep = report_from_json(json.loads(json.dumps(sampled[0.98].to_dict())))
    assert rep.g_matrix == pytest.approx(sampled[0.98].g_matrix)
    files = emit_figures({"p0.98": rep}, tmp_path)
    assert sorted(f.name for f in files) == ["bonds_p0.98.svg", "distance_p0.98.svg", "heatmap_p0.98.svg"]
    for f in files:
        ET.parse(f)
