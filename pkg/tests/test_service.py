from pathlib import Path

import orjson
import pytest

from psikit.config import Settings
from psikit.service import METRICS_JSON, PsiService, resolution_demo

PHANTOMS = Path(__file__).resolve().parent.parent / "phantoms"


@pytest.fixture
def settings() -> Settings:
    return Settings(_env_file=None)


def test_resolution_demo_meets_bands(settings):
    outcomes = {o.name: o for o in resolution_demo("mouse50_desk", seed=7, settings=settings)}
    assert list(outcomes) == ["cfi_dip", "psi_dip", "fwhm_psi_over_cfi", "coverage_ratio"]
    assert outcomes["cfi_dip"].value < 0.10
    assert outcomes["psi_dip"].value >= 0.50
    assert outcomes["fwhm_psi_over_cfi"].value <= 0.50
    assert outcomes["coverage_ratio"].value > 1.50
    assert all(o.ok for o in outcomes.values())


def test_bundled_two_vessels_coverage_above_one(tmp_path, settings):
    results = PsiService(settings).pipeline("mouse50_desk", str(PHANTOMS / "two_vessels.json"), tmp_path)
    assert [r.stage for r in results][:6] == ["simulate", "beamform", "filter", "psi", "cfi", "metrics"]
    report = orjson.loads((tmp_path / METRICS_JSON).read_bytes())
    assert report["coverage_ratio"] > 1.0
    assert len(report["cfi_histogram_counts"]) == len(report["histogram_counts"])
