"""Stage orchestration: simulate -> beamform -> filter -> psi/cfi -> metrics -> render.

Each stage reads its input datasets from disk, writes its outputs atomically
and drops a `<stage>.manifest.json` next to them. `pipeline` chains the same
stage calls through the files, so a pipeline run and a sequence of single
stage runs produce identical bytes.

Datasets carry a small provenance record (preset name, phantom, seed,
default decimation) in their metadata so later stages can fill their
manifests without extra flags.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import orjson
from pydantic import ValidationError

from .beamform import beamform_all
from .config import Settings, get_settings
from .dataset import read_dataset, write_dataset
from .errors import InputValidationError, UnknownPresetError
from .iqfilter import iq_demodulate, svd_clutter_filter
from .logging_utils import elapsed_ms, log_info, print_banner
from .manifest import build_manifest, write_manifest
from .metrics import coverage_ratio, format_report, lateral_fwhm, lateral_profile, metrics_report, peak_dip
from .models import BeamformConfig, BeamGrid, Phantom, Preset
from .phantom import BUILTIN_PHANTOMS, ChannelData, builtin_phantom, simulate
from .phasemap import PhaseImage, cfi_image, phase_terms, psi_image
from .presets import get_preset
from .render import render
from .tooling import atomic_write_bytes, sha256_file

PathLike = Union[str, Path]

CHANNEL = "channel.psid"
BEAMFORMED = "beamformed.psid"
IQ = "iq.psid"
FILTERED = "filtered.psid"
PSI = "psi.psid"
PRECURSOR_A = "precursor_a.psid"
PRECURSOR_B = "precursor_b.psid"
CFI = "cfi.psid"
METRICS_TXT = "metrics.txt"
METRICS_JSON = "metrics.json"

_PRETTY = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_APPEND_NEWLINE


def resolve_preset(spec: Union[str, Preset]) -> Preset:
    """Built-in preset name, or path to a preset JSON document."""
    if isinstance(spec, Preset):
        return spec
    path = Path(spec)
    if path.suffix == ".json" and path.is_file():
        try:
            return Preset.model_validate_json(path.read_bytes())
        except ValidationError as exc:
            raise InputValidationError(f"malformed preset file {path}: {exc}") from exc
    return get_preset(spec)


def resolve_phantom(spec: Union[str, Phantom], preset: Preset, seed: Optional[int] = None) -> Phantom:
    """Phantom JSON file, built-in phantom name, or a Phantom; `seed` overrides the stored seed."""
    if isinstance(spec, Phantom):
        phantom = spec
    elif spec in BUILTIN_PHANTOMS:
        phantom = builtin_phantom(spec, preset.grid, preset.acquisition, seed or 0)
    else:
        path = Path(spec)
        if not path.is_file():
            raise InputValidationError(f"phantom '{spec}' is neither a file nor one of {', '.join(BUILTIN_PHANTOMS)}")
        try:
            phantom = Phantom.model_validate_json(path.read_bytes())
        except ValidationError as exc:
            raise InputValidationError(f"malformed phantom file {path}: {exc}") from exc
    if seed is not None and phantom.seed != seed:
        phantom = phantom.model_copy(update={"seed": seed})
    return phantom


def _provenance(extra: Dict[str, Any]) -> Dict[str, Any]:
    return {k: extra.get(k) for k in ("preset", "phantom", "seed", "decimation")}


@dataclass
class StageResult:
    stage: str
    outputs: Dict[str, Path]
    manifest: Path


class PsiService:
    """File-to-file stage runner bound to one Settings instance."""

    def __init__(self, settings: Optional[Settings] = None) -> None:
        self._s = settings or get_settings()

    @property
    def settings(self) -> Settings:
        return self._s

    def _finish(self, stage: str, out_dir: Path, outputs: Dict[str, str], prov: Dict[str, Any], *,
                inputs: Optional[Dict[str, Path]] = None, configs: Optional[Dict[str, Any]] = None,
                extra: Optional[Dict[str, Any]] = None) -> StageResult:
        phantom = Phantom.model_validate(prov["phantom"]) if prov.get("phantom") else None
        manifest = build_manifest(
            stage,
            preset=prov.get("preset"),
            phantom=phantom,
            seed=prov.get("seed"),
            configs=configs,
            settings=self._s.numeric_snapshot(),
            inputs={p.name: sha256_file(p) for p in (inputs or {}).values()},
            outputs=outputs,
            extra=extra,
        )
        path = write_manifest(out_dir, manifest)
        return StageResult(stage=stage, outputs={name: out_dir / name for name in outputs}, manifest=path)

    # ---- stages ----

    def simulate(self, preset: Union[str, Preset], phantom: Union[str, Phantom], out_dir: PathLike, *,
                 seed: Optional[int] = None) -> StageResult:
        out = Path(out_dir)
        p = resolve_preset(preset)
        ph = resolve_phantom(phantom, p, seed)
        data = simulate(ph, p.acquisition, workers=self._s.workers)
        prov = {"preset": p.name, "phantom": ph.model_dump(mode="json"), "seed": ph.seed,
                "decimation": p.decimation, "grid": p.grid.model_dump(mode="json"),
                "beamform": p.beamform.model_dump(mode="json")}
        digest = write_dataset(out / CHANNEL, data, prov)
        return self._finish("simulate", out, {CHANNEL: digest}, prov,
                            configs={"acquisition": p.acquisition.model_dump(mode="json"),
                                     "grid": prov["grid"], "beamform": prov["beamform"]})

    def beamform(self, channel_path: PathLike, out_dir: PathLike, *, preset: Optional[Union[str, Preset]] = None) -> StageResult:
        out = Path(out_dir)
        data, extra = read_dataset(channel_path, expect="channel")
        assert isinstance(data, ChannelData)
        prov = _provenance(extra)
        if preset is not None:
            p = resolve_preset(preset)
            grid, bf = p.grid, p.beamform
        elif extra.get("grid"):
            grid = BeamGrid.model_validate(extra["grid"])
            bf = BeamformConfig.model_validate(extra["beamform"])
        else:
            raise UnknownPresetError("channel dataset carries no grid; pass --preset")
        stack = beamform_all(data, grid, bf, workers=self._s.workers, row_block=self._s.row_block)
        digest = write_dataset(out / BEAMFORMED, stack, prov)
        return self._finish("beamform", out, {BEAMFORMED: digest}, prov, inputs={"channel": Path(channel_path)},
                            configs={"grid": grid.model_dump(mode="json"), "beamform": bf.model_dump(mode="json"),
                                     "row_block": self._s.row_block})

    def filter(self, beamformed_path: PathLike, out_dir: PathLike, *, decim: Optional[int] = None,
               demod_freq: Optional[float] = None) -> StageResult:
        out = Path(out_dir)
        stack, extra = read_dataset(beamformed_path, expect="beamformed")
        prov = _provenance(extra)
        d = decim if decim is not None else int(prov.get("decimation") or 1)
        iq = iq_demodulate(stack, demod_freq, d, taps=self._s.fir_taps)
        iq_digest = write_dataset(out / IQ, iq, prov)
        filtered = svd_clutter_filter(iq, self._s.low_frac, self._s.high_frac, workers=self._s.workers)
        f_digest = write_dataset(out / FILTERED, filtered, prov)
        return self._finish("filter", out, {IQ: iq_digest, FILTERED: f_digest}, prov,
                            inputs={"beamformed": Path(beamformed_path)},
                            configs={"decim": d, "demod_freq": iq.demod_freq, "fir_taps": self._s.fir_taps,
                                     "lo": filtered.lo, "hi": filtered.hi})

    def psi(self, filtered_path: PathLike, out_dir: PathLike, *, symmetric: bool = False) -> StageResult:
        out = Path(out_dir)
        filtered, extra = read_dataset(filtered_path, expect="filtered_iq")
        prov = _provenance(extra)
        terms = phase_terms(filtered, symmetric=symmetric)
        psi, pre_a, pre_b = psi_image(terms)
        outputs = {
            PSI: write_dataset(out / PSI, psi, prov),
            PRECURSOR_A: write_dataset(out / PRECURSOR_A, pre_a, prov),
            PRECURSOR_B: write_dataset(out / PRECURSOR_B, pre_b, prov),
        }
        return self._finish("psi", out, outputs, prov, inputs={"filtered": Path(filtered_path)},
                            configs={"symmetric": symmetric, "n_pairs": terms.n_pairs})

    def cfi(self, filtered_path: PathLike, out_dir: PathLike) -> StageResult:
        out = Path(out_dir)
        filtered, extra = read_dataset(filtered_path, expect="filtered_iq")
        prov = _provenance(extra)
        image = cfi_image(filtered)
        digest = write_dataset(out / CFI, image, prov)
        return self._finish("cfi", out, {CFI: digest}, prov, inputs={"filtered": Path(filtered_path)},
                            configs={"n_pairs": image.n_pairs})

    def metrics(self, psi_path: PathLike, cfi_path: PathLike, out_dir: PathLike) -> StageResult:
        out = Path(out_dir)
        psi, extra = read_dataset(psi_path, expect="phase_image")
        cfi, _ = read_dataset(cfi_path, expect="phase_image")
        prov = _provenance(extra)
        report = metrics_report(psi, cfi, threshold_db=self._s.threshold_db,
                                histogram_bin_pixels=self._s.histogram_bin_pixels)
        text = format_report(report).encode("utf-8")
        body = orjson.dumps(report.model_dump(mode="json"), option=_PRETTY)
        atomic_write_bytes(out / METRICS_TXT, text)
        atomic_write_bytes(out / METRICS_JSON, body)
        summary = {k: v for k, v in report.model_dump(mode="json").items() if k not in {"radii", "cfi_radii"}}
        return self._finish("metrics", out, {METRICS_TXT: sha256_file(out / METRICS_TXT),
                                             METRICS_JSON: sha256_file(out / METRICS_JSON)},
                            prov, inputs={"psi": Path(psi_path), "cfi": Path(cfi_path)}, extra={"metrics": summary})

    def render(self, image_path: PathLike, out_path: PathLike, *, style: str = "gray") -> StageResult:
        target = Path(out_path)
        image, extra = read_dataset(image_path, expect="phase_image")
        peak = render(image, target, style)  # type: ignore[arg-type]
        return self._finish(f"render-{target.stem}", target.parent, {target.name: sha256_file(target)},
                            _provenance(extra), inputs={"image": Path(image_path)},
                            configs={"style": style, "kind": image.kind},
                            extra={"normalization_max": peak})

    def pipeline(self, preset: Union[str, Preset], phantom: Union[str, Phantom], out_dir: PathLike, *,
                 seed: Optional[int] = None, symmetric: bool = False, decim: Optional[int] = None,
                 with_metrics: bool = True) -> List[StageResult]:
        t0 = time.perf_counter()
        out = Path(out_dir)
        results = [self.simulate(preset, phantom, out, seed=seed)]
        results.append(self.beamform(out / CHANNEL, out))
        results.append(self.filter(out / BEAMFORMED, out, decim=decim))
        results.append(self.psi(out / FILTERED, out, symmetric=symmetric))
        results.append(self.cfi(out / FILTERED, out))
        if with_metrics:
            results.append(self.metrics(out / PSI, out / CFI, out))
        results.append(self.render(out / PSI, out / "psi.ppm", style="color"))
        results.append(self.render(out / CFI, out / "cfi.ppm", style="color"))
        log_info("pipeline_done", stages=len(results), out_dir=str(out), latency_ms=elapsed_ms(t0))
        return results


# ---- resolution demo ----

@dataclass
class DemoOutcome:
    name: str
    value: float
    band: str
    ok: bool


def _reconstruct(preset: Preset, phantom: Phantom, settings: Settings) -> Tuple[PhaseImage, PhaseImage]:
    data = simulate(phantom, preset.acquisition, workers=settings.workers)
    stack = beamform_all(data, preset.grid, preset.beamform, workers=settings.workers, row_block=settings.row_block)
    iq = iq_demodulate(stack, None, preset.decimation, taps=settings.fir_taps)
    filtered = svd_clutter_filter(iq, settings.low_frac, settings.high_frac, workers=settings.workers)
    psi, _, _ = psi_image(phase_terms(filtered))
    return psi, cfi_image(filtered)


def resolution_demo(preset: Union[str, Preset], seed: int = 7, settings: Optional[Settings] = None) -> List[DemoOutcome]:
    """Two vessels one wavelength apart (opposite flow) and a single vessel.

    Reports CFI/PSI inter-vessel dip, PSI/CFI lateral FWHM ratio and the
    coverage ratio against their target bands. Never raises on a miss.
    """
    s = settings or get_settings()
    p = resolve_preset(preset)
    lam = p.acquisition.wavelength
    grid = p.grid.decimated(p.decimation)
    x_mid = grid.x0 + grid.dx * (grid.nx - 1) / 2.0
    band = slice(grid.nz // 4, grid.nz - grid.nz // 4)

    psi2, cfi2 = _reconstruct(p, builtin_phantom("two_vessels", p.grid, p.acquisition, seed), s)
    _, ix1 = grid.index_of(x_mid - lam / 2, grid.z0)
    _, ix2 = grid.index_of(x_mid + lam / 2, grid.z0)
    cfi_dip = peak_dip(lateral_profile(cfi2, band), ix1, ix2)
    psi_dip = peak_dip(lateral_profile(psi2, band), ix1, ix2)
    cov = coverage_ratio(psi2, cfi2, lam)

    psi1, cfi1 = _reconstruct(p, builtin_phantom("single_vessel", p.grid, p.acquisition, seed), s)
    w_psi = lateral_fwhm(lateral_profile(psi1, band), grid.dx)
    w_cfi = lateral_fwhm(lateral_profile(cfi1, band), grid.dx)
    ratio = w_psi / w_cfi if w_cfi > 0 else float("inf")

    outcomes = [
        DemoOutcome("cfi_dip", cfi_dip, "< 0.10", cfi_dip < 0.10),
        DemoOutcome("psi_dip", psi_dip, ">= 0.50", psi_dip >= 0.50),
        DemoOutcome("fwhm_psi_over_cfi", ratio, "<= 0.50", ratio <= 0.50),
        DemoOutcome("coverage_ratio", cov.ratio, "> 1.50", cov.ratio > 1.50),
    ]
    print_banner(f"resolution demo: {p.name}", [
        f"{o.name:<20} {o.value:8.4f}  target {o.band:<8} {'ok' if o.ok else 'MISS'}" for o in outcomes
    ])
    return outcomes


def write_demo_report(outcomes: List[DemoOutcome], out_dir: PathLike, preset: str, seed: int) -> Path:
    body = {"preset": preset, "seed": seed,
            "outcomes": [{"name": o.name, "value": o.value, "band": o.band, "ok": o.ok} for o in outcomes]}
    return atomic_write_bytes(Path(out_dir) / "demo.json", orjson.dumps(body, option=_PRETTY))
