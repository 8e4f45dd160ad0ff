import numpy as np
import pytest

from hsifusion.engine import Tensor, warp_bilinear
from hsifusion.synth import ScenePair, synth_scene


def test_scene_is_deterministic_per_seed():
    a = synth_scene(5, bands=6, height=48, width=48)
    b = synth_scene(5, bands=6, height=48, width=48)
    c = synth_scene(6, bands=6, height=48, width=48)
    assert a.hr_cube.data.tobytes() == b.hr_cube.data.tobytes()
    assert a.gt_flow.data.tobytes() == b.gt_flow.data.tobytes()
    assert a.hr_cube.data.tobytes() != c.hr_cube.data.tobytes()


@pytest.mark.parametrize("max_disp", [0.0, 3.0, 6.0])
def test_displacement_is_bounded(max_disp):
    pair = synth_scene(1, bands=4, height=64, width=64, max_disp=max_disp)
    mag = np.sqrt((pair.gt_flow.data ** 2).sum(axis=0))
    assert mag.max() <= max_disp + 1e-9
    if max_disp:
        assert mag.max() >= 0.6 * max_disp - 1e-9


def test_warping_reference_with_true_flow_recovers_hr():
    pair = synth_scene(2, bands=8, height=96, width=96, max_disp=6.0)
    back = warp_bilinear(Tensor(pair.ref_cube.data.astype(np.float64)),
                         Tensor(pair.gt_flow.data.astype(np.float64))).data
    inner = (slice(None), slice(10, -10), slice(10, -10))
    err_aligned = np.abs(back - pair.hr_cube.data)[inner].mean()
    err_raw = np.abs(pair.ref_cube.data - pair.hr_cube.data)[inner].mean()
    # two bilinear resamplings blur polygon edges, so the residual is not zero
    assert err_aligned < 0.35 * err_raw


def test_affine_only_flow_is_affine():
    pair = synth_scene(4, bands=4, height=64, width=64, nonrigid=False)
    yy, xx = np.mgrid[0:64, 0:64]
    design = np.stack([xx.ravel(), yy.ravel(), np.ones(64 * 64)], axis=1)
    for comp in pair.gt_flow.data:
        coef, *_ = np.linalg.lstsq(design, comp.ravel(), rcond=None)
        assert np.abs(design @ coef - comp.ravel()).max() < 1e-5  # float32 storage


def test_save_and_load(tmp_path):
    pair = synth_scene(0, bands=4, height=32, width=32)
    pair.save(tmp_path / "s")
    back = ScenePair.load(tmp_path / "s")
    assert back.ref_cube.data.tobytes() == pair.ref_cube.data.tobytes()
    assert back.gt_flow.data.tobytes() == pair.gt_flow.data.tobytes()


def test_argument_checks():
    with pytest.raises(ValueError):
        synth_scene(0, height=16, width=16)
    with pytest.raises(ValueError):
        synth_scene(0, max_disp=20.0)
