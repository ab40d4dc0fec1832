import math

import pytest

import cpe


def test_extend_box_left_to_right():
    assert cpe.extend_box((2, 3, 4, 4), "L2R", (20, 20), 2) == (2, 3, 6, 4)


def test_extend_box_stays_in_image():
    x, y, w, h = cpe.extend_box((15, 3, 4, 4), "L2R", (20, 20), 2)
    assert x + w == 20 and (y, h) == (3, 4)


def test_extend_box_rejects_bad_factor():
    with pytest.raises(ValueError):
        cpe.extend_box((2, 3, 4, 4), "L2R", (20, 20), 1.0)


def test_iou():
    assert cpe.iou((0, 0, 2, 2), (1, 0, 2, 2)) == pytest.approx(1 / 3)
    assert cpe.iou((0, 0, 1, 1), (5, 5, 1, 1)) == 0


def test_nms_drops_overlaps():
    boxes = [(0, 0, 10, 10), (1, 0, 10, 10), (20, 20, 5, 5)]
    assert cpe.nms(boxes, [0.9, 0.8, 0.7], 0.3) == [0, 2]


def test_config_keys_listed():
    keys = cpe.config_keys()
    assert "lr" in keys and "iterations" in keys


def test_unknown_setting():
    with pytest.raises(ValueError):
        cpe.train({"no_such_key": "1"})


def test_gradcheck_small():
    errors = cpe.gradcheck(0)
    assert errors and all(e < 1e-4 for e in errors.values())


def test_train_and_evaluate(tmp_path):
    settings = {"iterations": "20", "train_scenes": "4"}
    ckpt = tmp_path / "model.ckpt"
    run = cpe.train(settings, ckpt)
    assert len(run["loss_curve"]) == 20
    assert all(math.isfinite(v) for v in run["loss_curve"])
    assert ckpt.read_bytes().startswith(b"CPE-CKPT-1")

    cpe.generate(settings, tmp_path / "data")
    metrics = cpe.evaluate(ckpt, tmp_path / "data")
    assert len(metrics["per_class"]) >= 1
    assert 0 <= metrics["top_iou"] <= 1
