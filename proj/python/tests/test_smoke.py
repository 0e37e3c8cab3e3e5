import numpy as np
import pytest

import attrgan


def layout(objects, canvas=32):
    return {"canvas": {"width": canvas, "height": canvas}, "objects": objects}


def test_synthetic_vocabularies():
    cats, attrs = attrgan.synthetic_vocabularies()
    assert cats == ["rectangle", "ellipse", "triangle"]
    assert len(attrs) == 7


def test_render_red_ellipse():
    img = attrgan.render_synthetic(
        layout([{"category": "ellipse", "attributes": ["red", "large"], "bbox": [0.25, 0.25, 0.75, 0.75]}])
    )
    assert img.shape == (32, 32, 3)
    assert img.dtype == np.uint8
    assert tuple(img[16, 16]) == (255, 0, 0)
    assert tuple(img[0, 0]) == tuple(img[31, 31])


def test_invalid_bbox_raises_code():
    with pytest.raises(attrgan.Error) as info:
        attrgan.normalize_layout(layout([{"category": "ellipse", "bbox": [0.5, 0.0, 0.2, 0.4]}]))
    assert info.value.args[0] == "InvalidBBox"


def test_shift_layout_clamps_and_rejects():
    base = layout([{"category": "rectangle", "attributes": [], "bbox": [0.5, 0.0, 0.75, 0.5]}])
    shifted = attrgan.shift_layout(base, [0.5])
    assert shifted["objects"][0]["bbox"] == [0.75, 0.0, 1.0, 0.5]
    with pytest.raises(attrgan.Error) as info:
        attrgan.shift_layout(base, [0.5], policy="reject")
    assert info.value.args[0] == "ShiftOutOfCanvas"


def test_sampled_layout_is_valid():
    a = attrgan.sample_synthetic_layout(seed=3)
    assert attrgan.normalize_layout(a) == a
    assert a == attrgan.sample_synthetic_layout(seed=3)


def test_loss_values():
    assert attrgan.kl_loss(np.zeros((2, 3)), np.zeros((2, 3))) == 0.0
    # 0.5 * (mu^2 + exp(lv) - 1 - lv) with mu = 1, lv = 0
    assert attrgan.kl_loss(np.array([[1.0]]), np.array([[0.0]])) == pytest.approx(0.5, abs=1e-12)
    assert attrgan.image_recon_loss(np.zeros((1, 4)), np.full((1, 4), 0.25)) == pytest.approx(0.25)
    ones = {k: 1.0 for k in ["adv_img", "adv_obj", "obj_cls", "attr_cls", "kl", "img_recon", "latent_recon"]}
    assert attrgan.generator_total(ones) == 22.01
    assert attrgan.discriminator_total(ones) == 8.0


def test_metrics():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(50, 4))
    d, regularized = attrgan.frechet_distance(a, a)
    assert d == pytest.approx(0.0, abs=1e-6)
    assert not regularized
    # same covariance on both sides, means 2 apart on axis 0
    e = np.vstack([np.eye(3), -np.eye(3)]) * np.sqrt(3.0)
    shifted = e + np.array([2.0, 0.0, 0.0])
    assert attrgan.frechet_distance(e, shifted)[0] == pytest.approx(4.0, abs=1e-4)
    logits = np.array([[3.0, 0.0, -1.0], [0.0, 2.0, 0.0]])
    assert attrgan.object_accuracy(logits, [0, 1]) == 1.0
    assert attrgan.object_accuracy(logits, [1, 0]) == 0.0
    recall, precision = attrgan.attribute_recall_precision(np.array([[2.0, -2.0], [2.0, 2.0]]), [[0], [0]])
    assert recall == 1.0
    assert precision == pytest.approx(2 / 3)


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    root = tmp_path_factory.mktemp("attrgan")
    attrgan.generate_synthetic_dataset(root / "data", 12, spec={"canvas": 8, "max_objects": 3})
    attrgan.train(root / "data", root / "run", preset="miniature",
                  config={"iterations": 2, "batch_size": 2, "checkpoint_every": 2})
    return attrgan.Model(root / "run" / "latest.ckpt")


def test_model_generates_deterministically(model):
    lay = layout([{"category": "triangle", "bbox": [0.0, 0.0, 0.5, 0.5]},
                  {"category": "rectangle", "attributes": ["blue"], "bbox": [0.5, 0.5, 1.0, 1.0]}], canvas=8)
    a = model.generate(lay, seed=5)
    b = model.generate(lay, seed=5)
    assert a["image"] == b["image"]
    assert model.png_bytes(a)[:8] == b"\x89PNG\r\n\x1a\n"
    assert a["attributes"][1] == ["blue"]
    echo = model.generate(lay, seeds=a["seeds"], attributes=a["attributes"])
    assert echo["image"] == a["image"]


def test_model_pair_and_vocab(model):
    lay = layout([{"category": "ellipse", "attributes": ["green"], "bbox": [0.0, 0.0, 0.5, 0.5]}], canvas=8)
    pair = model.generate_pair(lay, [0.0])
    assert pair["original"]["image"] == pair["shifted"]["image"]
    assert pair["consistency"]["bg"] == 1.0 and pair["consistency"]["fg"] == 1.0
    v = model.vocab()
    assert len(v["categories"]) == 3 and len(v["attributes"]) == 7
    assert model.info()["preset"] == "miniature"
    with pytest.raises(attrgan.Error) as info:
        model.generate(layout([], canvas=8))
    assert info.value.args[0] == "EmptyLayout"
