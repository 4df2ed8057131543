import json

import numpy as np
import pytest

from cones_lab.data import (DatasetConfig, SceneConfig, Vocabulary,
                            build_default_vocabulary, generate_scene,
                            load_dataset, make_splits, save_dataset)
from cones_lab.data.io import SchemaError
from cones_lab.data.scenes import box_iou
from cones_lab.rng import Rng

VOCAB = build_default_vocabulary()


def test_vocabulary_composition():
    assert VOCAB.num_classes == 18
    assert len(VOCAB.in_domain_ids()) == 12
    assert len(VOCAB.out_domain_ids()) == 6
    names = [c.name for c in VOCAB.classes]
    assert len(set(names)) == 18
    assert all(tid < VOCAB.num_tokens for ids in
               (VOCAB.encode_class(i) for i in range(18)) for tid in ids)


def test_caption_names_exactly_the_present_classes():
    tokens = VOCAB.caption_for([5, 2, 5])
    segs, cur = [], []
    for t in tokens:
        if t == VOCAB.sep_id:
            segs.append(cur)
            cur = []
        else:
            cur.append(t)
    segs.append(cur)
    assert segs == [VOCAB.encode_class(2), VOCAB.encode_class(5)]


def test_single_object_box_is_tight_around_mask():
    cfg = SceneConfig(vocabulary=VOCAB, min_objects=1, max_objects=1, noise_sigma=0.0)
    scene = generate_scene(cfg, Rng(17))
    (x0, y0, x1, y1), mask = scene.boxes[0], scene.masks[0]
    ys, xs = np.nonzero(mask)
    assert (x0, y0, x1, y1) == (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)
    # rendered pixels match the mask exactly on a noiseless canvas
    colored = np.any(np.abs(scene.image - cfg.background) > 1e-9, axis=-1)
    np.testing.assert_array_equal(colored, mask.astype(bool))


def test_four_object_scene_respects_iou_cap_and_count():
    cfg = SceneConfig(vocabulary=VOCAB, min_objects=4, max_objects=4)
    for seed in range(10):
        scene = generate_scene(cfg, Rng(seed))
        assert scene.num_objects() == 4
        for i in range(4):
            for j in range(i + 1, 4):
                assert box_iou(scene.boxes[i], scene.boxes[j]) <= cfg.max_box_iou
                assert not (scene.masks[i].astype(bool) & scene.masks[j].astype(bool)).any()


def test_masks_lie_inside_their_boxes_exhaustively():
    cfg = SceneConfig(vocabulary=VOCAB, min_objects=2, max_objects=4)
    for seed in range(20):
        scene = generate_scene(cfg, Rng(1000 + seed))
        for (x0, y0, x1, y1), mask in zip(scene.boxes, scene.masks):
            ys, xs = np.nonzero(mask)
            assert xs.min() >= x0 and xs.max() < x1
            assert ys.min() >= y0 and ys.max() < y1
            assert 0 <= x0 < x1 <= cfg.width and 0 <= y0 < y1 <= cfg.height


def test_box_centers_fall_in_distinct_patch_cells():
    cfg = SceneConfig(vocabulary=VOCAB, min_objects=3, max_objects=4)
    for seed in range(20):
        scene = generate_scene(cfg, Rng(2000 + seed))
        cells = [(int((b[0] + b[2]) / 2 // cfg.patch), int((b[1] + b[3]) / 2 // cfg.patch))
                 for b in scene.boxes]
        assert len(set(cells)) == len(cells)


def test_empty_palette_rejected():
    with pytest.raises(ValueError, match="palette"):
        generate_scene(SceneConfig(vocabulary=VOCAB, class_ids=[]), Rng(0))


def test_unknown_class_rejected():
    with pytest.raises(ValueError, match="not in vocabulary"):
        generate_scene(SceneConfig(vocabulary=VOCAB, class_ids=[99]), Rng(0))


def test_image_range_and_noise():
    cfg = SceneConfig(vocabulary=VOCAB)
    scene = generate_scene(cfg, Rng(3))
    assert scene.image.min() >= 0.0 and scene.image.max() <= 1.0
    background = scene.image[~np.logical_or.reduce([m.astype(bool) for m in scene.masks])]
    assert background.std() > 0.005  # noise is actually present


def test_class_balance_within_twenty_percent_of_uniform():
    cfg = SceneConfig(vocabulary=VOCAB)
    counts = np.zeros(VOCAB.num_classes)
    total = 0
    root = Rng(42)
    for i in range(500):
        scene = generate_scene(cfg, root.spawn(i))
        for l in scene.labels:
            counts[l] += 1
            total += 1
    in_ids = VOCAB.in_domain_ids()
    uniform = total / len(in_ids)
    for cid in in_ids:
        assert abs(counts[cid] - uniform) <= 0.2 * uniform, \
            f"class {cid}: {counts[cid]} vs uniform {uniform:.1f}"
    assert counts[VOCAB.out_domain_ids()].sum() == 0


def test_splits_deterministic_and_sized():
    cfg = DatasetConfig(seed=7, sizes=(6, 3, 2))
    a = make_splits(cfg)
    b = make_splits(DatasetConfig(seed=7, sizes=(6, 3, 2)))
    assert [len(a.train), len(a.val), len(a.test)] == [6, 3, 2]
    for sa, sb in zip(a.train + a.val + a.test, b.train + b.val + b.test):
        assert sa.image.tobytes() == sb.image.tobytes()
        assert sa.boxes == sb.boxes and sa.labels == sb.labels


def test_splits_disjoint_across_names():
    s = make_splits(DatasetConfig(seed=7, sizes=(4, 4, 4)))
    blobs = [sc.image.tobytes() for sc in s.train + s.val + s.test]
    assert len(set(blobs)) == 12


def test_ratio_eight_to_two():
    cfg = DatasetConfig.from_train_val_ratio(100, (8, 2), seed=1)
    assert cfg.sizes == (80, 20, 0)


def test_single_scene_splits():
    s = make_splits(DatasetConfig(seed=0, sizes=(1, 1, 1)))
    assert len(s.train) == len(s.val) == len(s.test) == 1
    assert s.train[0].image.tobytes() != s.val[0].image.tobytes()


def test_out_domain_config_uses_out_domain_palette_and_sizes():
    cfg = DatasetConfig(seed=0, domain="out_domain")
    assert cfg.sizes == (200, 50, 50)
    scfg = cfg.scene_config()
    assert set(scfg.class_ids) == set(VOCAB.out_domain_ids())


def test_no_out_domain_class_in_in_domain_splits():
    s = make_splits(DatasetConfig(seed=3, sizes=(30, 5, 5)))
    ood = set(VOCAB.out_domain_ids())
    for scene in s.train + s.val + s.test:
        assert not (set(scene.labels) & ood)


def test_save_load_round_trip(tmp_path):
    splits = make_splits(DatasetConfig(seed=11, sizes=(3, 2, 1)))
    save_dataset(splits, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert back.seed == splits.seed
    for name in ("train", "val", "test"):
        for a, b in zip(splits.split(name), back.split(name)):
            assert a.image.tobytes() == b.image.tobytes()
            assert a.boxes == b.boxes
            assert a.labels == b.labels
            assert a.caption_token_ids == b.caption_token_ids
            for ma, mb in zip(a.masks, b.masks):
                assert ma.tobytes() == mb.tobytes()


def test_load_rejects_missing_field(tmp_path):
    splits = make_splits(DatasetConfig(seed=1, sizes=(1, 1, 1)))
    save_dataset(splits, tmp_path / "ds")
    ann = tmp_path / "ds" / "train" / "annotations.json"
    blob = json.loads(ann.read_text())
    del blob["scenes"][0]["boxes"]
    ann.write_text(json.dumps(blob))
    with pytest.raises(SchemaError, match="scene 0 missing field 'boxes'"):
        load_dataset(tmp_path / "ds")


def test_load_rejects_unparseable_json(tmp_path):
    splits = make_splits(DatasetConfig(seed=1, sizes=(1, 0, 0)))
    save_dataset(splits, tmp_path / "ds")
    (tmp_path / "ds" / "train" / "annotations.json").write_text("{broken")
    with pytest.raises(SchemaError, match="unparseable"):
        load_dataset(tmp_path / "ds")


def test_load_rejects_newer_schema_version(tmp_path):
    splits = make_splits(DatasetConfig(seed=1, sizes=(1, 0, 0)))
    save_dataset(splits, tmp_path / "ds")
    meta = tmp_path / "ds" / "meta.json"
    blob = json.loads(meta.read_text())
    blob["version"] = 99
    meta.write_text(json.dumps(blob))
    with pytest.raises(SchemaError, match="newer"):
        load_dataset(tmp_path / "ds")


def test_vocabulary_json_round_trip():
    blob = VOCAB.to_json()
    back = Vocabulary.from_json(json.loads(json.dumps(blob)))
    assert back.token_to_id == VOCAB.token_to_id
    assert [c.name for c in back.classes] == [c.name for c in VOCAB.classes]
