"""Model architecture tests: partitions, fusion, alignment, box codec,
prompts, checkpointing, and cross-backend golden determinism."""

import os

import numpy as np
import pytest

from cones_lab._kernels import BACKEND
from cones_lab.autodiff import Tensor, no_grad
from cones_lab.data import build_default_vocabulary
from cones_lab.model import (ConceptPrompt, PARTITIONS, TextPrompt, VlmConfig,
                             VlmModel, context_prompt, detection_prompt,
                             load_checkpoint, pseudoword_prompt,
                             save_checkpoint)
from cones_lab.model.layers import MultiHeadAttention
from cones_lab.rng import Rng
from cones_lab.tensor_io import read_tensor_dir, write_tensor_dir

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "goldens")


@pytest.fixture(scope="module")
def vocab():
    return build_default_vocabulary()


@pytest.fixture(scope="module")
def model(vocab):
    return VlmModel(VlmConfig(), Rng(0))


def fixed_images(n=2, seed=5):
    return Rng(seed).random((n, 32, 32, 3))


# ---- partitions and counting ----

def test_partitions_exhaustive_and_disjoint(model):
    names = list(model.parameters())
    for name in names:
        assert VlmModel.partition_of(name) in PARTITIONS
    seen = {}
    for name, t in model.parameters().items():
        assert id(t) not in seen, f"{name} aliases {seen.get(id(t))}"
        seen[id(t)] = name


def test_count_parameters_totals(model):
    counts = model.count_parameters()
    assert counts["total"] == sum(counts[p] for p in PARTITIONS)
    assert counts["total_without_text"] == counts["total"] - counts["text"]
    trimmed = model.count_parameters(include_text_encoder=False)
    assert "text" not in trimmed
    assert trimmed["total"] == counts["total_without_text"]


def test_reference_scale_arithmetic():
    # full-model vs text-free footprint of the reference-scale grounding
    # model quoted in the docs: dropping the text side saves 108.70M
    assert abs((231.76 - 123.06) - 108.70) < 1e-9


def test_fusion_disabled_partition_empty():
    m = VlmModel(VlmConfig(fusion=False), Rng(0))
    assert m.count_parameters()["fusion"] == 0


def test_tau_outside_partitions(model):
    assert "calibration.tau" not in model.parameters()
    total = sum(t.size for t in model.parameters().values())
    assert model.count_parameters()["total"] == total


def test_set_trainable_selectively(model):
    model.set_trainable("heads")
    for name, t in model.parameters().items():
        assert t.requires_grad == (VlmModel.partition_of(name) == "heads")
    model.freeze_all()
    assert not any(t.requires_grad for t in model.parameters().values())


# ---- attention ----

def test_attention_rows_sum_to_one():
    mha = MultiHeadAttention(64, 4, Rng(9))
    x = Tensor(Rng(1).normal(0, 1, (2, 7, 64)))
    w = mha.attention_weights(x, x)
    assert np.allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)


def test_cross_attention_hand_case():
    # one head, d=2, identity projections: softmax(q k^T / sqrt(2)) v
    mha = MultiHeadAttention(2, 1, Rng(0))
    eye = np.eye(2)
    for lin in (mha.wq, mha.wk, mha.wv, mha.wo):
        lin.w.data[...] = eye
        lin.b.data[...] = 0.0
    q = Tensor(np.array([[[1.0, 0.0]]]))
    kv = Tensor(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    out = mha(q, kv).data[0, 0]
    s = np.exp(1.0 / np.sqrt(2.0))
    w1, w2 = s / (s + 1.0), 1.0 / (s + 1.0)
    assert np.allclose(out, [w1, w2], atol=1e-12)


# ---- fusion ----

def test_fusion_identity_at_zero_output_projection(vocab):
    base = VlmModel(VlmConfig(), Rng(0))
    plain = VlmModel(VlmConfig(fusion=False), Rng(0))
    for layer in base.fusion:
        for mha in (layer.i2t, layer.t2i):
            mha.wo.w.data[...] = 0.0
            mha.wo.b.data[...] = 0.0
    prompt = detection_prompt(vocab, vocab.in_domain_ids())
    patches = base.patchify(fixed_images())
    with no_grad():
        fused = base.ground(patches, prompt)
        off = plain.ground(patches, prompt)
    assert np.array_equal(fused.logits.data, off.logits.data)
    assert np.array_equal(fused.box_deltas.data, off.box_deltas.data)


def test_fusion_changes_outputs(vocab):
    base = VlmModel(VlmConfig(), Rng(0))
    plain = VlmModel(VlmConfig(fusion=False), Rng(0))
    prompt = detection_prompt(vocab, vocab.in_domain_ids())
    patches = base.patchify(fixed_images())
    with no_grad():
        assert not np.allclose(base.ground(patches, prompt).logits.data,
                               plain.ground(patches, prompt).logits.data)


def test_image_prefix_matches_ground(vocab, model):
    prompt = detection_prompt(vocab, vocab.in_domain_ids())
    patches = model.patchify(fixed_images())
    with no_grad():
        direct = model.ground(patches, prompt)
        pre = model.image_prefix(patches)
        via = model.ground(None, prompt, image_prefix=pre)
    assert np.array_equal(direct.logits.data, via.logits.data)
    assert np.array_equal(direct.pre_fusion_v.data, pre.data)


# ---- alignment ----

def test_alignment_softmax_hand_case(model):
    old = model.tau.data.copy()
    model.tau.data[...] = 1.0
    try:
        v = Tensor(np.array([[[1.0, 0.0]]]))
        p = Tensor(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
        logits = model.alignment_logits(v, p)
        assert np.allclose(logits.data[0, 0], [1.0, 0.0], atol=1e-12)
        probs = logits.softmax().data[0, 0]
        e = np.exp(1.0)
        assert abs(probs[0] - e / (e + 1.0)) < 1e-12
        assert abs(probs[0] - 0.7310585786300049) < 1e-12
    finally:
        model.tau.data[...] = old


def test_alignment_cosine_scale_invariant(model):
    r = Rng(4)
    v = Tensor(r.normal(0, 1, (1, 5, 8)))
    p = Tensor(r.normal(0, 1, (1, 3, 8)))
    a = model.alignment_logits(v, p).data
    b = model.alignment_logits(Tensor(v.data * 3.7), Tensor(p.data * 0.2)).data
    assert np.allclose(a, b, atol=1e-12)


def test_alignment_zero_norm_raises(model):
    v = Tensor(np.zeros((1, 2, 8)))
    p = Tensor(np.ones((1, 2, 8)))
    with pytest.raises(ValueError, match="zero-norm"):
        model.alignment_logits(v, p)


def test_probs_row_sums(vocab, model):
    prompt = detection_prompt(vocab, vocab.in_domain_ids())
    with no_grad():
        out = model.ground(model.patchify(fixed_images()), prompt)
    assert np.allclose(out.probs.data.sum(axis=-1), 1.0, atol=1e-12)


# ---- box codec ----

def test_box_round_trip(model):
    checked = 0
    for trial in range(80):
        r = Rng(300 + trial)
        region = int(r.integers(0, 64, ()))
        cx = (region % 8) * 4 + 2 + float(r.uniform(-1.9, 1.9, ()))
        cy = (region // 8) * 4 + 2 + float(r.uniform(-1.9, 1.9, ()))
        w = float(r.uniform(1.0, 10.0, ()))
        h = float(r.uniform(1.0, 10.0, ()))
        box = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        if box[0] < 0 or box[1] < 0 or box[2] > 32 or box[3] > 32:
            continue
        deltas = model.encode_box(box, region)
        back = model.decode_boxes(Tensor(deltas.reshape(1, 4)),
                                  regions=np.array([region])).data[0]
        assert np.abs(back - np.array(box)).max() < 1e-9
        checked += 1
    assert checked >= 40


def test_zero_deltas_decode_to_patch_cell(model):
    with no_grad():
        boxes = model.decode_boxes(Tensor(np.zeros((1, 64, 4)))).data[0]
    assert np.allclose(boxes[0], [0, 0, 4, 4])
    assert np.allclose(boxes[9], [4, 4, 8, 8])
    assert np.allclose(boxes[63], [28, 28, 32, 32])


def test_box_decode_clamps_to_canvas(model):
    big = np.full((1, 64, 4), 6.0)   # huge width/height via sigmoid ~ 1
    with no_grad():
        boxes = model.decode_boxes(Tensor(big)).data[0]
    assert boxes.min() >= 0.0 and boxes.max() <= 32.0
    assert np.all(boxes[:, 2] >= boxes[:, 0]) and np.all(boxes[:, 3] >= boxes[:, 1])


def test_center_region(model):
    assert model.center_region((0.0, 0.0, 4.0, 4.0)) == 0
    assert model.center_region((28.0, 28.0, 32.0, 32.0)) == 63
    # center (12, 4) falls in grid column 3, row 1
    assert model.center_region((10.0, 2.0, 14.0, 6.0)) == 11
    # center exactly on the right/bottom edge clamps into the last cell
    assert model.center_region((30.0, 30.0, 34.0, 34.0)) == 63


# ---- prompts ----

def test_detection_prompt_layout(vocab):
    ids = vocab.in_domain_ids()
    prompt = detection_prompt(vocab, ids)
    assert len(prompt.token_ids) == 35   # 12 two-word names + 11 separators
    assert len(prompt.spans) == 12
    for cid, start, stop in prompt.spans:
        words = vocab.class_name(cid).split()
        assert stop - start == len(words)
        assert [int(t) for t in prompt.token_ids[start:stop]] == \
            [vocab.token_to_id[w] for w in words]


def test_context_prompt_odd_m_leads(vocab):
    prompt, slots = context_prompt(vocab, [0, 1], m=3)
    for (cid, start, stop), mine in zip(prompt.spans, slots):
        assert len(mine) == 3
        before = [p for p in mine if p < start]
        after = [p for p in mine if p >= stop]
        assert len(before) == 2 and len(after) == 1


def test_context_prompt_m_zero_is_zero_shot(vocab):
    plain = detection_prompt(vocab, [0, 5, 7])
    ctx, slots = context_prompt(vocab, [0, 5, 7], m=0)
    assert np.array_equal(plain.token_ids, ctx.token_ids)
    assert plain.spans == ctx.spans
    assert all(s == [] for s in slots)


def test_pseudoword_prompt_spans_cover_slots(vocab):
    prompt, slots = pseudoword_prompt(vocab, vocab.out_domain_ids(), m=3)
    for (cid, start, stop), mine in zip(prompt.spans, slots):
        assert list(range(start, stop)) == mine
    with pytest.raises(ValueError):
        pseudoword_prompt(vocab, [0], m=0)


def test_prompt_rejects_bad_tokens(vocab, model):
    bad = TextPrompt(np.array([0, 99]), [(0, 0, 2)])
    with pytest.raises(ValueError, match="vocabulary"):
        model.ground(model.patchify(fixed_images(1)), bad)


def test_text_eval_counter(vocab, model):
    prompt = detection_prompt(vocab, vocab.in_domain_ids())
    patches = model.patchify(fixed_images(1))
    before = model.text_eval_count
    with no_grad():
        model.ground(patches, prompt)
    assert model.text_eval_count == before + 1
    concepts = ConceptPrompt(Tensor(Rng(3).normal(0, 0.02, (2, 3, 64))), [12, 13])
    with no_grad():
        model.ground(patches, concepts)
    assert model.text_eval_count == before + 1


def test_span_permutation_symmetry_without_positions(vocab, model):
    """With positions disabled the prompt encoder treats class groups as a
    set: permuting them permutes the logit columns and nothing else."""
    ids = [0, 3, 7]
    fwd = detection_prompt(vocab, ids)
    rev = detection_prompt(vocab, list(reversed(ids)))
    fwd.use_positions = rev.use_positions = False
    patches = model.patchify(fixed_images())
    with no_grad():
        a = model.ground(patches, fwd).logits.data
        b = model.ground(patches, rev).logits.data
    assert np.allclose(a, b[:, :, ::-1], atol=1e-9)


# ---- checkpointing ----

def test_checkpoint_round_trip(tmp_path, vocab):
    m = VlmModel(VlmConfig(), Rng(11))
    m.set_trainable("heads", "fusion")
    m.tau.data[...] = 0.123
    save_checkpoint(m, str(tmp_path / "ck"), seed=11, step=42,
                    extra={"note": "x"})
    back, manifest = load_checkpoint(str(tmp_path / "ck"))
    assert manifest["step"] == 42 and manifest["seed"] == 11
    for name, t in m.parameters().items():
        assert np.array_equal(t.data, back.parameters()[name].data), name
        assert t.requires_grad == back.parameters()[name].requires_grad
    assert float(back.tau.data) == 0.123
    prompt = detection_prompt(vocab, [0, 1])
    patches = m.patchify(fixed_images(1))
    with no_grad():
        assert np.array_equal(m.ground(patches, prompt).logits.data,
                              back.ground(patches, prompt).logits.data)


def test_checkpoint_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "nope"))


def test_checkpoint_shape_guard(tmp_path):
    m = VlmModel(VlmConfig(), Rng(0))
    save_checkpoint(m, str(tmp_path / "ck"), seed=0)
    victim = tmp_path / "ck" / "image__pos.tsr"
    from cones_lab.tensor_io import write_tensor
    write_tensor(str(victim), np.zeros((2, 2)), name="image.pos")
    with pytest.raises(ValueError, match="shape mismatch"):
        load_checkpoint(str(tmp_path / "ck"))


# ---- golden determinism ----

def test_forward_matches_golden(vocab):
    """Fixed seed and input produce byte-stable outputs per kernel backend.

    Refresh with CONES_LAB_REFRESH_GOLDENS=1 after intentional model
    changes.
    """
    m = VlmModel(VlmConfig(), Rng(0))
    prompt = detection_prompt(vocab, vocab.in_domain_ids())
    patches = m.patchify(fixed_images())
    with no_grad():
        out = m.ground(patches, prompt)
    got = {"logits": out.logits.data, "box_deltas": out.box_deltas.data,
           "mask_logits": out.mask_logits.data}
    path = os.path.join(GOLDEN_DIR, f"model_fwd_{BACKEND}")
    if os.environ.get("CONES_LAB_REFRESH_GOLDENS") == "1" or not os.path.isdir(path):
        write_tensor_dir(path, got)
    want = read_tensor_dir(path)
    for key in got:
        assert np.array_equal(got[key], want[key]), key
