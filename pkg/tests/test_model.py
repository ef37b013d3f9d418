import numpy as np
import pytest

from issuebert import checkpoint, nncore
from issuebert import model as M
from issuebert.corpus import IssueLabel
from issuebert.errors import CheckpointIntegrityError, CheckpointVersionError, ConfigError, InputError
from issuebert.tokenizer import SPECIAL_TOKENS, Vocabulary, encode

import gradcheck
from oracles import model_forward_oracle

GOLDEN_CFG = M.EncoderConfig(layers=1, hidden=8, heads=2, vocab_size=12, max_positions=16)
GOLDEN_IDS = np.array([[2, 5, 7, 9, 3, 0, 0], [2, 11, 4, 4, 6, 8, 3]])
GOLDEN_MASK = np.array([[1, 1, 1, 1, 1, 0, 0], [1, 1, 1, 1, 1, 1, 1]])
# Recorded from the list-based oracle in oracles.model_forward_oracle, seed 7, float64.
GOLDEN = {
    1.0: [
        [-0.001663372659529652, 0.0017962228784146731, 0.0013268212063897544],
        [-0.0016643757815343453, 0.0017943471749658016, 0.0013256239951765303],
    ],
    25.0: [
        [-0.5636032349103222, 0.09298215498605442, 0.9659476918391581],
        [-0.8417965437358448, 0.02011327320028189, 0.050359950706115056],
    ],
}
_SCALED = (".w", ".wq", ".wk", ".wv", ".wo", ".w1", ".w2")


def golden_model(scale, dtype=np.float64):
    m = M.init(GOLDEN_CFG, seed=7, dtype=dtype)
    for p in m.parameters():
        if p.name.endswith(_SCALED) or p.name in ("embeddings.token", "embeddings.position"):
            p.value *= scale
    return m


def small_vocab():
    return Vocabulary(list(SPECIAL_TOKENS) + ["crash", "add", "feature", "how", "?", "bug"])


@pytest.mark.parametrize("scale", sorted(GOLDEN))
def test_golden_logits(scale):
    out, _ = M.forward(golden_model(scale), GOLDEN_IDS, GOLDEN_MASK)
    np.testing.assert_allclose(out, GOLDEN[scale], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("scale", sorted(GOLDEN))
def test_golden_logits_float32(scale):
    out, _ = M.forward(golden_model(scale, np.float32), GOLDEN_IDS, GOLDEN_MASK)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, GOLDEN[scale], rtol=1e-3, atol=1e-5)


def test_forward_matches_live_oracle():
    rng = np.random.default_rng(0)
    for seed in range(3):
        m = gradcheck.tiny_model(seed, np.float64, layers=2)
        params = {n: p.value for n, p in m.params.items()}
        ids = rng.integers(0, m.config.vocab_size, size=(2, 5))
        mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]])
        out, _ = M.forward(m, ids, mask)
        for row in range(2):
            ref = model_forward_oracle(params, ids[row].tolist(), mask[row].tolist(), 2, m.config.heads)
            np.testing.assert_allclose(out[row], ref, rtol=1e-9, atol=1e-12)


def test_init_deterministic():
    cfg = M.EncoderConfig(layers=2, hidden=32, heads=4, vocab_size=50)
    a, b = M.init(cfg, 3), M.init(cfg, 3)
    for p, q in zip(a.parameters(), b.parameters()):
        assert p.name == q.name and p.value.tobytes() == q.value.tobytes()
    assert M.init(cfg, 4).params["head.w"].value.tobytes() != a.params["head.w"].value.tobytes()


def test_init_config_errors():
    M.init(M.EncoderConfig(layers=1, hidden=32, heads=4, vocab_size=10))
    with pytest.raises(ConfigError, match="divisible"):
        M.init(M.EncoderConfig(layers=1, hidden=30, heads=4, vocab_size=10))
    with pytest.raises(ConfigError):
        M.init(M.EncoderConfig(layers=1, hidden=8, heads=2, vocab_size=10, num_labels=4))


def test_init_distribution():
    m = M.init(M.EncoderConfig(layers=2, hidden=32, heads=4, vocab_size=100), seed=1)
    for p in m.parameters():
        if p.name.rsplit(".", 1)[-1].startswith("b"):
            # biases and layer-norm betas
            assert not p.value.any(), p.name
        if p.name.endswith(".gamma"):
            assert (p.value == 1).all()
        else:
            assert np.abs(p.value).max() <= 0.04
    w = m.params["embeddings.token"].value
    # A N(0, 0.02) truncated at 2 sigma has std about 0.88 * 0.02.
    assert 0.016 < w.std() < 0.019


def test_parameter_registry_and_count():
    rng = np.random.default_rng(9)
    for _ in range(5):
        heads = int(rng.integers(1, 4))
        cfg = M.EncoderConfig(
            layers=int(rng.integers(1, 4)),
            hidden=heads * int(rng.integers(1, 6)),
            heads=heads,
            vocab_size=int(rng.integers(5, 60)),
            ff_dim=int(rng.integers(1, 20)),
            max_positions=int(rng.integers(2, 40)),
        )
        m = M.init(cfg)
        names = [p.name for p in m.parameters()]
        assert len(set(names)) == len(names)
        assert sum(p.value.size for p in m.parameters()) == cfg.param_count()


def test_bert_large_shape_count():
    cfg = M.EncoderConfig(vocab_size=30522, **M.BERT_LARGE)
    embeddings = 30522 * 1024 + 128 * 1024 + 2 * 1024
    block = 4 * (1024 * 1024 + 1024) + (1024 * 4096 + 4096) + (4096 * 1024 + 1024) + 4 * 1024
    heads = (1024 * 1024 + 1024) + (1024 * 3 + 3)
    assert embeddings + 24 * block + heads == 334_749_699
    assert cfg.param_count() == 334_749_699


def test_softmax_of_logits_and_duplicate_rows():
    m = gradcheck.tiny_model(1, np.float32)
    ids = np.array([[2, 5, 6, 3], [2, 5, 6, 3]])
    out, _ = M.forward(m, ids, np.ones_like(ids))
    np.testing.assert_array_equal(out[0], out[1])
    assert np.all(np.abs(nncore.softmax(out).sum(axis=1) - 1) <= 1e-6)


def test_batch_permutation():
    m = gradcheck.tiny_model(2, np.float64)
    rng = np.random.default_rng(0)
    ids = rng.integers(0, 13, size=(5, 6))
    mask = (rng.random((5, 6)) < 0.8).astype(int)
    mask[:, 0] = 1
    out, _ = M.forward(m, ids, mask)
    perm = rng.permutation(5)
    out_p, _ = M.forward(m, ids[perm], mask[perm])
    np.testing.assert_allclose(out_p, out[perm], rtol=1e-12, atol=1e-14)


def test_pad_positions_are_ignored():
    m = gradcheck.tiny_model(3, np.float64, layers=2)
    rng = np.random.default_rng(4)
    for _ in range(100):
        s = int(rng.integers(2, 10))
        real = int(rng.integers(1, s))
        ids = rng.integers(0, 13, size=(1, s))
        mask = np.zeros((1, s), dtype=int)
        mask[0, :real] = 1
        base, _ = M.forward(m, ids, mask)
        ids2 = ids.copy()
        ids2[0, real:] = rng.integers(0, 13, size=s - real)
        other, _ = M.forward(m, ids2, mask)
        np.testing.assert_allclose(other, base, rtol=0, atol=1e-12)


def test_forward_rejects_bad_ids():
    m = gradcheck.tiny_model(0, np.float32)
    with pytest.raises(InputError, match="position 2"):
        M.forward(m, np.array([[2, 4, 13]]), np.ones((1, 3)))
    with pytest.raises(InputError, match="max_positions"):
        M.forward(m, np.zeros((1, 17), dtype=int), np.ones((1, 17)))


@pytest.mark.parametrize("dtype", [np.float32, np.float64], ids=["f32", "f64"])
def test_end_to_end_gradient(dtype):
    _, tol = gradcheck.TOLERANCES[dtype]
    assert max(gradcheck.check_model(seed, dtype) for seed in range(20)) < tol


def test_predict_zero_head_is_uniform():
    vocab = small_vocab()
    m = M.init(M.EncoderConfig(layers=1, hidden=8, heads=2, vocab_size=len(vocab)), seed=0, vocab=vocab)
    m.params["head.w"].value[:] = 0
    label, probs = M.predict(m, vocab, "crash on add")
    assert label is IssueLabel.BUG
    np.testing.assert_array_equal(probs, np.full(3, 1 / 3, dtype=probs.dtype))


def test_predict_probabilities():
    vocab = small_vocab()
    m = M.init(M.EncoderConfig(layers=1, hidden=8, heads=2, vocab_size=len(vocab)), seed=5, vocab=vocab)
    m.params["head.w"].value += 1.0
    texts = ["crash", "how to add a feature?", "", "unknownword " * 200]
    probs = M.predict_proba(m, vocab, texts)
    assert probs.shape == (4, 3)
    assert np.all(np.abs(probs.sum(axis=1) - 1) <= 1e-6)
    for t, row in zip(texts, probs):
        label, p = M.predict(m, vocab, t)
        assert int(label) == int(np.argmax(row))
        np.testing.assert_allclose(p, row, rtol=1e-6)


def test_init_rejects_vocab_size_mismatch():
    with pytest.raises(ConfigError, match="vocab"):
        M.init(M.EncoderConfig(layers=1, hidden=8, heads=2, vocab_size=99), vocab=small_vocab())


def test_checkpoint_round_trip(tmp_path):
    vocab = small_vocab()
    m = gradcheck.tiny_model(4, np.float32, vocab_size=len(vocab))
    m.vocab = vocab
    M.save_checkpoint(m, tmp_path / "m.ckpt")
    back = M.load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == m.config and back.vocab == vocab
    for p in m.parameters():
        assert back.params[p.name].value.tobytes() == p.value.tobytes()
    enc = [encode("crash feature bug", vocab), encode("how ?", vocab)]
    assert M.logits(back, enc).tobytes() == M.logits(m, enc).tobytes()


def test_checkpoint_size(tmp_path):
    cfg = M.EncoderConfig(layers=2, hidden=32, heads=4, vocab_size=100)
    m = M.init(cfg)
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(m, path)
    manifest_len = int.from_bytes(path.read_bytes()[8:12], "little")
    assert path.stat().st_size == 4 * cfg.param_count() + manifest_len + 12
    assert manifest_len < 0.1 * 4 * cfg.param_count()


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(gradcheck.tiny_model(0, np.float32), path)
    data = path.read_bytes()
    path.write_bytes(data[:-7])
    with pytest.raises(CheckpointIntegrityError):
        M.load_checkpoint(path)
    path.write_bytes(data[:-4] + bytes(4))
    with pytest.raises(CheckpointIntegrityError):
        M.load_checkpoint(path)
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointIntegrityError):
        M.load_checkpoint(path)


def test_checkpoint_schema_mismatch(tmp_path):
    m = gradcheck.tiny_model(0, np.float32)
    arrays = [(n, p.value) for n, p in m.params.items()]
    cfg = m.config.to_dict()
    checkpoint.write(tmp_path / "a.ckpt", M.MODEL_TYPE, {**cfg, "dropout": 0.1}, arrays)
    with pytest.raises(CheckpointVersionError):
        M.load_checkpoint(tmp_path / "a.ckpt")
    checkpoint.write(tmp_path / "b.ckpt", M.MODEL_TYPE, {**cfg, "layers": 2}, arrays)
    with pytest.raises(CheckpointVersionError):
        M.load_checkpoint(tmp_path / "b.ckpt")
    checkpoint.write(tmp_path / "c.ckpt", "baseline", cfg, arrays)
    with pytest.raises(CheckpointVersionError):
        M.load_checkpoint(tmp_path / "c.ckpt")
