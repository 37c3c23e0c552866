import math

import numpy as np
import pytest

from helpers import clustered_table
from oracles import head_forward, lstm_encode_scalar
from qmatch.corpus import Question, QuestionPool, build_vocabulary
from qmatch.embeddings import EmbeddingTable
from qmatch.reranker import (CheckpointError, LstmParams, NadamState, PairExample, RerankerConfig,
                             RerankerModel, TrainConfig, encode, forward, gradients, handcrafted_features,
                             load_model, loss, lstm_step, nadam_step, pad_or_truncate, predict_proba,
                             save_model, train, train_examples, write_history_csv)
from qmatch.reranker.training import format_history_csv, split_indices
from qmatch.retrieval import RelationMatrix, TfIdfModel, fit_tfidf
from qmatch.corpus import Vocabulary, LabeledPair


def tiny_model(seed=0, d_embed=4, d_hidden=3, L=5, dropout=0.2, n_words=12):
    rng = np.random.default_rng(seed)
    table = EmbeddingTable([f"w{i}" for i in range(n_words)], rng.normal(size=(n_words, d_embed)), oov_seed=seed)
    model = RerankerModel.init(table, RerankerConfig(d_hidden=d_hidden, dense_hidden=6, dropout=dropout,
                                                     max_len=L), seed)
    # non-zero biases so the check covers them too
    for v in model.parameters().values():
        v += 0.1 * rng.normal(size=v.shape)
    return model, rng


def random_example(model, rng, n_words=12, label=None):
    def toks():
        return [f"w{j}" for j in rng.integers(0, n_words + 2, size=int(rng.integers(1, 8)))]
    xf = rng.uniform(0, 1, size=5)
    return PairExample(model.pad(toks()), model.pad(toks()), xf,
                       int(rng.integers(0, 2)) if label is None else label)


# --- padding and the cell ---------------------------------------------------

def test_pad_or_truncate():
    s = pad_or_truncate(["a", "b", "c"], 5)
    assert s.length == 3 and s.max_len == 5 and s.ids[3:] == (-2, -2)
    s = pad_or_truncate(list("abcdefgh"), 5)
    assert s.length == 5 and s.tokens == tuple("abcde")
    s = pad_or_truncate(list("abcde"), 5)
    assert s.length == 5 and -2 not in s.ids


def _unit_params(value, d=1):
    p = LstmParams.zeros(d, d)
    for arr in p.as_dict().values():
        arr[...] = value
    return p


def test_lstm_step_hand_values():
    p = LstmParams.zeros(1, 1)
    h, c = lstm_step(p, np.ones(1), np.zeros(1), np.zeros(1))
    assert h[0] == 0.0 and c[0] == 0.0

    p = _unit_params(1.0)
    p.b_i[:] = p.b_f[:] = p.b_c[:] = p.b_o[:] = 0.0
    h, c = lstm_step(p, np.ones(1), np.zeros(1), np.zeros(1))
    s1 = 1 / (1 + math.exp(-1))
    assert s1 == pytest.approx(0.7311, abs=1e-4)
    # c = σ(1)·tanh(1), h = σ(1)·tanh(c)
    assert c[0] == pytest.approx(s1 * math.tanh(1), abs=1e-15) and c[0] == pytest.approx(0.5568, abs=1e-4)
    assert h[0] == pytest.approx(s1 * math.tanh(c[0]), abs=1e-15) and h[0] == pytest.approx(0.3696, abs=1e-4)


def test_lstm_step_saturated_gates_keep_cell():
    p = LstmParams.zeros(2, 3)
    p.b_f[:] = 10.0
    p.b_i[:] = -10.0
    c_prev = np.array([0.5, -1.0, 2.0])
    _, c = lstm_step(p, np.ones(2), np.zeros(3), c_prev)
    np.testing.assert_allclose(c, c_prev, atol=1e-4)


def test_encode_matches_scalar_oracle_and_ignores_padding():
    model, rng = tiny_model(1)
    seq10 = pad_or_truncate(["w1", "w5", "w3"], 10, model.table)
    seq20 = pad_or_truncate(["w1", "w5", "w3"], 20, model.table)
    h = encode(model.lstm, seq10, model.table)
    xs = [model.table.lookup(t) for t in ["w1", "w5", "w3"]]
    np.testing.assert_allclose(h, lstm_encode_scalar(model.lstm.as_dict(), xs), atol=1e-13)
    assert np.array_equal(h, encode(model.lstm, seq20, model.table))
    one = pad_or_truncate(["w2"], 4, model.table)
    h1, _ = lstm_step(model.lstm, model.table.lookup("w2"), np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(encode(model.lstm, one, model.table), h1, atol=1e-15)
    with pytest.raises(ValueError, match="empty"):
        encode(model.lstm, pad_or_truncate([], 4, model.table), model.table)


# --- features -----------------------------------------------------------------

def test_features_examples():
    vocab = Vocabulary(("a", "b", "c", "d"), (1,) * 4, (1,) * 4)
    tfidf = TfIdfModel(vocab, np.ones(4), 4)
    f = handcrafted_features(["a", "b", "c"], ["b", "c", "d"], tfidf, RelationMatrix.identity(4))
    assert f.tolist()[:3] == [2.0, 0.5, 0.0]
    assert f[3] == pytest.approx(2 / 3, abs=1e-15) and f[4] == pytest.approx(2 / 3, abs=1e-15)
    same = handcrafted_features(["a", "b", "a"], ["a", "b", "a"], tfidf)
    assert same.tolist() == pytest.approx([2.0, 1.0, 0.0, 1.0, 1.0], abs=1e-12)
    disj = handcrafted_features(["a"], ["c", "d"], tfidf, RelationMatrix.identity(4))
    assert disj.tolist() == [0.0, 0.0, 1.0, 0.0, 0.0]


def test_features_symmetric():
    table = clustered_table()
    rng = np.random.default_rng(0)
    qs = [tuple(f"w{j}" for j in rng.integers(0, 60, size=5)) for _ in range(20)]
    pool = QuestionPool(tuple(Question(f"q{i}", " ".join(t), t) for i, t in enumerate(qs)))
    from qmatch.retrieval import build_relation_matrix
    vocab = build_vocabulary(pool).extend(table.tokens)
    tfidf = fit_tfidf(pool, vocab)
    M = build_relation_matrix(table, vocab)
    for a, b in zip(qs, qs[1:]):
        assert np.array_equal(handcrafted_features(a, b, tfidf, M), handcrafted_features(b, a, tfidf, M))


# --- forward ------------------------------------------------------------------

def test_forward_matches_layer_by_layer_oracle():
    model, rng = tiny_model(2, d_embed=5, d_hidden=4)
    for _ in range(5):
        ex = random_example(model, rng)
        got = forward(model, (ex.left, ex.right), ex.features)
        xs1 = [model.table.lookup(t) for t in ex.left.tokens]
        xs2 = [model.table.lookup(t) for t in ex.right.tokens]
        p = model.lstm.as_dict()
        want = head_forward(lstm_encode_scalar(p, xs1), lstm_encode_scalar(p, xs2), ex.features,
                            model.dense_W, model.dense_b, model.out_W, model.out_b)
        assert got == pytest.approx(want, abs=1e-10)
        assert 0.0 < got < 1.0


def test_forward_train_mode_applies_dropout_mask():
    model, rng = tiny_model(3)
    ex = random_example(model, rng)
    a = forward(model, (ex.left, ex.right), ex.features, train_mode=True, rng=np.random.default_rng(5))
    keep = (np.random.default_rng(5).random((1, 6)) >= 0.2).astype(float)[0]
    p = model.lstm.as_dict()
    h1 = lstm_encode_scalar(p, [model.table.lookup(t) for t in ex.left.tokens])
    h2 = lstm_encode_scalar(p, [model.table.lookup(t) for t in ex.right.tokens])
    want = head_forward(h1, h2, ex.features, model.dense_W, model.dense_b, model.out_W, model.out_b, keep, 0.2)
    assert a == pytest.approx(want, abs=1e-10)


def test_siamese_invariants():
    model, rng = tiny_model(4)
    for _ in range(20):
        ex = random_example(model, rng)
        assert forward(model, (ex.left, ex.right), ex.features) == forward(model, (ex.right, ex.left), ex.features)
        h = encode(model.lstm, ex.left, model.table)
        assert np.all(np.abs(h - h) == 0)
        longer = pad_or_truncate(ex.left.tokens, 17, model.table)
        assert forward(model, (ex.left, ex.right), ex.features) == forward(model, (longer, ex.right), ex.features)


def test_empty_arm_rejected():
    model, rng = tiny_model(0)
    with pytest.raises(ValueError, match="empty"):
        forward(model, (model.pad([]), model.pad(["w1"])), np.zeros(5))


# --- loss and gradients ---------------------------------------------------------

def test_loss_values():
    assert loss([0.5], [1]) == pytest.approx(math.log(2), abs=1e-15)
    assert loss([1.0, 0.0], [1, 0]) < 1e-11
    assert math.isfinite(loss([0.0], [1]))


def _numeric_grad(model, batch, name, idx, step=1e-5):
    arr = model.parameters()[name]
    old = arr[idx]
    arr[idx] = old + step
    lp, _ = gradients(model, batch)
    arr[idx] = old - step
    lm, _ = gradients(model, batch)
    arr[idx] = old
    return (lp - lm) / (2 * step)


def max_relative_gradient_error(model, batch, keep=None):
    _, grads = gradients(model, batch, keep)
    worst = 0.0
    for name, g in grads.items():
        for idx in np.ndindex(g.shape):
            if keep is not None:
                arr = model.parameters()[name]
                old = arr[idx]
                arr[idx] = old + 1e-5
                lp, _ = gradients(model, batch, keep)
                arr[idx] = old - 1e-5
                lm, _ = gradients(model, batch, keep)
                arr[idx] = old
                num = (lp - lm) / 2e-5
            else:
                num = _numeric_grad(model, batch, name, idx)
            denom = max(abs(num), abs(g[idx]), 1e-7)
            worst = max(worst, abs(num - g[idx]) / denom)
    return worst


@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_finite_differences(seed):
    model, rng = tiny_model(seed)
    batch = [random_example(model, rng) for _ in range(4)]
    assert max_relative_gradient_error(model, batch) < 1e-4


def test_gradients_with_fixed_dropout_mask():
    model, rng = tiny_model(9)
    batch = [random_example(model, rng) for _ in range(3)]
    keep = (rng.random((3, 6)) >= 0.2).astype(float)
    assert max_relative_gradient_error(model, batch, keep) < 1e-4


def test_duplicated_example_gradient_equals_single():
    model, rng = tiny_model(5)
    ex = random_example(model, rng)
    l1, g1 = gradients(model, [ex])
    l2, g2 = gradients(model, [ex, ex])
    assert l1 == pytest.approx(l2, abs=1e-15)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], atol=1e-15)
    with pytest.raises(ValueError):
        gradients(model, [])


def test_single_parameter_set_serves_both_arms():
    model, rng = tiny_model(6)
    ex = random_example(model, rng)
    before = forward(model, (ex.left, ex.left), ex.features)
    model.lstm.W_i += 0.5
    after = forward(model, (ex.left, ex.left), ex.features)
    assert before != after
    assert len({id(v) for v in model.parameters().values()}) == len(model.parameters())


# --- nadam --------------------------------------------------------------------

def nadam_reference(w, grads_seq, lr=0.002, b1=0.9, b2=0.999, eps=1e-8, decay=0.004):
    m = v = 0.0
    sched = 1.0
    for t, g in enumerate(grads_seq, start=1):
        mu = b1 * (1 - 0.5 * 0.96 ** (t * decay))
        mu1 = b1 * (1 - 0.5 * 0.96 ** ((t + 1) * decay))
        sched_new = sched * mu
        sched_next = sched_new * mu1
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mbar = (1 - mu) * g / (1 - sched_new) + mu1 * m / (1 - sched_next)
        w = w - lr * mbar / (math.sqrt(v / (1 - b2 ** t)) + eps)
        sched = sched_new
    return w


def test_nadam_matches_reference():
    gs = [0.3, -1.2, 0.05, 2.0, 0.7]
    params = {"w": np.array([1.5])}
    state = NadamState()
    for g in gs:
        nadam_step(state, params, {"w": np.array([g])})
    assert params["w"][0] == pytest.approx(nadam_reference(1.5, gs), abs=1e-14)
    assert state.t == 5


def test_nadam_zero_gradient_and_quadratic_descent():
    params = {"w": np.array([1.0, -2.0])}
    nadam_step(NadamState(), params, {"w": np.zeros(2)})
    assert params["w"].tolist() == [1.0, -2.0]
    w = {"w": np.array([1.0])}
    state = NadamState(lr=0.002)
    for _ in range(200):
        nadam_step(state, w, {"w": 2 * w["w"]})
    assert abs(w["w"][0]) < 1.0


def test_nadam_errors():
    with pytest.raises(FloatingPointError):
        nadam_step(NadamState(), {"w": np.zeros(1)}, {"w": np.array([np.nan])})
    with pytest.raises(ValueError, match="shape"):
        nadam_step(NadamState(), {"w": np.zeros(1)}, {"w": np.zeros(2)})


# --- training -------------------------------------------------------------------

def test_split_ninety_ten():
    tr, va = split_indices(100, 0.1, 0)
    assert len(tr) == 90 and len(va) == 10
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(100))
    assert np.array_equal(split_indices(100, 0.1, 0)[1], va)


def _separable(model, rng, n=80):
    out = []
    for i in range(n):
        toks = [f"w{j}" for j in rng.integers(0, 12, size=4)]
        other = [f"w{j}" for j in rng.integers(0, 12, size=4)]
        if i % 2:
            out.append(PairExample(model.pad(toks), model.pad(toks[::-1] if i % 4 == 1 else toks), np.array([4, 1, 0, 1, 1.0]), 1))
        else:
            out.append(PairExample(model.pad(toks), model.pad(other), np.array([0, 0, 0, 0, 0.0]), 0))
    return out


def test_training_deterministic_and_records_history(tmp_path):
    runs = []
    for _ in range(2):
        model, rng = tiny_model(7, dropout=0.3)
        res = train_examples(model, _separable(model, rng), TrainConfig(epochs=5, batch_size=8, seed=3))
        runs.append(res)
    a, b = runs
    assert a.history == b.history and a.best_epoch == b.best_epoch
    for k, v in a.model.parameters().items():
        assert np.array_equal(v, b.model.parameters()[k])
    assert len(a.train_indices) == 72 and len(a.val_indices) == 8
    best = min(a.history, key=lambda r: r["val_loss"])
    assert a.best_epoch == best["epoch"]
    csv_text = format_history_csv(a.history)
    assert csv_text.splitlines()[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert len(csv_text.splitlines()) == 6
    write_history_csv(a.history, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == csv_text


def test_training_rejects_single_label():
    model, rng = tiny_model(0)
    exs = [random_example(model, rng, label=1) for _ in range(5)]
    with pytest.raises(ValueError, match="both labels"):
        train_examples(model, exs)
    q = Question("a", "w1", ("w1",))
    with pytest.raises(ValueError, match="both labels"):
        train(model, [LabeledPair("p", q, q, 1)], TrainConfig(), tfidf=None or _tfidf())


def _tfidf():
    vocab = Vocabulary(("w1",), (1,), (1,))
    return TfIdfModel(vocab, np.ones(1), 1)


def test_training_reduces_loss():
    model, rng = tiny_model(8, dropout=0.0)
    exs = _separable(model, rng, 120)
    res = train_examples(model, exs, TrainConfig(epochs=30, batch_size=16, lr=0.01, seed=0))
    assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]
    assert res.history[-1]["train_acc"] >= 0.9


# --- checkpoints ----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    model, rng = tiny_model(3)
    path = tmp_path / "m.bin"
    save_model(model, path)
    again = load_model(path, model.table)
    for k, v in model.parameters().items():
        assert np.array_equal(v, again.parameters()[k])
    assert again.config == model.config
    exs = [random_example(model, rng) for _ in range(100)]
    assert np.array_equal(predict_proba(model, exs), predict_proba(again, exs))
    save_model(again, tmp_path / "m2.bin")
    assert (tmp_path / "m2.bin").read_bytes() == path.read_bytes()


def test_checkpoint_errors(tmp_path):
    model, _ = tiny_model(3)
    path = tmp_path / "m.bin"
    save_model(model, path)
    data = path.read_bytes()
    (tmp_path / "t.bin").write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "t.bin", model.table)
    other, _ = tiny_model(4)
    with pytest.raises(CheckpointError, match="embedding"):
        load_model(path, other.table)
    bad = bytearray(data)
    bad[4:8] = (99).to_bytes(4, "little")
    (tmp_path / "v.bin").write_bytes(bytes(bad))
    with pytest.raises(CheckpointError, match="version"):
        load_model(tmp_path / "v.bin", model.table)
