import numpy as np
import pytest

from driftbench.data import BatchPlan, Dataset, Schema
from driftbench.errors import DegenerateClassError, ExternalMethodError, NotTrainable, ProtocolError, SchemaError
from driftbench.evaluation import recall_at_fpr
from driftbench.models import (
    LogisticRegression,
    MethodSpec,
    ModelSpec,
    early_stopping,
    holdout_split,
    run_external,
    score,
    select_training_data,
    train,
)
from driftbench.models.nets import MLP, Encoder, flatten, unflatten
from driftbench.sampler import DomainSet
from driftbench.scheduler import ScheduleConfig, baf_schedule, build_timeline, split_at
from synth import make_dataset, schema

TWO = Schema.from_dict({
    "features": [{"name": "a", "kind": "numerical"}, {"name": "b", "kind": "numerical"}],
    "label_column": "y", "event_time_column": "t",
})


def _separable(n=400, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, 2))
    w = np.array([1.0, -1.0]) / np.sqrt(2)
    m = x @ w
    x = x + np.outer(np.where(m >= 0, 0.5, -0.5), w)  # margin 1 around the hyperplane
    y = (m >= 0).astype(int)
    t = np.sort(gen.uniform(0, 10, n))
    return Dataset(TWO, x, np.empty((n, 0)), y, t, t, np.arange(n))


def _lr(**kw):
    return MethodSpec("lr", "all_labeled", model=ModelSpec(**{"max_epochs": 20, **kw}), batch_plan=BatchPlan(64, 0.1))


def test_holdout_latest_thirty_percent():
    ds = make_dataset(10).take(np.arange(9, -1, -1))
    tr, ho = holdout_split(ds)
    assert len(tr) == 7 and len(ho) == 3
    assert sorted(ho.event_time) == sorted(np.sort(ds.event_time)[-3:])


def _view(step=1, delay=1.0, cfg=None):
    doms = DomainSet(
        [make_dataset(400, seed=s, label_delay=delay, domain_id=s) for s in range(4)], anchors=[0] * 4
    )
    return split_at(doms, build_timeline(cfg or baf_schedule()), step)


def test_target_only_not_trainable_first_split():
    view = _view(step=1, delay=2.0, cfg=ScheduleConfig(0, 3, 8, 1, 2))
    with pytest.raises(NotTrainable):
        select_training_data(view, "target_only")


def test_selection_domains():
    view = _view(step=4)
    tr, ho = select_training_data(view, "all_labeled")
    assert sorted(tr) == [0, 1, 2, 3]
    for d in tr:
        n = len(view.labeled[d])
        assert len(ho[d]) == (3 * n + 5) // 10
        assert len(tr[d]) + len(ho[d]) == n
        assert tr[d].event_time.max() <= ho[d].event_time.min()
    assert sorted(select_training_data(view, "source_only")[0]) == [1, 2, 3]
    assert sorted(select_training_data(view, "target_only")[0]) == [0]


def test_separable_recall():
    ds = _separable()
    tr, ho = holdout_split(ds)
    model = train(_lr(learning_rate=0.5), {0: tr}, {0: ho}, seed=1)
    assert recall_at_fpr(score(model, ho), ho.labels, 0.01) >= 0.95
    s = score(model, tr)
    assert s[tr.labels == 1].min() > s[tr.labels == 0].max()


def test_training_deterministic():
    ds = _separable(seed=3)
    tr, ho = holdout_split(ds)
    a = train(_lr(), {0: tr}, {0: ho}, seed=5)
    b = train(_lr(), {0: tr}, {0: ho}, seed=5)
    for x, y in zip(a.params, b.params):
        assert np.array_equal(x, y)


def test_single_class_rejected():
    ds = _separable()
    neg = ds.take(ds.labels == 0)
    with pytest.raises(DegenerateClassError):
        train(_lr(), {0: neg}, {}, seed=0)


def test_zero_weights_score_half():
    ds = _separable(20)
    model = train(_lr(max_epochs=1), {0: ds}, {}, seed=0)
    zero = type(model)(model.family, model.spec, [np.zeros_like(p) for p in model.params], model.encoder, {})
    assert np.all(score(zero, ds) == 0.5)


def test_score_permutation():
    ds = _separable(100)
    model = train(_lr(max_epochs=3), {0: ds}, {}, seed=0)
    perm = np.random.default_rng(0).permutation(100)
    np.testing.assert_array_equal(score(model, ds.take(perm)), score(model, ds)[perm])


def test_score_schema_mismatch():
    ds = _separable(50)
    model = train(_lr(max_epochs=1), {0: ds}, {}, seed=0)
    with pytest.raises(SchemaError):
        score(model, make_dataset(10))


def test_early_stopping_contract():
    values = iter([0.5, 0.4, 0.3, 0.2])
    result = early_stopping(0, lambda p, e: e, lambda p: next(values), max_epochs=10, patience=1)
    assert result.epochs_run == 2
    assert result.best_epoch == 1
    assert result.params == 1


def test_mlp_trains():
    ds = _separable(300, seed=2)
    tr, ho = holdout_split(ds)
    spec = MethodSpec("mlp", "all_labeled", model=ModelSpec("mlp", hidden_sizes=(8,), max_epochs=15, learning_rate=0.3))
    model = train(spec, {0: tr}, {0: ho}, seed=0)
    assert recall_at_fpr(score(model, ho), ho.labels, 0.1) > 0.8
    assert model.metadata["stopping_metric"] == "recall"


def _fd_check(net, n_in, seed):
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(12, n_in))
    y = (gen.random(12) < 0.4).astype(float)
    params = [p + gen.normal(scale=0.5, size=p.shape) for p in net.init_params(n_in, gen)]
    _, grads = net.loss_grad(params, X, y)
    g = flatten(grads)
    flat = flatten(params)
    num = np.empty_like(flat)
    h = 1e-6
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        lp, _ = net.loss_grad(unflatten(flat + e, params), X, y)
        lm, _ = net.loss_grad(unflatten(flat - e, params), X, y)
        num[i] = (lp - lm) / (2 * h)
    return np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gradients(seed):
    assert _fd_check(LogisticRegression(l2=0.01), 5, seed) <= 1e-4
    assert _fd_check(MLP(hidden_sizes=(6, 4), l2=0.01), 5, seed) <= 1e-4


def test_encoder_one_hot():
    ds = make_dataset(30)
    enc = Encoder.fit(ds)
    X = enc.transform(ds)
    assert X.shape == (30, 3 + 3)
    np.testing.assert_array_equal(X[:, 3:].sum(axis=1), np.ones(30))


# -- external protocol --------------------------------------------------------


def _ext(code, **kw):
    return MethodSpec("ext", "external", command=("{python}", "-c", code), **kw)


def test_external_constant_scores(tmp_path):
    view = _view(step=3)
    code = "n=sum(1 for _ in open('test.csv'))-1\nopen('scores.csv','w').write('0.5\\n'*n)"
    s = run_external(_ext(code), view, tmp_path / "w", schema=schema(), timeline=build_timeline(baf_schedule()), seed=0)
    assert len(s) == len(view.test_labels)
    assert np.all(s == 0.5)


def test_external_too_few_rows(tmp_path):
    with pytest.raises(ProtocolError):
        run_external(_ext("open('scores.csv','w').write('0.5\\n')"), _view(step=3), tmp_path / "w",
                     schema=schema(), timeline=build_timeline(baf_schedule()), seed=0)


def test_external_nonzero_exit(tmp_path):
    with pytest.raises(ExternalMethodError) as exc:
        run_external(_ext("import sys; sys.stderr.write('boom'); sys.exit(3)"), _view(step=3), tmp_path / "w",
                     schema=schema(), timeline=build_timeline(baf_schedule()), seed=0)
    assert exc.value.returncode == 3
    assert "boom" in exc.value.stderr


def test_external_sees_no_test_labels(tmp_path):
    code = "h=open('test.csv').readline(); assert 'y' not in h.strip().split(','), h; " \
           "n=sum(1 for _ in open('test.csv'))-1; open('scores.csv','w').write('0.1\\n'*n)"
    run_external(_ext(code), _view(step=2), tmp_path / "w", schema=schema(),
                 timeline=build_timeline(baf_schedule()), seed=0)


def test_native_stub_matches_in_process(tmp_path):
    view = _view(step=4)
    native = MethodSpec("BL-A", "all_labeled", model=ModelSpec(max_epochs=4), seed=3)
    stub = MethodSpec(
        "stub", "external", command=("{python}", "-m", "driftbench.native_stub", "{workdir}"),
        options={"selection": "all_labeled", "model": native.model.to_dict(), "batch_plan": {}}, seed=3,
    )
    tr, ho = select_training_data(view, "all_labeled")
    expected = score(train(native, tr, ho, seed=11), view.test_inputs)
    got = run_external(stub, view, tmp_path / "w", schema=view.labeled[0].schema,
                       timeline=build_timeline(baf_schedule()), seed=11)
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)
