"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.  Criteria 5 and 6
share one generated corpus (about a minute to build) and together train
for roughly five minutes on one core.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

import test_datapipe
from pocketnet.datapipe import augment_minority, load_arrays, select, split_dataset
from pocketnet.gradcheck import check_network
from pocketnet.model import build_model, count_parameters, preset
from pocketnet.optim import OptimConfig, rmsprop_step
from pocketnet.synthgen import easy_spec, generate_dataset
from pocketnet.trainer import ConfusionMatrix, TrainConfig, accuracy, evaluate, fit

SEED = 7
CORPUS_EPOCHS = 30
RECALL_EPOCHS = 3


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_criterion_1_parameter_counts(capsys):
    t0 = time.perf_counter()
    out = subprocess.run([sys.executable, "-m", "pocketnet", "inspect", "--preset", "paper-120x160"],
                         capture_output=True, text=True, check=True).stdout
    rows = {int(l.split()[0]): int(l.split()[-1]) for l in out.splitlines()[2:-1]}
    exact, _ = count_parameters(preset("table1-exact"))
    elapsed = time.perf_counter() - t0
    conv = (rows[1], rows[3], rows[5])
    ok = (conv == (640, 73856, 295168) and (exact[8], exact[9]) == (1147008, 129)
          and exact[1] == 640 and elapsed < 1.0)
    report(capsys, 1, ok, f"conv {conv}, table1-exact dense {exact[8]}/{exact[9]}, {elapsed:.2f}s")


def test_criterion_2_accuracy_formula(capsys):
    t0 = time.perf_counter()
    rows = [((201, 462, 1037, 6308), 0.9172), ((76, 777, 597, 6558), 0.8935), ((15, 1122, 193, 6678), 0.8580)]
    got = [accuracy(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)) for (fp, fn, tp, tn), _ in rows]
    ok = all(abs(g - want) <= 5e-5 for g, (_, want) in zip(got, rows)) and time.perf_counter() - t0 < 1
    report(capsys, 2, ok, "accuracies " + ", ".join(f"{g:.6f}" for g in got))


def test_criterion_3_gradient_check(capsys):
    t0 = time.perf_counter()
    results = [check_network(preset("micro"), s) for s in (0, 1, 2)]
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_error for r in results)
    checked = results[0].checked
    dead = sorted({name for r in results for name in r.dead})
    ok = all(r.passed(1e-5) for r in results) and elapsed < 120
    report(capsys, 3, ok, f"max rel error {worst:.2e} over {checked} values x 3 seeds, "
                          f"tensors without loss gradient: {dead or 'none'}, {elapsed:.1f}s")


def test_criterion_4_rmsprop_step(capsys):
    t0 = time.perf_counter()
    theta = np.zeros(1)
    rmsprop_step(theta, np.array([3.0]), np.zeros(1), OptimConfig(0.001, 0.9, 1e-7, 0.0))
    ok = abs(theta[0] - (-0.0031623)) <= 1e-7 and time.perf_counter() - t0 < 1
    report(capsys, 4, ok, f"first step {theta[0]:.9f}")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("easy")
    t0 = time.perf_counter()
    entries = generate_dataset(easy_spec(seed=SEED), root)
    entries = split_dataset(entries, seed=SEED)
    return root, entries, time.perf_counter() - t0


def _arrays(root, entries, split, augment=False):
    part = select(entries, split)
    if augment:
        part = augment_minority(part)
    return load_arrays(part, root, 46, 62)


@pytest.fixture(scope="module")
def desk_run(corpus):
    root, entries, gen_time = corpus
    t0 = time.perf_counter()
    model = build_model(preset("desk"), SEED)
    _, history = fit(model, _arrays(root, entries, "train", True), _arrays(root, entries, "val"),
                     TrainConfig(epochs=CORPUS_EPOCHS, seed=SEED))
    return history, gen_time + time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_5_end_to_end(corpus, desk_run, capsys):
    _, entries, _ = corpus
    history, elapsed = desk_run
    n_pos = sum(e.label for e in entries)
    best = max(r.val_acc for r in history)
    first = next((r.epoch + 1 for r in history if r.val_acc >= 0.95), None)
    ok = len(entries) == 2000 and n_pos == 374 and first is not None and elapsed < 600
    report(capsys, 5, ok, f"val acc >= 0.95 after {first} epochs (best {best:.4f}), "
                          f"{len(entries)} images / {n_pos} positive, {elapsed:.0f}s")


@pytest.mark.slow
def test_smoothed_training_loss_non_increasing(desk_run):
    # rolling 5-epoch median: RMSProp at a fixed step size produces isolated
    # one-epoch loss spikes late in training, which a median ignores
    losses = np.array([r.train_loss for r in desk_run[0]])
    smoothed = np.median(np.lib.stride_tricks.sliding_window_view(losses, 5), axis=1)
    assert np.all(np.diff(smoothed) <= 0), smoothed
    assert smoothed[-1] < smoothed[0] / 5


@pytest.mark.slow
def test_criterion_6_minority_augmentation(corpus, capsys):
    root, entries, _ = corpus
    val = _arrays(root, entries, "val")
    x_test, y_test = _arrays(root, entries, "test")
    recalls = {}
    for augment in (True, False):
        model = build_model(preset("desk"), SEED)
        fit(model, _arrays(root, entries, "train", augment), val, TrainConfig(epochs=RECALL_EPOCHS, seed=SEED))
        cm = evaluate(model, x_test, y_test)
        recalls[augment] = (cm.tp, cm.tp + cm.fn)
    (tp_a, n), (tp_n, _) = recalls[True], recalls[False]
    ok = tp_a / n > tp_n / n
    report(capsys, 6, ok, f"test recall after {RECALL_EPOCHS} epochs: augmented {tp_a}/{n}, "
                          f"not augmented {tp_n}/{n}")


def _cli_run(workdir):
    data, out = workdir / "data", workdir / "run"
    base = [sys.executable, "-m", "pocketnet"]
    steps = [
        ["synth", "--easy", "--count", "120", "--seed", "3", "--out", str(data)],
        ["split", "--manifest", str(data / "manifest.csv"), "--seed", "3"],
        ["train", "--manifest", str(data / "manifest.csv"), "--out", str(out), "--epochs", "5",
         "--batch-size", "32", "--seed", "3"],
    ]
    for step in steps:
        subprocess.run(base + step[:1] + ["--threads", "1"] + step[1:], check=True, capture_output=True)
    return {name: (out / name).read_bytes() for name in ("final.pckt", "best_val.pckt", "train_log.csv")}


@pytest.mark.slow
def test_criterion_7_determinism(tmp_path, capsys):
    a = _cli_run(tmp_path / "a")
    b = _cli_run(tmp_path / "b")
    same = [name for name in a if a[name] == b[name]]
    ok = len(same) == len(a) and len(a["train_log.csv"].splitlines()) == 6
    report(capsys, 7, ok, f"byte-identical: {', '.join(same)}")


PROPERTIES = [
    ("bicubic constant preservation", test_datapipe.test_resize_constant_property),
    ("flip involution", test_datapipe.test_flip_involution_property),
    ("split partition and stratification", test_datapipe.test_split_partition_property),
    ("batch permutation", test_datapipe.test_batches_are_permutation_property),
    ("PGM round-trip", test_datapipe.test_pgm_roundtrip_property),
]


def test_criterion_8_pipeline_properties(capsys):
    t0 = time.perf_counter()
    counts = {}
    for name, prop in PROPERTIES:
        inner = prop.hypothesis.inner_test
        calls = []

        def counted(*args, _inner=inner, _calls=calls, **kwargs):
            _calls.append(1)
            return _inner(*args, **kwargs)

        prop.hypothesis.inner_test = counted
        try:
            prop()
        finally:
            prop.hypothesis.inner_test = inner
        counts[name] = len(calls)
    elapsed = time.perf_counter() - t0
    ok = min(counts.values()) >= 100 and elapsed < 60
    report(capsys, 8, ok, ", ".join(f"{k} {v}" for k, v in counts.items()) + f" cases, {elapsed:.1f}s")
