import numpy as np
import pytest

from gsdcheck.consistency import PValueSeries, classify_experiment
from gsdcheck.gof import GofConfig, batch_gof
from gsdcheck.gsd import GsdParams, gsd_pmf
from gsdcheck.simulate import (CLASSES, TYPICAL, SimConfig, confusion, contaminate,
                               contamination_pmf, generate_experiment, read_labels_csv,
                               write_labels_csv)


def test_bimodal_has_two_maxima():
    k = contaminate("bimodal", 2.0, 100_000, seed=0)
    interior = [j for j in range(1, 4) if k[j] > k[j - 1] and k[j] > k[j + 1]]
    ends = [j for j in (0, 4) if k[j] > k[1 if j == 0 else 3]]
    assert len(interior) + len(ends) == 2


def test_random_answers_fraction():
    clean = gsd_pmf(GsdParams(3.0, 0.9))
    expected = 0.92 * clean + 0.08 / 5
    np.testing.assert_allclose(contamination_pmf("random_answers", 3.0), expected, atol=1e-15)
    k = contaminate("random_answers", 3.0, 200_000, seed=1)
    np.testing.assert_allclose(k / k.sum(), expected, atol=0.004)


@pytest.mark.parametrize("psi", [2.0, 2.6, 3.4, 4.0])
def test_sudden_cutoff_empties_a_neighbour(psi):
    rng = np.random.default_rng(0)
    p = contamination_pmf("sudden_cutoff", psi, rng)
    mode = int(np.argmax(p))
    assert any(p[j] == 0.0 for j in (mode - 1, mode + 1) if 1 <= j <= 3)
    assert p.sum() == pytest.approx(1.0)


def test_hate_or_love_ends():
    p = contamination_pmf("hate_or_love", 3.0)
    assert p[0] >= 0.3 and p[4] >= 0.3


def test_unknown_class():
    with pytest.raises(ValueError):
        contaminate("other", 3.0, 10, 0)


def test_full_contamination_labels_everything():
    _, labels = generate_experiment(SimConfig(n_stimuli=40, contamination=(("bimodal", 1.0),)))
    assert set(labels.values()) == {"bimodal"}


def test_labels_partition_stimuli():
    cfg = SimConfig(n_stimuli=100, contamination=(("bimodal", 0.1), ("random_answers", 0.2)))
    data, labels = generate_experiment(cfg)
    assert set(labels) == set(data.stimuli)
    values = list(labels.values())
    assert values.count("bimodal") == 10
    assert values.count("random_answers") == 20
    assert values.count(TYPICAL) == 70
    assert all(k.sum() == cfg.n_scores for k in data.stimuli.values())


def test_generation_deterministic():
    cfg = SimConfig(n_stimuli=30, seed=7, contamination=(("sudden_cutoff", 0.2),))
    a, la = generate_experiment(cfg)
    b, lb = generate_experiment(cfg)
    assert la == lb
    for sid in a.stimuli:
        np.testing.assert_array_equal(a.stimuli[sid], b.stimuli[sid])
    c, _ = generate_experiment(SimConfig(n_stimuli=30, seed=8))
    assert any(not np.array_equal(a.stimuli[s], c.stimuli[s]) for s in a.stimuli)


@pytest.mark.parametrize("kwargs", [
    {"n_stimuli": 0},
    {"psi_range": (1.0, 3.0)},
    {"rho_range": (0.0, 0.5)},
    {"contamination": (("bimodal", 1.5),)},
    {"contamination": (("bimodal", 0.6), ("random_answers", 0.6))},
    {"contamination": (("weird", 0.1),)},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_labels_round_trip(tmp_path):
    _, labels = generate_experiment(SimConfig(n_stimuli=12, contamination=(("bimodal", 0.25),)))
    write_labels_csv(labels, tmp_path / "labels.csv")
    assert read_labels_csv(tmp_path / "labels.csv") == labels


def test_confusion():
    labels = {"a": TYPICAL, "b": "bimodal", "c": "bimodal", "d": TYPICAL}
    assert confusion(["b", "d"], labels) == {
        "true_positive": 1, "false_positive": 1, "false_negative": 1, "true_negative": 1}


def test_classes_listed():
    assert set(CLASSES) == {"bimodal", "random_answers", "sudden_cutoff", "hate_or_love"}


def _recall(grid, cache, rate, seed):
    cfg = SimConfig(n_stimuli=160, seed=seed, contamination=(("bimodal", rate),))
    data, labels = generate_experiment(cfg)
    results = batch_gof(data.samples(), grid, GofConfig(200, seed=seed), cache=cache)
    verdict = classify_experiment(PValueSeries.from_results(results))
    c = confusion(verdict.flagged, labels)
    return c["true_positive"] / max(1, c["true_positive"] + c["false_negative"])


@pytest.mark.slow
def test_power_grows_with_contamination(grid, cache):
    low = np.mean([_recall(grid, cache, 0.1, s) for s in range(20)])
    high = np.mean([_recall(grid, cache, 0.3, s) for s in range(20)])
    assert high >= low
