import json
import math

import numpy as np
import pytest

from speaker_fusion import (
    ArchiveError,
    ConfigHashMismatchError,
    DimensionMismatchError,
    EmConfig,
    GmmModel,
    InsufficientDataError,
    MapConfig,
    NumericalFailureError,
    Supervector,
    em_fit,
    em_fit_with_report,
    extract_supervector,
    gmm_log_density,
    load_model,
    map_adapt_means,
    read_supervector_store,
    save_model,
    write_supervector_store,
)


def _random_model(rng, n_components, dim):
    weights = rng.dirichlet(np.ones(n_components))
    return GmmModel(
        weights,
        rng.normal(0.0, 2.0, size=(n_components, dim)),
        rng.uniform(0.5, 2.0, size=(n_components, dim)),
    )


def _naive_density(model, x):
    """Direct sum of weighted Gaussian densities in extended precision."""
    total = np.longdouble(0)
    for p, mu, var in zip(model.weights, model.means, model.variances):
        component = np.longdouble(p)
        for xi, mi, vi in zip(x, mu, var):
            vi = np.longdouble(vi)
            diff = np.longdouble(xi) - np.longdouble(mi)
            component *= np.exp(-(diff * diff) / (2 * vi)) / np.sqrt(2 * np.pi * vi)
        total += component
    return total


def test_log_density_of_standard_normal_at_its_mean():
    """Test log p(0) for a single standard normal"""
    model = GmmModel([1.0], [[0.0]], [[1.0]])
    assert gmm_log_density(model, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-12)
    assert gmm_log_density(model, [0.0]) == pytest.approx(-0.9189, abs=1e-4)


def test_log_density_of_duplicated_component():
    """Test that two identical components with weights 0.3/0.7 equal one component"""
    single = GmmModel([1.0], [[1.0, -1.0]], [[2.0, 0.5]])
    double = GmmModel([0.3, 0.7], [[1.0, -1.0]] * 2, [[2.0, 0.5]] * 2)
    for x in ([0.0, 0.0], [3.0, -2.0]):
        assert gmm_log_density(double, x) == pytest.approx(gmm_log_density(single, x), rel=1e-12)


def test_log_density_matches_naive_summation():
    """Test the log-domain density against direct summation in extended precision"""
    rng = np.random.default_rng(11)
    model = _random_model(rng, 3, 4)
    for x in rng.normal(0.0, 2.0, size=(5, 4)):
        expected = float(np.log(_naive_density(model, x)))
        assert gmm_log_density(model, x) == pytest.approx(expected, rel=1e-10)


def test_log_density_rejects_wrong_dimension():
    """Test that the query must have d entries"""
    model = GmmModel([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.raises(DimensionMismatchError):
        gmm_log_density(model, [0.0, 0.0, 0.0])


def test_model_invariants():
    """Test that weights must sum to 1 and variances be positive"""
    with pytest.raises(NumericalFailureError):
        GmmModel([0.5, 0.4], [[0.0], [1.0]], [[1.0], [1.0]])
    with pytest.raises(NumericalFailureError):
        GmmModel([1.0], [[0.0]], [[0.0]])
    with pytest.raises(DimensionMismatchError):
        GmmModel([1.0], [[0.0, 1.0]], [[1.0]])


def test_em_single_component_is_closed_form():
    """Test that M=1 yields weight 1, the sample mean and the floored sample variance"""
    data = np.random.default_rng(2).normal([1.0, -3.0], [2.0, 0.5], size=(300, 2))
    model = em_fit(data, EmConfig(n_components=1))
    np.testing.assert_allclose(model.weights, [1.0])
    np.testing.assert_allclose(model.means[0], data.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(model.variances[0], data.var(axis=0), rtol=1e-9)

    constant = np.column_stack([np.full(10, 4.0), np.arange(10.0)])
    floored = em_fit(constant, EmConfig(n_components=1))
    assert floored.variances[0, 0] == pytest.approx(1e-10)


def test_em_recovers_two_separated_gaussians():
    """Test that EM finds both modes of a two-cluster 1-D sample"""
    rng = np.random.default_rng(0)
    data = np.concatenate([rng.normal(-5.0, 1.0, 500), rng.normal(5.0, 1.0, 500)])[:, None]
    model = em_fit(data, EmConfig(n_components=2))

    order = np.argsort(model.means[:, 0])
    np.testing.assert_allclose(model.means[order, 0], [-5.0, 5.0], atol=0.2)
    np.testing.assert_allclose(model.weights[order], [0.5, 0.5], atol=0.05)


def test_em_is_deterministic():
    """Test that the same data and seed give bitwise-identical models"""
    data = np.random.default_rng(4).normal(size=(400, 3))
    cfg = EmConfig(n_components=4, rng_seed=9)
    first, second = em_fit(data, cfg), em_fit(data, cfg)
    np.testing.assert_array_equal(first.weights, second.weights)
    np.testing.assert_array_equal(first.means, second.means)
    np.testing.assert_array_equal(first.variances, second.variances)


@pytest.mark.parametrize("trial", range(20))
def test_em_log_likelihood_never_decreases(trial):
    """Test per-iteration monotonicity of EM on randomized mixtures"""
    rng = np.random.default_rng(100 + trial)
    dim = (2, 12)[trial % 2]
    n_components = (2, 8, 32)[trial % 3]
    n_frames = int(rng.integers(200, 2001))

    centers = rng.normal(0.0, 3.0, size=(max(n_components // 2, 1), dim))
    labels = rng.integers(len(centers), size=n_frames)
    data = centers[labels] + rng.normal(size=(n_frames, dim))

    _, report = em_fit_with_report(data, EmConfig(n_components=n_components, rng_seed=trial))
    history = np.array(report.log_likelihoods)
    drops = history[:-1] - history[1:]
    assert np.all(drops <= 1e-8 * np.abs(history[:-1]))


def test_em_needs_at_least_m_frames():
    """Test that fewer frames than components is rejected"""
    with pytest.raises(InsufficientDataError) as exc_info:
        em_fit(np.zeros((3, 2)), EmConfig(n_components=4))
    assert "M=4" in str(exc_info.value)


def test_em_reports_iterations():
    """Test that the report records one log-likelihood per E-step"""
    data = np.random.default_rng(8).normal(size=(100, 2))
    _, report = em_fit_with_report(data, EmConfig(n_components=2, max_iterations=3))
    assert report.iterations <= 3
    assert len(report.log_likelihoods) == report.iterations + 1


def test_em_converges_at_zero_log_likelihood(monkeypatch):
    """Test that a total log-likelihood of exactly 0 ends EM instead of dividing by zero"""
    original = GmmModel.posteriors

    def zero_log_likelihood(self, data):
        responsibilities, frame_ll = original(self, data)
        return responsibilities, np.zeros_like(frame_ll)

    monkeypatch.setattr(GmmModel, "posteriors", zero_log_likelihood)
    data = np.random.default_rng(9).normal(size=(40, 2))
    _, report = em_fit_with_report(data, EmConfig(n_components=2, max_iterations=5))
    assert report.converged
    assert report.log_likelihoods == [0.0, 0.0]


def test_map_with_huge_relevance_keeps_ubm_means():
    """Test that r -> infinity leaves the means unchanged"""
    rng = np.random.default_rng(5)
    ubm = _random_model(rng, 4, 2)
    adapted = map_adapt_means(ubm, rng.normal(size=(50, 2)), MapConfig(relevance_factor=1e12))
    np.testing.assert_allclose(adapted.means, ubm.means, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(adapted.weights, ubm.weights)
    np.testing.assert_array_equal(adapted.variances, ubm.variances)


def test_map_single_component_midpoint():
    """Test that 16 frames with r=16 land halfway between UBM mean and sample mean"""
    ubm = GmmModel([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
    data = np.random.default_rng(6).normal(3.0, 1.0, size=(16, 2))
    adapted = map_adapt_means(ubm, data, MapConfig(relevance_factor=16.0))
    np.testing.assert_allclose(adapted.means[0], data.mean(axis=0) / 2, rtol=1e-12)


def test_map_matches_frame_by_frame_accumulation():
    """Test MAP means against a per-frame responsibility accumulation"""
    rng = np.random.default_rng(7)
    ubm = _random_model(rng, 4, 2)
    data = rng.normal(0.0, 2.0, size=(50, 2))
    r = 16.0

    occupancy = np.zeros(4)
    first_order = np.zeros((4, 2))
    for x in data:
        weighted = []
        for p, mu, var in zip(ubm.weights, ubm.means, ubm.variances):
            density = p
            for xi, mi, vi in zip(x, mu, var):
                density *= math.exp(-((xi - mi) ** 2) / (2 * vi)) / math.sqrt(2 * math.pi * vi)
            weighted.append(density)
        total = sum(weighted)
        for i, w in enumerate(weighted):
            occupancy[i] += w / total
            first_order[i] += (w / total) * x

    expected = np.empty((4, 2))
    for i in range(4):
        alpha = occupancy[i] / (occupancy[i] + r)
        expected[i] = alpha * first_order[i] / occupancy[i] + (1 - alpha) * ubm.means[i]

    adapted = map_adapt_means(ubm, data, MapConfig(relevance_factor=r))
    np.testing.assert_allclose(adapted.means, expected, rtol=1e-8)


@pytest.mark.parametrize("trial", range(10))
def test_map_limits(trial):
    """Test both relevance-factor limits on random instances"""
    rng = np.random.default_rng(200 + trial)
    ubm = _random_model(rng, 3, 2)
    # a few frames at each mean so that every component is responsible for some
    data = np.repeat(ubm.means, 5, axis=0) + rng.normal(0.0, 0.1, size=(15, 2))

    frozen = map_adapt_means(ubm, data, MapConfig(relevance_factor=1e12))
    np.testing.assert_allclose(frozen.means, ubm.means, rtol=1e-9, atol=1e-9)

    responsibilities, _ = ubm.posteriors(data)
    sample_means = (responsibilities.T @ data) / responsibilities.sum(axis=0)[:, None]
    free = map_adapt_means(ubm, data, MapConfig(relevance_factor=1e-9))
    np.testing.assert_allclose(free.means, sample_means, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("trial", range(20))
def test_map_means_lie_between_ubm_and_data_means(trial):
    """Test that each adapted coordinate lies between the UBM mean and its data mean"""
    rng = np.random.default_rng(300 + trial)
    ubm = _random_model(rng, 4, 3)
    data = rng.normal(0.0, 3.0, size=(int(rng.integers(1, 60)), 3))
    r = float(rng.choice([0.5, 4.0, 16.0, 100.0]))
    adapted = map_adapt_means(ubm, data, MapConfig(relevance_factor=r))

    responsibilities, _ = ubm.posteriors(data)
    occupancy = responsibilities.sum(axis=0)
    live = occupancy > 0
    data_means = (responsibilities.T @ data)[live] / occupancy[live, None]
    low = np.minimum(ubm.means[live], data_means)
    high = np.maximum(ubm.means[live], data_means)
    slack = 1e-9 * (1.0 + np.abs(high))
    assert np.all(adapted.means[live] >= low - slack)
    assert np.all(adapted.means[live] <= high + slack)
    np.testing.assert_array_equal(adapted.means[~live], ubm.means[~live])


def test_map_keeps_means_of_components_without_frames():
    """Test that a component with zero occupancy keeps its UBM mean exactly"""
    ubm = GmmModel([0.5, 0.5], [[0.0, 0.0], [1000.0, 1000.0]], np.ones((2, 2)))
    data = np.random.default_rng(12).normal(size=(20, 2))
    responsibilities, _ = ubm.posteriors(data)
    assert responsibilities[:, 1].sum() == 0.0

    adapted = map_adapt_means(ubm, data, MapConfig(relevance_factor=1.0))
    np.testing.assert_array_equal(adapted.means[1], [1000.0, 1000.0])
    np.testing.assert_allclose(adapted.means[0], 20 / 21 * data.mean(axis=0), rtol=1e-12)


def test_extract_supervector():
    """Test concatenation of the means and the resulting lengths"""
    model = GmmModel([0.5, 0.5], [[1.0, 2.0], [3.0, 4.0]], np.ones((2, 2)), "MFCC12")
    sv = extract_supervector(model, utterance_id="u1")
    np.testing.assert_array_equal(sv.values, [1.0, 2.0, 3.0, 4.0])
    assert (sv.n_components, sv.dim, sv.source_feature_kind, sv.utterance_id) == (
        2,
        2,
        "MFCC12",
        "u1",
    )
    np.testing.assert_array_equal(sv.component_means(), model.means)

    for dim, length in ((12, 1536), (13, 1664)):
        ubm = GmmModel(np.full(128, 1 / 128), np.zeros((128, dim)), np.ones((128, dim)))
        assert len(extract_supervector(ubm)) == length


def test_extract_supervector_kl_scaling():
    """Test that KL scaling multiplies block i by sqrt(p_i) / sigma_i"""
    model = GmmModel([0.25, 0.75], [[2.0], [4.0]], [[4.0], [1.0]])
    sv = extract_supervector(model, kl_scaling=True)
    np.testing.assert_allclose(sv.values, [0.5 * 2.0 / 2.0, math.sqrt(0.75) * 4.0])


def test_supervector_of_unadapted_model_equals_ubm_supervector():
    """Test extract(UBM) against extract(adapt(UBM)) in the r -> infinity limit"""
    rng = np.random.default_rng(12)
    ubm = _random_model(rng, 4, 3)
    adapted = map_adapt_means(ubm, rng.normal(size=(40, 3)), MapConfig(relevance_factor=1e12))
    np.testing.assert_allclose(
        extract_supervector(adapted).values, extract_supervector(ubm).values, rtol=1e-9, atol=1e-12
    )


def test_supervector_length_must_match():
    """Test that a supervector must hold M x d values"""
    with pytest.raises(DimensionMismatchError):
        Supervector(np.zeros(5), 2, 2)


def test_model_document_round_trip(tmp_path):
    """Test that a saved model loads with identical parameters and tags"""
    model = GmmModel([0.4, 0.6], [[0.1, 0.2], [0.3, 0.4]], [[1.0, 2.0], [3.0, 4.0]], "MFCC12", "h")
    path = tmp_path / "models" / "ubm.json"
    save_model(path, model)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.means, model.means)
    np.testing.assert_array_equal(loaded.variances, model.variances)
    assert (loaded.feature_kind, loaded.config_hash) == ("MFCC12", "h")
    assert json.loads(path.read_text())["M"] == 2


def test_load_model_errors(tmp_path):
    """Test missing files and unknown document versions"""
    with pytest.raises(ArchiveError):
        load_model(tmp_path / "missing.json")

    path = tmp_path / "future.json"
    path.write_text(json.dumps({"version": 99}))
    with pytest.raises(ArchiveError) as exc_info:
        load_model(path)
    assert "version" in str(exc_info.value)


def test_supervector_store(tmp_path):
    """Test that a store returns every supervector keyed by utterance id"""
    rng = np.random.default_rng(13)
    svs = [Supervector(rng.normal(size=6), 2, 3, "MFCC12", f"utt{i}") for i in range(4)]
    path = tmp_path / "MFCC12.sv"
    write_supervector_store(path, svs)

    store = read_supervector_store(path)
    assert list(store) == ["utt0", "utt1", "utt2", "utt3"]
    for sv in svs:
        np.testing.assert_array_equal(store[sv.utterance_id].values, sv.values)
        assert store[sv.utterance_id].source_feature_kind == "MFCC12"


def test_supervector_store_rejects_mixed_shapes(tmp_path):
    """Test that a store holds supervectors of one M x d"""
    svs = [
        Supervector(np.zeros(4), 2, 2, "MFCC12", "a"),
        Supervector(np.zeros(6), 2, 3, "MFCC12", "b"),
    ]
    with pytest.raises(DimensionMismatchError):
        write_supervector_store(tmp_path / "mixed.sv", svs)
    with pytest.raises(ArchiveError):
        write_supervector_store(tmp_path / "empty.sv", [])


def test_loaders_check_config_hash(tmp_path):
    """Test that models and stores built under another configuration are refused"""
    model = GmmModel([1.0], [[0.0, 0.0]], [[1.0, 1.0]], "MFCC12", "old")
    save_model(tmp_path / "ubm.json", model)
    assert load_model(tmp_path / "ubm.json", expected_config_hash="old").config_hash == "old"
    with pytest.raises(ConfigHashMismatchError) as exc_info:
        load_model(tmp_path / "ubm.json", expected_config_hash="new")
    assert "GMM" in str(exc_info.value)

    path = tmp_path / "MFCC12.sv"
    write_supervector_store(path, [Supervector(np.zeros(2), 1, 2, "MFCC12", "u")], "old")
    assert list(read_supervector_store(path, expected_config_hash="old")) == ["u"]
    with pytest.raises(ConfigHashMismatchError):
        read_supervector_store(path, expected_config_hash="new")
    assert ConfigHashMismatchError.exit_code == 4
