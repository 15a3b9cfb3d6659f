"""Descriptor aggregation, streaming k-means, scoring, and report round-trips.

The streaming-equivalence check reimplements seeded k-means++ plus one
classic full-batch update here and demands bit equality.
"""

import json

import numpy as np
import pytest

from eclad import concepts, ectf, net, synth


def make_fields(rng, shapes, channels):
    return [rng.normal(size=(h, w, channels)).astype(np.float32)
            for h, w in shapes]


def rows_of(fields):
    return np.concatenate([f.reshape(-1, f.shape[2]).astype(np.float64)
                           for f in fields])


# ---------------------------------------------------------------------------
# fit_concepts


def test_single_centroid_is_global_mean():
    rng = np.random.default_rng(0)
    fields = make_fields(rng, [(6, 5), (3, 7), (4, 4)], 3)
    got = concepts.fit_concepts(lambda: iter(fields), n_c=1, n_i=1, seed=3)
    want = rows_of(fields).mean(axis=0)
    np.testing.assert_allclose(got[0], want, rtol=1e-9, atol=1e-12)


def test_recovers_separated_gaussian_blobs():
    rng = np.random.default_rng(5)
    truth = np.array([[0.0] * 10, [10.0] * 10, [-10.0] * 10])
    fields = []
    for center in truth:
        pts = rng.normal(scale=0.2, size=(200, 10)) + center
        fields.append(pts.reshape(100, 2, 10).astype(np.float32))
    got = concepts.fit_concepts(lambda: iter(fields), n_c=3, n_i=3, seed=1,
                                epochs=10)
    for center in truth:
        nearest = np.linalg.norm(got - center, axis=1).min()
        assert nearest < 0.1


def kmeans_pp_reference(points, n_c, rng):
    # same seeding procedure, written out again: uniform first pick, then
    # squared-distance-proportional picks
    centers = np.empty((n_c, points.shape[1]), np.float64)
    centers[0] = points[int(rng.integers(points.shape[0]))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, n_c):
        pick = int(rng.choice(points.shape[0], p=d2 / d2.sum()))
        centers[j] = points[pick]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def test_full_batch_streaming_equals_classic_kmeans_bit_exact():
    """One pass with a stream-covering minibatch must be indistinguishable
    from one classic k-means iteration seeded identically."""
    rng = np.random.default_rng(2)
    fields = make_fields(rng, [(8, 10), (6, 4), (2, 9)], 4)
    n_c, seed = 5, 11
    got = concepts.fit_concepts(lambda: iter(fields), n_c=n_c,
                                n_i=len(fields), seed=seed)

    X = rows_of(fields)
    centers = kmeans_pp_reference(X, n_c, np.random.default_rng(seed))
    d = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
    labels = d.argmin(axis=1)
    sums = np.zeros_like(centers)
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=n_c)
    for j in range(n_c):
        if counts[j]:
            centers[j] = (centers[j] * 0 + sums[j]) / counts[j]
    np.testing.assert_array_equal(got, centers)


def test_explicit_init_bypasses_seeding():
    rng = np.random.default_rng(3)
    fields = make_fields(rng, [(4, 4)], 2)
    init = np.array([[0.0, 0.0], [5.0, 5.0]])
    got = concepts.fit_concepts(lambda: iter(fields), n_c=2, n_i=1, seed=0,
                                init=init)
    X = rows_of(fields)
    labels = ((X[:, None, :] - init[None]) ** 2).sum(axis=2).argmin(axis=1)
    want = init.copy()
    for j in range(2):
        if (labels == j).any():
            want[j] = X[labels == j].mean(axis=0)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError, match="init"):
        concepts.fit_concepts(lambda: iter(fields), n_c=3, n_i=1, seed=0,
                              init=init)


def test_fit_is_deterministic_even_past_the_seeding_pool():
    # more pixels than the seeding pool holds, so reservoir replacement runs
    rng = np.random.default_rng(8)
    fields = make_fields(rng, [(50, 40), (40, 50), (30, 30)], 2)
    assert rows_of(fields).shape[0] > 4096
    a = concepts.fit_concepts(lambda: iter(fields), n_c=4, n_i=2, seed=9)
    b = concepts.fit_concepts(lambda: iter(fields), n_c=4, n_i=2, seed=9)
    np.testing.assert_array_equal(a, b)
    c = concepts.fit_concepts(lambda: iter(fields), n_c=4, n_i=2, seed=10)
    assert (a != c).any()


def test_fit_argument_errors():
    fields = [np.zeros((2, 2, 1), np.float32)]
    with pytest.raises(ValueError):
        concepts.fit_concepts(lambda: iter(fields), n_c=0, n_i=1, seed=0)
    with pytest.raises(ValueError):
        concepts.fit_concepts(lambda: iter(fields), n_c=1, n_i=0, seed=0)
    with pytest.raises(ValueError, match="empty"):
        concepts.fit_concepts(lambda: iter([]), n_c=1, n_i=1, seed=0)
    with pytest.raises(ValueError):
        concepts.fit_concepts(lambda: iter(fields), n_c=9, n_i=1, seed=0)


# ---------------------------------------------------------------------------
# descriptors and assignment


def test_descriptor_identity_and_concat_order():
    taps = {
        "a": np.ones((4, 4, 2), np.float32),
        "b": np.zeros((2, 2, 3), np.float32),
    }
    d = concepts.compute_descriptor(taps, ["a", "b"], 4, 4, "bilinear")
    assert d.shape == (4, 4, 5)
    assert (d[..., :2] == 1).all() and (d[..., 2:] == 0).all()
    swapped = concepts.compute_descriptor(taps, ["b", "a"], 4, 4, "bilinear")
    assert (swapped[..., :3] == 0).all()


def test_descriptor_layer_errors():
    taps = {"a": np.ones((2, 2, 1), np.float32)}
    with pytest.raises(ValueError, match="missing"):
        concepts.compute_descriptor(taps, ["a", "zz"], 2, 2, "bilinear")
    with pytest.raises(ValueError, match="at least one"):
        concepts.compute_descriptor(taps, [], 2, 2, "bilinear")


def test_assignment_tie_goes_to_lowest_index():
    model = concepts.ConceptModel(
        centroids=np.array([[2.0], [5.0]]), layers=["x"], mode="bilinear")
    d = np.full((1, 2, 1), 3.5, np.float32)  # equidistant from both
    labels = concepts.assign_pixels(d, model)
    np.testing.assert_array_equal(labels, [[0, 0]])


def test_assignment_channel_mismatch():
    model = concepts.ConceptModel(
        centroids=np.zeros((2, 3)) + [[0], [1]], layers=["x"], mode="bilinear")
    with pytest.raises(ValueError, match="channels"):
        concepts.assign_pixels(np.zeros((2, 2, 2), np.float32), model)


def test_model_rejects_duplicate_centroids():
    with pytest.raises(ValueError, match="distinct"):
        concepts.ConceptModel(centroids=np.ones((2, 4)), layers=["x"],
                              mode="bilinear")


def test_standardize_prepare():
    model = concepts.ConceptModel(
        centroids=np.array([[0.0], [1.0]]), layers=["x"], mode="bilinear",
        standardize=True, mean=np.array([2.0]), std=np.array([4.0]))
    out = model.prepare(np.array([[10.0]], np.float32))
    np.testing.assert_array_equal(out, [[2.0]])


def test_mask_concept_bounds():
    model = concepts.ConceptModel(
        centroids=np.array([[0.0], [1.0]]), layers=["x"], mode="bilinear")
    with pytest.raises(ValueError):
        concepts.mask_concept(np.zeros((1, 1, 1), np.float32), model, 2)


def test_render_examples_blend():
    image = np.full((2, 2, 3), 0.8, np.float32)
    mask = np.array([[True, False], [False, False]])
    out = concepts.render_examples(image, mask, 0.25)
    assert out[0, 0, 0] == np.float32(0.8)
    assert out[0, 1, 0] == np.float32(0.8 * 0.25)
    with pytest.raises(ValueError):
        concepts.render_examples(image, mask, 0.0)


# ---------------------------------------------------------------------------
# scoring algebra


def two_image_scores(scale=1.0):
    acc = concepts.ScoreAccumulator(n_c=2, n_classes=2)
    labels = np.array([[0, 1]])
    # class-0 image: sensitivities toward class 0 then class 1
    acc.add_image(labels, 0, scale * np.array([[[4.0, -2.0]], [[1.0, 0.0]]]))
    # class-1 image
    acc.add_image(labels, 1, scale * np.array([[[0.0, 0.0]], [[0.0, 1.0]]]))
    return acc.report()


def test_cs_and_ri_match_enumeration():
    rep = two_image_scores()
    np.testing.assert_array_equal(rep.cs, [[4.0, -1.0], [-2.0, 1.0]])
    np.testing.assert_array_equal(rep.k_of, [0, 0])
    np.testing.assert_array_equal(rep.ri, [1.0, -0.5])
    np.testing.assert_array_equal(rep.pixel_counts, [[1, 1], [1, 1]])
    assert not rep.degenerate
    assert np.abs(rep.ri).max() == 1.0


def test_gradient_scaling_leaves_ri_invariant():
    base = two_image_scores()
    scaled = two_image_scores(scale=3.0)
    np.testing.assert_array_equal(scaled.cs, 3.0 * base.cs)
    np.testing.assert_array_equal(scaled.ri, base.ri)
    np.testing.assert_array_equal(scaled.k_of, base.k_of)


def test_empty_side_contributes_zero():
    acc = concepts.ScoreAccumulator(n_c=2, n_classes=2)
    # concept 1 never occurs; concept 0 only in class-0 images
    acc.add_image(np.array([[0]]), 0, np.array([[[2.0]], [[7.0]]]))
    rep = acc.report()
    np.testing.assert_array_equal(rep.cs, [[2.0, -7.0], [0.0, 0.0]])


def test_degenerate_report():
    acc = concepts.ScoreAccumulator(n_c=1, n_classes=2)
    acc.add_image(np.array([[0]]), 0, np.zeros((2, 1, 1)))
    rep = acc.report()
    assert rep.degenerate
    np.testing.assert_array_equal(rep.ri, [0.0])


def test_score_concepts_rejects_empty_stream():
    with pytest.raises(ValueError, match="empty"):
        concepts.score_concepts(iter([]), n_c=1, n_classes=2)


def test_pixel_sensitivity_contract():
    d = np.array([[[1.0, 2.0]]], np.float32)
    g = np.array([[[3.0, -1.0]]], np.float32)
    np.testing.assert_array_equal(concepts.pixel_sensitivity(d, g), [[1.0]])
    with pytest.raises(ValueError):
        concepts.pixel_sensitivity(d, np.zeros((1, 1, 3), np.float32))


# ---------------------------------------------------------------------------
# end-to-end over a tiny source


def tiny_setup(tmp_path, count=3):
    base = synth.spec_by_name("AB")
    spec = synth.DatasetSpec(name=base.name, classes=base.classes,
                             primitives=base.primitives,
                             image_size=16, per_class_count=count)
    synth.generate_dataset(spec, 1, tmp_path / "ds")
    arch = net.Architecture(input_size=16, stage_channels=(4, 8))
    params, _ = net.train(arch, tmp_path / "ds", net.Hyper(epochs=1, seed=0))
    net.save_checkpoint(tmp_path / "m.ectf", arch, params)
    arch, params = net.load_checkpoint(tmp_path / "m.ectf")
    return tmp_path / "ds", arch, params


def test_run_eclad_outputs_and_report_roundtrip(tmp_path):
    ds, arch, params = tiny_setup(tmp_path)
    source = concepts.MicronetTapSource(params, arch, ds)
    config = concepts.EcladConfig(n_c=3, n_i=2, seed=4)
    out = tmp_path / "run"
    result = concepts.run_eclad(source, config, out)
    assert result.model.centroids.shape[0] == 3
    doc = concepts.load_report(out / "eclad_report.json")
    assert doc["classes"] == ["A", "B"]
    model = concepts.model_from_report(doc)
    assert model.layers == result.model.layers
    np.testing.assert_array_equal(
        model.centroids, result.model.centroids.astype(np.float32))
    # localization bundle holds one mask per concept and image
    masks = sorted((out / "localization" / "concepts" / "c0").glob("*.png"))
    assert len(masks) == 6
    with open(out / "localization" / "importances.json") as fh:
        imp = json.load(fh)
    assert set(imp) == {"c0", "c1", "c2"}


def test_directory_source_reproduces_micronet_source(tmp_path):
    """ECTF dumps round-trip: extraction over dumped taps equals extraction
    over the live network."""
    ds, arch, params = tiny_setup(tmp_path)
    live = concepts.MicronetTapSource(params, arch, ds)
    dump_dir = tmp_path / "taps"
    dump_dir.mkdir()
    for image_id in live.image_ids:
        acts, grads = live.acts_and_grads(image_id)
        ectf.save(dump_dir / f"{image_id}.acts.ectf", acts)
        for k, g in grads.items():
            ectf.save(dump_dir / f"{image_id}.class{k}.grads.ectf", g)
    with open(dump_dir / "taps_manifest.json", "w") as fh:
        json.dump({"layers": live.tap_names}, fh)

    dumped = concepts.DirectoryTapSource(dump_dir, ds)
    assert dumped.tap_names == live.tap_names
    config = concepts.EcladConfig(n_c=3, n_i=2, seed=4)
    a = concepts.run_eclad(live, config, tmp_path / "a")
    b = concepts.run_eclad(dumped, config, tmp_path / "b")
    np.testing.assert_array_equal(a.model.centroids, b.model.centroids)
    np.testing.assert_array_equal(a.report.cs, b.report.cs)
    assert (tmp_path / "a" / "eclad_report.json").read_text() == \
        (tmp_path / "b" / "eclad_report.json").read_text()


def test_max_per_class_limits_selection(tmp_path):
    ds, arch, params = tiny_setup(tmp_path)
    source = concepts.MicronetTapSource(params, arch, ds)
    config = concepts.EcladConfig(n_c=2, n_i=1, seed=0, max_per_class=1)
    result = concepts.run_eclad(source, config)
    assert result.report.pixel_counts.sum() == 2 * 16 * 16
