#include "doctest.h"
#include "seqloc/metrics.hpp"
#include "seqloc/pipeline.hpp"
#include "seqloc/synth.hpp"
#include "testutil.hpp"

using namespace seqloc;
using namespace seqloc::pipeline;

namespace {

synth::SceneConfig cluster_scene(std::uint64_t seed, int buildings, int floors = 1) {
    std::vector<synth::BuildingBox> boxes;
    for (int b = 0; b < buildings; ++b)
        boxes.push_back({b * 90.0, b * 90.0 + 30.0, 0.0, 20.0, floors});
    auto scene = synth::grid_scene(boxes, 10);
    scene.seed = seed;
    scene.detection_floor = -104.0;
    return scene;
}

FitConfig fast_config(std::uint64_t seed = 1, int min_subsample = 60) {
    FitConfig cfg;
    cfg.stopping.min_subsample = min_subsample;
    cfg.stopping.min_accuracy = 0.95;
    cfg.train.classifier_hidden = {24};
    cfg.train.regressor_hidden = {32, 16};
    cfg.train.classifier_epochs = 60;
    cfg.train.regressor_epochs = 300;
    cfg.train.patience = 0;
    cfg.train.seed = seed;
    cfg.train.threads = 2;
    return cfg;
}

Dataset five_point_knn_fixture() {
    return testutil::make_dataset({
        testutil::make_fp({-50, -50}, 0, 0, 0, 0),
        testutil::make_fp({-49, -50}, 2, 0, 0, 0),
        testutil::make_fp({-50, -49}, 0, 2, 1, 0),
        testutil::make_fp({-45, -45}, 10, 10, 1, 1),
        testutil::make_fp({-44, -45}, 12, 10, 1, 1),
    });
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("fit produces the variant-specific tree shapes") {
    SUBCASE("tnn is a single leaf with a building classifier") {
        const auto [train, validation] = synth::generate(cluster_scene(3, 2), 240);
        const Predictor p = fit(Variant::Tnn, train, validation, fast_config());
        CHECK(p.manifest.at("leaves") == 1);
        CHECK(p.tree_root->is_leaf());
        CHECK(p.tree_root->leaf->building_classifier.has_value());
        CHECK(p.manifest.at("extensions")[0] == "tnn_auxiliary_building_classifier");
        // the auxiliary head resolves wide-margin buildings perfectly
        std::size_t hits = 0;
        for (const auto& fp : validation.observations)
            if (predict(p, fp.rssi).building == fp.label.building) ++hits;
        CHECK(hits == validation.n());
    }
    SUBCASE("tsnn has one leaf per building") {
        const auto [train, validation] = synth::generate(cluster_scene(5, 3), 450);
        const Predictor p = fit(Variant::Tsnn, train, validation, fast_config(2));
        CHECK(p.manifest.at("leaves") == 3);
        // every leaf region is a singleton building
        std::vector<const tree::PartitionNode*> stack{p.tree_root.get()};
        while (!stack.empty()) {
            const auto* node = stack.back();
            stack.pop_back();
            if (node->is_leaf()) {
                REQUIRE(node->region.buildings.has_value());
                CHECK(node->region.buildings->size() == 1);
            } else {
                stack.push_back(node->internal->left.get());
                stack.push_back(node->internal->right.get());
            }
        }
    }
    SUBCASE("scnn splits while accuracy and size allow") {
        const auto [train, validation] = synth::generate(cluster_scene(7, 2), 400);
        const Predictor p = fit(Variant::Scnn, train, validation, fast_config(3, 60));
        CHECK(p.manifest.at("leaves").get<int>() >= 2);
    }
}

TEST_CASE("predict localizes noiseless training points within a meter") {
    auto scene = synth::grid_scene({{0, 30, 0, 20, 1}}, 16);
    scene.seed = 11;
    scene.detection_floor = -104.0;
    const auto [train, validation] = synth::generate(scene, 500);
    FitConfig cfg = fast_config(4);
    cfg.train.classifier_epochs = 10;
    cfg.train.regressor_hidden = {64, 32};
    cfg.train.regressor_epochs = 2500;
    cfg.train.learning_rate = 2e-3;
    const Predictor p = fit(Variant::Tnn, train, validation, cfg);

    double mean = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto& fp = train.observations[i * 37];
        const Prediction pred = predict(p, fp.rssi);
        mean += metrics::positioning_error(pred, fp.label) / 10.0;
    }
    CHECK(mean < 1.0);
}

TEST_CASE("prediction is total on all-non-detection input and flags low confidence") {
    const auto [train, validation] = synth::generate(cluster_scene(13, 2), 240);
    const Predictor p = fit(Variant::Scnn, train, validation, fast_config(5));
    SUBCASE("recoded sentinel") {
        const std::vector<double> nothing(static_cast<std::size_t>(p.filter.raw_r()), -105.0);
        const Prediction pred = predict(p, nothing);
        CHECK(pred.low_confidence);
        CHECK(std::isfinite(pred.longitude));
        CHECK(std::isfinite(pred.latitude));
    }
    SUBCASE("raw sentinel is recoded on the fly") {
        const std::vector<double> nothing(static_cast<std::size_t>(p.filter.raw_r()), 100.0);
        CHECK(predict(p, nothing).low_confidence);
    }
    SUBCASE("normal input is not flagged") {
        CHECK_FALSE(predict(p, validation.observations[0].rssi).low_confidence);
    }
    SUBCASE("wrong input width names the expected R") {
        const std::string expected_r = std::to_string(p.filter.raw_r());
        CHECK_THROWS_WITH_AS(predict(p, std::vector<double>{-50.0}), doctest::Contains(expected_r.c_str()),
                             InvalidArgument);
    }
}

TEST_CASE("tnn and scnn consume identical raw inputs") {
    const auto [train, validation] = synth::generate(cluster_scene(17, 2), 240);
    const Predictor tnn = fit(Variant::Tnn, train, validation, fast_config(6));
    const Predictor scnn = fit(Variant::Scnn, train, validation, fast_config(6));
    CHECK(tnn.filter.raw_r() == scnn.filter.raw_r());
    const auto& fp = validation.observations[0];
    CHECK_NOTHROW(predict(tnn, fp.rssi));
    CHECK_NOTHROW(predict(scnn, fp.rssi));
}

TEST_CASE("tsnn and scnn derive the building from the routed leaf region") {
    const auto [train, validation] = synth::generate(cluster_scene(19, 3), 500);
    const Predictor p = fit(Variant::Tsnn, train, validation, fast_config(7));
    std::size_t hits = 0;
    for (const auto& fp : validation.observations) {
        const Prediction pred = predict(p, fp.rssi);
        // the reported building is the leaf's region constraint
        CHECK(pred.leaf_descriptor.find("building{" + std::to_string(pred.building) + "}") !=
              std::string::npos);
        if (pred.building == fp.label.building) ++hits;
    }
    CHECK(hits == validation.n());  // wide margins: every building resolved
}

TEST_CASE("knn_baseline") {
    const Dataset train = five_point_knn_fixture();
    SUBCASE("k=1 on a training fingerprint returns its label exactly") {
        const Prediction pred = knn_baseline(train, {-45, -45}, 1);
        CHECK(pred.longitude == 10.0);
        CHECK(pred.latitude == 10.0);
        CHECK(pred.floor == 1);
        CHECK(pred.building == 1);
    }
    SUBCASE("k=3 matches the hand-computed average and majority") {
        const Prediction pred = knn_baseline(train, {-49.9, -49.9}, 3);
        CHECK(pred.longitude == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(pred.latitude == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(pred.floor == 0);     // votes 2:1
        CHECK(pred.building == 0);  // unanimous
    }
    SUBCASE("k=n is the global centroid with majority labels") {
        const Prediction pred = knn_baseline(train, {-49.9, -49.9}, 5);
        CHECK(pred.longitude == doctest::Approx(4.8).epsilon(1e-12));
        CHECK(pred.latitude == doctest::Approx(4.4).epsilon(1e-12));
        CHECK(pred.floor == 1);     // votes 3:2
        CHECK(pred.building == 0);  // votes 3:2
    }
    SUBCASE("vote ties go to the class of the nearer neighbor") {
        const Dataset pair = testutil::make_dataset({testutil::make_fp({-50, -50}, 0, 0, 0, 0),
                                                     testutil::make_fp({-48, -50}, 5, 5, 1, 1)});
        CHECK(knn_baseline(pair, {-48.8, -50}, 2).floor == 1);  // second row is nearer
        CHECK(knn_baseline(pair, {-49.2, -50}, 2).floor == 0);  // first row is nearer
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(knn_baseline(train, {-50, -50}, 0), InvalidArgument);
        CHECK_THROWS_AS(knn_baseline(train, {-50, -50}, 6), InvalidArgument);
        CHECK_THROWS_AS(knn_baseline(train, {-50}, 1), InvalidArgument);
    }
}

TEST_CASE("saved and loaded predictors yield bit-identical predictions") {
    const auto [train, validation] = synth::generate(cluster_scene(23, 2), 300);
    const Predictor p = fit(Variant::Scnn, train, validation, fast_config(8));

    testutil::TempDir dir("predictor");
    save_predictor(p, dir.path());
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "filter.json"));
    CHECK(std::filesystem::exists(dir / "tree.json"));

    const Predictor loaded = load_predictor(dir.path());
    CHECK(loaded.variant == p.variant);
    CHECK(loaded.filter.kept == p.filter.kept);
    for (const auto& fp : validation.observations) {
        const Prediction a = predict(p, fp.rssi);
        const Prediction b = predict(loaded, fp.rssi);
        CHECK(a.longitude == b.longitude);
        CHECK(a.latitude == b.latitude);
        CHECK(a.floor == b.floor);
        CHECK(a.building == b.building);
        CHECK(a.low_confidence == b.low_confidence);
    }
}

TEST_CASE("metric holdout withholds validation rows from split scoring") {
    const auto [train, validation] = synth::generate(cluster_scene(31, 2), 400);
    FitConfig cfg = fast_config(10);
    cfg.metric_holdout_fraction = 0.3;
    const Predictor p = fit(Variant::Scnn, train, validation, cfg);

    const auto holdout_n = static_cast<std::size_t>(0.3 * static_cast<double>(validation.n()));
    REQUIRE(p.metric_holdout_rows.size() == holdout_n);
    CHECK(std::is_sorted(p.metric_holdout_rows.begin(), p.metric_holdout_rows.end()));
    CHECK(std::adjacent_find(p.metric_holdout_rows.begin(), p.metric_holdout_rows.end()) ==
          p.metric_holdout_rows.end());
    for (const std::size_t row : p.metric_holdout_rows) CHECK(row < validation.n());
    CHECK(p.manifest.at("metric_holdout").at("fraction") == 0.3);

    // same seed, same holdout selection
    const Predictor q = fit(Variant::Scnn, train, validation, cfg);
    CHECK(q.metric_holdout_rows == p.metric_holdout_rows);

    CHECK_THROWS_AS(
        [&] {
            FitConfig bad = cfg;
            bad.metric_holdout_fraction = 1.0;
            return fit(Variant::Scnn, train, validation, bad);
        }(),
        InvalidArgument);
}

TEST_CASE("refitting with the same seed reproduces identical artifacts") {
    const auto [train, validation] = synth::generate(cluster_scene(29, 2), 240);
    const Predictor a = fit(Variant::Scnn, train, validation, fast_config(9));
    const Predictor b = fit(Variant::Scnn, train, validation, fast_config(9));
    testutil::TempDir da("rerun_a"), db("rerun_b");
    save_predictor(a, da.path());
    save_predictor(b, db.path());
    CHECK(read_file(da / "tree.json") == read_file(db / "tree.json"));
    CHECK(read_file(da / "filter.json") == read_file(db / "filter.json"));
}

}  // TEST_SUITE
