#include "doctest.h"
#include "seqloc/synth.hpp"
#include "seqloc/tree.hpp"
#include "testutil.hpp"

using namespace seqloc;
using namespace seqloc::tree;

namespace {

// Three well-separated single-floor buildings: pure spatial clusters.
synth::SceneConfig three_building_scene(std::uint64_t seed) {
    auto scene = synth::grid_scene({{0, 30, 0, 20, 1}, {80, 110, 0, 20, 1}, {160, 190, 0, 20, 1}}, 8);
    scene.seed = seed;
    scene.detection_floor = -104.0;
    return scene;
}

// Two buildings with two floors each, for the building-then-floor structure.
// The strong path-loss exponent makes the 4 m floor offset cleanly learnable.
synth::SceneConfig two_floor_scene(std::uint64_t seed) {
    auto scene = synth::grid_scene({{0, 30, 0, 20, 2}, {90, 120, 0, 20, 2}}, 16, -30.0, 3.5);
    scene.seed = seed;
    scene.detection_floor = -104.0;
    return scene;
}

// Enough training to drive every clean split to tau = 1.0, so selection
// falls back to the natural-candidates-first tie break.
TrainSettings floor_capable_settings(std::uint64_t seed) {
    TrainSettings s;
    s.classifier_hidden = {48};
    s.regressor_hidden = {32, 16};
    s.classifier_epochs = 800;
    s.regressor_epochs = 150;
    s.learning_rate = 0.003;
    s.patience = 0;
    s.seed = seed;
    s.threads = 2;
    return s;
}

TrainSettings fast_settings(std::uint64_t seed = 1) {
    TrainSettings s;
    s.classifier_hidden = {24};
    s.regressor_hidden = {32, 16};
    s.classifier_epochs = 60;
    s.regressor_epochs = 150;
    s.patience = 0;
    s.seed = seed;
    s.threads = 2;
    return s;
}

LocationLabel label_at(double lon, double lat, int floor, int building) { return {lon, lat, floor, building}; }

// Exhaustive disjoint-cover check over the training labels, for every
// internal node of a built tree.
void check_partition_invariant(const PartitionNode& node, const Dataset& train) {
    if (node.is_leaf()) return;
    for (const auto& fp : train.observations) {
        if (!node.region.contains(fp.label)) continue;
        const bool in_left = node.internal->left->region.contains(fp.label);
        const bool in_right = node.internal->right->region.contains(fp.label);
        CHECK(in_left != in_right);
    }
    check_partition_invariant(*node.internal->left, train);
    check_partition_invariant(*node.internal->right, train);
}

int tree_depth(const PartitionNode& node) {
    if (node.is_leaf()) return 0;
    return 1 + std::max(tree_depth(*node.internal->left), tree_depth(*node.internal->right));
}

void collect_leaves(const PartitionNode& node, std::vector<const PartitionNode*>& out) {
    if (node.is_leaf()) {
        out.push_back(&node);
        return;
    }
    collect_leaves(*node.internal->left, out);
    collect_leaves(*node.internal->right, out);
}

double recompute_tau(const PartitionNode& node, const Dataset& validation) {
    const SplitCandidate split{node.internal->left->region, node.internal->right->region,
                               node.internal->descriptor};
    std::size_t hits = 0, total = 0;
    for (const auto& fp : validation.observations) {
        const bool in_left = split.left.contains(fp.label);
        const bool in_right = split.right.contains(fp.label);
        if (in_left == in_right) continue;
        ++total;
        if (nn::predict_class(node.internal->classifier, fp.rssi) == (in_right ? 1 : 0)) ++hits;
    }
    REQUIRE(total > 0);
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_SUITE("tree") {

TEST_CASE("region membership is a conjunction of the atomic constraints") {
    Region region;
    CHECK(region.contains(label_at(-1e9, 1e9, 4, 2)));  // root accepts everything

    region.buildings = std::set<int>{0, 1};
    region.floor_max = 2;
    region.halfplanes.push_back({1.0, 0.0, 50.0, false});  // lon <= 50
    CHECK(region.contains(label_at(10, 0, 2, 0)));
    CHECK_FALSE(region.contains(label_at(10, 0, 2, 2)));   // building
    CHECK_FALSE(region.contains(label_at(10, 0, 3, 0)));   // floor
    CHECK_FALSE(region.contains(label_at(60, 0, 2, 0)));   // halfplane
    Region complement = region;
    complement.halfplanes[0].complement = true;
    CHECK(complement.contains(label_at(60, 0, 2, 0)));
    CHECK_FALSE(complement.contains(label_at(50, 0, 2, 0)));  // boundary goes left
}

TEST_CASE("label_by_region assigns Z per the split convention") {
    SplitCandidate building_split{with_buildings({}, {0}), with_buildings({}, {1, 2}), "b0 vs b1&2"};
    SplitCandidate floor_split{with_floor_max({}, 1), with_floor_min({}, 2), "lower vs upper"};

    SUBCASE("building 0 goes left (Z=0)") {
        const Dataset ds = testutil::make_dataset({testutil::make_fp({-50}, 0, 0, 0, 0),
                                                   testutil::make_fp({-50}, 0, 0, 0, 2)});
        CHECK(label_by_region(ds, building_split) == std::vector<int>{0, 1});
    }
    SUBCASE("floor 3 is upper (Z=1)") {
        const Dataset ds = testutil::make_dataset({testutil::make_fp({-50}, 0, 0, 3, 0)});
        CHECK(label_by_region(ds, floor_split) == std::vector<int>{1});
    }
    SUBCASE("empty dataset yields an empty list") {
        Dataset empty;
        empty.r = 1;
        CHECK(label_by_region(empty, building_split).empty());
    }
    SUBCASE("a label outside both sides is a partition violation") {
        SplitCandidate bad{with_buildings({}, {0}), with_buildings({}, {1}), "b0 vs b1"};
        const Dataset ds = testutil::make_dataset({testutil::make_fp({-50}, 0, 0, 0, 2)});
        CHECK_THROWS_AS(label_by_region(ds, bad), PartitionViolation);
    }
}

TEST_CASE("propose_splits emits the natural candidates") {
    const auto [train, validation] = synth::generate(three_building_scene(5), 300);
    SUBCASE("root region includes every one-vs-rest building split") {
        const auto candidates = propose_splits({}, train);
        REQUIRE(!candidates.empty());
        std::vector<std::string> names;
        for (const auto& c : candidates) names.push_back(c.descriptor);
        CHECK(std::find(names.begin(), names.end(), "building 0 vs 1&2") != names.end());
        CHECK(std::find(names.begin(), names.end(), "building 1 vs 0&2") != names.end());
        CHECK(std::find(names.begin(), names.end(), "building 2 vs 0&1") != names.end());
        // natural candidates come before hyperplanes
        CHECK(names.front().rfind("building", 0) == 0);
    }
    SUBCASE("a single-building multi-floor region proposes floor thresholds") {
        const auto [ftrain, fval] = synth::generate(two_floor_scene(6), 300);
        const Region b0 = with_buildings({}, {0});
        const auto candidates = propose_splits(b0, ftrain);
        std::vector<std::string> names;
        for (const auto& c : candidates) names.push_back(c.descriptor);
        CHECK(std::find(names.begin(), names.end(), "floor<=0 vs floor>=1") != names.end());
    }
    SUBCASE("one distinct location yields no candidates") {
        const Dataset ds = testutil::make_dataset({testutil::make_fp({-50}, 5, 5, 0, 0),
                                                   testutil::make_fp({-60}, 5, 5, 0, 0)});
        CHECK(propose_splits({}, ds).empty());
    }
    SUBCASE("spatial clustering adds a separating hyperplane when enabled") {
        ProposalOptions options;
        options.spatial_clustering = true;
        const auto candidates = propose_splits({}, train, options);
        const auto it = std::find_if(candidates.begin(), candidates.end(),
                                     [](const SplitCandidate& c) { return c.descriptor == "2-means hyperplane"; });
        REQUIRE(it != candidates.end());
        // the hyperplane separates at least the two extreme buildings
        std::size_t left_b0 = 0, right_b2 = 0, total_b0 = 0, total_b2 = 0;
        for (const auto& fp : train.observations) {
            if (fp.label.building == 0) {
                ++total_b0;
                if (it->left.contains(fp.label)) ++left_b0;
            } else if (fp.label.building == 2) {
                ++total_b2;
                if (it->right.contains(fp.label)) ++right_b2;
            }
        }
        CHECK((left_b0 == total_b0 || left_b0 == 0));  // building 0 lands wholly on one side
        CHECK((right_b2 == total_b2 || right_b2 == 0));
        // off by default
        const auto defaults = propose_splits({}, train);
        CHECK(std::none_of(defaults.begin(), defaults.end(),
                           [](const SplitCandidate& c) { return c.descriptor == "2-means hyperplane"; }));
    }
    SUBCASE("candidates partition the parent and deduplicate") {
        const auto candidates = propose_splits({}, train);
        std::set<std::vector<int>> assignments;
        for (const auto& c : candidates) {
            const auto z = label_by_region(train, c);  // throws if not a partition
            CHECK(assignments.insert(z).second);       // no duplicate assignments
            CHECK(std::count(z.begin(), z.end(), 1) > 0);
            CHECK(std::count(z.begin(), z.end(), 0) > 0);
        }
    }
}

TEST_CASE("evaluate_split reaches tau 1.0 on wide-margin clusters") {
    const auto [train, validation] = synth::generate(three_building_scene(9), 400);
    const SplitCandidate split{with_buildings({}, {0}), with_buildings({}, {1, 2}), "building 0 vs 1&2"};
    const auto [model, tau] = evaluate_split(split, train, validation, fast_settings(), 123);
    CHECK(tau == 1.0);

    Dataset empty_val;
    empty_val.r = train.r;
    CHECK_THROWS_AS(evaluate_split(split, train, empty_val, fast_settings(), 123), EvaluationError);
}

TEST_CASE("expand_region relaxes floor constraints one floor each way") {
    SUBCASE("upper bound moves up") {
        const Region leaf = with_floor_max(with_buildings({}, {0}), 1);
        const Region expanded = expand_region(leaf, {});
        CHECK(expanded.floor_max == 2);
        CHECK_FALSE(expanded.floor_min.has_value());
        CHECK(expanded.buildings == std::set<int>{0});
    }
    SUBCASE("lower bound moves down") {
        const Region leaf = with_floor_min(with_buildings({}, {2}), 3);
        const Region expanded = expand_region(leaf, {});
        CHECK(expanded.floor_min == 2);
    }
    SUBCASE("bounds stay inside [0, 4]") {
        const Region leaf = with_floor_min(with_floor_max({}, 4), 0);
        const Region expanded = expand_region(leaf, {});
        CHECK(expanded.floor_min == 0);
        CHECK(expanded.floor_max == 4);
    }
    SUBCASE("no floor constraint: region unchanged") {
        const Region leaf = with_buildings({}, {1});
        const Region expanded = expand_region(leaf, {});
        CHECK_FALSE(expanded.floor_min.has_value());
        CHECK_FALSE(expanded.floor_max.has_value());
        CHECK(expanded.buildings == std::set<int>{1});
    }
}

TEST_CASE("fit_leaf trains heads over the expanded subsample") {
    const auto [train, validation] = synth::generate(two_floor_scene(13), 400);
    const Region leaf_region = with_floor_max(with_buildings({}, {0}), 0);
    const LeafHeads heads = fit_leaf(leaf_region, train, fast_settings(), {}, 55);

    CHECK(heads.training_region.floor_max == 1);
    CHECK(heads.training_region.buildings == std::set<int>{0});
    CHECK(heads.floor_classes == std::vector<int>{0, 1});  // expanded floors
    CHECK(heads.admissible_floors == std::vector<int>{0});
    CHECK(heads.floor_classifier.has_value());
    CHECK_FALSE(heads.building_classifier.has_value());  // single building present
    CHECK(heads.building_classes == std::vector<int>{0});

    Dataset empty;
    empty.r = train.r;
    CHECK_THROWS_AS(fit_leaf(leaf_region, empty, fast_settings(), {}, 55), LeafFitError);
}

TEST_CASE("build_tree degenerate stops") {
    const auto [train, validation] = synth::generate(three_building_scene(21), 300);
    SUBCASE("unattainable accuracy threshold yields a single leaf") {
        StoppingRule rule;
        rule.min_accuracy = 1.01;
        rule.min_subsample = 10;
        const auto built = build_tree(train, validation, rule, fast_settings());
        CHECK(built.root->is_leaf());
        CHECK(built.leaf_count() == 1);
        CHECK(built.root->leaf->building_classifier.has_value());
    }
    SUBCASE("min_subsample larger than the sample yields a single leaf with a warning") {
        StoppingRule rule;
        rule.min_subsample = 100000;
        const auto built = build_tree(train, validation, rule, fast_settings());
        CHECK(built.root->is_leaf());
        REQUIRE(!built.warnings.empty());
        CHECK(built.warnings.front().find("min_subsample") != std::string::npos);
    }
    SUBCASE("small per-cluster counts bind the size rule") {
        const auto [small_train, small_val] = synth::generate(three_building_scene(22), 120);
        StoppingRule rule;
        rule.min_subsample = 200;
        const auto built = build_tree(small_train, small_val, rule, fast_settings());
        CHECK(built.leaf_count() == 1);
    }
}

TEST_CASE("build_tree splits buildings then floors on a separable scene") {
    const auto [train, validation] = synth::generate(two_floor_scene(31), 700);
    StoppingRule rule;
    rule.min_accuracy = 0.95;
    rule.min_subsample = 100;
    const auto built = build_tree(train, validation, rule, floor_capable_settings(3));

    // 2 buildings x 2 floors = 4 leaves; building split first, floors second
    CHECK(built.leaf_count() == 4);
    REQUIRE(!built.root->is_leaf());
    CHECK(built.root->internal->descriptor.rfind("building", 0) == 0);
    CHECK(built.root->internal->accuracy == 1.0);
    for (const auto* child : {built.root->internal->left.get(), built.root->internal->right.get()}) {
        REQUIRE(!child->is_leaf());
        CHECK(child->internal->descriptor.rfind("floor", 0) == 0);
        CHECK(child->internal->accuracy >= 0.95);
    }

    check_partition_invariant(*built.root, train);
    CHECK(tree_depth(*built.root) <= fast_settings().max_depth);

    // stored tau equals recomputation from the persisted classifier
    CHECK(built.root->internal->accuracy == recompute_tau(*built.root, validation));
    CHECK(built.root->internal->left->internal->accuracy ==
          recompute_tau(*built.root->internal->left, validation));

    // leaf training regions expand the floor constraint
    std::vector<const PartitionNode*> leaves;
    collect_leaves(*built.root, leaves);
    for (const auto* leaf : leaves) {
        REQUIRE(leaf->leaf.has_value());
        if (leaf->region.floor_max)
            CHECK(*leaf->leaf->training_region.floor_max == *leaf->region.floor_max + 1);
    }
}

TEST_CASE("descend routes every held-out point to its true region") {
    const auto [train, validation] = synth::generate(three_building_scene(37), 600);
    StoppingRule rule;
    rule.min_accuracy = 0.98;
    rule.min_subsample = 60;
    auto settings = fast_settings(11);
    settings.max_depth = 2;  // buildings only, keeps the check exact
    const auto built = build_tree(train, validation, rule, settings);
    CHECK(built.leaf_count() >= 3);

    for (const auto& fp : validation.observations) {
        const PartitionNode& leaf = descend(*built.root, fp.rssi);
        CHECK(leaf.region.contains(fp.label));
    }

    SUBCASE("single-leaf tree returns the root") {
        StoppingRule stop_all;
        stop_all.min_accuracy = 1.01;
        const auto single = build_tree(train, validation, stop_all, fast_settings());
        CHECK(&descend(*single.root, validation.observations[0].rssi) == single.root.get());
    }
}

TEST_CASE("tree JSON round-trip reproduces descend behavior exactly") {
    const auto [train, validation] = synth::generate(two_floor_scene(41), 500);
    StoppingRule rule;
    rule.min_accuracy = 0.90;
    rule.min_subsample = 80;
    const auto built = build_tree(train, validation, rule, fast_settings(7));

    std::map<std::string, std::string> blobs;
    const auto j = tree_to_json(*built.root, blobs);
    const auto loaded = tree_from_json(j, blobs);

    for (const auto& fp : validation.observations) {
        const PartitionNode& a = descend(*built.root, fp.rssi);
        const PartitionNode& b = descend(*loaded, fp.rssi);
        CHECK(a.region.describe() == b.region.describe());
        const auto pa = nn::predict_vector(a.leaf->regressor, fp.rssi);
        const auto pb = nn::predict_vector(b.leaf->regressor, fp.rssi);
        CHECK(pa == pb);  // bit-identical
    }

    std::map<std::string, std::string> blobs2;
    CHECK(tree_to_json(*loaded, blobs2).dump() == j.dump());
}

TEST_CASE("max_depth bounds the tree even when splits keep winning") {
    const auto [train, validation] = synth::generate(three_building_scene(51), 500);
    StoppingRule rule;
    rule.min_accuracy = 0.0;  // never stop on accuracy
    rule.min_subsample = 1;   // never stop on size
    auto settings = fast_settings(5);
    settings.max_depth = 2;
    settings.classifier_epochs = 10;
    settings.regressor_epochs = 10;
    const auto built = build_tree(train, validation, rule, settings);
    CHECK(tree_depth(*built.root) <= 2);
}

}  // TEST_SUITE
