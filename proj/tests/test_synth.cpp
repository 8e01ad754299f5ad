#include "doctest.h"
#include <set>
#include "seqloc/metrics.hpp"
#include "seqloc/pipeline.hpp"
#include "seqloc/preprocess.hpp"
#include "seqloc/synth.hpp"
#include "testutil.hpp"

using namespace seqloc;
using namespace seqloc::synth;

namespace {

SceneConfig two_building_scene(std::uint64_t seed, double noise_sigma = 0.0) {
    SceneConfig scene = grid_scene({{0, 30, 0, 20, 1}, {90, 120, 0, 20, 1}}, 10);
    scene.seed = seed;
    scene.noise_sigma = noise_sigma;
    scene.detection_floor = -104.0;
    return scene;
}

double knn_mean_error(const Dataset& train, const Dataset& validation, int k) {
    double total = 0.0;
    for (const auto& fp : validation.observations) {
        const auto pred = pipeline::knn_baseline(train, fp.rssi, k);
        total += metrics::positioning_error(pred, fp.label);
    }
    return total / static_cast<double>(validation.n());
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("zero path loss at the AP position reproduces the transmit power") {
    SceneConfig scene;
    scene.buildings = {{0, 10, 0, 10, 1}};
    scene.aps = {{5, 5, 0, -30.0, 2.0}};
    // distance clamps to 1 m, so the log term vanishes
    CHECK(rssi_at(scene, scene.aps[0], 5, 5, 0, 0.0, 0.0) == -30.0);
    CHECK(rssi_at(scene, scene.aps[0], 5.5, 5, 0, 0.0, 0.0) == -30.0);
}

TEST_CASE("readings clamp into range and apply the detection floor") {
    SceneConfig scene;
    scene.buildings = {{0, 10, 0, 10, 1}};
    scene.aps = {{5, 5, 0, -30.0, 2.0}};
    scene.detection_floor = -80.0;
    // far away: -30 - 20*log10(d); d = 10^4 gives -110 -> below the floor
    CHECK(rssi_at(scene, scene.aps[0], 5 + 1e4, 5, 0, 0.0, 0.0) == kNonDetect);
    // strong positive offset clamps to 0
    CHECK(rssi_at(scene, scene.aps[0], 5, 5, 0, 40.0, 0.0) == 0.0);
}

TEST_CASE("same seed generates identical datasets") {
    const auto [train_a, val_a] = generate(two_building_scene(42), 200);
    const auto [train_b, val_b] = generate(two_building_scene(42), 200);
    CHECK(train_a.observations == train_b.observations);
    CHECK(val_a.observations == val_b.observations);

    const auto [train_c, val_c] = generate(two_building_scene(43), 200);
    CHECK(train_a.observations != train_c.observations);
}

TEST_CASE("device offsets shift readings device by device") {
    SceneConfig scene = two_building_scene(42);
    scene.device_count = 5;
    scene.device_offset_sigma = 6.0;
    const auto [train, validation] = generate(scene, 200);
    // offsets move every detected reading relative to the offset-free run
    SceneConfig flat = scene;
    flat.device_offset_sigma = 0.0;
    const auto [train_flat, val_flat] = generate(flat, 200);
    CHECK(train.observations != train_flat.observations);
    // aux carries the device id for fold splitting
    std::set<std::int64_t> devices;
    for (const auto& fp : train.observations) {
        devices.insert(fp.aux.phone_id);
        CHECK(fp.aux.phone_id == fp.aux.user_id);
    }
    CHECK(devices.size() > 1);
}

TEST_CASE("generated values satisfy the fingerprint range invariant") {
    const SceneConfig scene = two_building_scene(7, 6.0);
    const auto [train, validation] = generate(scene, 400);
    CHECK(train.n() + validation.n() == 400);
    CHECK(validation.n() == 40);
    for (const Dataset* ds : {&train, &validation}) {
        for (const auto& fp : ds->observations) {
            REQUIRE(fp.rssi.size() == static_cast<std::size_t>(ds->r));
            for (const double v : fp.rssi) CHECK((v == kNonDetect || (v >= kRssiMin && v <= kRssiMax)));
            CHECK(fp.label.floor >= 0);
            CHECK(fp.label.floor <= 4);
            const auto& box = scene.buildings[static_cast<std::size_t>(fp.label.building)];
            CHECK(fp.label.longitude >= box.lon_min);
            CHECK(fp.label.longitude <= box.lon_max);
            CHECK(fp.label.latitude >= box.lat_min);
            CHECK(fp.label.latitude <= box.lat_max);
        }
    }
}

TEST_CASE("scene validation rejects bad configurations") {
    SceneConfig scene = two_building_scene(1);
    SUBCASE("no buildings") {
        scene.buildings.clear();
        CHECK_THROWS_AS(generate(scene, 10), InvalidArgument);
    }
    SUBCASE("no APs") {
        scene.aps.clear();
        CHECK_THROWS_AS(generate(scene, 10), InvalidArgument);
    }
    SUBCASE("negative noise") {
        scene.noise_sigma = -1;
        CHECK_THROWS_AS(generate(scene, 10), InvalidArgument);
    }
    SUBCASE("detection floor outside [-104, -50]") {
        scene.detection_floor = -20;
        CHECK_THROWS_AS(generate(scene, 10), InvalidArgument);
    }
    SUBCASE("n too small") { CHECK_THROWS_AS(generate(scene, 1), InvalidArgument); }
}

TEST_CASE("noiseless 1000-point scene: nearest neighbor stays under 2 m") {
    const auto [train, validation] = generate(two_building_scene(11), 1000);
    CHECK(knn_mean_error(train, validation, 1) < 2.0);
}

TEST_CASE("weighted centroid recovers AP planar positions on dense noiseless data") {
    SceneConfig scene = two_building_scene(19);
    const auto [train, validation] = generate(scene, 1500);
    // scene diameter: corner (0,0) to (120,20)
    const double diameter = std::hypot(120.0, 20.0);
    for (int ap = 0; ap < train.r; ++ap) {
        const auto est = estimate_ap_location(train, ap, power_weight());
        REQUIRE(est.has_value());
        const auto& truth = scene.aps[static_cast<std::size_t>(ap)];
        const double err = std::hypot(est->longitude - truth.longitude, est->latitude - truth.latitude);
        CHECK(err < 0.1 * diameter);
    }
}

TEST_CASE("KNN error degrades monotonically with noise (10-seed average)") {
    const double sigmas[] = {0.0, 3.0, 6.0};
    double means[3] = {0, 0, 0};
    for (int s = 0; s < 3; ++s) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto [train, validation] = generate(two_building_scene(seed, sigmas[s]), 300);
            means[s] += knn_mean_error(train, validation, 1);
        }
        means[s] /= 10.0;
    }
    CHECK(means[0] <= means[1]);
    CHECK(means[1] <= means[2]);
}

TEST_CASE("scene JSON round-trips") {
    SceneConfig scene = two_building_scene(5, 2.5);
    scene.device_count = 4;
    scene.device_offset_sigma = 1.5;
    const auto j = scene_to_json(scene);
    const SceneConfig back = scene_from_json(j);
    CHECK(back.buildings.size() == scene.buildings.size());
    CHECK(back.aps.size() == scene.aps.size());
    CHECK(back.aps[3].longitude == scene.aps[3].longitude);
    CHECK(back.noise_sigma == scene.noise_sigma);
    CHECK(back.device_count == scene.device_count);
    CHECK(back.seed == scene.seed);
    const auto [a_train, a_val] = generate(scene, 50);
    const auto [b_train, b_val] = generate(back, 50);
    CHECK(a_train.observations == b_train.observations);
}

TEST_CASE("synthetic output serializes through the UJIIndoorLoc schema") {
    testutil::TempDir dir("synthcsv");
    const auto [train, validation] = generate(two_building_scene(3), 60);
    write_csv(train, dir / "train.csv");
    const Dataset parsed = parse_csv(dir / "train.csv", DatasetRole::Train);
    CHECK(parsed.observations == train.observations);
    // downstream preprocessing consumes it unchanged: no +100 sentinels
    CHECK_NOTHROW(recode_nondetect(parsed));
}

}  // TEST_SUITE
