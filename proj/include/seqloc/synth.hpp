#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "seqloc/common.hpp"
#include "seqloc/dataset.hpp"

#include "json.hpp"

namespace seqloc::synth {

struct BuildingBox {
    double lon_min = 0.0, lon_max = 0.0;
    double lat_min = 0.0, lat_max = 0.0;
    int floors = 1;  // floor labels 0..floors-1
};

struct SynthAp {
    double longitude = 0.0;
    double latitude = 0.0;
    int floor = 0;
    double power_dbm = -30.0;       // RSSI at 1 m
    double path_loss_exponent = 2.0;
};

// Scene for the structural generator: device offsets carry the unobserved
// per-device heterogeneity, noise_sigma the per-reading error.
struct SceneConfig {
    std::vector<BuildingBox> buildings;
    std::vector<SynthAp> aps;
    int device_count = 1;
    double device_offset_sigma = 0.0;   // dBm
    double noise_sigma = 0.0;           // dBm
    double detection_floor = -95.0;     // readings below this become non-detections
    std::uint64_t seed = 1;
};

constexpr double kFloorHeightM = 4.0;  // vertical separation per floor in the distance term

inline void validate(const SceneConfig& scene) {
    if (scene.buildings.empty()) throw InvalidArgument("scene needs at least one building");
    if (scene.aps.empty()) throw InvalidArgument("scene needs at least one AP");
    if (scene.noise_sigma < 0.0) throw InvalidArgument("noise_sigma must be >= 0");
    if (scene.detection_floor < -104.0 || scene.detection_floor > -50.0)
        throw InvalidArgument("detection_floor must lie in [-104, -50]");
    if (scene.device_count < 1) throw InvalidArgument("device_count must be >= 1");
    for (const auto& b : scene.buildings) {
        if (b.lon_max <= b.lon_min || b.lat_max <= b.lat_min)
            throw InvalidArgument("building box must have positive extent");
        if (b.floors < 1 || b.floors > kFloorMax + 1)
            throw InvalidArgument("building floor count must lie in [1, 5]");
    }
}

// Log-distance path loss with the distance clamped below at 1 m. Values below
// the detection floor become -105; the rest clamp into [-104, 0].
inline double rssi_at(const SceneConfig& scene, const SynthAp& ap, double lon, double lat, int floor,
                      double device_offset, double noise) {
    const double dx = lon - ap.longitude;
    const double dy = lat - ap.latitude;
    const double dz = kFloorHeightM * static_cast<double>(floor - ap.floor);
    const double distance = std::max(1.0, std::sqrt(dx * dx + dy * dy + dz * dz));
    const double raw = ap.power_dbm - 10.0 * ap.path_loss_exponent * std::log10(distance) + device_offset + noise;
    if (raw < scene.detection_floor) return kNonDetect;
    return std::clamp(raw, kRssiMin, kRssiMax);
}

// Draws n fingerprints: locations uniform over the union of the building
// boxes (area-weighted), floors uniform per building. The last ~10% of rows
// (by generation time) form the validation set.
inline std::pair<Dataset, Dataset> generate(const SceneConfig& scene, std::size_t n) {
    validate(scene);
    if (n < 2) throw InvalidArgument("generate: n must be >= 2");

    Rng rng(scene.seed);

    std::vector<double> device_offsets(static_cast<std::size_t>(scene.device_count), 0.0);
    for (double& offset : device_offsets) offset = rng.normal(0.0, scene.device_offset_sigma);

    std::vector<double> areas;
    double total_area = 0.0;
    for (const auto& b : scene.buildings) {
        areas.push_back((b.lon_max - b.lon_min) * (b.lat_max - b.lat_min));
        total_area += areas.back();
    }

    Dataset all;
    all.r = static_cast<int>(scene.aps.size());
    all.observations.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pick = rng.uniform(0.0, total_area);
        std::size_t building = 0;
        double acc = 0.0;
        for (std::size_t b = 0; b < areas.size(); ++b) {
            acc += areas[b];
            if (pick < acc || b + 1 == areas.size()) {
                building = b;
                break;
            }
        }
        const auto& box = scene.buildings[building];
        Fingerprint fp;
        fp.label.longitude = rng.uniform(box.lon_min, box.lon_max);
        fp.label.latitude = rng.uniform(box.lat_min, box.lat_max);
        fp.label.floor = static_cast<int>(rng.uniform_int(0, box.floors - 1));
        fp.label.building = static_cast<int>(building);
        if (fp.label.longitude < box.lon_min || fp.label.longitude > box.lon_max ||
            fp.label.latitude < box.lat_min || fp.label.latitude > box.lat_max)
            throw InternalError("generator produced a location outside every building");

        const auto device = static_cast<std::size_t>(rng.uniform_int(0, scene.device_count - 1));
        fp.aux.user_id = static_cast<std::int64_t>(device);
        fp.aux.phone_id = static_cast<std::int64_t>(device);
        fp.aux.space_id = 0;
        fp.aux.timestamp = static_cast<std::int64_t>(i);

        fp.rssi.reserve(scene.aps.size());
        for (const auto& ap : scene.aps) {
            const double noise = scene.noise_sigma > 0.0 ? rng.normal(0.0, scene.noise_sigma) : 0.0;
            fp.rssi.push_back(rssi_at(scene, ap, fp.label.longitude, fp.label.latitude, fp.label.floor,
                                      device_offsets[device], noise));
        }
        all.observations.push_back(std::move(fp));
    }

    const std::size_t val_n = std::max<std::size_t>(1, n / 10);
    Dataset train, validation;
    train.r = validation.r = all.r;
    train.role = DatasetRole::Train;
    validation.role = DatasetRole::Validation;
    train.observations.assign(all.observations.begin(),
                              all.observations.end() - static_cast<std::ptrdiff_t>(val_n));
    validation.observations.assign(all.observations.end() - static_cast<std::ptrdiff_t>(val_n),
                                   all.observations.end());
    return {std::move(train), std::move(validation)};
}

inline SceneConfig scene_from_json(const nlohmann::json& j) {
    SceneConfig scene;
    for (const auto& b : j.at("buildings"))
        scene.buildings.push_back({b.at("lon_min").get<double>(), b.at("lon_max").get<double>(),
                                   b.at("lat_min").get<double>(), b.at("lat_max").get<double>(),
                                   b.value("floors", 1)});
    for (const auto& a : j.at("aps"))
        scene.aps.push_back({a.at("longitude").get<double>(), a.at("latitude").get<double>(),
                             a.value("floor", 0), a.value("power_dbm", -30.0),
                             a.value("path_loss_exponent", 2.0)});
    scene.device_count = j.value("device_count", 1);
    scene.device_offset_sigma = j.value("device_offset_sigma", 0.0);
    scene.noise_sigma = j.value("noise_sigma", 0.0);
    scene.detection_floor = j.value("detection_floor", -95.0);
    scene.seed = j.value("seed", 1ULL);
    return scene;
}

inline nlohmann::json scene_to_json(const SceneConfig& scene) {
    nlohmann::json buildings = nlohmann::json::array();
    for (const auto& b : scene.buildings)
        buildings.push_back({{"lon_min", b.lon_min},
                             {"lon_max", b.lon_max},
                             {"lat_min", b.lat_min},
                             {"lat_max", b.lat_max},
                             {"floors", b.floors}});
    nlohmann::json aps = nlohmann::json::array();
    for (const auto& a : scene.aps)
        aps.push_back({{"longitude", a.longitude},
                       {"latitude", a.latitude},
                       {"floor", a.floor},
                       {"power_dbm", a.power_dbm},
                       {"path_loss_exponent", a.path_loss_exponent}});
    return nlohmann::json{{"buildings", buildings},
                          {"aps", aps},
                          {"device_count", scene.device_count},
                          {"device_offset_sigma", scene.device_offset_sigma},
                          {"noise_sigma", scene.noise_sigma},
                          {"detection_floor", scene.detection_floor},
                          {"seed", scene.seed}};
}

// A compact template scene: evenly spread APs over each building, one per
// grid cell, alternating floors. Used by tests and the CLI demo config.
inline SceneConfig grid_scene(const std::vector<BuildingBox>& buildings, int aps_per_building,
                              double power_dbm = -30.0, double exponent = 2.2) {
    SceneConfig scene;
    scene.buildings = buildings;
    for (const auto& box : buildings) {
        const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(aps_per_building)))));
        const int rows = (aps_per_building + cols - 1) / cols;
        int placed = 0;
        for (int r = 0; r < rows && placed < aps_per_building; ++r) {
            for (int c = 0; c < cols && placed < aps_per_building; ++c, ++placed) {
                SynthAp ap;
                ap.longitude = box.lon_min + (box.lon_max - box.lon_min) * (c + 0.5) / cols;
                ap.latitude = box.lat_min + (box.lat_max - box.lat_min) * (r + 0.5) / rows;
                ap.floor = placed % box.floors;
                ap.power_dbm = power_dbm;
                ap.path_loss_exponent = exponent;
                scene.aps.push_back(ap);
            }
        }
    }
    return scene;
}

}  // namespace seqloc::synth
