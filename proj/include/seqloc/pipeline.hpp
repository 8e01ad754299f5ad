#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "seqloc/common.hpp"
#include "seqloc/dataset.hpp"
#include "seqloc/preprocess.hpp"
#include "seqloc/tree.hpp"

#include "json.hpp"

namespace seqloc::pipeline {

enum class Variant { Tnn, Tsnn, Scnn };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::Tnn: return "tnn";
        case Variant::Tsnn: return "tsnn";
        case Variant::Scnn: return "scnn";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "tnn") return Variant::Tnn;
    if (s == "tsnn") return Variant::Tsnn;
    if (s == "scnn") return Variant::Scnn;
    throw InvalidArgument("unknown variant '" + s + "' (expected tnn, tsnn or scnn)");
}

struct FitConfig {
    PreprocessParams preprocess;
    tree::StoppingRule stopping;
    tree::TrainSettings train;
    tree::ExpansionRule expansion;
    // Fraction of the validation set withheld from split scoring, reserved
    // for an unbiased metric report (0 = score and report on all of it, as
    // the sequential procedure does by default).
    double metric_holdout_fraction = 0.0;
};

struct Predictor {
    Variant variant = Variant::Scnn;
    FeatureFilter filter;
    std::unique_ptr<tree::PartitionNode> tree_root;
    std::vector<tree::NodeLog> node_log;
    nlohmann::json manifest;
    std::vector<std::size_t> metric_holdout_rows;  // validation rows never used for split scoring
};

struct Prediction {
    double longitude = 0.0;
    double latitude = 0.0;
    int floor = 0;
    int building = 0;
    bool low_confidence = false;  // fewer than 3 detected APs after filtering
    bool floor_clamped = false;   // classifier output fell outside the leaf's floor set
    std::string leaf_descriptor;
};

// Trains the full chain: recode, filters, variant-specific tree, leaf heads.
// tsnn forces building-only splits; tnn stops immediately at the root (its
// leaf's building classifier covers building reporting).
inline Predictor fit(Variant variant, const Dataset& train_raw, const Dataset& validation_raw,
                     const FitConfig& config) {
    const Dataset train_recoded = recode_nondetect(train_raw);
    const Dataset validation_recoded = recode_nondetect(validation_raw);

    Predictor p;
    p.variant = variant;
    p.filter = build_filter(train_recoded, validation_recoded, config.preprocess);
    const Dataset train = apply_filter(train_recoded, p.filter);
    Dataset validation = apply_filter(validation_recoded, p.filter);

    if (config.metric_holdout_fraction > 0.0) {
        if (config.metric_holdout_fraction >= 1.0)
            throw InvalidArgument("metric_holdout_fraction must lie in [0, 1)");
        std::vector<std::size_t> order(validation.n());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(config.train.seed, "metric-holdout"));
        rng.shuffle(order);
        const auto holdout_n =
            static_cast<std::size_t>(config.metric_holdout_fraction * static_cast<double>(validation.n()));
        p.metric_holdout_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_n));
        std::sort(p.metric_holdout_rows.begin(), p.metric_holdout_rows.end());
        Dataset scoring;
        scoring.r = validation.r;
        scoring.role = validation.role;
        for (std::size_t i = 0, h = 0; i < validation.n(); ++i) {
            if (h < p.metric_holdout_rows.size() && p.metric_holdout_rows[h] == i)
                ++h;
            else
                scoring.observations.push_back(validation.observations[i]);
        }
        validation = std::move(scoring);
    }

    tree::StoppingRule rule = config.stopping;
    tree::TrainSettings settings = config.train;
    switch (variant) {
        case Variant::Scnn: break;
        case Variant::Tsnn:
            // Split by building regardless of accuracy or subsample size.
            settings.proposals = {true, false, false, false};
            rule.min_accuracy = 0.0;
            rule.min_subsample = 1;
            break;
        case Variant::Tnn:
            settings.proposals = {false, false, false, false};
            break;
    }

    tree::BuildResult built = tree::build_tree(train, validation, rule, settings, config.expansion);
    p.tree_root = std::move(built.root);
    p.node_log = std::move(built.log);

    nlohmann::json log = nlohmann::json::array();
    for (const auto& entry : p.node_log)
        log.push_back({{"region", entry.region},
                       {"chosen", entry.chosen},
                       {"tau", entry.tau},
                       {"train_count", entry.train_count},
                       {"leaf", entry.became_leaf},
                       {"stop_reason", entry.stop_reason}});
    p.manifest["variant"] = to_string(variant);
    p.manifest["seed"] = config.train.seed;
    p.manifest["created_at"] = iso8601_now();
    p.manifest["dataset_content_hashes"] = {{"train", content_hash(train_raw)},
                                            {"validation", content_hash(validation_raw)}};
    p.manifest["kept_features"] = p.filter.kept.size();
    p.manifest["raw_features"] = p.filter.raw_r();
    p.manifest["leaves"] = tree::BuildResult::count_leaves(*p.tree_root);
    p.manifest["nodes"] = log;
    p.manifest["warnings"] = built.warnings;
    if (variant == Variant::Tnn) p.manifest["extensions"] = {"tnn_auxiliary_building_classifier"};
    if (!p.metric_holdout_rows.empty())
        p.manifest["metric_holdout"] = {{"fraction", config.metric_holdout_fraction},
                                        {"rows", p.metric_holdout_rows}};
    return p;
}

namespace detail {

inline std::vector<double> recode_vector(const std::vector<double>& raw) {
    std::vector<double> out = raw;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double& v = out[i];
        if (v == kRawNonDetect) {
            v = kNonDetect;
        } else if (v != kNonDetect && (v < kRssiMin || v > kRssiMax)) {
            throw DataIntegrityError("RSSI value " + format_double(v) + " in column " +
                                     seqloc::detail::wap_name(static_cast<int>(i)) +
                                     " outside [-104,0] u {100,-105}");
        }
    }
    return out;
}

inline int clamp_to_admissible(int predicted, const std::vector<int>& admissible) {
    int best = admissible.front();
    for (const int f : admissible)
        if (std::abs(f - predicted) < std::abs(best - predicted)) best = f;  // ties keep the lower floor
    return best;
}

}  // namespace detail

// Localizes one raw fingerprint (R_raw RSSI values, +100 or -105 allowed for
// non-detections).
inline Prediction predict(const Predictor& p, const std::vector<double>& raw_rssi) {
    if (static_cast<int>(raw_rssi.size()) != p.filter.raw_r())
        throw InvalidArgument("predict: input has " + std::to_string(raw_rssi.size()) +
                              " RSSI values, predictor expects " + std::to_string(p.filter.raw_r()));
    const std::vector<double> recoded = detail::recode_vector(raw_rssi);
    std::vector<double> x;
    x.reserve(p.filter.kept.size());
    for (const int col : p.filter.kept) x.push_back(recoded[static_cast<std::size_t>(col)]);

    int detected = 0;
    for (const double v : x)
        if (v > kNonDetect) ++detected;

    const tree::PartitionNode& leaf = tree::descend(*p.tree_root, x);
    const tree::LeafHeads& heads = *leaf.leaf;

    Prediction out;
    out.low_confidence = detected < 3;
    out.leaf_descriptor = leaf.region.describe();

    const auto coords = nn::predict_vector(heads.regressor, x);
    out.longitude = coords[0];
    out.latitude = coords[1];

    int floor = heads.floor_classes.front();
    if (heads.floor_classifier)
        floor = heads.floor_classes[static_cast<std::size_t>(nn::predict_class(*heads.floor_classifier, x))];
    const bool admissible =
        std::find(heads.admissible_floors.begin(), heads.admissible_floors.end(), floor) !=
        heads.admissible_floors.end();
    if (!admissible) {
        floor = detail::clamp_to_admissible(floor, heads.admissible_floors);
        out.floor_clamped = true;
    }
    out.floor = floor;

    if (leaf.region.buildings && leaf.region.buildings->size() == 1) {
        out.building = *leaf.region.buildings->begin();
    } else if (heads.building_classifier) {
        out.building =
            heads.building_classes[static_cast<std::size_t>(nn::predict_class(*heads.building_classifier, x))];
    } else {
        out.building = heads.building_classes.front();
    }
    return out;
}

// k-nearest-neighbors reference: Euclidean distance in recoded RSSI space,
// coordinate mean over the k neighbors, majority floor/building with ties
// going to the class of the nearer neighbor.
inline Prediction knn_baseline(const Dataset& train, const std::vector<double>& x, int k) {
    if (k < 1) throw InvalidArgument("knn_baseline: k must be >= 1");
    if (static_cast<std::size_t>(k) > train.n())
        throw InvalidArgument("knn_baseline: k exceeds the training sample size");
    if (static_cast<int>(x.size()) != train.r)
        throw InvalidArgument("knn_baseline: query has " + std::to_string(x.size()) +
                              " features, training data has " + std::to_string(train.r));

    std::vector<std::pair<double, std::size_t>> distances;
    distances.reserve(train.n());
    for (std::size_t i = 0; i < train.n(); ++i) {
        const auto& rssi = train.observations[i].rssi;
        double d2 = 0.0;
        for (std::size_t j = 0; j < rssi.size(); ++j) {
            const double diff = rssi[j] - x[j];
            d2 += diff * diff;
        }
        distances.emplace_back(d2, i);
    }
    std::stable_sort(distances.begin(), distances.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    Prediction out;
    double lon = 0.0, lat = 0.0;
    std::map<int, int> floor_votes, building_votes;
    std::map<int, std::size_t> floor_first, building_first;  // rank of each class's nearest neighbor
    for (int i = 0; i < k; ++i) {
        const auto& label = train.observations[distances[static_cast<std::size_t>(i)].second].label;
        lon += label.longitude;
        lat += label.latitude;
        ++floor_votes[label.floor];
        ++building_votes[label.building];
        floor_first.try_emplace(label.floor, static_cast<std::size_t>(i));
        building_first.try_emplace(label.building, static_cast<std::size_t>(i));
    }
    out.longitude = lon / k;
    out.latitude = lat / k;

    auto majority = [](const std::map<int, int>& votes, const std::map<int, std::size_t>& first) {
        int best = votes.begin()->first;
        for (const auto& [cls, count] : votes) {
            if (count > votes.at(best) || (count == votes.at(best) && first.at(cls) < first.at(best)))
                best = cls;
        }
        return best;
    };
    out.floor = majority(floor_votes, floor_first);
    out.building = majority(building_votes, building_first);

    int detected = 0;
    for (const double v : x)
        if (v > kNonDetect) ++detected;
    out.low_confidence = detected < 3;
    out.leaf_descriptor = "knn";
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: a predictor directory holds manifest.json, filter.json,
// tree.json and content-addressed model blobs.
// ---------------------------------------------------------------------------

inline void save_predictor(const Predictor& p, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "models");
    std::map<std::string, std::string> blobs;
    const nlohmann::json tree_json = tree::tree_to_json(*p.tree_root, blobs);
    write_file(dir / "tree.json", tree_json.dump(2));
    write_file(dir / "filter.json", filter_to_json(p.filter).dump(2));
    write_file(dir / "manifest.json", p.manifest.dump(2));
    for (const auto& [key, bytes] : blobs) write_file(dir / "models" / (key + ".json"), bytes);
}

inline Predictor load_predictor(const std::filesystem::path& dir) {
    Predictor p;
    p.manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    p.variant = variant_from_string(p.manifest.at("variant").get<std::string>());
    p.filter = filter_from_json(nlohmann::json::parse(read_file(dir / "filter.json")));
    const nlohmann::json tree_json = nlohmann::json::parse(read_file(dir / "tree.json"));

    std::map<std::string, std::string> blobs;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "models"))
        blobs.emplace(entry.path().stem().string(), read_file(entry.path()));
    p.tree_root = tree::tree_from_json(tree_json, blobs);
    return p;
}

}  // namespace seqloc::pipeline
