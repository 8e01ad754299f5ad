#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "seqloc/common.hpp"
#include "seqloc/dataset.hpp"
#include "seqloc/neuralnet.hpp"

#include "json.hpp"

namespace seqloc::tree {

// ---------------------------------------------------------------------------
// Regions over the location space: conjunctions of building membership,
// floor bounds, and planar halfplanes. The root region accepts every label.
// ---------------------------------------------------------------------------

struct Halfplane {
    double a = 0.0, b = 0.0, c = 0.0;
    bool complement = false;  // false: a*lon + b*lat <= c; true: the strict opposite side

    bool contains(double lon, double lat) const {
        const double v = a * lon + b * lat;
        return complement ? v > c : v <= c;
    }
};

struct Region {
    std::optional<std::set<int>> buildings;  // building must be in the set
    std::optional<int> floor_min;            // floor >= floor_min
    std::optional<int> floor_max;            // floor <= floor_max
    std::vector<Halfplane> halfplanes;

    bool contains(const LocationLabel& label) const {
        if (buildings && !buildings->contains(label.building)) return false;
        if (floor_min && label.floor < *floor_min) return false;
        if (floor_max && label.floor > *floor_max) return false;
        for (const auto& h : halfplanes)
            if (!h.contains(label.longitude, label.latitude)) return false;
        return true;
    }

    bool unconstrained() const {
        return !buildings && !floor_min && !floor_max && halfplanes.empty();
    }

    std::string describe() const {
        if (unconstrained()) return "all";
        std::string out;
        auto join = [&out](const std::string& part) {
            if (!out.empty()) out += " & ";
            out += part;
        };
        if (buildings) {
            std::string b = "building{";
            bool first = true;
            for (const int id : *buildings) {
                if (!first) b += ',';
                b += std::to_string(id);
                first = false;
            }
            join(b + "}");
        }
        if (floor_min) join("floor>=" + std::to_string(*floor_min));
        if (floor_max) join("floor<=" + std::to_string(*floor_max));
        for (const auto& h : halfplanes)
            join(format_double(h.a) + "*lon+" + format_double(h.b) + "*lat" + (h.complement ? ">" : "<=") +
                 format_double(h.c));
        return out;
    }
};

inline Region with_buildings(Region region, std::set<int> ids) {
    region.buildings = std::move(ids);
    return region;
}

inline Region with_floor_max(Region region, int floor_max) {
    region.floor_max = region.floor_max ? std::min(*region.floor_max, floor_max) : floor_max;
    return region;
}

inline Region with_floor_min(Region region, int floor_min) {
    region.floor_min = region.floor_min ? std::max(*region.floor_min, floor_min) : floor_min;
    return region;
}

inline Region with_halfplane(Region region, Halfplane h) {
    region.halfplanes.push_back(h);
    return region;
}

struct SplitCandidate {
    Region left;   // Z = 0
    Region right;  // Z = 1
    std::string descriptor;
};

// Z_i = 1 iff the label lies in the right region of the split.
inline std::vector<int> label_by_region(const Dataset& ds, const SplitCandidate& split) {
    std::vector<int> z;
    z.reserve(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const auto& label = ds.observations[i].label;
        const bool in_left = split.left.contains(label);
        const bool in_right = split.right.contains(label);
        if (in_left == in_right)
            throw PartitionViolation("observation " + std::to_string(i) + " is " +
                                     (in_left ? "inside both sides" : "outside both sides") + " of split '" +
                                     split.descriptor + "'");
        z.push_back(in_right ? 1 : 0);
    }
    return z;
}

// ---------------------------------------------------------------------------
// Candidate proposal: natural splits (buildings, floor thresholds) first,
// then axis-aligned hyperplanes at coordinate medians, optionally a 2-means
// clustering hyperplane. Candidates inducing identical label assignments are
// deduplicated; one-sided candidates are discarded.
// ---------------------------------------------------------------------------

struct ProposalOptions {
    bool building_splits = true;
    bool floor_splits = true;
    bool median_splits = true;
    bool spatial_clustering = false;
};

namespace detail {

inline double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Deterministic 2-means on planar coordinates; returns the perpendicular
// bisector of the final centers, or nullopt when the points coincide.
inline std::optional<Halfplane> two_means_hyperplane(const std::vector<const LocationLabel*>& labels) {
    const LocationLabel* lo = labels.front();
    const LocationLabel* hi = labels.front();
    for (const auto* l : labels) {
        if (l->longitude < lo->longitude || (l->longitude == lo->longitude && l->latitude < lo->latitude)) lo = l;
        if (l->longitude > hi->longitude || (l->longitude == hi->longitude && l->latitude > hi->latitude)) hi = l;
    }
    double c0x = lo->longitude, c0y = lo->latitude, c1x = hi->longitude, c1y = hi->latitude;
    for (int iter = 0; iter < 20; ++iter) {
        double s0x = 0, s0y = 0, s1x = 0, s1y = 0;
        std::size_t n0 = 0, n1 = 0;
        for (const auto* l : labels) {
            const double d0 = std::hypot(l->longitude - c0x, l->latitude - c0y);
            const double d1 = std::hypot(l->longitude - c1x, l->latitude - c1y);
            if (d0 <= d1) {
                s0x += l->longitude;
                s0y += l->latitude;
                ++n0;
            } else {
                s1x += l->longitude;
                s1y += l->latitude;
                ++n1;
            }
        }
        if (n0 == 0 || n1 == 0) break;
        c0x = s0x / static_cast<double>(n0);
        c0y = s0y / static_cast<double>(n0);
        c1x = s1x / static_cast<double>(n1);
        c1y = s1y / static_cast<double>(n1);
    }
    const double ax = c1x - c0x, ay = c1y - c0y;
    if (std::hypot(ax, ay) < 1e-12) return std::nullopt;
    const double c = ax * 0.5 * (c0x + c1x) + ay * 0.5 * (c0y + c1y);
    return Halfplane{ax, ay, c, false};
}

}  // namespace detail

inline std::vector<SplitCandidate> propose_splits(const Region& region, const Dataset& train,
                                                  const ProposalOptions& options = {}) {
    std::vector<const LocationLabel*> labels;
    for (const auto& fp : train.observations)
        if (region.contains(fp.label)) labels.push_back(&fp.label);
    if (labels.size() < 2) return {};
    bool all_equal = true;
    for (const auto* l : labels)
        if (!(*l == *labels.front())) {
            all_equal = false;
            break;
        }
    if (all_equal) return {};

    std::vector<SplitCandidate> raw;

    if (options.building_splits) {
        std::set<int> present;
        for (const auto* l : labels) present.insert(l->building);
        if (present.size() >= 2) {
            std::set<int> allowed;
            if (region.buildings)
                allowed = *region.buildings;
            else
                for (int b = kBuildingMin; b <= kBuildingMax; ++b) allowed.insert(b);
            for (const int b : present) {
                std::set<int> rest = allowed;
                rest.erase(b);
                std::string rest_names;
                for (const int o : rest) rest_names += (rest_names.empty() ? "" : "&") + std::to_string(o);
                raw.push_back({with_buildings(region, {b}), with_buildings(region, rest),
                               "building " + std::to_string(b) + " vs " + rest_names});
            }
        }
    }

    if (options.floor_splits) {
        std::set<int> floors;
        for (const auto* l : labels) floors.insert(l->floor);
        if (floors.size() >= 2) {
            for (int c = *floors.begin(); c < *floors.rbegin(); ++c)
                raw.push_back({with_floor_max(region, c), with_floor_min(region, c + 1),
                               "floor<=" + std::to_string(c) + " vs floor>=" + std::to_string(c + 1)});
        }
    }

    if (options.median_splits) {
        std::vector<double> lons, lats;
        lons.reserve(labels.size());
        lats.reserve(labels.size());
        for (const auto* l : labels) {
            lons.push_back(l->longitude);
            lats.push_back(l->latitude);
        }
        const double lon_med = detail::median_of(std::move(lons));
        const double lat_med = detail::median_of(std::move(lats));
        raw.push_back({with_halfplane(region, {1.0, 0.0, lon_med, false}),
                       with_halfplane(region, {1.0, 0.0, lon_med, true}),
                       "lon<=" + format_double(lon_med) + " vs lon>" + format_double(lon_med)});
        raw.push_back({with_halfplane(region, {0.0, 1.0, lat_med, false}),
                       with_halfplane(region, {0.0, 1.0, lat_med, true}),
                       "lat<=" + format_double(lat_med) + " vs lat>" + format_double(lat_med)});
    }

    if (options.spatial_clustering) {
        if (const auto h = detail::two_means_hyperplane(labels)) {
            Halfplane other = *h;
            other.complement = true;
            raw.push_back({with_halfplane(region, *h), with_halfplane(region, other), "2-means hyperplane"});
        }
    }

    // Drop one-sided candidates; deduplicate identical label assignments.
    std::vector<SplitCandidate> out;
    std::set<std::vector<bool>> seen;
    for (auto& cand : raw) {
        std::vector<bool> assignment;
        assignment.reserve(labels.size());
        bool any_left = false, any_right = false, valid = true;
        for (const auto* l : labels) {
            const bool in_left = cand.left.contains(*l);
            const bool in_right = cand.right.contains(*l);
            if (in_left == in_right) {
                valid = false;
                break;
            }
            assignment.push_back(in_right);
            (in_right ? any_right : any_left) = true;
        }
        if (!valid || !any_left || !any_right) continue;
        if (seen.insert(std::move(assignment)).second) out.push_back(std::move(cand));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tree nodes, stopping rule, leaf heads.
// ---------------------------------------------------------------------------

struct StoppingRule {
    int min_subsample = 800;
    double min_accuracy = 0.98;
};

struct ExpansionRule {
    int floor_margin = 1;  // floors of neighborhood expansion around the leaf
};

// Relaxes each floor constraint by the margin in every available direction;
// building and coordinate constraints stay.
inline Region expand_region(const Region& leaf_region, const ExpansionRule& rule) {
    Region expanded = leaf_region;
    if (expanded.floor_max) expanded.floor_max = std::min(kFloorMax, *expanded.floor_max + rule.floor_margin);
    if (expanded.floor_min) expanded.floor_min = std::max(kFloorMin, *expanded.floor_min - rule.floor_margin);
    return expanded;
}

// Per-leaf heads: a coordinate regressor plus floor and building classifiers
// over the expanded subsample. A classifier with a single class is stored as
// that constant.
struct LeafHeads {
    nn::MlpModel regressor;  // rssi -> (lon, lat)
    std::optional<nn::MlpModel> floor_classifier;
    std::vector<int> floor_classes;       // classifier output index -> floor
    std::vector<int> admissible_floors;   // floors admitted by the exact leaf region
    std::optional<nn::MlpModel> building_classifier;
    std::vector<int> building_classes;    // classifier output index -> building
    Region training_region;
};

struct PartitionNode {
    Region region;

    struct Internal {
        nn::MlpModel classifier;  // binary: class 1 routes right
        double accuracy = 0.0;    // tau on the region-restricted validation sample
        std::string descriptor;
        std::unique_ptr<PartitionNode> left;
        std::unique_ptr<PartitionNode> right;
    };

    std::optional<Internal> internal;
    std::optional<LeafHeads> leaf;

    bool is_leaf() const { return !internal.has_value(); }
};

struct TrainSettings {
    std::vector<int> classifier_hidden{128, 64};
    std::vector<int> regressor_hidden{128, 64};
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
    double learning_rate = 1e-3;
    int batch_size = 64;
    int classifier_epochs = 60;
    int regressor_epochs = 400;
    int patience = 10;
    int max_depth = 6;
    int threads = 1;
    std::uint64_t seed = 1;
    ProposalOptions proposals;
};

namespace detail {

inline std::vector<std::size_t> indices_in_region(const Dataset& ds, const Region& region) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (region.contains(ds.observations[i].label)) idx.push_back(i);
    return idx;
}

inline nn::TrainConfig classifier_config(const TrainSettings& s, std::uint64_t seed) {
    nn::TrainConfig cfg;
    cfg.loss = nn::Loss::CrossEntropy;
    cfg.optimizer = s.optimizer;
    cfg.learning_rate = s.learning_rate;
    cfg.batch_size = s.batch_size;
    cfg.epochs = s.classifier_epochs;
    cfg.patience = s.patience;
    cfg.seed = seed;
    cfg.input_norm = nn::InputNormMode::FixedRssiRange;
    return cfg;
}

inline nn::TrainConfig regressor_config(const TrainSettings& s, std::uint64_t seed) {
    nn::TrainConfig cfg;
    cfg.loss = nn::Loss::MeanSquaredError;
    cfg.optimizer = s.optimizer;
    cfg.learning_rate = s.learning_rate;
    cfg.batch_size = s.batch_size;
    cfg.epochs = s.regressor_epochs;
    cfg.patience = s.patience;
    cfg.seed = seed;
    cfg.input_norm = nn::InputNormMode::FixedRssiRange;
    cfg.normalize_targets = true;
    return cfg;
}

inline std::vector<double> one_hot(int k, int width) {
    std::vector<double> v(static_cast<std::size_t>(width), 0.0);
    v[static_cast<std::size_t>(k)] = 1.0;
    return v;
}

// Trains a classifier over the distinct values of `value_of` on the given
// rows; returns nullopt plus the single class when there is nothing to learn.
template <typename ValueOf>
inline std::pair<std::optional<nn::MlpModel>, std::vector<int>> train_value_classifier(
    const Dataset& ds, const std::vector<std::size_t>& rows, ValueOf&& value_of, const TrainSettings& s,
    std::uint64_t seed) {
    std::set<int> distinct;
    for (const std::size_t i : rows) distinct.insert(value_of(ds.observations[i]));
    std::vector<int> classes(distinct.begin(), distinct.end());
    if (classes.size() < 2) return {std::nullopt, classes};

    std::map<int, int> class_index;
    for (std::size_t k = 0; k < classes.size(); ++k) class_index[classes[k]] = static_cast<int>(k);
    std::vector<nn::Sample> samples;
    samples.reserve(rows.size());
    for (const std::size_t i : rows)
        samples.emplace_back(ds.observations[i].rssi,
                             one_hot(class_index.at(value_of(ds.observations[i])), static_cast<int>(classes.size())));
    auto model = nn::train(samples, classifier_config(s, seed),
                           nn::make_spec(s.classifier_hidden, static_cast<int>(classes.size()),
                                         nn::Activation::Softmax));
    return {std::move(model), std::move(classes)};
}

}  // namespace detail

// Trains the binary classifier for one candidate split on the training rows
// inside the parent region and scores it on the validation rows there.
inline std::pair<nn::MlpModel, double> evaluate_split(const SplitCandidate& split, const Dataset& train,
                                                      const Dataset& validation, const TrainSettings& settings,
                                                      std::uint64_t seed) {
    std::vector<nn::Sample> samples;
    for (const auto& fp : train.observations) {
        const bool in_left = split.left.contains(fp.label);
        const bool in_right = split.right.contains(fp.label);
        if (in_left == in_right) {
            if (in_left) throw PartitionViolation("split '" + split.descriptor + "' sides overlap");
            continue;  // outside the parent region
        }
        samples.emplace_back(fp.rssi, detail::one_hot(in_right ? 1 : 0, 2));
    }
    if (samples.empty()) throw EvaluationError("split '" + split.descriptor + "': empty training subsample");

    std::vector<std::pair<const std::vector<double>*, int>> val_rows;
    std::vector<nn::Sample> val_samples;
    for (const auto& fp : validation.observations) {
        const bool in_left = split.left.contains(fp.label);
        const bool in_right = split.right.contains(fp.label);
        if (in_left == in_right) continue;
        val_rows.emplace_back(&fp.rssi, in_right ? 1 : 0);
        val_samples.emplace_back(fp.rssi, detail::one_hot(in_right ? 1 : 0, 2));
    }
    if (val_rows.empty())
        throw EvaluationError("split '" + split.descriptor + "': empty validation subsample, cannot score");

    // The validation subsample scores the split anyway, so it also serves as
    // the early-stopping monitor.
    const auto model = nn::train(samples, detail::classifier_config(settings, seed),
                                 nn::make_spec(settings.classifier_hidden, 2, nn::Activation::Softmax),
                                 val_samples);

    std::size_t hits = 0;
    for (const auto& [rssi, z] : val_rows)
        if (nn::predict_class(model, *rssi) == z) ++hits;
    const double tau = static_cast<double>(hits) / static_cast<double>(val_rows.size());
    return {std::move(model), tau};
}

// Fits the leaf-level heads on the neighborhood-expanded subsample.
inline LeafHeads fit_leaf(const Region& leaf_region, const Dataset& train, const TrainSettings& settings,
                          const ExpansionRule& expansion, std::uint64_t seed) {
    LeafHeads heads;
    heads.training_region = expand_region(leaf_region, expansion);

    const auto rows = detail::indices_in_region(train, heads.training_region);
    if (rows.empty()) throw LeafFitError("leaf '" + leaf_region.describe() + "': expanded subsample is empty");

    std::vector<nn::Sample> reg_samples;
    reg_samples.reserve(rows.size());
    for (const std::size_t i : rows) {
        const auto& fp = train.observations[i];
        reg_samples.emplace_back(fp.rssi, std::vector<double>{fp.label.longitude, fp.label.latitude});
    }
    heads.regressor = nn::train(reg_samples, detail::regressor_config(settings, derive_seed(seed, "regressor")),
                                nn::make_spec(settings.regressor_hidden, 2, nn::Activation::Identity));

    auto [floor_model, floor_classes] = detail::train_value_classifier(
        train, rows, [](const Fingerprint& fp) { return fp.label.floor; }, settings,
        derive_seed(seed, "floor"));
    heads.floor_classifier = std::move(floor_model);
    heads.floor_classes = std::move(floor_classes);

    auto [building_model, building_classes] = detail::train_value_classifier(
        train, rows, [](const Fingerprint& fp) { return fp.label.building; }, settings,
        derive_seed(seed, "building"));
    heads.building_classifier = std::move(building_model);
    heads.building_classes = std::move(building_classes);

    // Admissible floors: those seen inside the exact leaf region; fall back to
    // the expanded-region floors that the region constraints admit.
    std::set<int> exact_floors;
    for (const std::size_t i : rows) {
        const auto& label = train.observations[i].label;
        if (leaf_region.contains(label)) exact_floors.insert(label.floor);
    }
    if (exact_floors.empty())
        for (const int f : heads.floor_classes) {
            const bool min_ok = !leaf_region.floor_min || f >= *leaf_region.floor_min;
            const bool max_ok = !leaf_region.floor_max || f <= *leaf_region.floor_max;
            if (min_ok && max_ok) exact_floors.insert(f);
        }
    if (exact_floors.empty()) exact_floors.insert(heads.floor_classes.begin(), heads.floor_classes.end());
    heads.admissible_floors.assign(exact_floors.begin(), exact_floors.end());
    return heads;
}

struct NodeLog {
    std::string region;
    std::string chosen;         // descriptor of the chosen split, empty for leaves
    double tau = 0.0;           // accuracy of the chosen split
    std::size_t train_count = 0;
    bool became_leaf = false;
    std::string stop_reason;    // set when became_leaf
};

struct BuildResult {
    std::unique_ptr<PartitionNode> root;
    std::vector<NodeLog> log;
    std::vector<std::string> warnings;

    std::size_t leaf_count() const { return count_leaves(*root); }

    static std::size_t count_leaves(const PartitionNode& node) {
        if (node.is_leaf()) return 1;
        return count_leaves(*node.internal->left) + count_leaves(*node.internal->right);
    }
};

// Breadth-first expansion per the sequential classification procedure: at
// each unlabeled leaf, evaluate every proposed split on the validation
// subsample, keep the accuracy maximizer, and stop when accuracy or
// subsample size falls below the rule. Every final leaf gets trained heads.
inline BuildResult build_tree(const Dataset& train, const Dataset& validation, const StoppingRule& rule,
                              const TrainSettings& settings, const ExpansionRule& expansion = {}) {
    BuildResult result;
    result.root = std::make_unique<PartitionNode>();
    result.root->region = {};  // the root accepts every label

    struct PendingLeaf {
        PartitionNode* node;
        int depth;
        std::uint64_t node_seq;
    };
    std::vector<PendingLeaf> queue{{result.root.get(), 0, 0}};
    std::uint64_t next_seq = 1;

    if (detail::indices_in_region(train, result.root->region).size() <
        static_cast<std::size_t>(rule.min_subsample))
        result.warnings.push_back("root subsample smaller than min_subsample (" +
                                  std::to_string(rule.min_subsample) + "); tree degenerates to a single leaf");

    std::vector<PartitionNode*> leaves;
    std::vector<std::uint64_t> leaf_seeds;

    while (!queue.empty()) {
        const PendingLeaf current = queue.front();
        queue.erase(queue.begin());
        PartitionNode& node = *current.node;

        const auto train_rows = detail::indices_in_region(train, node.region);
        NodeLog log;
        log.region = node.region.describe();
        log.train_count = train_rows.size();

        auto make_leaf = [&](const std::string& reason) {
            log.became_leaf = true;
            log.stop_reason = reason;
            result.log.push_back(log);
            leaves.push_back(&node);
            leaf_seeds.push_back(derive_seed(settings.seed, "leaf", current.node_seq));
        };

        if (current.depth >= settings.max_depth) {
            make_leaf("max depth");
            continue;
        }
        if (train_rows.size() < static_cast<std::size_t>(rule.min_subsample)) {
            make_leaf("subsample below minimum");
            continue;
        }

        const auto candidates = propose_splits(node.region, train, settings.proposals);
        if (candidates.empty()) {
            make_leaf("no candidate partitions");
            continue;
        }
        if (detail::indices_in_region(validation, node.region).empty()) {
            make_leaf("no validation observations to score splits");
            continue;
        }

        std::vector<std::optional<std::pair<nn::MlpModel, double>>> scored(candidates.size());
        parallel_for(candidates.size(), settings.threads, [&](std::size_t c) {
            scored[c] = evaluate_split(candidates[c], train, validation, settings,
                                       derive_seed(settings.seed, "split", current.node_seq, c));
        });

        std::size_t best = 0;
        for (std::size_t c = 1; c < candidates.size(); ++c)
            if (scored[c]->second > scored[best]->second) best = c;
        const double tau = scored[best]->second;
        log.chosen = candidates[best].descriptor;
        log.tau = tau;

        if (tau < rule.min_accuracy) {
            make_leaf("best accuracy " + format_double(tau) + " below threshold");
            continue;
        }

        std::size_t left_count = 0, right_count = 0;
        for (const std::size_t i : train_rows) {
            if (candidates[best].right.contains(train.observations[i].label))
                ++right_count;
            else
                ++left_count;
        }
        if (left_count < static_cast<std::size_t>(rule.min_subsample) ||
            right_count < static_cast<std::size_t>(rule.min_subsample)) {
            make_leaf("child subsample below minimum (" + std::to_string(left_count) + "/" +
                      std::to_string(right_count) + ")");
            continue;
        }

        node.internal.emplace();
        node.internal->classifier = std::move(scored[best]->first);
        node.internal->accuracy = tau;
        node.internal->descriptor = candidates[best].descriptor;
        node.internal->left = std::make_unique<PartitionNode>();
        node.internal->left->region = candidates[best].left;
        node.internal->right = std::make_unique<PartitionNode>();
        node.internal->right->region = candidates[best].right;
        result.log.push_back(log);

        queue.push_back({node.internal->left.get(), current.depth + 1, next_seq++});
        queue.push_back({node.internal->right.get(), current.depth + 1, next_seq++});
    }

    parallel_for(leaves.size(), settings.threads, [&](std::size_t i) {
        leaves[i]->leaf = fit_leaf(leaves[i]->region, train, settings, expansion, leaf_seeds[i]);
    });

    return result;
}

// Routes an observation to its leaf: class 1 goes right at every internal
// classifier.
inline const PartitionNode& descend(const PartitionNode& root, std::span<const double> x) {
    const PartitionNode* node = &root;
    while (!node->is_leaf()) {
        const int z = nn::predict_class(node->internal->classifier, x);
        node = z == 1 ? node->internal->right.get() : node->internal->left.get();
    }
    return *node;
}

// ---------------------------------------------------------------------------
// Serialization: a JSON skeleton referencing model blobs by content hash.
// ---------------------------------------------------------------------------

inline nlohmann::json region_to_json(const Region& region) {
    nlohmann::json j = nlohmann::json::object();
    if (region.buildings) j["buildings"] = std::vector<int>(region.buildings->begin(), region.buildings->end());
    if (region.floor_min) j["floor_min"] = *region.floor_min;
    if (region.floor_max) j["floor_max"] = *region.floor_max;
    if (!region.halfplanes.empty()) {
        nlohmann::json planes = nlohmann::json::array();
        for (const auto& h : region.halfplanes)
            planes.push_back({{"a", h.a}, {"b", h.b}, {"c", h.c}, {"complement", h.complement}});
        j["halfplanes"] = planes;
    }
    return j;
}

inline Region region_from_json(const nlohmann::json& j) {
    Region region;
    if (j.contains("buildings")) {
        const auto ids = j.at("buildings").get<std::vector<int>>();
        region.buildings = std::set<int>(ids.begin(), ids.end());
    }
    if (j.contains("floor_min")) region.floor_min = j.at("floor_min").get<int>();
    if (j.contains("floor_max")) region.floor_max = j.at("floor_max").get<int>();
    if (j.contains("halfplanes"))
        for (const auto& p : j.at("halfplanes"))
            region.halfplanes.push_back({p.at("a").get<double>(), p.at("b").get<double>(),
                                         p.at("c").get<double>(), p.at("complement").get<bool>()});
    return region;
}

// Stores a model into the blob map, keyed by content hash.
inline std::string store_model(const nn::MlpModel& model, std::map<std::string, std::string>& blobs) {
    std::string bytes = nn::model_to_bytes(model);
    std::string key = hex16(fnv1a64(bytes));
    blobs.emplace(key, std::move(bytes));
    return key;
}

inline nlohmann::json tree_to_json(const PartitionNode& node, std::map<std::string, std::string>& blobs) {
    nlohmann::json j;
    j["region"] = region_to_json(node.region);
    if (!node.is_leaf()) {
        j["kind"] = "internal";
        j["descriptor"] = node.internal->descriptor;
        j["accuracy"] = node.internal->accuracy;
        j["classifier"] = store_model(node.internal->classifier, blobs);
        j["left"] = tree_to_json(*node.internal->left, blobs);
        j["right"] = tree_to_json(*node.internal->right, blobs);
        return j;
    }
    j["kind"] = "leaf";
    const LeafHeads& heads = *node.leaf;
    j["regressor"] = store_model(heads.regressor, blobs);
    if (heads.floor_classifier) j["floor_classifier"] = store_model(*heads.floor_classifier, blobs);
    j["floor_classes"] = heads.floor_classes;
    j["admissible_floors"] = heads.admissible_floors;
    if (heads.building_classifier) j["building_classifier"] = store_model(*heads.building_classifier, blobs);
    j["building_classes"] = heads.building_classes;
    j["training_region"] = region_to_json(heads.training_region);
    return j;
}

inline std::unique_ptr<PartitionNode> tree_from_json(const nlohmann::json& j,
                                                     const std::map<std::string, std::string>& blobs) {
    auto fetch = [&blobs](const std::string& key) {
        const auto it = blobs.find(key);
        if (it == blobs.end()) throw ConfigError("tree references missing model blob " + key);
        return nn::model_from_bytes(it->second);
    };
    auto node = std::make_unique<PartitionNode>();
    node->region = region_from_json(j.at("region"));
    if (j.at("kind").get<std::string>() == "internal") {
        node->internal.emplace();
        node->internal->descriptor = j.at("descriptor").get<std::string>();
        node->internal->accuracy = j.at("accuracy").get<double>();
        node->internal->classifier = fetch(j.at("classifier").get<std::string>());
        node->internal->left = tree_from_json(j.at("left"), blobs);
        node->internal->right = tree_from_json(j.at("right"), blobs);
        return node;
    }
    node->leaf.emplace();
    LeafHeads& heads = *node->leaf;
    heads.regressor = fetch(j.at("regressor").get<std::string>());
    if (j.contains("floor_classifier")) heads.floor_classifier = fetch(j.at("floor_classifier").get<std::string>());
    heads.floor_classes = j.at("floor_classes").get<std::vector<int>>();
    heads.admissible_floors = j.at("admissible_floors").get<std::vector<int>>();
    if (j.contains("building_classifier"))
        heads.building_classifier = fetch(j.at("building_classifier").get<std::string>());
    heads.building_classes = j.at("building_classes").get<std::vector<int>>();
    heads.training_region = region_from_json(j.at("training_region"));
    return node;
}

}  // namespace seqloc::tree
