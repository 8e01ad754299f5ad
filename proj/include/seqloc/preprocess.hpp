#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqloc/common.hpp"
#include "seqloc/dataset.hpp"

#include "json.hpp"

namespace seqloc {

enum class DropReason { ZeroVariance, UnstableLocation };

inline std::string to_string(DropReason reason) {
    return reason == DropReason::ZeroVariance ? "zero_variance" : "unstable_location";
}

inline DropReason drop_reason_from_string(const std::string& s) {
    if (s == "zero_variance") return DropReason::ZeroVariance;
    if (s == "unstable_location") return DropReason::UnstableLocation;
    throw ConfigError("unknown drop reason: " + s);
}

// Which of the raw AP columns survive preprocessing. `kept` holds original
// 0-based column indices in increasing order; `reasons` explains each drop.
struct FeatureFilter {
    std::vector<int> kept;
    std::map<int, DropReason> reasons;

    int raw_r() const { return static_cast<int>(kept.size() + reasons.size()); }
};

struct ApLocationEstimate {
    int ap_index = 0;
    double longitude = 0.0;
    double latitude = 0.0;
    std::size_t support = 0;  // number of detecting fingerprints
};

using WeightFn = std::function<double(double)>;

// w(s) = 10^(gamma * s / 10); gamma = 1 weights by linear received power.
inline WeightFn power_weight(double gamma = 1.0) {
    return [gamma](double rssi) { return std::pow(10.0, gamma * rssi / 10.0); };
}

// Replaces the raw non-detection sentinel (+100) with -105 dBm. Idempotent;
// every other value passes through and must already sit in [-104, 0].
inline Dataset recode_nondetect(const Dataset& ds) {
    Dataset out = ds;
    for (std::size_t row = 0; row < out.observations.size(); ++row) {
        auto& rssi = out.observations[row].rssi;
        for (std::size_t col = 0; col < rssi.size(); ++col) {
            double& v = rssi[col];
            if (v == kRawNonDetect) {
                v = kNonDetect;
            } else if (v != kNonDetect && (v < kRssiMin || v > kRssiMax)) {
                throw DataIntegrityError("RSSI value " + format_double(v) + " at row " + std::to_string(row) +
                                         ", column " + detail::wap_name(static_cast<int>(col)) +
                                         " outside [-104,0] u {100,-105}");
            }
        }
    }
    return out;
}

namespace detail {

inline bool column_constant(const Dataset& ds, int col) {
    if (ds.n() == 0) return true;
    const double first = ds.observations.front().rssi[static_cast<std::size_t>(col)];
    for (const auto& fp : ds.observations)
        if (fp.rssi[static_cast<std::size_t>(col)] != first) return false;
    return true;
}

}  // namespace detail

// Drops an AP when its column is constant in the training set or constant in
// the validation set. Both datasets must already be recoded.
inline FeatureFilter zero_variance_filter(const Dataset& train, const Dataset& validation) {
    if (train.r != validation.r)
        throw InvalidArgument("zero_variance_filter: feature count mismatch (" + std::to_string(train.r) +
                              " vs " + std::to_string(validation.r) + ")");
    FeatureFilter filter;
    for (int col = 0; col < train.r; ++col) {
        if (detail::column_constant(train, col) || detail::column_constant(validation, col))
            filter.reasons.emplace(col, DropReason::ZeroVariance);
        else
            filter.kept.push_back(col);
    }
    return filter;
}

// Weighted centroid over the fingerprints that detect the AP. Returns nullopt
// when nothing detects it.
inline std::optional<ApLocationEstimate> estimate_ap_location(const Dataset& ds, int ap_index,
                                                              const WeightFn& weight_fn) {
    if (ap_index < 0 || ap_index >= ds.r)
        throw InvalidArgument("estimate_ap_location: ap_index " + std::to_string(ap_index) + " outside [0," +
                              std::to_string(ds.r) + ")");
    double sum_w = 0.0, sum_lon = 0.0, sum_lat = 0.0;
    std::size_t support = 0;
    for (const auto& fp : ds.observations) {
        const double rssi = fp.rssi[static_cast<std::size_t>(ap_index)];
        if (rssi <= kNonDetect) continue;
        const double w = weight_fn(rssi);
        if (w < 0.0) throw InvalidArgument("estimate_ap_location: negative weight for RSSI " + format_double(rssi));
        ++support;
        sum_w += w;
        sum_lon += w * fp.label.longitude;
        sum_lat += w * fp.label.latitude;
    }
    if (support == 0) return std::nullopt;
    if (sum_w <= 0.0)
        throw DegenerateWeightsError("estimate_ap_location: all weights zero over " + std::to_string(support) +
                                     " detections of AP " + std::to_string(ap_index));
    return ApLocationEstimate{ap_index, sum_lon / sum_w, sum_lat / sum_w, support};
}

// Per-AP spread of fold-wise location estimates: the maximum pairwise planar
// distance between the m time-fold estimates. Infinity when the AP is
// detected in some folds but not others; nullopt when no fold detects it.
inline std::vector<std::optional<double>> stability_distances(const Dataset& train, int m,
                                                              const WeightFn& weight_fn) {
    const std::vector<Dataset> folds = split_by_time(train, m);
    std::vector<std::optional<double>> spread(static_cast<std::size_t>(train.r));
    for (int ap = 0; ap < train.r; ++ap) {
        std::vector<ApLocationEstimate> estimates;
        bool missing_somewhere = false;
        for (const auto& fold : folds) {
            const auto est = estimate_ap_location(fold, ap, weight_fn);
            if (est)
                estimates.push_back(*est);
            else
                missing_somewhere = true;
        }
        if (estimates.empty()) {
            spread[static_cast<std::size_t>(ap)] = std::nullopt;
        } else if (missing_somewhere) {
            spread[static_cast<std::size_t>(ap)] = std::numeric_limits<double>::infinity();
        } else {
            double max_dist = 0.0;
            for (std::size_t i = 0; i < estimates.size(); ++i)
                for (std::size_t j = i + 1; j < estimates.size(); ++j) {
                    const double dx = estimates[i].longitude - estimates[j].longitude;
                    const double dy = estimates[i].latitude - estimates[j].latitude;
                    max_dist = std::max(max_dist, std::hypot(dx, dy));
                }
            spread[static_cast<std::size_t>(ap)] = max_dist;
        }
    }
    return spread;
}

// Drops an AP whose fold-wise location estimates spread farther apart than
// the threshold, or which is detected in some time folds and absent from
// others (no estimate to compare there).
inline FeatureFilter stability_filter(const Dataset& train, int m, double distance_threshold_m,
                                      const WeightFn& weight_fn) {
    const auto spread = stability_distances(train, m, weight_fn);
    FeatureFilter filter;
    for (int ap = 0; ap < train.r; ++ap) {
        const auto& s = spread[static_cast<std::size_t>(ap)];
        if (s.has_value() && *s > distance_threshold_m)
            filter.reasons.emplace(ap, DropReason::UnstableLocation);
        else
            filter.kept.push_back(ap);
    }
    return filter;
}

struct PreprocessParams {
    int m_folds = 2;
    double stability_threshold_m = 30.0;
    double weight_gamma = 1.0;
};

// Full cleaning chain: zero-variance drops first, then the stability check on
// the survivors. Filters are derived from training and validation data only;
// prediction-time inputs never feed back into them.
inline FeatureFilter build_filter(const Dataset& train, const Dataset& validation,
                                  const PreprocessParams& params) {
    FeatureFilter filter = zero_variance_filter(train, validation);
    const auto spread = stability_distances(train, params.m_folds, power_weight(params.weight_gamma));
    std::vector<int> kept;
    for (const int ap : filter.kept) {
        const auto& s = spread[static_cast<std::size_t>(ap)];
        if (s.has_value() && *s > params.stability_threshold_m)
            filter.reasons.emplace(ap, DropReason::UnstableLocation);
        else
            kept.push_back(ap);
    }
    filter.kept = std::move(kept);
    return filter;
}

// Projects a dataset onto the filter's kept columns; labels untouched.
inline Dataset apply_filter(const Dataset& ds, const FeatureFilter& filter) {
    if (ds.r != filter.raw_r())
        throw InvalidArgument("apply_filter: dataset has " + std::to_string(ds.r) + " features, filter expects " +
                              std::to_string(filter.raw_r()));
    Dataset out;
    out.r = static_cast<int>(filter.kept.size());
    out.role = ds.role;
    out.observations.reserve(ds.n());
    for (const auto& fp : ds.observations) {
        Fingerprint projected;
        projected.label = fp.label;
        projected.aux = fp.aux;
        projected.rssi.reserve(filter.kept.size());
        for (const int col : filter.kept) projected.rssi.push_back(fp.rssi[static_cast<std::size_t>(col)]);
        out.observations.push_back(std::move(projected));
    }
    return out;
}

inline nlohmann::json filter_to_json(const FeatureFilter& filter) {
    nlohmann::json reasons = nlohmann::json::object();
    for (const auto& [index, reason] : filter.reasons) reasons[std::to_string(index)] = to_string(reason);
    return nlohmann::json{{"kept", filter.kept}, {"reasons", reasons}};
}

inline FeatureFilter filter_from_json(const nlohmann::json& j) {
    FeatureFilter filter;
    filter.kept = j.at("kept").get<std::vector<int>>();
    for (const auto& [key, value] : j.at("reasons").items())
        filter.reasons.emplace(std::stoi(key), drop_reason_from_string(value.get<std::string>()));
    return filter;
}

// One row per AP with at least one detection; reproduces the scatter-plot
// input for estimated AP positions.
inline std::string ap_locations_csv(const Dataset& recoded, const WeightFn& weight_fn) {
    std::string out = "AP_INDEX,LONGITUDE,LATITUDE,SUPPORT\n";
    for (int ap = 0; ap < recoded.r; ++ap) {
        const auto est = estimate_ap_location(recoded, ap, weight_fn);
        if (!est) continue;
        out += std::to_string(est->ap_index);
        out += ',';
        out += format_double(est->longitude);
        out += ',';
        out += format_double(est->latitude);
        out += ',';
        out += std::to_string(est->support);
        out += '\n';
    }
    return out;
}

// Calibration helper: kept-feature count as a function of the stability
// threshold, reported as the exact threshold choices that change the count.
struct CalibrationPoint {
    double threshold_m = 0.0;
    int kept = 0;
};

// Finds the smallest threshold that keeps `target_kept` features after the
// combined filters, or the closest achievable count when the target cannot
// be hit exactly.
inline CalibrationPoint calibrate_stability_threshold(const Dataset& train, const Dataset& validation,
                                                      int m, double weight_gamma, int target_kept) {
    const FeatureFilter zv = zero_variance_filter(train, validation);
    const auto spread = stability_distances(train, m, power_weight(weight_gamma));

    std::vector<double> finite;  // spreads of zv-survivors that are comparable across folds
    int always_kept = 0;         // zv-survivors never dropped by any threshold choice
    for (const int ap : zv.kept) {
        const auto& s = spread[static_cast<std::size_t>(ap)];
        if (!s.has_value()) {
            ++always_kept;  // undetected in every fold; stability cannot drop it
        } else if (std::isinf(*s)) {
            continue;  // mixed detection: dropped at every threshold
        } else {
            finite.push_back(*s);
        }
    }
    std::sort(finite.begin(), finite.end());

    // Keeping features with spread <= t: count rises stepwise at each spread.
    const int max_kept = always_kept + static_cast<int>(finite.size());
    if (target_kept >= max_kept)
        return {finite.empty() ? 0.0 : finite.back(), max_kept};
    if (target_kept <= always_kept)
        return {0.0, always_kept + static_cast<int>(std::count(finite.begin(), finite.end(), 0.0))};

    const int need_from_finite = target_kept - always_kept;
    // Threshold exactly at the k-th smallest spread keeps the first k (ties
    // keep everything equal to it).
    const double threshold = finite[static_cast<std::size_t>(need_from_finite - 1)];
    int kept = always_kept;
    for (const double s : finite)
        if (s <= threshold) ++kept;
    return {threshold, kept};
}

}  // namespace seqloc
