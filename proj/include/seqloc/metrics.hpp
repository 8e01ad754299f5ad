#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqloc/common.hpp"
#include "seqloc/dataset.hpp"
#include "seqloc/pipeline.hpp"

#include "json.hpp"

namespace seqloc::metrics {

// Planar Euclidean distance in meters. Floor and building mistakes are
// reported through hit rates, not distance penalties.
inline double positioning_error(const pipeline::Prediction& pred, const LocationLabel& truth) {
    return std::hypot(pred.longitude - truth.longitude, pred.latitude - truth.latitude);
}

struct BuildingStats {
    std::size_t count = 0;
    double mean_positioning_error = 0.0;
};

struct EvalReport {
    double building_hit_rate = 0.0;
    double floor_hit_rate = 0.0;
    double mean_positioning_error = 0.0;
    std::map<int, BuildingStats> per_building;  // keyed by true building
    std::size_t n = 0;
};

inline EvalReport evaluate_predictions(std::span<const pipeline::Prediction> predictions,
                                       std::span<const LocationLabel> truths) {
    if (predictions.size() != truths.size())
        throw InvalidArgument("evaluate_predictions: " + std::to_string(predictions.size()) +
                              " predictions vs " + std::to_string(truths.size()) + " labels");
    if (predictions.empty()) throw InvalidArgument("evaluate_predictions: empty validation set");

    EvalReport report;
    report.n = predictions.size();
    std::map<int, double> error_sum;
    std::size_t building_hits = 0, floor_hits = 0;
    double total_error = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& pred = predictions[i];
        const auto& truth = truths[i];
        if (pred.building == truth.building) ++building_hits;
        if (pred.floor == truth.floor) ++floor_hits;
        const double err = positioning_error(pred, truth);
        total_error += err;
        auto& stats = report.per_building[truth.building];
        ++stats.count;
        error_sum[truth.building] += err;
    }
    report.building_hit_rate = static_cast<double>(building_hits) / static_cast<double>(report.n);
    report.floor_hit_rate = static_cast<double>(floor_hits) / static_cast<double>(report.n);
    report.mean_positioning_error = total_error / static_cast<double>(report.n);
    for (auto& [building, stats] : report.per_building)
        stats.mean_positioning_error = error_sum[building] / static_cast<double>(stats.count);
    return report;
}

// Runs the predictor over a raw validation set and scores it.
inline EvalReport evaluate(const pipeline::Predictor& p, const Dataset& validation) {
    if (validation.n() == 0) throw InvalidArgument("evaluate: empty validation set");
    std::vector<pipeline::Prediction> predictions;
    std::vector<LocationLabel> truths;
    predictions.reserve(validation.n());
    truths.reserve(validation.n());
    for (const auto& fp : validation.observations) {
        predictions.push_back(pipeline::predict(p, fp.rssi));
        truths.push_back(fp.label);
    }
    return evaluate_predictions(predictions, truths);
}

enum class ReportFormat { TextTable, Csv, Json };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "text" || s == "text_table") return ReportFormat::TextTable;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw InvalidArgument("unknown report format '" + s + "' (expected text, csv or json)");
}

namespace detail {

struct ReferenceRow {
    const char* name;
    double building_hit, floor_hit, mean_error;
};

// EvAAL 2015 competitor results, kept as static comparison rows.
inline const ReferenceRow kReferenceRows[] = {
    {"RTLS@UM", 1.0, 0.9374, 6.20},
    {"ICSL", 1.0, 0.8693, 7.67},
    {"HFTS", 1.0, 0.9625, 8.49},
    {"MOSAIC", 0.9865, 0.9386, 11.64},
};

inline std::string percent(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", rate * 100.0);
    return buf;
}

inline std::string meters(double m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", m);
    return buf;
}

}  // namespace detail

// Renders Table I/II/III-style summaries: one row per variant in the fixed
// order tnn, tsnn, scnn, then the EvAAL reference rows.
inline std::string render_report(const std::map<pipeline::Variant, EvalReport>& reports, ReportFormat format) {
    if (reports.empty()) throw InvalidArgument("render_report: no reports");

    const char* columns[] = {"algorithm",         "building_hit_rate", "floor_hit_rate",
                             "mean_positioning_error_m", "b0_error_m",  "b1_error_m",
                             "b2_error_m"};
    const pipeline::Variant order[] = {pipeline::Variant::Tnn, pipeline::Variant::Tsnn, pipeline::Variant::Scnn};

    auto building_error = [](const EvalReport& r, int b) -> std::string {
        const auto it = r.per_building.find(b);
        return it == r.per_building.end() ? "" : detail::meters(it->second.mean_positioning_error);
    };

    if (format == ReportFormat::Json) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto variant : order) {
            const auto it = reports.find(variant);
            if (it == reports.end()) continue;
            nlohmann::json per_building = nlohmann::json::object();
            for (const auto& [b, stats] : it->second.per_building)
                per_building[std::to_string(b)] = {{"count", stats.count},
                                                   {"mean_positioning_error_m", stats.mean_positioning_error}};
            rows.push_back({{"algorithm", to_string(variant)},
                            {"building_hit_rate", it->second.building_hit_rate},
                            {"floor_hit_rate", it->second.floor_hit_rate},
                            {"mean_positioning_error_m", it->second.mean_positioning_error},
                            {"per_building", per_building},
                            {"n", it->second.n},
                            {"reference", false}});
        }
        for (const auto& ref : detail::kReferenceRows)
            rows.push_back({{"algorithm", ref.name},
                            {"building_hit_rate", ref.building_hit},
                            {"floor_hit_rate", ref.floor_hit},
                            {"mean_positioning_error_m", ref.mean_error},
                            {"reference", true}});
        return nlohmann::json{{"rows", rows}}.dump(2) + "\n";
    }

    std::vector<std::vector<std::string>> table;
    table.emplace_back(std::begin(columns), std::end(columns));
    for (const auto variant : order) {
        const auto it = reports.find(variant);
        if (it == reports.end()) continue;
        const auto& r = it->second;
        table.push_back({to_string(variant), detail::percent(r.building_hit_rate),
                         detail::percent(r.floor_hit_rate), detail::meters(r.mean_positioning_error),
                         building_error(r, 0), building_error(r, 1), building_error(r, 2)});
    }
    for (const auto& ref : detail::kReferenceRows)
        table.push_back({ref.name, detail::percent(ref.building_hit), detail::percent(ref.floor_hit),
                         detail::meters(ref.mean_error), "", "", ""});

    if (format == ReportFormat::Csv) {
        std::string out;
        for (const auto& row : table) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                out += row[i];
                out += i + 1 < row.size() ? "," : "\n";
            }
        }
        return out;
    }

    std::vector<std::size_t> widths(table.front().size(), 0);
    for (const auto& row : table)
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    std::string out;
    for (std::size_t rix = 0; rix < table.size(); ++rix) {
        const auto& row = table[rix];
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += row[i];
            if (i + 1 < row.size()) out += std::string(widths[i] - row[i].size() + 2, ' ');
        }
        out += '\n';
        if (rix == 0) {
            std::size_t total = 0;
            for (const std::size_t w : widths) total += w + 2;
            out += std::string(total - 2, '-');
            out += '\n';
        }
    }
    return out;
}

}  // namespace seqloc::metrics
