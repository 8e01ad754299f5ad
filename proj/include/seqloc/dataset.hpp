#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "seqloc/common.hpp"

namespace seqloc {

// RSSI coding: detections live in [-104, 0] dBm, -105 marks non-detection.
// Raw UJIIndoorLoc files use +100 for non-detection instead.
constexpr double kNonDetect = -105.0;
constexpr double kRawNonDetect = 100.0;
constexpr double kRssiMin = -104.0;
constexpr double kRssiMax = 0.0;
constexpr int kFloorMin = 0;
constexpr int kFloorMax = 4;
constexpr int kBuildingMin = 0;
constexpr int kBuildingMax = 2;

struct LocationLabel {
    double longitude = 0.0;  // meters, projected planar coordinate
    double latitude = 0.0;   // meters, projected planar coordinate
    int floor = 0;           // 0..4
    int building = 0;        // 0..2, read from the file, never recomputed

    bool operator==(const LocationLabel&) const = default;
};

struct AuxInfo {
    std::int64_t space_id = 0;
    std::int64_t user_id = 0;
    std::int64_t phone_id = 0;
    std::int64_t timestamp = 0;

    bool operator==(const AuxInfo&) const = default;
};

struct Fingerprint {
    std::vector<double> rssi;
    LocationLabel label;
    AuxInfo aux;

    bool operator==(const Fingerprint&) const = default;
};

enum class DatasetRole { Train, Validation };

inline std::string to_string(DatasetRole role) {
    return role == DatasetRole::Train ? "train" : "validation";
}

// Immutable after construction; row order is preserved everywhere.
struct Dataset {
    std::vector<Fingerprint> observations;
    int r = 0;
    DatasetRole role = DatasetRole::Train;

    std::size_t n() const { return observations.size(); }
};

namespace detail {

inline std::string wap_name(int index) {
    std::string num = std::to_string(index + 1);
    while (num.size() < 3) num.insert(num.begin(), '0');
    return "WAP" + num;
}

inline std::vector<std::string_view> split_row(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

inline const char* const kLabelColumns[] = {"LONGITUDE", "LATITUDE",         "FLOOR",
                                            "BUILDINGID", "SPACEID",          "RELATIVEPOSITION",
                                            "USERID",     "PHONEID",          "TIMESTAMP"};
constexpr int kLabelColumnCount = 9;

}  // namespace detail

// Parses a UJIIndoorLoc-format CSV. The header must read WAP001..WAPn
// followed by the nine label columns; RELATIVEPOSITION is validated and
// discarded. RSSI values come back raw (no recoding applied).
inline Dataset parse_csv(const std::filesystem::path& path, DatasetRole role) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty file, missing header: " + path.string());
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);  // UTF-8 BOM

    std::vector<std::string_view> cols;
    detail::split_row(detail::trim(line), cols);
    if (cols.size() < detail::kLabelColumnCount + 1)
        throw SchemaError("header has " + std::to_string(cols.size()) + " columns, need at least " +
                          std::to_string(detail::kLabelColumnCount + 1));

    const int r = static_cast<int>(cols.size()) - detail::kLabelColumnCount;
    for (int i = 0; i < r; ++i) {
        const std::string expected = detail::wap_name(i);
        if (detail::trim(cols[static_cast<std::size_t>(i)]) != expected)
            throw SchemaError("header column " + std::to_string(i + 1) + " is '" +
                              std::string(cols[static_cast<std::size_t>(i)]) + "', expected '" + expected + "'");
    }
    for (int i = 0; i < detail::kLabelColumnCount; ++i) {
        const std::string_view got = detail::trim(cols[static_cast<std::size_t>(r + i)]);
        if (got != detail::kLabelColumns[i])
            throw SchemaError(std::string("missing header column '") + detail::kLabelColumns[i] +
                              "' (found '" + std::string(got) + "')");
    }

    Dataset ds;
    ds.r = r;
    ds.role = role;

    std::vector<std::string_view> fields;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = detail::trim(line);
        if (body.empty()) continue;
        detail::split_row(body, fields);
        if (fields.size() != static_cast<std::size_t>(r + detail::kLabelColumnCount))
            throw ParseError("row " + std::to_string(line_no) + ": expected " +
                             std::to_string(r + detail::kLabelColumnCount) + " columns, got " +
                             std::to_string(fields.size()));

        Fingerprint fp;
        fp.rssi.resize(static_cast<std::size_t>(r));
        bool ok = true;
        for (int i = 0; i < r; ++i) {
            fp.rssi[static_cast<std::size_t>(i)] = parse_double(detail::trim(fields[static_cast<std::size_t>(i)]), ok);
            if (!ok)
                throw ParseError("row " + std::to_string(line_no) + ": non-numeric RSSI in column " +
                                 detail::wap_name(i));
        }

        auto num_at = [&](int offset, const char* name) {
            bool field_ok = true;
            const double v = parse_double(detail::trim(fields[static_cast<std::size_t>(r + offset)]), field_ok);
            if (!field_ok)
                throw ParseError("row " + std::to_string(line_no) + ": non-numeric field " + std::string(name));
            return v;
        };
        auto int_at = [&](int offset, const char* name) {
            bool field_ok = true;
            const std::int64_t v = parse_int(detail::trim(fields[static_cast<std::size_t>(r + offset)]), field_ok);
            if (!field_ok)
                throw ParseError("row " + std::to_string(line_no) + ": non-integer field " + std::string(name));
            return v;
        };

        fp.label.longitude = num_at(0, "LONGITUDE");
        fp.label.latitude = num_at(1, "LATITUDE");
        fp.label.floor = static_cast<int>(int_at(2, "FLOOR"));
        fp.label.building = static_cast<int>(int_at(3, "BUILDINGID"));
        if (fp.label.floor < kFloorMin || fp.label.floor > kFloorMax)
            throw ParseError("row " + std::to_string(line_no) + ": FLOOR " + std::to_string(fp.label.floor) +
                             " outside [0,4]");
        if (fp.label.building < kBuildingMin || fp.label.building > kBuildingMax)
            throw ParseError("row " + std::to_string(line_no) + ": BUILDINGID " +
                             std::to_string(fp.label.building) + " outside [0,2]");
        fp.aux.space_id = int_at(4, "SPACEID");
        int_at(5, "RELATIVEPOSITION");  // validated, then discarded
        fp.aux.user_id = int_at(6, "USERID");
        fp.aux.phone_id = int_at(7, "PHONEID");
        fp.aux.timestamp = int_at(8, "TIMESTAMP");

        ds.observations.push_back(std::move(fp));
    }
    return ds;
}

// Serializes back to the same schema. RELATIVEPOSITION is not retained by
// parsing, so it is written as 0.
inline void write_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::string out;
    for (int i = 0; i < ds.r; ++i) {
        out += detail::wap_name(i);
        out += ',';
    }
    for (int i = 0; i < detail::kLabelColumnCount; ++i) {
        out += detail::kLabelColumns[i];
        out += i + 1 < detail::kLabelColumnCount ? "," : "\n";
    }
    for (const auto& fp : ds.observations) {
        for (const double v : fp.rssi) {
            out += format_double(v);
            out += ',';
        }
        out += format_double(fp.label.longitude);
        out += ',';
        out += format_double(fp.label.latitude);
        out += ',';
        out += std::to_string(fp.label.floor);
        out += ',';
        out += std::to_string(fp.label.building);
        out += ',';
        out += std::to_string(fp.aux.space_id);
        out += ",0,";
        out += std::to_string(fp.aux.user_id);
        out += ',';
        out += std::to_string(fp.aux.phone_id);
        out += ',';
        out += std::to_string(fp.aux.timestamp);
        out += '\n';
    }
    write_file(path, out);
}

// Order-sensitive content hash over every field of every observation.
inline std::string content_hash(const Dataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* bytes, std::size_t len) {
        h = fnv1a64(std::string_view(static_cast<const char*>(bytes), len), h);
    };
    mix(&ds.r, sizeof(ds.r));
    for (const auto& fp : ds.observations) {
        for (const double v : fp.rssi) mix(&v, sizeof(v));
        mix(&fp.label.longitude, sizeof(double));
        mix(&fp.label.latitude, sizeof(double));
        mix(&fp.label.floor, sizeof(int));
        mix(&fp.label.building, sizeof(int));
        mix(&fp.aux.space_id, sizeof(std::int64_t));
        mix(&fp.aux.user_id, sizeof(std::int64_t));
        mix(&fp.aux.phone_id, sizeof(std::int64_t));
        mix(&fp.aux.timestamp, sizeof(std::int64_t));
    }
    return hex16(h);
}

// Sorts by collection timestamp (ties keep original row order) and cuts into
// m contiguous folds whose sizes differ by at most one; earlier folds take
// the remainder.
inline std::vector<Dataset> split_by_time(const Dataset& ds, int m) {
    if (m < 2) throw InvalidArgument("split_by_time: m must be >= 2, got " + std::to_string(m));
    if (ds.n() < static_cast<std::size_t>(m))
        throw InvalidArgument("split_by_time: dataset has " + std::to_string(ds.n()) +
                              " observations, need at least m=" + std::to_string(m));

    std::vector<std::size_t> order(ds.n());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds.observations[a].aux.timestamp < ds.observations[b].aux.timestamp;
    });

    const std::size_t base = ds.n() / static_cast<std::size_t>(m);
    const std::size_t extra = ds.n() % static_cast<std::size_t>(m);

    std::vector<Dataset> folds;
    folds.reserve(static_cast<std::size_t>(m));
    std::size_t pos = 0;
    for (int f = 0; f < m; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        Dataset fold;
        fold.r = ds.r;
        fold.role = ds.role;
        fold.observations.reserve(size);
        for (std::size_t i = 0; i < size; ++i) fold.observations.push_back(ds.observations[order[pos + i]]);
        pos += size;
        folds.push_back(std::move(fold));
    }
    return folds;
}

}  // namespace seqloc
