#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "seqloc/common.hpp"
#include "seqloc/dataset.hpp"
#include "seqloc/metrics.hpp"
#include "seqloc/pipeline.hpp"
#include "seqloc/preprocess.hpp"
#include "seqloc/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace seqloc::cli {

constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
    struct Paths {
        std::string train_csv;
        std::string validation_csv;
        std::string out_dir = "out";
    } paths;
    PreprocessParams preprocess;
    struct Stopping {
        double min_accuracy = 0.98;
        int min_subsample = 800;
        int max_depth = 6;
    } stopping;
    struct Net {
        std::vector<int> classifier_hidden{128, 64};
        std::vector<int> regressor_hidden{128, 64};
        std::string optimizer = "adam";
        double learning_rate = 1e-3;
        int batch_size = 64;
        int classifier_epochs = 60;
        int regressor_epochs = 400;
        int patience = 10;
    } net;
    std::uint64_t seed = 1;
    int threads = 1;
    bool spatial_clustering = false;
    double metric_holdout_fraction = 0.0;
    nlohmann::json synth;  // scene plus "n"
};

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        cfg.paths.train_csv = p.value("train_csv", cfg.paths.train_csv);
        cfg.paths.validation_csv = p.value("validation_csv", cfg.paths.validation_csv);
        cfg.paths.out_dir = p.value("out_dir", cfg.paths.out_dir);
    }
    if (j.contains("preprocess")) {
        const auto& p = j.at("preprocess");
        cfg.preprocess.m_folds = p.value("m_folds", cfg.preprocess.m_folds);
        cfg.preprocess.stability_threshold_m = p.value("stability_threshold_m", cfg.preprocess.stability_threshold_m);
        cfg.preprocess.weight_gamma = p.value("weight_gamma", cfg.preprocess.weight_gamma);
    }
    if (j.contains("stopping")) {
        const auto& s = j.at("stopping");
        cfg.stopping.min_accuracy = s.value("min_accuracy", cfg.stopping.min_accuracy);
        cfg.stopping.min_subsample = s.value("min_subsample", cfg.stopping.min_subsample);
        cfg.stopping.max_depth = s.value("max_depth", cfg.stopping.max_depth);
    }
    if (j.contains("net")) {
        const auto& n = j.at("net");
        cfg.net.classifier_hidden = n.value("classifier_hidden", cfg.net.classifier_hidden);
        cfg.net.regressor_hidden = n.value("regressor_hidden", cfg.net.regressor_hidden);
        cfg.net.optimizer = n.value("optimizer", cfg.net.optimizer);
        cfg.net.learning_rate = n.value("learning_rate", cfg.net.learning_rate);
        cfg.net.batch_size = n.value("batch_size", cfg.net.batch_size);
        cfg.net.classifier_epochs = n.value("classifier_epochs", cfg.net.classifier_epochs);
        cfg.net.regressor_epochs = n.value("regressor_epochs", cfg.net.regressor_epochs);
        cfg.net.patience = n.value("patience", cfg.net.patience);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.spatial_clustering = j.value("spatial_clustering", cfg.spatial_clustering);
    cfg.metric_holdout_fraction = j.value("metric_holdout_fraction", cfg.metric_holdout_fraction);
    if (j.contains("synth")) cfg.synth = j.at("synth");
    return cfg;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["paths"] = {{"train_csv", cfg.paths.train_csv},
                  {"validation_csv", cfg.paths.validation_csv},
                  {"out_dir", cfg.paths.out_dir}};
    j["preprocess"] = {{"m_folds", cfg.preprocess.m_folds},
                       {"stability_threshold_m", cfg.preprocess.stability_threshold_m},
                       {"weight_gamma", cfg.preprocess.weight_gamma}};
    j["stopping"] = {{"min_accuracy", cfg.stopping.min_accuracy},
                     {"min_subsample", cfg.stopping.min_subsample},
                     {"max_depth", cfg.stopping.max_depth}};
    j["net"] = {{"classifier_hidden", cfg.net.classifier_hidden},
                {"regressor_hidden", cfg.net.regressor_hidden},
                {"optimizer", cfg.net.optimizer},
                {"learning_rate", cfg.net.learning_rate},
                {"batch_size", cfg.net.batch_size},
                {"classifier_epochs", cfg.net.classifier_epochs},
                {"regressor_epochs", cfg.net.regressor_epochs},
                {"patience", cfg.net.patience}};
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["spatial_clustering"] = cfg.spatial_clustering;
    j["metric_holdout_fraction"] = cfg.metric_holdout_fraction;
    if (!cfg.synth.is_null()) j["synth"] = cfg.synth;
    return j;
}

inline RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path);
    try {
        return config_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
}

inline pipeline::FitConfig fit_config(const RunConfig& cfg) {
    pipeline::FitConfig fc;
    fc.preprocess = cfg.preprocess;
    fc.stopping.min_accuracy = cfg.stopping.min_accuracy;
    fc.stopping.min_subsample = cfg.stopping.min_subsample;
    fc.train.classifier_hidden = cfg.net.classifier_hidden;
    fc.train.regressor_hidden = cfg.net.regressor_hidden;
    fc.train.optimizer = cfg.net.optimizer == "sgd" ? nn::OptimizerKind::Sgd : nn::OptimizerKind::Adam;
    fc.train.learning_rate = cfg.net.learning_rate;
    fc.train.batch_size = cfg.net.batch_size;
    fc.train.classifier_epochs = cfg.net.classifier_epochs;
    fc.train.regressor_epochs = cfg.net.regressor_epochs;
    fc.train.patience = cfg.net.patience;
    fc.train.max_depth = cfg.stopping.max_depth;
    fc.train.threads = cfg.threads;
    fc.train.seed = cfg.seed;
    fc.train.proposals.spatial_clustering = cfg.spatial_clustering;
    fc.metric_holdout_fraction = cfg.metric_holdout_fraction;
    return fc;
}

namespace detail {

inline std::filesystem::path require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string(what) + " path not set (config or flag)");
    if (!std::filesystem::exists(path)) throw IoError(std::string(what) + " file not found: " + path);
    return path;
}

inline nlohmann::json run_manifest(const std::string& command, const RunConfig& cfg,
                                   const std::map<std::string, std::string>& dataset_hashes) {
    const nlohmann::json config_json = config_to_json(cfg);
    nlohmann::json m;
    m["command"] = command;
    m["created_at"] = iso8601_now();
    m["config"] = config_json;
    m["config_hash"] = hex16(fnv1a64(config_json.dump()));
    m["dataset_hashes"] = dataset_hashes;
    m["seed"] = cfg.seed;
    m["tool"] = {{"name", "seqloc"}, {"version", kToolVersion}};
    return m;
}

}  // namespace detail

// preprocess: derive the feature filter, export AP location estimates, print
// a summary of kept features and drop reasons.
inline int cmd_preprocess(const RunConfig& cfg, std::ostream& out = std::cout) {
    const auto train_path = detail::require_file(cfg.paths.train_csv, "training CSV");
    const auto val_path = detail::require_file(cfg.paths.validation_csv, "validation CSV");

    const Dataset train = recode_nondetect(parse_csv(train_path, DatasetRole::Train));
    const Dataset validation = recode_nondetect(parse_csv(val_path, DatasetRole::Validation));
    const FeatureFilter filter = build_filter(train, validation, cfg.preprocess);

    const std::filesystem::path out_dir = cfg.paths.out_dir;
    write_file(out_dir / "filter.json", filter_to_json(filter).dump(2));
    write_file(out_dir / "ap_locations.csv", ap_locations_csv(train, power_weight(cfg.preprocess.weight_gamma)));

    std::size_t zero_variance = 0, unstable = 0;
    for (const auto& [index, reason] : filter.reasons)
        (reason == DropReason::ZeroVariance ? zero_variance : unstable) += 1;

    auto manifest = detail::run_manifest("preprocess", cfg,
                                         {{"train", file_content_hash(train_path)},
                                          {"validation", file_content_hash(val_path)}});
    manifest["kept_features"] = filter.kept.size();
    manifest["dropped_zero_variance"] = zero_variance;
    manifest["dropped_unstable_location"] = unstable;
    write_file(out_dir / "manifest_preprocess.json", manifest.dump(2));

    out << "features: " << filter.raw_r() << " -> " << filter.kept.size() << " kept\n"
        << "dropped zero_variance: " << zero_variance << "\n"
        << "dropped unstable_location: " << unstable << "\n"
        << "wrote " << (out_dir / "filter.json").string() << ", " << (out_dir / "ap_locations.csv").string()
        << "\n";
    return 0;
}

// train: fit a predictor variant and persist it as a directory.
inline int cmd_train(const RunConfig& cfg, const std::string& variant_name, std::ostream& out = std::cout) {
    const pipeline::Variant variant = pipeline::variant_from_string(variant_name);
    const auto train_path = detail::require_file(cfg.paths.train_csv, "training CSV");
    const auto val_path = detail::require_file(cfg.paths.validation_csv, "validation CSV");

    const Dataset train = parse_csv(train_path, DatasetRole::Train);
    const Dataset validation = parse_csv(val_path, DatasetRole::Validation);

    pipeline::Predictor p = pipeline::fit(variant, train, validation, fit_config(cfg));

    auto manifest = detail::run_manifest("train", cfg,
                                         {{"train", file_content_hash(train_path)},
                                          {"validation", file_content_hash(val_path)}});
    for (auto& [key, value] : p.manifest.items()) manifest[key] = value;
    p.manifest = manifest;

    const std::filesystem::path dir = std::filesystem::path(cfg.paths.out_dir) / variant_name;

    out << "trained " << variant_name << ": " << p.filter.kept.size() << " features, "
        << p.manifest["leaves"] << " leaves\n";
    for (const auto& entry : p.node_log) {
        if (entry.became_leaf)
            out << "  leaf [" << entry.region << "] n=" << entry.train_count << " (" << entry.stop_reason
                << ")\n";
        else
            out << "  split [" << entry.region << "] -> " << entry.chosen << ", tau=" << format_double(entry.tau)
                << ", n=" << entry.train_count << "\n";
    }

    // Unbiased metrics on the rows the tree never scored against.
    if (!p.metric_holdout_rows.empty()) {
        std::vector<pipeline::Prediction> preds;
        std::vector<LocationLabel> truths;
        for (const std::size_t row : p.metric_holdout_rows) {
            preds.push_back(pipeline::predict(p, validation.observations[row].rssi));
            truths.push_back(validation.observations[row].label);
        }
        const auto holdout = metrics::evaluate_predictions(preds, truths);
        p.manifest["metric_holdout"]["building_hit_rate"] = holdout.building_hit_rate;
        p.manifest["metric_holdout"]["floor_hit_rate"] = holdout.floor_hit_rate;
        p.manifest["metric_holdout"]["mean_positioning_error_m"] = holdout.mean_positioning_error;
        out << "holdout (" << holdout.n << " rows): building hit " << format_double(holdout.building_hit_rate)
            << ", floor hit " << format_double(holdout.floor_hit_rate) << ", mean error "
            << format_double(holdout.mean_positioning_error) << " m\n";
    }

    pipeline::save_predictor(p, dir);
    out << "saved to " << dir.string() << "\n";
    return 0;
}

// evaluate: score a saved predictor on a labeled validation CSV.
inline int cmd_evaluate(const std::string& predictor_dir, const std::string& validation_csv,
                        metrics::ReportFormat format, const std::string& out_file = "",
                        std::ostream& out = std::cout) {
    if (!std::filesystem::exists(predictor_dir)) throw IoError("predictor directory not found: " + predictor_dir);
    const auto val_path = detail::require_file(validation_csv, "validation CSV");

    const pipeline::Predictor p = pipeline::load_predictor(predictor_dir);
    const Dataset validation = parse_csv(val_path, DatasetRole::Validation);
    const metrics::EvalReport report = metrics::evaluate(p, validation);

    const std::string rendered = metrics::render_report({{p.variant, report}}, format);
    out << rendered;
    if (!out_file.empty()) write_file(out_file, rendered);

    nlohmann::json manifest;
    manifest["command"] = "evaluate";
    manifest["created_at"] = iso8601_now();
    manifest["predictor"] = predictor_dir;
    manifest["dataset_hashes"] = {{"validation", file_content_hash(val_path)}};
    manifest["n"] = report.n;
    manifest["building_hit_rate"] = report.building_hit_rate;
    manifest["floor_hit_rate"] = report.floor_hit_rate;
    manifest["mean_positioning_error_m"] = report.mean_positioning_error;
    manifest["tool"] = {{"name", "seqloc"}, {"version", kToolVersion}};
    write_file(std::filesystem::path(predictor_dir) / "manifest_evaluate.json", manifest.dump(2));
    return 0;
}

namespace detail {

// Accepts either the full labeled schema or a WAP-only header.
inline std::vector<std::vector<double>> parse_feature_rows(const std::filesystem::path& path, int expected_r) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty file, missing header: " + path.string());
    std::vector<std::string_view> cols;
    seqloc::detail::split_row(seqloc::detail::trim(line), cols);

    const bool labeled = cols.size() == static_cast<std::size_t>(expected_r) + 9;
    if (!labeled && cols.size() != static_cast<std::size_t>(expected_r))
        throw SchemaError("input has " + std::to_string(cols.size()) + " columns; expected R=" +
                          std::to_string(expected_r) + " WAP columns (optionally followed by the label columns)");
    for (int i = 0; i < expected_r; ++i)
        if (seqloc::detail::trim(cols[static_cast<std::size_t>(i)]) != seqloc::detail::wap_name(i))
            throw SchemaError("header column " + std::to_string(i + 1) + " should be " +
                              seqloc::detail::wap_name(i));

    std::vector<std::vector<double>> rows;
    std::vector<std::string_view> fields;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = seqloc::detail::trim(line);
        if (body.empty()) continue;
        seqloc::detail::split_row(body, fields);
        if (fields.size() != cols.size())
            throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) +
                             " columns, got " + std::to_string(fields.size()));
        std::vector<double> rssi(static_cast<std::size_t>(expected_r));
        bool ok = true;
        for (int i = 0; i < expected_r; ++i) {
            rssi[static_cast<std::size_t>(i)] = parse_double(seqloc::detail::trim(fields[static_cast<std::size_t>(i)]), ok);
            if (!ok)
                throw ParseError("row " + std::to_string(line_no) + ": non-numeric RSSI in column " +
                                 seqloc::detail::wap_name(i));
        }
        rows.push_back(std::move(rssi));
    }
    return rows;
}

}  // namespace detail

// predict: batch localization of raw fingerprints.
inline int cmd_predict(const std::string& predictor_dir, const std::string& input_csv,
                       const std::string& out_csv, std::ostream& out = std::cout) {
    if (!std::filesystem::exists(predictor_dir)) throw IoError("predictor directory not found: " + predictor_dir);
    const auto input_path = detail::require_file(input_csv, "input CSV");

    const pipeline::Predictor p = pipeline::load_predictor(predictor_dir);
    const auto rows = detail::parse_feature_rows(input_path, p.filter.raw_r());

    std::string csv = "ROW,LONGITUDE,LATITUDE,FLOOR,BUILDINGID,LEAF,LOW_CONFIDENCE\n";
    std::size_t clamped = 0, low_confidence = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const pipeline::Prediction pred = pipeline::predict(p, rows[i]);
        clamped += pred.floor_clamped ? 1 : 0;
        low_confidence += pred.low_confidence ? 1 : 0;
        csv += std::to_string(i);
        csv += ',';
        csv += format_double(pred.longitude);
        csv += ',';
        csv += format_double(pred.latitude);
        csv += ',';
        csv += std::to_string(pred.floor);
        csv += ',';
        csv += std::to_string(pred.building);
        csv += ",\"";
        csv += pred.leaf_descriptor;
        csv += "\",";
        csv += pred.low_confidence ? "1" : "0";
        csv += '\n';
    }
    const std::filesystem::path out_path =
        out_csv.empty() ? std::filesystem::path(predictor_dir) / "predictions.csv" : std::filesystem::path(out_csv);
    write_file(out_path, csv);

    nlohmann::json manifest;
    manifest["command"] = "predict";
    manifest["created_at"] = iso8601_now();
    manifest["predictor"] = predictor_dir;
    manifest["dataset_hashes"] = {{"input", file_content_hash(input_path)}};
    manifest["rows"] = rows.size();
    manifest["floor_clamped"] = clamped;
    manifest["low_confidence"] = low_confidence;
    manifest["tool"] = {{"name", "seqloc"}, {"version", kToolVersion}};
    write_file(out_path.parent_path() / "manifest_predict.json", manifest.dump(2));

    out << "wrote " << rows.size() << " predictions to " << out_path.string() << " (" << low_confidence
        << " low-confidence, " << clamped << " floor-clamped)\n";
    return 0;
}

// synth: generate a synthetic scene into UJIIndoorLoc-schema CSVs.
inline int cmd_synth(const RunConfig& cfg, std::ostream& out = std::cout) {
    if (cfg.synth.is_null()) throw ConfigError("synth command needs a \"synth\" section in the config");
    synth::SceneConfig scene = synth::scene_from_json(cfg.synth);
    const auto n = cfg.synth.value("n", std::size_t{1000});

    const auto [train, validation] = synth::generate(scene, n);
    const std::filesystem::path out_dir = cfg.paths.out_dir;
    write_csv(train, out_dir / "synth_train.csv");
    write_csv(validation, out_dir / "synth_validation.csv");

    auto manifest = detail::run_manifest("synth", cfg, {});
    manifest["scene"] = synth::scene_to_json(scene);
    manifest["n"] = n;
    manifest["train_rows"] = train.n();
    manifest["validation_rows"] = validation.n();
    write_file(out_dir / "manifest_synth.json", manifest.dump(2));

    out << "generated " << train.n() << " training and " << validation.n() << " validation observations in "
        << out_dir.string() << "\n";
    return 0;
}

// calibrate-stability: sweep the stability threshold for a target kept-count.
inline int cmd_calibrate_stability(const RunConfig& cfg, int target_kept, std::ostream& out = std::cout) {
    const auto train_path = detail::require_file(cfg.paths.train_csv, "training CSV");
    const auto val_path = detail::require_file(cfg.paths.validation_csv, "validation CSV");
    const Dataset train = recode_nondetect(parse_csv(train_path, DatasetRole::Train));
    const Dataset validation = recode_nondetect(parse_csv(val_path, DatasetRole::Validation));

    const CalibrationPoint point = calibrate_stability_threshold(train, validation, cfg.preprocess.m_folds,
                                                                 cfg.preprocess.weight_gamma, target_kept);

    auto manifest = detail::run_manifest("calibrate-stability", cfg,
                                         {{"train", file_content_hash(train_path)},
                                          {"validation", file_content_hash(val_path)}});
    manifest["target_kept"] = target_kept;
    manifest["threshold_m"] = point.threshold_m;
    manifest["kept"] = point.kept;
    write_file(std::filesystem::path(cfg.paths.out_dir) / "manifest_calibrate.json", manifest.dump(2));

    out << "stability_threshold_m " << format_double(point.threshold_m) << " keeps " << point.kept
        << " features (target " << target_kept << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing front end.
// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"Fingerprint-based indoor localization via sequential classification networks"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file");

    // Flags override the config file.
    RunConfig cfg;
    try {
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size())
                cfg = load_config(args[i + 1]);
            else if (args[i].rfind("--config=", 0) == 0)
                cfg = load_config(args[i].substr(9));
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    app.add_option("--train-csv", cfg.paths.train_csv, "training CSV path");
    app.add_option("--validation-csv", cfg.paths.validation_csv, "validation CSV path");
    app.add_option("--out-dir", cfg.paths.out_dir, "output directory");
    app.add_option("--seed", cfg.seed, "master seed");
    app.add_option("--threads", cfg.threads, "worker thread cap");
    app.add_option("--m-folds", cfg.preprocess.m_folds, "time folds for the stability filter");
    app.add_option("--stability-threshold", cfg.preprocess.stability_threshold_m,
                   "stability distance threshold (m)");
    app.add_option("--weight-gamma", cfg.preprocess.weight_gamma, "centroid weight exponent");
    app.add_option("--metric-holdout", cfg.metric_holdout_fraction,
                   "validation fraction withheld from split scoring, for unbiased metrics");
    app.add_option("--min-accuracy", cfg.stopping.min_accuracy, "stopping rule: minimum split accuracy");
    app.add_option("--min-subsample", cfg.stopping.min_subsample, "stopping rule: minimum child subsample");
    app.add_option("--max-depth", cfg.stopping.max_depth, "tree depth bound");
    app.add_option("--learning-rate", cfg.net.learning_rate, "optimizer learning rate");
    app.add_option("--batch-size", cfg.net.batch_size, "minibatch size");
    app.add_option("--classifier-epochs", cfg.net.classifier_epochs, "classifier training epochs");
    app.add_option("--regressor-epochs", cfg.net.regressor_epochs, "regressor training epochs");
    app.add_option("--patience", cfg.net.patience, "early stopping patience (epochs)");

    auto* preprocess_cmd = app.add_subcommand("preprocess", "derive the feature filter and AP locations");

    auto* train_cmd = app.add_subcommand("train", "train a predictor (tnn, tsnn or scnn)");
    std::string variant;
    train_cmd->add_option("variant", variant, "model variant")
        ->required()
        ->check(CLI::IsMember({"tnn", "tsnn", "scnn"}));

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score a saved predictor on labeled data");
    std::string predictor_dir, eval_csv, format_name = "text", eval_out;
    evaluate_cmd->add_option("predictor_dir", predictor_dir, "predictor directory")->required();
    evaluate_cmd->add_option("validation_csv", eval_csv, "labeled validation CSV")->required();
    evaluate_cmd->add_option("--format", format_name, "text, csv or json")
        ->check(CLI::IsMember({"text", "csv", "json"}));
    evaluate_cmd->add_option("--out", eval_out, "also write the report to this file");

    auto* predict_cmd = app.add_subcommand("predict", "batch-localize raw fingerprints");
    std::string predict_dir, input_csv, predict_out;
    predict_cmd->add_option("predictor_dir", predict_dir, "predictor directory")->required();
    predict_cmd->add_option("input_csv", input_csv, "fingerprints to localize")->required();
    predict_cmd->add_option("--out", predict_out, "output CSV path");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene dataset");

    auto* calibrate_cmd = app.add_subcommand("calibrate-stability",
                                             "find the stability threshold for a target feature count");
    int target_kept = 320;
    calibrate_cmd->add_option("--target", target_kept, "target kept-feature count");

    std::vector<const char*> argv;
    argv.push_back("seqloc");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (preprocess_cmd->parsed()) return cmd_preprocess(cfg, out);
        if (train_cmd->parsed()) return cmd_train(cfg, variant, out);
        if (evaluate_cmd->parsed())
            return cmd_evaluate(predictor_dir, eval_csv, metrics::report_format_from_string(format_name),
                                eval_out, out);
        if (predict_cmd->parsed()) return cmd_predict(predict_dir, input_csv, predict_out, out);
        if (synth_cmd->parsed()) return cmd_synth(cfg, out);
        if (calibrate_cmd->parsed()) return cmd_calibrate_stability(cfg, target_kept, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

inline int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace seqloc::cli
