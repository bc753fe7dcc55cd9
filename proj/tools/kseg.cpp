// kseg: synthetic DCE-MRI k-space segmentation experiments.
//
// Subcommands: init, phantom, train, sweep, stats, features, plot, report.
// Exit codes: 0 success, 2 validation error, 3 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "kseg/errors.hpp"
#include "kseg/evaluation.hpp"
#include "kseg/experiment.hpp"
#include "kseg/features.hpp"
#include "kseg/io/checkpoint.hpp"
#include "kseg/io/csv.hpp"
#include "kseg/io/cvol.hpp"
#include "kseg/plot.hpp"
#include "kseg/stats.hpp"
#include "kseg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path = "kseg.cfg";
    std::string out_override;
    uint64_t seed_override = 0;
    bool has_seed_override = false;
    int workers = 1;
    bool desk_scale = false;
};

kseg::ExperimentConfig load_config(const GlobalOptions& g) {
    kseg::ExperimentConfig cfg = kseg::ExperimentConfig::load(g.config_path);
    if (!g.out_override.empty()) cfg.output_dir = g.out_override;
    if (g.has_seed_override) cfg.seed = g.seed_override;
    if (g.desk_scale && cfg.model.desk_scale_factor == 1) {
        cfg.model.desk_scale_factor = 4;
        cfg.train.batch_size = std::min(cfg.train.batch_size, 4);
    }
    return cfg;
}

std::vector<int> cohort_fold_assignment(const kseg::ExperimentConfig& cfg,
                                        const std::vector<kseg::Exam>& cohort) {
    std::vector<int> labels;
    labels.reserve(cohort.size());
    for (const auto& e : cohort) labels.push_back(e.lesion_mask.foreground_count() > 0 ? 1 : 0);
    bool stratified = true; // patient-level stratification by lesion status
    return kseg::split_folds(labels, cfg.eval.folds, cfg.eval.fold_seed, stratified);
}

uint64_t model_init_seed(const kseg::ExperimentConfig& cfg, kseg::ModelVariant variant, int fold) {
    return kseg::fnv1a64(std::string("model-init|s=") + std::to_string(cfg.seed) +
                         "|v=" + kseg::variant_name(variant) + "|f=" + std::to_string(fold));
}

int cmd_init(const GlobalOptions& g, const std::string& path, bool desk) {
    kseg::ExperimentConfig cfg =
        desk || g.desk_scale ? kseg::ExperimentConfig::desk_default() : kseg::ExperimentConfig{};
    if (!g.out_override.empty()) cfg.output_dir = g.out_override;
    if (g.has_seed_override) cfg.seed = g.seed_override;
    cfg.save(path);
    std::cout << "wrote " << path << " (config_hash=" << cfg.hash_hex() << ")\n";
    return 0;
}

int cmd_phantom(const GlobalOptions& g) {
    auto cfg = load_config(g);
    cfg.phantom.validate();
    auto cohort = kseg::generate_cohort(cfg.phantom, cfg.cohort_size, cfg.seed);
    fs::path dir = fs::path(cfg.output_dir) / "phantom";
    kseg::save_cohort(dir, cohort, cfg.hash_hex());
    std::cout << "wrote " << cohort.size() << " exams to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& variant_arg, int fold) {
    auto cfg = load_config(g);
    auto cohort = kseg::load_cohort(fs::path(cfg.output_dir) / "phantom");
    auto folds = cohort_fold_assignment(cfg, cohort);
    if (fold < 0 || fold >= cfg.eval.folds)
        throw kseg::validation_error("train: fold must lie in [0, " +
                                     std::to_string(cfg.eval.folds - 1) + "]");

    std::vector<kseg::Exam> train_set, val_set;
    for (size_t i = 0; i < cohort.size(); ++i)
        (folds[i] == fold ? val_set : train_set).push_back(cohort[i]);

    std::vector<kseg::ModelVariant> variants;
    if (variant_arg == "all")
        variants = kseg::all_variants();
    else
        variants = {kseg::variant_from_name(variant_arg)};

    for (kseg::ModelVariant variant : variants) {
        kseg::ModelConfig mc = cfg.model;
        mc.variant = variant;
        kseg::SegmentationModel<float> model(mc, model_init_seed(cfg, variant, fold));

        kseg::TrainConfig tc = cfg.train;
        tc.seed = kseg::fnv1a64("train|s=" + std::to_string(cfg.seed) +
                                "|v=" + kseg::variant_name(variant) + "|f=" + std::to_string(fold));
        std::cout << "training " << kseg::variant_name(variant) << " fold " << fold << " ("
                  << train_set.size() << " train / " << val_set.size() << " val)\n";
        auto result = kseg::train_model(model, train_set, val_set, tc);
        std::cout << "  best val dice " << result.best_val_dice << " at epoch "
                  << result.best_epoch << " (" << result.epochs_run << " epochs run)\n";

        fs::path ckpt = kseg::checkpoint_path(cfg.output_dir, variant, fold);
        fs::create_directories(ckpt.parent_path());
        kseg::save_checkpoint(ckpt, model, cfg.hash(), kseg::tool_version());

        fs::path hist = fs::path(cfg.output_dir) / "checkpoints" /
                        (std::string(kseg::variant_name(variant)) + "_fold" +
                         std::to_string(fold) + "_history.csv");
        std::ofstream hs(hist, std::ios::trunc);
        if (!hs) throw kseg::io_error("train: cannot write " + hist.string());
        hs << "# config_hash=" << cfg.hash_hex() << "\n# tool_version=" << kseg::tool_version()
           << "\n"
           << kseg::history_to_csv(result.history);
        std::cout << "  wrote " << ckpt.string() << "\n";
    }
    return 0;
}

int cmd_sweep(const GlobalOptions& g, const std::string& kind, const std::string& variant_filter) {
    if (kind != "accel" && kind != "noise")
        throw kseg::validation_error("sweep: --kind must be 'accel' or 'noise'");
    auto cfg = load_config(g);
    auto cohort = kseg::load_cohort(fs::path(cfg.output_dir) / "phantom");
    auto folds = cohort_fold_assignment(cfg, cohort);

    fs::path out_csv = fs::path(cfg.output_dir) / "metrics" / (kind + ".csv");
    fs::create_directories(out_csv.parent_path());

    kseg::MetricTable existing;
    if (fs::exists(out_csv)) {
        auto loaded = kseg::read_metric_csv(out_csv);
        if (loaded.config_hash_hex != cfg.hash_hex())
            throw kseg::io_error("sweep: existing " + out_csv.string() + " was produced with " +
                                 "config_hash=" + loaded.config_hash_hex +
                                 " but the current config hashes to " + cfg.hash_hex() +
                                 "; refusing to resume");
        existing = std::move(loaded.table);
        std::cout << "resuming from " << existing.size() << " completed records\n";
    }

    std::vector<kseg::ModelVariant> variants;
    if (variant_filter.empty() || variant_filter == "all")
        variants = kseg::all_variants();
    else
        variants = {kseg::variant_from_name(variant_filter)};

    kseg::MetricTable merged = existing;
    for (int fold = 0; fold < cfg.eval.folds; ++fold) {
        std::vector<kseg::Exam> fold_exams;
        for (size_t i = 0; i < cohort.size(); ++i)
            if (folds[i] == fold) fold_exams.push_back(cohort[i]);
        if (fold_exams.empty()) continue;

        std::vector<std::unique_ptr<kseg::SegmentationModel<float>>> keep_alive;
        kseg::ModelSet models;
        for (kseg::ModelVariant v : variants) {
            fs::path ckpt = kseg::checkpoint_path(cfg.output_dir, v, fold);
            if (!fs::exists(ckpt)) {
                std::cerr << "sweep: missing checkpoint " << ckpt.string() << "; skipping "
                          << kseg::variant_name(v) << " fold " << fold << "\n";
                continue;
            }
            auto loaded = kseg::load_checkpoint(ckpt);
            if (loaded.experiment_config_hash != cfg.hash())
                throw kseg::io_error("sweep: checkpoint " + ckpt.string() +
                                     " carries a different config hash; refusing to mix runs");
            keep_alive.push_back(
                std::make_unique<kseg::SegmentationModel<float>>(std::move(loaded.model)));
            models.push_back({kseg::variant_name(v), keep_alive.back().get()});
        }
        if (models.empty()) continue;
        merged = kseg::sweep_with_resume(models, fold_exams, cfg.eval, kind == "noise", merged,
                                         g.workers);
    }

    kseg::write_metric_csv(out_csv, merged, cfg.hash_hex(), kseg::tool_version());
    std::cout << "wrote " << merged.size() << " records to " << out_csv.string() << "\n";
    return 0;
}

int cmd_stats(const GlobalOptions& g, const std::string& table_path, const std::string& model_a,
              const std::string& model_b) {
    auto cfg = load_config(g);
    auto loaded = kseg::read_metric_csv(table_path);

    std::string condition_type = loaded.table.empty() ? "accel" : loaded.table.front().condition_type;
    std::set<double> conds;
    for (const auto& r : loaded.table)
        if (r.condition_type == condition_type) conds.insert(r.condition_value);
    std::vector<double> family(conds.begin(), conds.end());

    auto results = kseg::compare_models(loaded.table, model_a, model_b, condition_type, family);

    fs::path dir = fs::path(cfg.output_dir) / "stats";
    fs::create_directories(dir);
    std::string stem = model_a + "_vs_" + model_b + "_" + condition_type;
    fs::path csv_path = dir / (stem + ".csv");
    kseg::write_comparison_csv(csv_path, results, loaded.config_hash_hex, kseg::tool_version());

    json report;
    report["model_a"] = model_a;
    report["model_b"] = model_b;
    report["condition_type"] = condition_type;
    report["config_hash"] = loaded.config_hash_hex;
    report["tool_version"] = kseg::tool_version();
    report["comparisons"] = json::array();
    for (const auto& r : results) {
        report["comparisons"].push_back({{"condition", r.condition_value},
                                         {"p_raw", r.raw_p},
                                         {"p_holm", r.holm_adjusted_p},
                                         {"n_pairs_used", r.n_pairs_used},
                                         {"statistic", r.statistic},
                                         {"significant", r.significant}});
    }
    fs::path json_path = dir / (stem + ".json");
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) throw kseg::io_error("stats: cannot write " + json_path.string());
    js << report.dump(2) << "\n";

    std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";
    for (const auto& r : results)
        std::cout << "  " << condition_type << "=" << r.condition_value << " p_raw=" << r.raw_p
                  << " p_holm=" << r.holm_adjusted_p << (r.significant ? "  *" : "") << "\n";
    return 0;
}

int cmd_features(const GlobalOptions& g, const std::string& checkpoint, int patient) {
    auto cfg = load_config(g);
    auto cohort = kseg::load_cohort(fs::path(cfg.output_dir) / "phantom");
    if (patient < 0 || patient >= int(cohort.size()))
        throw kseg::validation_error("features: patient index out of range");

    auto loaded = kseg::load_checkpoint(checkpoint);
    if (loaded.model.config().variant != kseg::ModelVariant::hybrid_kspace_to_image)
        throw kseg::usage_error("features: the feature analysis requires a hybrid checkpoint");

    const kseg::Exam& exam = cohort[patient];
    auto prepared = kseg::prepare_subtraction_kspace(exam);
    auto starts = kseg::window_starts(prepared.depth, cfg.eval.patch_depth, cfg.eval.patch_stride);
    auto patch = kseg::patch_to_tensor<float>(prepared, starts.front(), cfg.eval.patch_depth);

    auto analysis = kseg::gradient_modulated_sum(loaded.model, patch);
    auto plain_sum = kseg::coherent_sum(analysis.channels);

    fs::path dir = fs::path(cfg.output_dir) / "features";
    fs::create_directories(dir);

    // Coherent-sum volumes for plotting.
    kseg::CvolMetadata meta = {{"patient_index", std::to_string(patient)},
                               {"config_hash", cfg.hash_hex()}};
    kseg::write_cvol(dir / "coherent_sum.cvol", plain_sum, meta);
    kseg::write_cvol(dir / "gradient_modulated_sum.cvol", analysis.sum, meta);
    for (size_t c = 0; c < analysis.channels.size(); ++c)
        kseg::write_cvol(dir / ("bridge_channel_" + std::to_string(c) + ".cvol"),
                         analysis.channels[c], meta);

    // Radial profiles: input k-space plus each bridge channel back in k-space.
    const int n_bins = 24;
    std::vector<std::pair<std::string, kseg::RadialProfile>> profiles;
    {
        kseg::ComplexVolume input_patch(cfg.eval.patch_depth, prepared.height, prepared.width,
                                        kseg::Domain::kspace);
        const size_t plane = size_t(prepared.height) * prepared.width;
        std::copy(prepared.data.begin() + starts.front() * plane,
                  prepared.data.begin() + (starts.front() + cfg.eval.patch_depth) * plane,
                  input_patch.data.begin());
        profiles.push_back({"input", kseg::radial_energy_profile(input_patch, n_bins)});
    }
    for (size_t c = 0; c < analysis.channels.size(); ++c) {
        kseg::ComplexVolume k = analysis.channels[c];
        k.domain = kseg::Domain::image;
        profiles.push_back({"channel_" + std::to_string(c),
                            kseg::radial_energy_profile(kseg::fft2c(k), n_bins)});
    }

    fs::path profile_csv = dir / "radial_profiles.csv";
    {
        std::ofstream os(profile_csv, std::ios::trunc);
        if (!os) throw kseg::io_error("features: cannot write " + profile_csv.string());
        os << "# config_hash=" << cfg.hash_hex() << "\n# tool_version=" << kseg::tool_version()
           << "\n";
        os << "bin_center,energy,channel\n";
        for (const auto& [label, profile] : profiles)
            for (int b = 0; b < profile.n_bins; ++b)
                os << kseg::format_double(0.5 * (profile.bin_edges[b] + profile.bin_edges[b + 1]))
                   << ',' << kseg::format_double(profile.energy[b]) << ',' << label << '\n';
    }
    kseg::figure_radial_profiles(dir / "radial_profiles.svg", profiles, true);

    std::cout << "wrote feature analyses for patient " << patient << " to " << dir.string()
              << "\n  channel weights:";
    for (double w : analysis.weights) std::cout << ' ' << w;
    std::cout << "\n";
    return 0;
}

int cmd_plot(const GlobalOptions& g, const std::vector<std::string>& tables) {
    auto cfg = load_config(g);
    fs::path dir = fs::path(cfg.output_dir) / "figures";
    fs::create_directories(dir);

    for (const auto& path : tables) {
        auto loaded = kseg::read_metric_csv(path);
        if (loaded.table.empty()) throw kseg::validation_error("plot: empty table " + path);
        std::string condition_type = loaded.table.front().condition_type;

        // Significance asterisks for the primary comparison when both models
        // are present.
        std::vector<kseg::ComparisonResult> comparisons;
        std::set<std::string> models;
        for (const auto& r : loaded.table) models.insert(r.model);
        if (models.count("hybrid_kspace_to_image") && models.count("image_magnitude")) {
            std::set<double> conds;
            for (const auto& r : loaded.table) conds.insert(r.condition_value);
            comparisons = kseg::compare_models(loaded.table, "hybrid_kspace_to_image",
                                               "image_magnitude", condition_type,
                                               {conds.begin(), conds.end()});
        }

        std::string stem = fs::path(path).stem().string();
        kseg::figure_dice_curves(dir / (stem + "_dice.svg"), loaded.table, condition_type,
                                 comparisons, cfg.seed);
        kseg::figure_failure_rate(dir / (stem + "_failure.svg"), loaded.table, condition_type);
        std::cout << "wrote figures for " << path << " to " << dir.string() << "\n";
    }
    return 0;
}

int cmd_report(const GlobalOptions& g) {
    auto cfg = load_config(g);
    fs::path out_dir(cfg.output_dir);

    json report;
    report["config_hash"] = cfg.hash_hex();
    report["tool_version"] = kseg::tool_version();
    report["cohort_size"] = cfg.cohort_size;
    report["tables"] = json::object();

    for (const std::string kind : {"accel", "noise"}) {
        fs::path csv = out_dir / "metrics" / (kind + ".csv");
        if (!fs::exists(csv)) continue;
        auto loaded = kseg::read_metric_csv(csv);
        json jt = json::object();

        std::set<std::string> models;
        std::set<double> conds;
        for (const auto& r : loaded.table) {
            models.insert(r.model);
            conds.insert(r.condition_value);
        }
        std::string cond_type = loaded.table.empty() ? "" : loaded.table.front().condition_type;
        for (const auto& model : models) {
            json jm = json::array();
            for (double c : conds) {
                auto values = kseg::table_dice_values(loaded.table, model, cond_type, c);
                if (values.empty()) continue;
                double mean = 0.0;
                for (double v : values) mean += v;
                mean /= double(values.size());
                auto [lo, hi] = kseg::bootstrap_ci(
                    values, 10000, 0.05,
                    cfg.seed ^ kseg::fnv1a64(model + "|report|" + std::to_string(c)));
                jm.push_back({{"condition", c},
                              {"mean_dice", mean},
                              {"ci_low", lo},
                              {"ci_high", hi},
                              {"failure_rate", kseg::failure_rate(values)},
                              {"n", values.size()}});
            }
            jt[model] = std::move(jm);
        }

        if (models.count("hybrid_kspace_to_image") && models.count("image_magnitude")) {
            auto comparisons =
                kseg::compare_models(loaded.table, "hybrid_kspace_to_image", "image_magnitude",
                                     cond_type, {conds.begin(), conds.end()});
            json jc = json::array();
            for (const auto& r : comparisons)
                jc.push_back({{"condition", r.condition_value},
                              {"p_raw", r.raw_p},
                              {"p_holm", r.holm_adjusted_p},
                              {"significant", r.significant}});
            jt["primary_comparison"] = std::move(jc);
        }
        report["tables"][kind] = std::move(jt);
    }

    fs::path dir = out_dir / "report";
    fs::create_directories(dir);
    fs::path path = dir / "report.json";
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw kseg::io_error("report: cannot write " + path.string());
    os << report.dump(2) << "\n";
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic DCE-MRI k-space segmentation experiments"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "Experiment config file")->capture_default_str();
    app.add_option("--out", g.out_override, "Override the configured output directory");
    auto* seed_opt = app.add_option("--seed", g.seed_override, "Override the experiment seed");
    app.add_option("--workers", g.workers, "Worker threads for sweeps")->capture_default_str();
    app.add_flag("--desk-scale", g.desk_scale, "Force desk-scale model widths");

    auto* init = app.add_subcommand("init", "Write a config file with full defaults");
    std::string init_path = "kseg.cfg";
    bool init_desk = false;
    init->add_option("path", init_path, "Destination path")->capture_default_str();
    init->add_flag("--desk", init_desk, "Desk-scale defaults (width divisor 4)");

    auto* phantom = app.add_subcommand("phantom", "Generate the synthetic cohort");

    auto* train = app.add_subcommand("train", "Train one variant on one fold");
    std::string train_variant = "all";
    int train_fold = 0;
    train->add_option("--variant", train_variant,
                      "hybrid_kspace_to_image | native_kspace | image_magnitude | "
                      "image_complex | all")
        ->capture_default_str();
    train->add_option("--fold", train_fold, "Held-out fold index")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Run the acceleration or noise sweep");
    std::string sweep_kind = "accel";
    std::string sweep_variant;
    sweep->add_option("--kind", sweep_kind, "accel | noise")->capture_default_str();
    sweep->add_option("--variant", sweep_variant, "Restrict to one variant");

    auto* stats = app.add_subcommand("stats", "Paired Wilcoxon + Holm between two models");
    std::string stats_table, stats_a = "hybrid_kspace_to_image", stats_b = "image_magnitude";
    stats->add_option("table", stats_table, "Metrics CSV")->required();
    stats->add_option("model_a", stats_a, "First model")->capture_default_str();
    stats->add_option("model_b", stats_b, "Second model")->capture_default_str();

    auto* features = app.add_subcommand("features", "Frequency-domain feature analysis");
    std::string features_ckpt;
    int features_patient = 0;
    features->add_option("checkpoint", features_ckpt, "Hybrid checkpoint")->required();
    features->add_option("--patient", features_patient, "Cohort patient index")
        ->capture_default_str();

    auto* plot = app.add_subcommand("plot", "Render figures from metrics tables");
    std::vector<std::string> plot_tables;
    plot->add_option("tables", plot_tables, "Metrics CSV files")->required();

    auto* report = app.add_subcommand("report", "Aggregate results into a JSON report");

    CLI11_PARSE(app, argc, argv);
    g.has_seed_override = seed_opt->count() > 0;

    try {
        if (init->parsed()) return cmd_init(g, init_path, init_desk);
        if (phantom->parsed()) return cmd_phantom(g);
        if (train->parsed()) return cmd_train(g, train_variant, train_fold);
        if (sweep->parsed()) return cmd_sweep(g, sweep_kind, sweep_variant);
        if (stats->parsed()) return cmd_stats(g, stats_table, stats_a, stats_b);
        if (features->parsed()) return cmd_features(g, features_ckpt, features_patient);
        if (plot->parsed()) return cmd_plot(g, plot_tables);
        if (report->parsed()) return cmd_report(g);
    } catch (const kseg::io_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const kseg::validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const kseg::usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const kseg::degenerate_input_error& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
