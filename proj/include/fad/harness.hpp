#pragma once

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fad/episodes.hpp"
#include "fad/idx.hpp"
#include "fad/io.hpp"
#include "fad/results.hpp"
#include "fad/serialize.hpp"
#include "fad/train.hpp"
#include "fad/verify.hpp"

// Experiment orchestration: resolved run configurations, the pretrain /
// adapt / ablate drivers, and machine-readable result emission. Episodes are
// dispatched to a worker pool (capped by FAD_THREADS); output ordering is by
// episode index, independent of scheduling.

namespace fad {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& context) {
    if (!obj.is_object()) throw ConfigError("config: " + context + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ConfigError("config: unknown key '" + key + "' in " + context);
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& target) {
    if (obj.contains(key)) {
        try {
            target = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
}

}  // namespace detail

struct RunConfig {
    BackboneConfig backbone;
    FadConfig fad;
    std::string variant = "fad";  // fad | linear1x1 | bandwise | none
    std::vector<bool> insertion;  // defaults to all-true over num_blocks
    SamplerConfig sampler;
    StopRule stop;
    double opt_rho = 0.9;
    double opt_eps = 1e-6;
    double opt_lr = 1.0;
    std::size_t episodes = 20;
    std::uint64_t seed = 7;
    std::string out_dir = "out";
    std::string checkpoint;  // base path (no extension); required by adapt/ablate
    std::size_t pretrain_epochs = 60;
    double pretrain_lr = 0.5;
    std::size_t source_per_class = 24;
    std::size_t target_per_class = 25;
    DomainSpec source = default_source_spec();
    DomainSpec target = default_target_spec();
    // optional IDX pair overriding the synthetic target pool
    std::string data_images;
    std::string data_labels;

    void validate() const {
        backbone.validate();
        fad.validate();
        stop.validate();
        sampler.validate();
        source.validate();
        target.validate();
        if (variant != "fad" && variant != "linear1x1" && variant != "bandwise" &&
            variant != "none")
            throw ConfigError("config: unknown variant '" + variant + "'");
        if (!insertion.empty() && insertion.size() != backbone.num_blocks)
            throw ConfigError("config: insertion mask length " +
                              std::to_string(insertion.size()) + " != num_blocks " +
                              std::to_string(backbone.num_blocks));
        if (episodes < 1) throw ConfigError("config: episodes must be >= 1");
    }

    InsertionMask insertion_mask() const {
        InsertionMask m;
        m.enabled = insertion.empty() ? std::vector<bool>(backbone.num_blocks, true) : insertion;
        return m;
    }

    EpisodeRunConfig episode_run(AdapterVariant v) const {
        EpisodeRunConfig run;
        run.variant = v;
        run.fad = fad;
        run.insertion = insertion_mask();
        run.stop = stop;
        run.rho = opt_rho;
        run.eps = opt_eps;
        run.lr = opt_lr;
        return run;
    }
};

// ---- JSON (de)serialization of configs: unknown keys are rejected and all
// defaults are materialized on write ----

inline json domain_to_json(const DomainSpec& d) {
    json classes = json::array();
    for (std::size_t i = 0; i < d.class_ids.size(); ++i) {
        json annuli = json::array();
        for (const auto& a : d.signatures[i].annuli)
            annuli.push_back({{"r_lo", a.r_lo}, {"r_hi", a.r_hi}, {"magnitude", a.magnitude}});
        classes.push_back({{"id", d.class_ids[i]}, {"annuli", annuli}});
    }
    return json{{"height", d.height},
                {"width", d.width},
                {"envelope_exponent", d.envelope_exponent},
                {"phase_jitter", d.phase_jitter},
                {"noise_level", d.noise_level},
                {"clutter",
                 {{"r_lo", d.clutter.r_lo},
                  {"r_hi", d.clutter.r_hi},
                  {"magnitude", d.clutter.magnitude}}},
                {"classes", classes}};
}

inline DomainSpec domain_from_json(const json& j, const std::string& context) {
    detail::check_keys(j,
                       {"height", "width", "envelope_exponent", "phase_jitter", "noise_level",
                        "clutter", "classes"},
                       context);
    DomainSpec d;
    d.class_ids.clear();
    d.signatures.clear();
    detail::read_field(j, "height", d.height);
    detail::read_field(j, "width", d.width);
    detail::read_field(j, "envelope_exponent", d.envelope_exponent);
    detail::read_field(j, "phase_jitter", d.phase_jitter);
    detail::read_field(j, "noise_level", d.noise_level);
    if (j.contains("clutter")) {
        detail::check_keys(j.at("clutter"), {"r_lo", "r_hi", "magnitude"}, context + ".clutter");
        detail::read_field(j.at("clutter"), "r_lo", d.clutter.r_lo);
        detail::read_field(j.at("clutter"), "r_hi", d.clutter.r_hi);
        detail::read_field(j.at("clutter"), "magnitude", d.clutter.magnitude);
    }
    if (!j.contains("classes")) throw ConfigError("config: " + context + " needs classes");
    for (const auto& jc : j.at("classes")) {
        detail::check_keys(jc, {"id", "annuli"}, context + ".classes[]");
        ClassSignature sig;
        for (const auto& ja : jc.at("annuli")) {
            detail::check_keys(ja, {"r_lo", "r_hi", "magnitude"}, context + ".annuli[]");
            Annulus a;
            detail::read_field(ja, "r_lo", a.r_lo);
            detail::read_field(ja, "r_hi", a.r_hi);
            detail::read_field(ja, "magnitude", a.magnitude);
            sig.annuli.push_back(a);
        }
        d.class_ids.push_back(jc.at("id").get<int>());
        d.signatures.push_back(std::move(sig));
    }
    return d;
}

inline json run_config_to_json(const RunConfig& c) {
    json j;
    j["backbone"] = {{"num_blocks", c.backbone.num_blocks},
                     {"channels", c.backbone.channels},
                     {"input_channels", c.backbone.input_channels},
                     {"input_size", c.backbone.input_size}};
    j["fad"] = fad_config_to_json(c.fad);
    j["variant"] = c.variant;
    j["insertion"] = c.insertion_mask().enabled;
    j["sampler"] = {{"mode", sampler_mode_name(c.sampler.mode)},
                    {"way_min", c.sampler.way_min},
                    {"way_max", c.sampler.way_max},
                    {"max_support", c.sampler.max_support},
                    {"query_per_class", c.sampler.query_per_class}};
    j["stop"] = {{"support_acc_threshold", c.stop.support_acc_threshold},
                 {"patience_after_threshold", c.stop.patience_after_threshold},
                 {"max_steps", c.stop.max_steps}};
    j["optimizer"] = {{"rho", c.opt_rho}, {"eps", c.opt_eps}, {"lr", c.opt_lr}};
    j["episodes"] = c.episodes;
    j["seed"] = c.seed;
    j["out"] = c.out_dir;
    j["checkpoint"] = c.checkpoint;
    j["pretrain"] = {{"epochs", c.pretrain_epochs},
                     {"lr", c.pretrain_lr},
                     {"source_per_class", c.source_per_class}};
    j["target_per_class"] = c.target_per_class;
    j["source_domain"] = domain_to_json(c.source);
    j["target_domain"] = domain_to_json(c.target);
    j["data"] = {{"images", c.data_images}, {"labels", c.data_labels}};
    return j;
}

inline RunConfig run_config_from_json(const json& j) {
    detail::check_keys(j,
                       {"backbone", "fad", "variant", "insertion", "sampler", "stop", "optimizer",
                        "episodes", "seed", "out", "checkpoint", "pretrain", "target_per_class",
                        "source_domain", "target_domain", "data"},
                       "top level");
    RunConfig c;
    if (j.contains("backbone")) {
        const json& jb = j.at("backbone");
        detail::check_keys(jb, {"num_blocks", "channels", "input_channels", "input_size"},
                           "backbone");
        detail::read_field(jb, "num_blocks", c.backbone.num_blocks);
        detail::read_field(jb, "channels", c.backbone.channels);
        detail::read_field(jb, "input_channels", c.backbone.input_channels);
        detail::read_field(jb, "input_size", c.backbone.input_size);
    }
    if (j.contains("fad")) {
        const json& jf = j.at("fad");
        detail::check_keys(jf, {"r1", "r2", "k_low", "k_mid", "k_high", "use_bias"}, "fad");
        detail::read_field(jf, "r1", c.fad.thresholds.r1);
        detail::read_field(jf, "r2", c.fad.thresholds.r2);
        detail::read_field(jf, "k_low", c.fad.k_low);
        detail::read_field(jf, "k_mid", c.fad.k_mid);
        detail::read_field(jf, "k_high", c.fad.k_high);
        detail::read_field(jf, "use_bias", c.fad.use_bias);
    }
    detail::read_field(j, "variant", c.variant);
    detail::read_field(j, "insertion", c.insertion);
    if (j.contains("sampler")) {
        const json& js = j.at("sampler");
        detail::check_keys(js, {"mode", "way_min", "way_max", "max_support", "query_per_class"},
                           "sampler");
        if (js.contains("mode"))
            c.sampler.mode = sampler_mode_from_name(js.at("mode").get<std::string>());
        detail::read_field(js, "way_min", c.sampler.way_min);
        detail::read_field(js, "way_max", c.sampler.way_max);
        detail::read_field(js, "max_support", c.sampler.max_support);
        detail::read_field(js, "query_per_class", c.sampler.query_per_class);
    }
    if (j.contains("stop")) {
        const json& js = j.at("stop");
        detail::check_keys(js, {"support_acc_threshold", "patience_after_threshold", "max_steps"},
                           "stop");
        detail::read_field(js, "support_acc_threshold", c.stop.support_acc_threshold);
        detail::read_field(js, "patience_after_threshold", c.stop.patience_after_threshold);
        detail::read_field(js, "max_steps", c.stop.max_steps);
    }
    if (j.contains("optimizer")) {
        const json& jo = j.at("optimizer");
        detail::check_keys(jo, {"rho", "eps", "lr"}, "optimizer");
        detail::read_field(jo, "rho", c.opt_rho);
        detail::read_field(jo, "eps", c.opt_eps);
        detail::read_field(jo, "lr", c.opt_lr);
    }
    detail::read_field(j, "episodes", c.episodes);
    detail::read_field(j, "seed", c.seed);
    detail::read_field(j, "out", c.out_dir);
    detail::read_field(j, "checkpoint", c.checkpoint);
    if (j.contains("pretrain")) {
        const json& jp = j.at("pretrain");
        detail::check_keys(jp, {"epochs", "lr", "source_per_class"}, "pretrain");
        detail::read_field(jp, "epochs", c.pretrain_epochs);
        detail::read_field(jp, "lr", c.pretrain_lr);
        detail::read_field(jp, "source_per_class", c.source_per_class);
    }
    detail::read_field(j, "target_per_class", c.target_per_class);
    if (j.contains("source_domain")) c.source = domain_from_json(j.at("source_domain"), "source_domain");
    if (j.contains("target_domain")) c.target = domain_from_json(j.at("target_domain"), "target_domain");
    if (j.contains("data")) {
        const json& jd = j.at("data");
        detail::check_keys(jd, {"images", "labels"}, "data");
        detail::read_field(jd, "images", c.data_images);
        detail::read_field(jd, "labels", c.data_labels);
    }
    try {
        c.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return c;
}

// ---- episode execution ----

struct EpisodeRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string variant;
    double query_accuracy = 0.0;
    std::size_t steps = 0;
    std::vector<double> support_acc_trace;
};

struct ExperimentResult {
    ExperimentRow row;
    std::vector<EpisodeRecord> records;
};

inline std::size_t worker_count(std::size_t episodes) {
    std::size_t n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("FAD_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    }
    return std::max<std::size_t>(1, std::min(n, episodes));
}

// Runs `episodes` episodes of one experiment cell. Episode content and
// adaptation depend only on (seed, index), so results are identical for any
// worker count. `variant` empty means frozen evaluation without adaptation.
inline ExperimentResult run_experiment(const std::string& id, const std::string& label,
                                       const Dataset& pool, const BackboneParams& backbone,
                                       const RunConfig& config,
                                       std::optional<AdapterVariant> variant) {
    SamplerConfig scfg = config.sampler;
    scfg.seed = config.seed;

    ExperimentResult result;
    result.row.id = id;
    result.row.label = label;
    result.row.accuracies.assign(config.episodes, 0.0);
    result.records.assign(config.episodes, EpisodeRecord{});

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= config.episodes) return;
            try {
                Episode ep = sample_episode(pool, scfg, i);
                EpisodeRecord rec;
                rec.index = i;
                rec.seed = mix_seed(config.seed, i);
                if (variant.has_value()) {
                    EpisodeRunConfig run = config.episode_run(*variant);
                    FinetuneResult r = finetune_episode(ep, backbone, run, rec.seed);
                    rec.variant = variant_name(*variant);
                    rec.query_accuracy = r.query_accuracy;
                    rec.steps = r.steps_taken;
                    rec.support_acc_trace = std::move(r.support_acc_trace);
                } else {
                    rec.variant = "none";
                    rec.query_accuracy = evaluate_episode(ep, backbone);
                }
                result.row.accuracies[i] = rec.query_accuracy;
                result.records[i] = std::move(rec);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const std::size_t workers = worker_count(config.episodes);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return result;
}

inline json records_to_json(const std::vector<ExperimentResult>& experiments,
                            const RunConfig& config) {
    json out = json::array();
    for (const auto& ex : experiments) {
        json rows = json::array();
        for (const auto& rec : ex.records)
            rows.push_back({{"episode", rec.index},
                            {"seed", rec.seed},
                            {"variant", rec.variant},
                            {"query_accuracy", rec.query_accuracy},
                            {"steps", rec.steps},
                            {"support_acc_trace", rec.support_acc_trace}});
        out.push_back({{"id", ex.row.id},
                       {"label", ex.row.label},
                       {"mean_accuracy", ex.row.mean()},
                       {"ci95_halfwidth", ex.row.ci95_halfwidth()},
                       {"config", run_config_to_json(config)},
                       {"episodes", rows}});
    }
    return out;
}

// ---- commands (library-level; the CLI is a thin wrapper) ----

inline void ensure_out_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

inline void write_resolved_config(const RunConfig& config, const std::string& dir) {
    write_text_file(dir + "/resolved_config.json", run_config_to_json(config).dump(2) + "\n");
}

inline Dataset load_target_pool(const RunConfig& config) {
    if (!config.data_images.empty())
        return load_idx(config.data_images, config.data_labels);
    return synth_domain_generate(config.target, config.target.class_ids.size(),
                                 config.target_per_class, mix_seed(config.seed, 0x7a6ULL));
}

inline std::optional<AdapterVariant> variant_from_config(const std::string& name) {
    if (name == "none") return std::nullopt;
    return variant_from_name(name);
}

// pretrain: generate the source domain, train, write checkpoint + config.
inline PretrainResult cmd_pretrain(const RunConfig& config) {
    ensure_out_dir(config.out_dir);
    Dataset source = synth_domain_generate(config.source, config.source.class_ids.size(),
                                           config.source_per_class, mix_seed(config.seed, 0x501ULL));
    PretrainResult r =
        pretrain(config.backbone, source, config.pretrain_epochs, config.pretrain_lr, config.seed);
    save_backbone(config.out_dir + "/backbone", r.backbone);
    write_resolved_config(config, config.out_dir);
    json summary = {{"train_accuracy", r.train_accuracy},
                    {"epochs", r.epochs_run},
                    {"classes", config.source.class_ids.size()},
                    {"examples", source.size()}};
    write_text_file(config.out_dir + "/pretrain_summary.json", summary.dump(2) + "\n");
    return r;
}

// adapt: run the configured variant over the episode suite.
inline ResultTable cmd_adapt(const RunConfig& config) {
    if (config.checkpoint.empty()) throw ConfigError("adapt: config needs a checkpoint path");
    BackboneParams backbone = load_backbone(config.checkpoint);
    if (backbone.config.num_blocks != config.backbone.num_blocks)
        throw ConfigError("adapt: checkpoint block count does not match config");
    Dataset pool = load_target_pool(config);

    ensure_out_dir(config.out_dir);
    std::vector<ExperimentResult> experiments;
    experiments.push_back(run_experiment("adapt/" + config.variant, config.variant, pool,
                                         backbone, config, variant_from_config(config.variant)));

    ResultTable table;
    table.rows.push_back(experiments[0].row);
    write_text_file(config.out_dir + "/results.csv", to_csv(table));
    write_text_file(config.out_dir + "/results.json",
                    records_to_json(experiments, config).dump(2) + "\n");
    write_resolved_config(config, config.out_dir);
    return table;
}

// ablate: run one ablation axis with shared episode seeds across cells.
inline ResultTable cmd_ablate(const RunConfig& config, const std::string& axis) {
    if (config.checkpoint.empty()) throw ConfigError("ablate: config needs a checkpoint path");
    BackboneParams backbone = load_backbone(config.checkpoint);
    Dataset pool = load_target_pool(config);
    ensure_out_dir(config.out_dir);

    struct Cell {
        std::string label;
        RunConfig config;
        std::optional<AdapterVariant> variant;
    };
    std::vector<Cell> cells;

    if (axis == "components") {
        for (const char* v : {"none", "linear1x1", "bandwise", "fad"}) {
            RunConfig c = config;
            c.variant = v;
            cells.push_back({v, c, variant_from_config(v)});
        }
    } else if (axis == "kernels") {
        // rows in {k_high, k_mid, k_low} order
        const std::array<std::array<std::size_t, 3>, 4> rows = {
            {{1, 1, 1}, {3, 3, 3}, {3, 3, 5}, {5, 3, 3}}};
        for (const auto& r : rows) {
            RunConfig c = config;
            c.variant = "fad";
            c.fad.k_high = r[0];
            c.fad.k_mid = r[1];
            c.fad.k_low = r[2];
            const std::string label = "{" + std::to_string(r[0]) + "," + std::to_string(r[1]) +
                                      "," + std::to_string(r[2]) + "}";
            cells.push_back({label, c, AdapterVariant::Fad});
        }
    } else if (axis == "thresholds") {
        for (double r1 : {0.1, 0.2, 0.3, 0.4}) {
            RunConfig c = config;
            c.variant = "fad";
            c.fad.thresholds = {r1, 0.5};
            char label[32];
            std::snprintf(label, sizeof(label), "r1=%.1f,r2=0.5", r1);
            cells.push_back({label, c, AdapterVariant::Fad});
        }
        for (double r2 : {0.4, 0.5, 0.6, 0.7}) {
            RunConfig c = config;
            c.variant = "fad";
            c.fad.thresholds = {0.3, r2};
            char label[32];
            std::snprintf(label, sizeof(label), "r1=0.3,r2=%.1f", r2);
            cells.push_back({label, c, AdapterVariant::Fad});
        }
    } else if (axis == "blocks") {
        for (std::size_t b = 0; b < config.backbone.num_blocks; ++b) {
            RunConfig c = config;
            c.variant = "fad";
            c.insertion.assign(config.backbone.num_blocks, false);
            c.insertion[b] = true;
            cells.push_back({"block" + std::to_string(b), c, AdapterVariant::Fad});
        }
        RunConfig c = config;
        c.variant = "fad";
        c.insertion.assign(config.backbone.num_blocks, true);
        cells.push_back({"all", c, AdapterVariant::Fad});
    } else {
        throw ConfigError("ablate: unknown axis '" + axis + "'");
    }

    ResultTable table;
    std::vector<ExperimentResult> experiments;
    for (const auto& cell : cells) {
        ExperimentResult r = run_experiment(axis + "/" + cell.label, cell.label, pool, backbone,
                                            cell.config, cell.variant);
        table.rows.push_back(r.row);
        experiments.push_back(std::move(r));
    }

    write_text_file(config.out_dir + "/results.csv", to_csv(table));
    write_text_file(config.out_dir + "/results.json",
                    records_to_json(experiments, config).dump(2) + "\n");
    write_resolved_config(config, config.out_dir);
    return table;
}

// gen-data: export the synthetic shift pair as IDX files.
inline void cmd_gen_data(const RunConfig& config) {
    ensure_out_dir(config.out_dir);
    ShiftPair pair = make_shift_pair(config.source, config.target, config.seed,
                                     config.source_per_class, config.target_per_class);
    save_idx(pair.source, config.out_dir + "/source-images-idx3-ubyte",
             config.out_dir + "/source-labels-idx1-ubyte");
    save_idx(pair.target, config.out_dir + "/target-images-idx3-ubyte",
             config.out_dir + "/target-labels-idx1-ubyte");
    write_resolved_config(config, config.out_dir);
}

// analyze-kernel: transfer-function magnitude of a seeded kernel as PGM/CSV.
inline json cmd_analyze_kernel(std::size_t k, std::size_t grid, std::uint64_t seed,
                               const std::string& out_dir) {
    ensure_out_dir(out_dir);
    Tensor kernel({k, k});
    Rng rng(seed);
    for (double& v : kernel.values) v = rng.uniform(-1.0, 1.0);
    CTensor tf = kernel_transfer_function(kernel, grid, grid);
    const std::vector<double> mag = magnitude_plane(tf);
    write_pgm(out_dir + "/transfer_magnitude.pgm", mag, grid, grid);
    write_csv_matrix(out_dir + "/transfer_magnitude.csv", mag, grid, grid);
    double lo = mag[0], hi = mag[0];
    for (double v : mag) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    json summary = {{"k", k}, {"grid", grid}, {"seed", seed},
                    {"magnitude_min", lo}, {"magnitude_max", hi}, {"magnitude_spread", hi - lo}};
    write_text_file(out_dir + "/transfer_summary.json", summary.dump(2) + "\n");
    return summary;
}

// verify: run the property suite, emit one line per property.
inline int cmd_verify(std::ostream& os, VerifyOptions opts = {}) {
    const auto results = verify_properties(opts);
    bool all_pass = true;
    for (const auto& r : results) {
        char line[256];
        std::snprintf(line, sizeof(line), "[%s] %-38s measured=%.3e tolerance=%.3e %s",
                      r.pass ? "PASS" : "FAIL", r.id.c_str(), r.measured, r.tolerance,
                      r.detail.c_str());
        os << line << "\n";
        all_pass = all_pass && r.pass;
    }
    os << (all_pass ? "verify: all properties passed" : "verify: FAILURES present") << "\n";
    return all_pass ? 0 : 1;
}

}  // namespace fad
