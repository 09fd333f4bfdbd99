#include "tiarec/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tiarec/corpus.hpp"
#include "tiarec/errors.hpp"
#include "tiarec/eval.hpp"
#include "tiarec/gradcheck.hpp"
#include "tiarec/pretrain.hpp"
#include "tiarec/trainer.hpp"

namespace tiarec {

namespace fs = std::filesystem;

namespace {

struct DataOpts {
    std::string path;
    std::string format = "csv";
    int user_col = 0;
    int item_col = 1;
    int rating_col = 2;
    int timestamp_col = 3;
    std::string categories;
};

struct OutOpts {
    std::string out_dir = "runs";
    std::string run_name;  // empty -> <subcommand>-<timestamp>
};

void add_data_options(CLI::App* cmd, DataOpts& opts) {
    cmd->add_option("--data", opts.path, "interaction log path")->required();
    cmd->add_option("--format", opts.format, "log format: csv or tsv")
        ->check(CLI::IsMember({"csv", "tsv"}));
    cmd->add_option("--user-col", opts.user_col, "user id column index");
    cmd->add_option("--item-col", opts.item_col, "item id column index");
    cmd->add_option("--rating-col", opts.rating_col, "rating column index (-1 if absent)");
    cmd->add_option("--timestamp-col", opts.timestamp_col, "timestamp column index");
    cmd->add_option("--categories", opts.categories, "item category file (item<delim>category)");
}

void add_out_options(CLI::App* cmd, OutOpts& opts) {
    cmd->add_option("--out", opts.out_dir, "output root directory");
    cmd->add_option("--run-name", opts.run_name,
                    "run directory name (default: <subcommand>-<timestamp>)");
}

void configure(CLI::App* cmd) {
    cmd->set_config("--config", "", "flat key=value config file; command-line flags win");
    cmd->allow_config_extras(CLI::config_extras_mode::ignore_all);
}

DatasetSplit load_split(const DataOpts& opts) {
    IngestOptions ing;
    ing.delimiter = opts.format == "tsv" ? '\t' : ',';
    ing.user_col = opts.user_col;
    ing.item_col = opts.item_col;
    ing.rating_col = opts.rating_col;
    ing.timestamp_col = opts.timestamp_col;
    if (!opts.categories.empty()) ing.category_path = opts.categories;
    return ingest(opts.path, ing);
}

fs::path make_run_dir(const OutOpts& opts, const std::string& subcommand) {
    std::string name = opts.run_name;
    if (name.empty()) {
        const auto now = std::chrono::system_clock::now();
        const std::time_t tt = std::chrono::system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&tt, &tm);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
        name = subcommand + "-" + buf;
        fs::path candidate = fs::path(opts.out_dir) / name;
        int suffix = 1;
        while (fs::exists(candidate)) {
            candidate = fs::path(opts.out_dir) / (name + "-" + std::to_string(++suffix));
        }
        name = candidate.filename().string();
    }
    const fs::path dir = fs::path(opts.out_dir) / name;
    fs::create_directories(dir);

    // `latest` manifest: one pointer per subcommand to its newest run.
    const fs::path latest = fs::path(opts.out_dir) / "latest.json";
    nlohmann::ordered_json j;
    if (fs::exists(latest)) {
        std::ifstream in(latest);
        try {
            in >> j;
        } catch (const nlohmann::json::exception&) {
            j = nlohmann::ordered_json{};
        }
    }
    j[subcommand] = name;
    std::ofstream out(latest);
    out << j.dump(2) << '\n';
    return dir;
}

std::vector<int> parse_int_list(const std::string& csv, const std::string& flag) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ConfigError(flag + ": bad integer '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError(flag + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError(flag + ": bad number '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError(flag + ": empty list");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

struct TrainFlags {
    TrainConfig cfg;
    std::string embeddings_stem;
    std::string pmf_dir;
    std::string resume_stem;
    int checkpoint_every = 0;
};

void add_train_options(CLI::App* cmd, TrainFlags& t) {
    cmd->add_option("--embeddings", t.embeddings_stem, "item embedding table stem")->required();
    cmd->add_option("--pmf", t.pmf_dir, "PMF factor directory")->required();
    cmd->add_option("--lr", t.cfg.lr, "learning rate");
    cmd->add_option("--gamma", t.cfg.gamma, "discount rate");
    cmd->add_option("--tau", t.cfg.tau, "target fusion coefficient");
    cmd->add_option("--alpha", t.cfg.alpha, "classifier reward weight");
    cmd->add_option("--buffer", t.cfg.buffer_capacity, "replay buffer capacity");
    cmd->add_option("--batch", t.cfg.batch_size, "minibatch size");
    cmd->add_option("--reward-k", t.cfg.reward_k, "recommended list size for the reward");
    cmd->add_option("--horizon", t.cfg.horizon_max, "episode length cap");
    cmd->add_option("--sigma", t.cfg.sigma_start, "initial exploration noise");
    cmd->add_option("--epochs", t.cfg.epochs, "training epochs");
    cmd->add_option("--seed", t.cfg.seed, "root seed");
    cmd->add_flag("--no-classifier", "ablated variant: disable the classifier agent");
    cmd->add_flag("--no-reward-clamp", "keep the raw classifier reward range");
    cmd->add_flag("--warm-start", "seed episodes with the first logged train items");
    cmd->add_option("--warm-start-items", t.cfg.warm_start_items, "items used by --warm-start");
    cmd->add_flag("--adam", "adaptive-moment optimizer instead of plain gradient descent");
    cmd->add_option("--resume", t.resume_stem, "checkpoint stem to resume from (fresh buffer)");
    cmd->add_option("--checkpoint-every", t.checkpoint_every,
                    "save checkpoint-epoch<N> every N epochs (0 = final only)");
}

void finish_train_flags(CLI::App* cmd, TrainFlags& t) {
    t.cfg.classifier_enabled = cmd->count("--no-classifier") == 0;
    t.cfg.clamp_classifier_reward = cmd->count("--no-reward-clamp") == 0;
    t.cfg.warm_start = cmd->count("--warm-start") > 0;
    t.cfg.use_adam = cmd->count("--adam") > 0;
}

struct LoadedArtifacts {
    VectorTable emb;
    PmfFactors factors;
};

LoadedArtifacts load_artifacts(const DatasetSplit& split, const std::string& emb_stem,
                               const std::string& pmf_dir) {
    LoadedArtifacts a;
    a.emb = load_table(emb_stem).aligned_to(split.items.ids());
    PmfFactors raw = load_pmf(pmf_dir);
    a.factors.dim = raw.dim;
    a.factors.user_factors = raw.user_factors.aligned_to(split.users.ids());
    a.factors.item_factors = raw.item_factors.aligned_to(split.items.ids());
    return a;
}

int cmd_ingest(const DataOpts& data, const OutOpts& out_opts) {
    const DatasetSplit split = load_split(data);
    const fs::path dir = make_run_dir(out_opts, "ingest");
    std::optional<fs::path> cat_path;
    if (split.has_categories()) cat_path = dir / "categories.csv";
    write_split(split, dir / "canonical.csv", cat_path);
    const std::string stats = stats_to_json(dataset_stats(split));
    write_text(dir / "stats.json", stats);
    std::cout << stats << '\n';
    return 0;
}

int cmd_stats(const DataOpts& data, const OutOpts& out_opts, double rare_threshold) {
    const DatasetSplit split = load_split(data);
    const fs::path dir = make_run_dir(out_opts, "stats");
    const std::string stats = stats_to_json(dataset_stats(split, rare_threshold));
    write_text(dir / "stats.json", stats);
    std::cout << stats << '\n';
    return 0;
}

int cmd_pretrain_embeddings(const DataOpts& data, const OutOpts& out_opts,
                            const SkipGramConfig& cfg) {
    const DatasetSplit split = load_split(data);
    const VectorTable table = pretrain_item_embeddings(split, cfg);
    const fs::path dir = make_run_dir(out_opts, "pretrain-embeddings");
    save_table(dir / "embeddings", table);
    std::cout << "wrote " << (dir / "embeddings").string() << ".{json,bin} (dim=" << table.dim()
              << ", items=" << table.count() << ")\n";
    return 0;
}

int cmd_pretrain_pmf(const DataOpts& data, const OutOpts& out_opts, const PmfConfig& cfg) {
    const DatasetSplit split = load_split(data);
    const PmfFactors factors = fit_pmf(split, cfg);
    const fs::path dir = make_run_dir(out_opts, "pretrain-pmf");
    save_pmf(dir, factors);
    std::cout << "wrote PMF factors under " << dir.string() << " (dim=" << factors.dim
              << ", users=" << factors.user_factors.count()
              << ", items=" << factors.item_factors.count() << ")\n";
    return 0;
}

int cmd_train(const DataOpts& data, const OutOpts& out_opts, const TrainFlags& flags) {
    const DatasetSplit split = load_split(data);
    const LoadedArtifacts art = load_artifacts(split, flags.embeddings_stem, flags.pmf_dir);

    std::optional<Checkpoint> resume;
    if (!flags.resume_stem.empty()) resume = load_checkpoint(flags.resume_stem);

    const fs::path dir = make_run_dir(out_opts, "train");
    EpochObserver observer = [&](int epoch, const Networks& nets, const Networks& targets,
                                 const TrainLog& log) {
        const EpochRecord& r = log.epochs.back();
        std::cerr << "epoch " << epoch << ": average_q=" << r.average_q
                  << " r_rec=" << r.mean_reward_rec << " r_cls=" << r.mean_reward_cls
                  << " Lq=" << r.critic_loss << " Lrc=" << r.agent_loss << '\n';
        if (flags.checkpoint_every > 0 && (epoch + 1) % flags.checkpoint_every == 0) {
            save_checkpoint(dir / ("checkpoint-epoch" + std::to_string(epoch)), nets, targets);
        }
    };

    const TrainResult result = train(split, art.emb, art.factors, flags.cfg, resume, {}, observer);
    write_train_log_csv(dir / "trainlog.csv", result.log);
    write_timing_csv(dir / "timing.csv", result.log);
    save_checkpoint(dir / "checkpoint", result.nets, result.targets);
    std::cout << "wrote " << (dir / "trainlog.csv").string() << " and "
              << (dir / "checkpoint").string() << ".{json,bin}\n";
    return 0;
}

int cmd_evaluate(const DataOpts& data, const OutOpts& out_opts, const std::string& emb_stem,
                 const std::string& checkpoint_stem, const std::string& ks_csv, bool exclude_seen,
                 bool no_classifier) {
    const DatasetSplit split = load_split(data);
    const VectorTable emb = load_table(emb_stem).aligned_to(split.items.ids());
    const Checkpoint ckpt = load_checkpoint(checkpoint_stem);

    EvalOptions opts;
    opts.ks = parse_int_list(ks_csv, "--ks");
    opts.exclude_seen = exclude_seen;
    opts.classifier_enabled = !no_classifier;
    const MetricReport report = evaluate_model(ckpt.nets, split, emb, opts);

    const fs::path dir = make_run_dir(out_opts, "evaluate");
    write_metrics_csv(dir / "metrics.csv", {{"tiarec", report}});
    write_text(dir / "metrics.json", metrics_to_json(report));
    std::cout << metrics_to_json(report) << '\n';
    return 0;
}

int cmd_ablate(const DataOpts& data, const OutOpts& out_opts, const TrainFlags& flags,
               const std::string& ks_csv, bool exclude_seen) {
    const DatasetSplit split = load_split(data);
    const LoadedArtifacts art = load_artifacts(split, flags.embeddings_stem, flags.pmf_dir);

    EvalOptions opts;
    opts.ks = parse_int_list(ks_csv, "--ks");
    opts.exclude_seen = exclude_seen;
    const AblationResult result = run_ablation(split, art.emb, art.factors, flags.cfg, opts);

    const fs::path dir = make_run_dir(out_opts, "ablate");
    write_metrics_csv(dir / "ablation.csv",
                      {{"tiarec", result.tiarec}, {"tiarec-c", result.tiarec_c}});
    write_text(dir / "tiarec.json", metrics_to_json(result.tiarec));
    write_text(dir / "tiarec-c.json", metrics_to_json(result.tiarec_c));
    std::cout << "wrote " << (dir / "ablation.csv").string() << '\n';
    return 0;
}

int cmd_robustness(const DataOpts& data, const OutOpts& out_opts, const std::string& emb_stem,
                   const std::string& checkpoint_stem, const std::string& levels_csv,
                   const std::string& ks_csv, std::uint64_t noise_seed, double rare_threshold,
                   bool no_classifier) {
    const DatasetSplit split = load_split(data);
    const VectorTable emb = load_table(emb_stem).aligned_to(split.items.ids());
    const Checkpoint ckpt = load_checkpoint(checkpoint_stem);
    const auto levels = parse_double_list(levels_csv, "--levels");

    EvalOptions opts;
    opts.ks = parse_int_list(ks_csv, "--ks");
    opts.classifier_enabled = !no_classifier;

    const fs::path dir = make_run_dir(out_opts, "robustness");
    std::ofstream curve(dir / "robustness.csv");
    if (!curve) throw DataError("cannot open for writing: " + (dir / "robustness.csv").string());
    curve << "noise_level,k,hr,recall,ndcg\n";
    char buf[48];
    for (double level : levels) {
        const DatasetSplit noisy = inject_robustness_noise(split, level, noise_seed, rare_threshold);
        const MetricReport report = evaluate_model(ckpt.nets, noisy, emb, opts);
        std::snprintf(buf, sizeof(buf), "%g", level);
        const std::string tag = buf;
        write_metrics_csv(dir / ("metrics-noise" + tag + ".csv"), {{"tiarec", report}});
        for (int k : opts.ks) {
            curve << tag << ',' << k;
            for (double v : {report.hr.at(k), report.recall.at(k), report.ndcg.at(k)}) {
                std::snprintf(buf, sizeof(buf), "%.12g", v);
                curve << ',' << buf;
            }
            curve << '\n';
        }
    }
    std::cout << "wrote " << (dir / "robustness.csv").string() << '\n';
    return 0;
}

int cmd_gradient_check(const OutOpts& out_opts, std::uint64_t seed, double tolerance) {
    const GradSuiteReport report = run_gradient_suite(seed);
    nlohmann::ordered_json j;
    j["tolerance"] = tolerance;
    j["critic_max_rel_error"] = report.critic.max_rel_error;
    j["critic_worst_tensor"] = report.critic.worst_tensor;
    j["agents_max_rel_error"] = report.agents.max_rel_error;
    j["agents_worst_tensor"] = report.agents.worst_tensor;
    j["coordinates"] = report.critic.coordinates + report.agents.coordinates;
    j["seconds"] = report.seconds;
    j["passed"] = report.passed(tolerance);

    const fs::path dir = make_run_dir(out_opts, "gradient-check");
    write_text(dir / "gradcheck.json", j.dump(2));
    std::cout << j.dump(2) << '\n';
    if (!report.passed(tolerance)) {
        std::cerr << "gradient check failed: critic " << report.critic.max_rel_error << " agents "
                  << report.agents.max_rel_error << " > tolerance " << tolerance << '\n';
        return 4;
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"TIARec: temporary-interest aware recommendation laboratory"};
    app.require_subcommand(1);

    DataOpts data;
    OutOpts out_opts;

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "parse a log, write the canonical split");
    DataOpts ingest_data;
    OutOpts ingest_out;
    add_data_options(ingest_cmd, ingest_data);
    add_out_options(ingest_cmd, ingest_out);
    configure(ingest_cmd);

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "dataset statistics incl. rare-user fraction");
    DataOpts stats_data;
    OutOpts stats_out;
    double rare_threshold = 0.05;
    add_data_options(stats_cmd, stats_data);
    add_out_options(stats_cmd, stats_out);
    stats_cmd->add_option("--rare-threshold", rare_threshold,
                          "category frequency threshold as a fraction of the mean");
    configure(stats_cmd);

    // pretrain-embeddings
    auto* emb_cmd = app.add_subcommand("pretrain-embeddings", "skip-gram item embeddings");
    DataOpts emb_data;
    OutOpts emb_out;
    SkipGramConfig sg;
    add_data_options(emb_cmd, emb_data);
    add_out_options(emb_cmd, emb_out);
    emb_cmd->add_option("--dim", sg.dim, "embedding dimensionality");
    emb_cmd->add_option("--window", sg.window, "context window");
    emb_cmd->add_option("--negatives", sg.negatives, "negative samples per pair");
    emb_cmd->add_option("--epochs", sg.epochs, "sweeps over the training sequences");
    emb_cmd->add_option("--lr", sg.lr, "learning rate");
    emb_cmd->add_option("--seed", sg.seed, "root seed");
    configure(emb_cmd);

    // pretrain-pmf
    auto* pmf_cmd = app.add_subcommand("pretrain-pmf", "PMF factors for the reward simulator");
    DataOpts pmf_data;
    OutOpts pmf_out;
    PmfConfig pmf;
    add_data_options(pmf_cmd, pmf_data);
    add_out_options(pmf_cmd, pmf_out);
    pmf_cmd->add_option("--dim", pmf.dim, "factor dimensionality");
    pmf_cmd->add_option("--negatives", pmf.negatives_per_positive, "negatives per positive");
    pmf_cmd->add_option("--epochs", pmf.epochs, "sweeps over the training events");
    pmf_cmd->add_option("--lr", pmf.lr, "learning rate");
    pmf_cmd->add_option("--reg", pmf.reg, "L2 regularization");
    pmf_cmd->add_option("--seed", pmf.seed, "root seed");
    configure(pmf_cmd);

    // train
    auto* train_cmd = app.add_subcommand("train", "joint actor-critic training");
    DataOpts train_data;
    OutOpts train_out;
    TrainFlags train_flags;
    add_data_options(train_cmd, train_data);
    add_out_options(train_cmd, train_out);
    add_train_options(train_cmd, train_flags);
    configure(train_cmd);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "top-k ranking metrics on the test split");
    DataOpts eval_data;
    OutOpts eval_out;
    std::string eval_emb, eval_ckpt, eval_ks = "5,10,20";
    bool eval_exclude_seen = false;
    bool eval_no_classifier = false;
    add_data_options(eval_cmd, eval_data);
    add_out_options(eval_cmd, eval_out);
    eval_cmd->add_option("--embeddings", eval_emb, "item embedding table stem")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint stem")->required();
    eval_cmd->add_option("--ks", eval_ks, "comma-separated k grid");
    eval_cmd->add_flag("--exclude-seen", eval_exclude_seen, "drop items already in O");
    eval_cmd->add_flag("--no-classifier", eval_no_classifier,
                       "build evaluation states without the classifier");
    configure(eval_cmd);

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare against the ablated variant");
    DataOpts ablate_data;
    OutOpts ablate_out;
    TrainFlags ablate_flags;
    std::string ablate_ks = "5,10,20";
    bool ablate_exclude_seen = false;
    add_data_options(ablate_cmd, ablate_data);
    add_out_options(ablate_cmd, ablate_out);
    add_train_options(ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--ks", ablate_ks, "comma-separated k grid");
    ablate_cmd->add_flag("--exclude-seen", ablate_exclude_seen, "drop items already in O");
    configure(ablate_cmd);

    // robustness
    auto* robust_cmd = app.add_subcommand("robustness", "metrics over noise-injected test splits");
    DataOpts robust_data;
    OutOpts robust_out;
    std::string robust_emb, robust_ckpt;
    std::string robust_levels = "0.1,0.2,0.4,0.8";
    std::string robust_ks = "5,10,20";
    std::uint64_t robust_seed = 0;
    double robust_rare = 0.2;
    bool robust_no_classifier = false;
    add_data_options(robust_cmd, robust_data);
    add_out_options(robust_cmd, robust_out);
    robust_cmd->add_option("--embeddings", robust_emb, "item embedding table stem")->required();
    robust_cmd->add_option("--checkpoint", robust_ckpt, "checkpoint stem")->required();
    robust_cmd->add_option("--levels", robust_levels, "comma-separated noise levels");
    robust_cmd->add_option("--ks", robust_ks, "comma-separated k grid");
    robust_cmd->add_option("--noise-seed", robust_seed, "noise stream seed");
    robust_cmd->add_option("--rare-threshold", robust_rare,
                           "rare category cutoff as a fraction of the mean frequency");
    robust_cmd->add_flag("--no-classifier", robust_no_classifier,
                         "build evaluation states without the classifier");
    configure(robust_cmd);

    // gradient-check
    auto* grad_cmd = app.add_subcommand("gradient-check", "finite-difference gradient suite");
    OutOpts grad_out;
    std::uint64_t grad_seed = 0;
    double grad_tol = 1e-4;
    add_out_options(grad_cmd, grad_out);
    grad_cmd->add_option("--seed", grad_seed, "root seed");
    grad_cmd->add_option("--tolerance", grad_tol, "max relative error accepted");
    configure(grad_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_data, ingest_out);
        if (stats_cmd->parsed()) return cmd_stats(stats_data, stats_out, rare_threshold);
        if (emb_cmd->parsed()) return cmd_pretrain_embeddings(emb_data, emb_out, sg);
        if (pmf_cmd->parsed()) return cmd_pretrain_pmf(pmf_data, pmf_out, pmf);
        if (train_cmd->parsed()) {
            finish_train_flags(train_cmd, train_flags);
            return cmd_train(train_data, train_out, train_flags);
        }
        if (eval_cmd->parsed()) {
            return cmd_evaluate(eval_data, eval_out, eval_emb, eval_ckpt, eval_ks,
                                eval_exclude_seen, eval_no_classifier);
        }
        if (ablate_cmd->parsed()) {
            finish_train_flags(ablate_cmd, ablate_flags);
            return cmd_ablate(ablate_data, ablate_out, ablate_flags, ablate_ks,
                              ablate_exclude_seen);
        }
        if (robust_cmd->parsed()) {
            return cmd_robustness(robust_data, robust_out, robust_emb, robust_ckpt, robust_levels,
                                  robust_ks, robust_seed, robust_rare, robust_no_classifier);
        }
        if (grad_cmd->parsed()) return cmd_gradient_check(grad_out, grad_seed, grad_tol);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace tiarec
