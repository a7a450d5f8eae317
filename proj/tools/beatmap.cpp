#include <iostream>

#include "CLI11.hpp"
#include "beatmap/pipeline.hpp"

namespace {

beatmap::RunConfig config_from(const std::string& path) {
    auto config = path.empty() ? beatmap::parse_config("{}") : beatmap::load_config(path);
    beatmap::apply_environment(config);
    return config;
}

void log_line(const std::string& line) { std::cerr << line << std::endl; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG beat embedding, evaluation and clustering"};
    app.require_subcommand(1);

    std::string config_path;
    std::string cache_dir;
    std::string base_url;
    auto* fetch = app.add_subcommand("fetch", "Download the MIT-BIH records into the cache");
    fetch->add_option("-c,--config", config_path, "JSON run configuration");
    fetch->add_option("--cache-dir", cache_dir, "Cache directory (overrides config and BEATMAP_CACHE_DIR)");
    fetch->add_option("--base-url", base_url, "Base URL of the record files");

    std::string output_dir;
    auto* run = app.add_subcommand("run", "Run the full pipeline described by a config file");
    run->add_option("-c,--config", config_path, "JSON run configuration")->required();
    run->add_option("-o,--output-dir", output_dir, "Override output_dir");
    run->add_option("--cache-dir", cache_dir, "Override the cache directory");

    std::string run_dir;
    auto* report = app.add_subcommand("report", "Summarize the evaluation tables of a run");
    report->add_option("run_dir", run_dir, "Run directory")->required();

    std::string embedding;
    std::string lead_name = "MLII";
    std::string out_dir;
    beatmap::clusters::ClusterOptions cluster_opts;
    auto* clusters = app.add_subcommand("clusters", "Cluster a stored embedding of a run");
    clusters->add_option("run_dir", run_dir, "Run directory")->required();
    clusters->add_option("embedding", embedding, "Embedding CSV, relative to the run directory")->required();
    clusters->add_option("--lead", lead_name, "Lead of the embedding")->check(CLI::IsMember({"MLII", "V1"}));
    clusters->add_option("--resolution", cluster_opts.resolution, "Raster resolution")->check(CLI::Range(16, 8192));
    clusters->add_option("--dilation", cluster_opts.dilation_radius, "Dilation radius in cells")
        ->check(CLI::NonNegativeNumber);
    clusters->add_option("--connectivity", cluster_opts.connectivity, "4 or 8")->check(CLI::IsMember({4, 8}));
    clusters->add_option("--seed", cluster_opts.seed, "Seed for representative sampling");
    clusters->add_option("-o,--out", out_dir, "Output directory (default: next to the embedding)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fetch->parsed()) {
            auto config = config_from(config_path);
            if (!cache_dir.empty()) {
                config.cache_dir = cache_dir;
            }
            if (!base_url.empty()) {
                config.base_url = base_url;
            }
            const auto summary = beatmap::cmd_fetch(config, log_line);
            std::cout << "downloaded " << summary.downloaded.size() << ", cached " << summary.cached.size()
                      << ", failed " << summary.failures.size() << ", subset " << summary.subset.size()
                      << " records\n";
            return summary.failures.empty() ? 0 : 2;
        }
        if (run->parsed()) {
            auto config = config_from(config_path);
            if (!output_dir.empty()) {
                config.output_dir = output_dir;
            }
            if (!cache_dir.empty()) {
                config.cache_dir = cache_dir;
            }
            std::cout << beatmap::cmd_run(config, log_line).string() << '\n';
            return 0;
        }
        if (report->parsed()) {
            std::cout << beatmap::cmd_report(run_dir);
            return 0;
        }
        if (clusters->parsed()) {
            const auto lead = *beatmap::beats::parse_lead(lead_name);
            std::filesystem::path emb(embedding);
            const auto out = out_dir.empty() ? (std::filesystem::path(run_dir) / emb).parent_path()
                                             : std::filesystem::path(out_dir);
            for (const auto& p : beatmap::cmd_clusters(run_dir, emb, lead, cluster_opts, out)) {
                std::cout << p.string() << '\n';
            }
            return 0;
        }
    } catch (const beatmap::StageError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const beatmap::ConfigError& e) {
        std::cerr << "[config] " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "[" << app.get_subcommands().front()->get_name() << "] " << e.what() << '\n';
        return 1;
    }
    return 0;
}
