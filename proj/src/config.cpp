#include "beatmap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace beatmap {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
        }
    }
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& where, T fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where.empty() ? key : where + "." + key, e.what());
    }
}

template <typename E, typename Parse>
std::vector<E> get_enum_list(const json& obj, const std::string& key, std::vector<E> fallback, Parse parse) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto names = get<std::vector<std::string>>(obj, key, "", {});
    std::vector<E> out;
    for (const auto& n : names) {
        const auto v = parse(n);
        if (!v) {
            throw ConfigError(key, "unknown value '" + n + "'");
        }
        if (std::find(out.begin(), out.end(), *v) != out.end()) {
            throw ConfigError(key, "duplicate value '" + n + "'");
        }
        out.push_back(*v);
    }
    return out;
}

std::vector<std::size_t> get_k_grid(const json& obj, const std::string& key, std::vector<std::size_t> fallback) {
    auto ks = get<std::vector<std::size_t>>(obj, key, "", std::move(fallback));
    for (std::size_t k : ks) {
        if (k == 0) {
            throw ConfigError(key, "k must be positive");
        }
    }
    return ks;
}

} // namespace

std::string_view to_string(Algorithm a) noexcept {
    switch (a) {
    case Algorithm::pca: return "pca";
    case Algorithm::tsne: return "tsne";
    case Algorithm::umap: break;
    }
    return "umap";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
    for (auto a : {Algorithm::pca, Algorithm::tsne, Algorithm::umap}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    return std::nullopt;
}

RunConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", e.what());
    }
    check_keys(root, "",
               {"cache_dir", "base_url", "records", "leads", "algorithms", "tasks", "scopes", "k_mixed",
                "k_per_patient", "subsample", "pipeline", "tsne", "umap", "clusters", "trustworthiness_k",
                "output_dir", "seed"});
    RunConfig c;
    c.cache_dir = get(root, "cache_dir", "", c.cache_dir);
    c.base_url = get(root, "base_url", "", c.base_url);
    c.records = get(root, "records", "", c.records);
    c.leads = get_enum_list(root, "leads", c.leads, beats::parse_lead);
    c.algorithms = get_enum_list(root, "algorithms", c.algorithms, parse_algorithm);
    c.tasks = get_enum_list(root, "tasks", c.tasks, eval::parse_task);
    c.k_mixed = get_k_grid(root, "k_mixed", c.k_mixed);
    c.k_per_patient = get_k_grid(root, "k_per_patient", c.k_per_patient);
    c.trustworthiness_k = get(root, "trustworthiness_k", "", c.trustworthiness_k);
    c.output_dir = get(root, "output_dir", "", c.output_dir);
    c.seed = get(root, "seed", "", c.seed);
    c.tsne.seed = c.seed;
    c.umap.seed = c.seed;

    if (root.contains("scopes")) {
        const auto& s = root["scopes"];
        check_keys(s, "scopes", {"mixed", "per_patient"});
        c.mixed = get(s, "mixed", "scopes", c.mixed);
        c.per_patient = get(s, "per_patient", "scopes", c.per_patient);
    }
    if (root.contains("subsample")) {
        const auto& s = root["subsample"];
        if (s.is_null()) {
            c.subsample.reset();
        } else {
            check_keys(s, "subsample", {"size", "seed"});
            c.subsample = Subsample{get(s, "size", "subsample", std::size_t{12000}),
                                    get(s, "seed", "subsample", c.seed)};
            if (c.subsample->size < 2) {
                throw ConfigError("subsample.size", "must be at least 2");
            }
        }
    } else {
        c.subsample->seed = c.seed;
    }
    if (root.contains("pipeline")) {
        const auto& p = root["pipeline"];
        check_keys(p, "pipeline", {"median_kernel", "order"});
        c.pipeline.median_kernel = get(p, "median_kernel", "pipeline", c.pipeline.median_kernel);
        if (c.pipeline.median_kernel < 1 || c.pipeline.median_kernel % 2 == 0) {
            throw ConfigError("pipeline.median_kernel", "must be a positive odd integer");
        }
        const auto order = get<std::string>(p, "order", "pipeline", std::string(to_string(c.pipeline.order)));
        const auto parsed = beats::parse_processing_order(order);
        if (!parsed) {
            throw ConfigError("pipeline.order", "unknown value '" + order + "'");
        }
        c.pipeline.order = *parsed;
    }
    if (root.contains("tsne")) {
        const auto& t = root["tsne"];
        check_keys(t, "tsne",
                   {"perplexity", "learning_rate", "n_iter", "early_exaggeration", "exaggeration_iters", "init", "seed"});
        c.tsne.perplexity = get(t, "perplexity", "tsne", c.tsne.perplexity);
        c.tsne.learning_rate = get(t, "learning_rate", "tsne", c.tsne.learning_rate);
        c.tsne.n_iter = get(t, "n_iter", "tsne", c.tsne.n_iter);
        c.tsne.early_exaggeration = get(t, "early_exaggeration", "tsne", c.tsne.early_exaggeration);
        c.tsne.exaggeration_iters = get(t, "exaggeration_iters", "tsne", c.tsne.exaggeration_iters);
        c.tsne.seed = get(t, "seed", "tsne", c.tsne.seed);
        const auto init = get<std::string>(t, "init", "tsne", "pca");
        if (init != "pca" && init != "random") {
            throw ConfigError("tsne.init", "unknown value '" + init + "'");
        }
        c.tsne.init = init == "pca" ? manifold::TsneInit::pca : manifold::TsneInit::random;
    }
    if (!(c.tsne.perplexity > 1.0) || c.tsne.n_iter < c.tsne.exaggeration_iters || c.tsne.learning_rate <= 0.0) {
        throw ConfigError("tsne", "need perplexity > 1, learning_rate > 0 and n_iter >= exaggeration_iters");
    }
    if (root.contains("umap")) {
        const auto& u = root["umap"];
        check_keys(u, "umap",
                   {"n_neighbors", "min_dist", "spread", "n_epochs", "negative_sample_rate", "init", "seed"});
        c.umap.n_neighbors = get(u, "n_neighbors", "umap", c.umap.n_neighbors);
        c.umap.min_dist = get(u, "min_dist", "umap", c.umap.min_dist);
        c.umap.spread = get(u, "spread", "umap", c.umap.spread);
        c.umap.n_epochs = get(u, "n_epochs", "umap", c.umap.n_epochs);
        c.umap.negative_sample_rate = get(u, "negative_sample_rate", "umap", c.umap.negative_sample_rate);
        c.umap.seed = get(u, "seed", "umap", c.umap.seed);
        const auto init = get<std::string>(u, "init", "umap", "pca");
        if (init == "pca") {
            c.umap.init = manifold::UmapInit::pca;
        } else if (init == "random") {
            c.umap.init = manifold::UmapInit::random;
        } else {
            throw ConfigError("umap.init", "unsupported value '" + init + "' (pca or random)");
        }
    }
    if (c.umap.n_neighbors < 2 || !(c.umap.min_dist > 0.0) || !(c.umap.min_dist < c.umap.spread) ||
        c.umap.n_epochs < 1) {
        throw ConfigError("umap", "need n_neighbors >= 2, 0 < min_dist < spread and n_epochs >= 1");
    }
    if (root.contains("clusters")) {
        const auto& k = root["clusters"];
        check_keys(k, "clusters", {"algorithms", "records", "resolution", "dilation", "connectivity"});
        c.clusters.algorithms = get_enum_list(k, "algorithms", c.clusters.algorithms, parse_algorithm);
        c.clusters.records = get(k, "records", "clusters", c.clusters.records);
        c.clusters.resolution = get(k, "resolution", "clusters", c.clusters.resolution);
        c.clusters.dilation = get(k, "dilation", "clusters", c.clusters.dilation);
        c.clusters.connectivity = get(k, "connectivity", "clusters", c.clusters.connectivity);
        if (c.clusters.resolution < 16 || c.clusters.dilation < 0 ||
            (c.clusters.connectivity != 4 && c.clusters.connectivity != 8)) {
            throw ConfigError("clusters", "need resolution >= 16, dilation >= 0, connectivity 4 or 8");
        }
    }

    if (c.algorithms.empty()) {
        throw ConfigError("algorithms", "empty algorithm list");
    }
    if (c.leads.empty()) {
        throw ConfigError("leads", "empty lead list");
    }
    if (c.tasks.empty()) {
        throw ConfigError("tasks", "empty task list");
    }
    if (c.output_dir.empty()) {
        throw ConfigError("output_dir", "must not be empty");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string(), "cannot open");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string config_to_json(const RunConfig& c) {
    auto names = [](const auto& values) {
        std::vector<std::string> out;
        for (const auto& v : values) {
            out.emplace_back(to_string(v));
        }
        return out;
    };
    json j;
    j["cache_dir"] = c.cache_dir;
    j["base_url"] = c.base_url;
    j["records"] = c.records;
    j["leads"] = names(c.leads);
    j["algorithms"] = names(c.algorithms);
    std::vector<std::string> tasks;
    for (auto t : c.tasks) {
        tasks.emplace_back(eval::to_string(t));
    }
    j["tasks"] = tasks;
    j["scopes"] = {{"mixed", c.mixed}, {"per_patient", c.per_patient}};
    j["k_mixed"] = c.k_mixed;
    j["k_per_patient"] = c.k_per_patient;
    j["subsample"] = c.subsample ? json{{"size", c.subsample->size}, {"seed", c.subsample->seed}} : json(nullptr);
    j["pipeline"] = {{"median_kernel", c.pipeline.median_kernel}, {"order", std::string(to_string(c.pipeline.order))}};
    j["tsne"] = {{"perplexity", c.tsne.perplexity},
                 {"learning_rate", c.tsne.learning_rate},
                 {"n_iter", c.tsne.n_iter},
                 {"early_exaggeration", c.tsne.early_exaggeration},
                 {"exaggeration_iters", c.tsne.exaggeration_iters},
                 {"init", std::string(manifold::to_string(c.tsne.init))},
                 {"seed", c.tsne.seed}};
    j["umap"] = {{"n_neighbors", c.umap.n_neighbors},
                 {"min_dist", c.umap.min_dist},
                 {"spread", c.umap.spread},
                 {"n_epochs", c.umap.n_epochs},
                 {"negative_sample_rate", c.umap.negative_sample_rate},
                 {"init", std::string(manifold::to_string(c.umap.init))},
                 {"seed", c.umap.seed}};
    j["clusters"] = {{"algorithms", names(c.clusters.algorithms)},
                     {"records", c.clusters.records},
                     {"resolution", c.clusters.resolution},
                     {"dilation", c.clusters.dilation},
                     {"connectivity", c.clusters.connectivity}};
    j["trustworthiness_k"] = c.trustworthiness_k;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    return j.dump(2) + "\n";
}

} // namespace beatmap
