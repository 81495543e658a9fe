#include "dygrag/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "dygrag/backbone.hpp"
#include "dygrag/fusion.hpp"
#include "dygrag/graph.hpp"
#include "dygrag/metrics.hpp"
#include "dygrag/retriever.hpp"
#include "dygrag/sequence.hpp"

namespace fs = std::filesystem;

namespace dygrag {

// --- configuration ----------------------------------------------------------

Config Config::defaults() {
    Config c;
    c.values_ = {
        {"data.kind", "synth"},
        {"data.path", ""},
        {"data.steps", "8"},
        {"data.seed", "1"},
        {"data.communities", "4"},
        {"data.members", "10"},
        {"data.overlap", "0.9"},
        {"data.target_set_size", "10"},
        {"data.early_partners", "1"},
        {"data.early_targets", "2"},
        {"data.steps_per_era", "0"},
        {"data.drift_per_era", "0"},
        {"data.stale_per_era", "0"},
        {"data.max_seq_len", "120"},
        {"backbone.preset", "desk"},
        {"backbone.epochs", "30"},
        {"backbone.batch_size", "8"},
        {"backbone.learning_rate", "0.003"},
        {"retriever.lambda", "0.5"},
        {"retriever.alpha", "1"},
        {"retriever.tau", "0.1"},
        {"retriever.batch", "16"},
        {"retriever.mask_portion", "0.4"},
        {"retriever.crop_portion", "0.4"},
        {"retriever.epochs", "6"},
        {"retriever.use_decay", "true"},
        {"retriever.use_ccl", "true"},
        {"retriever.learning_rate", "0.001"},
        {"retriever.kind", "trained"},
        {"retriever.threshold", "0.8"},
        {"fusion.strategy", "graph"},
        {"fusion.k", "7"},
        {"fusion.epochs", "6"},
        {"fusion.batch_size", "8"},
        {"fusion.learning_rate", "0.001"},
        {"fusion.mlp_prefix", "15"},
        {"fusion.mlp_hidden", "64"},
        {"fusion.include_demo_outputs", "true"},
        {"fusion.prefix_positional", "true"},
        {"eval.top_k", "5"},
        {"eval.max_new", "24"},
        {"pipeline.seeds", "1,2,3"},
        {"pipeline.outdir", "out"},
    };
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    Config c = defaults();
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || section.empty()) {
            throw std::runtime_error("config: malformed line " + std::to_string(line_no) +
                                     " in " + path);
        }
        c.set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

void Config::set(const std::string& dotted_key, const std::string& value) {
    if (dotted_key.find('.') == std::string::npos) {
        throw std::invalid_argument("config: key '" + dotted_key + "' must be section.key");
    }
    values_[dotted_key] = value;
}

void Config::apply_env_overrides() {
    for (const auto& [key, _] : std::map<std::string, std::string>(values_)) {
        std::string env = "DYGRAG_";
        for (char ch : key) {
            if (ch == '.') {
                env += "__";
            } else {
                env += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            }
        }
        if (const char* v = std::getenv(env.c_str())) values_[key] = v;
    }
}

std::string Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_num(const std::string& key) const { return std::stod(get(key)); }

long long Config::get_int(const std::string& key) const { return std::stoll(get(key)); }

bool Config::get_bool(const std::string& key) const {
    const auto v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: key '" + key + "' is not boolean: " + v);
}

std::vector<std::uint64_t> Config::seeds() const {
    std::string s = get("pipeline.seeds");
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    std::vector<std::uint64_t> out;
    std::uint64_t v = 0;
    while (is >> v) out.push_back(v);
    if (out.empty()) throw std::invalid_argument("config: pipeline.seeds is empty");
    return out;
}

std::string Config::serialize() const {
    std::string section;
    std::string out;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += key.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

void Config::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << serialize();
}

std::uint64_t Config::hash_of(const std::vector<std::string>& keys) const {
    std::vector<std::string> sorted(keys);
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    auto mix = [&](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ull;
        }
    };
    for (const auto& k : sorted) {
        mix(k);
        mix("=");
        mix(get_or(k, ""));
        mix("\n");
    }
    return h;
}

// --- stage framework --------------------------------------------------------

namespace {

std::vector<std::string> keys_with_prefix(const Config& cfg, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& [k, v] : cfg.values()) {
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    return out;
}

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t mix_hashes(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t p : parts) {
        for (int i = 0; i < 8; ++i) {
            h ^= (p >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    }
    return h;
}

bool stage_is_per_seed(const std::string& stage) {
    return stage != "preprocess" && stage != "annotate";
}

std::uint64_t stage_hash(const Config& cfg, const std::string& stage, std::uint64_t seed) {
    if (stage == "preprocess") {
        return cfg.hash_of(keys_with_prefix(cfg, "data."));
    }
    if (stage == "annotate") {
        return mix_hashes({stage_hash(cfg, "preprocess", 0),
                           cfg.hash_of({"retriever.threshold"})});
    }
    if (stage == "pretrain") {
        return mix_hashes({stage_hash(cfg, "preprocess", 0),
                           cfg.hash_of(keys_with_prefix(cfg, "backbone.")), seed});
    }
    if (stage == "train-retriever") {
        auto keys = keys_with_prefix(cfg, "retriever.");
        keys.erase(std::remove(keys.begin(), keys.end(), std::string("retriever.kind")),
                   keys.end());
        return mix_hashes({stage_hash(cfg, "pretrain", seed), stage_hash(cfg, "annotate", 0),
                           cfg.hash_of(keys), seed});
    }
    if (stage == "retrieve") {
        const std::string kind = cfg.get("retriever.kind");
        const std::uint64_t upstream = kind == "trained"
                                           ? stage_hash(cfg, "train-retriever", seed)
                                           : stage_hash(cfg, "preprocess", 0);
        return mix_hashes({upstream, cfg.hash_of({"retriever.kind", "fusion.k"}), seed});
    }
    if (stage == "finetune") {
        return mix_hashes({stage_hash(cfg, "retrieve", seed), stage_hash(cfg, "pretrain", seed),
                           cfg.hash_of(keys_with_prefix(cfg, "fusion.")), seed});
    }
    if (stage == "evaluate") {
        return mix_hashes({stage_hash(cfg, "finetune", seed),
                           cfg.hash_of(keys_with_prefix(cfg, "eval.")), seed});
    }
    throw std::invalid_argument("pipeline: unknown stage '" + stage + "'");
}

std::string manifest_path(const std::string& dir) { return dir + "/manifest.txt"; }

bool artifact_ready(const std::string& dir, std::uint64_t hash) {
    std::ifstream in(manifest_path(dir));
    if (!in) return false;
    std::string line;
    while (std::getline(in, line)) {
        if (line == "config_hash=" + hex16(hash) ) return true;
    }
    return false;
}

void write_manifest(const std::string& dir, const std::string& stage, std::uint64_t hash,
                    std::uint64_t seed, double wall_ms,
                    const std::vector<std::string>& inputs) {
    std::ofstream out(manifest_path(dir), std::ios::trunc);
    out << "stage=" << stage << "\n";
    out << "config_hash=" << hex16(hash) << "\n";
    out << "seed=" << seed << "\n";
    out << "wall_ms=" << static_cast<long long>(wall_ms) << "\n";
    for (const auto& i : inputs) out << "input=" << i << "\n";
}

void require_ready(const Config& cfg, const std::string& stage, std::uint64_t seed) {
    const std::string dir = stage_dir(cfg, stage, seed);
    if (!artifact_ready(dir, stage_hash(cfg, stage, seed))) {
        throw std::runtime_error("pipeline: missing artifacts of stage '" + stage +
                                 "'; run it first");
    }
}

// --- shared loading helpers --------------------------------------------------

struct Dataset {
    Vocab vocab;
    RetrievalPool pool;
    RetrievalPool test_queries;
    RetrievalPool val_queries;
};

std::map<std::string, std::string> read_meta(const std::string& dir) {
    std::ifstream in(dir + "/meta.txt");
    if (!in) throw std::runtime_error("pipeline: missing meta.txt in " + dir);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

Dataset load_dataset(const Config& cfg) {
    const std::string dir = stage_dir(cfg, "preprocess", 0);
    auto meta = read_meta(dir);
    Dataset d;
    d.vocab = Vocab(std::stoul(meta.at("node_count")), std::stoi(meta.at("steps")));
    d.pool = load_samples(d.vocab, dir + "/pool.tsv");
    d.test_queries = load_samples(d.vocab, dir + "/test.tsv");
    d.val_queries = load_samples(d.vocab, dir + "/val.tsv");
    return d;
}

BackboneConfig backbone_config(const Config& cfg) {
    BackboneConfig bc = backbone_preset(cfg.get_or("backbone.preset", "desk"));
    if (cfg.has("backbone.layers")) bc.layers = cfg.get_int("backbone.layers");
    if (cfg.has("backbone.heads")) bc.heads = cfg.get_int("backbone.heads");
    if (cfg.has("backbone.hidden_dim")) bc.hidden_dim = cfg.get_int("backbone.hidden_dim");
    if (cfg.has("backbone.max_len")) bc.max_len = cfg.get_int("backbone.max_len");
    if (cfg.has("backbone.dropout")) bc.dropout = cfg.get_num("backbone.dropout");
    return bc;
}

RetrieverConfig retriever_config(const Config& cfg) {
    RetrieverConfig rc;
    rc.lambda = cfg.get_num("retriever.lambda");
    rc.alpha = cfg.get_num("retriever.alpha");
    rc.tau = cfg.get_num("retriever.tau");
    rc.batch = static_cast<std::size_t>(cfg.get_int("retriever.batch"));
    rc.mask_portion = cfg.get_num("retriever.mask_portion");
    rc.crop_portion = cfg.get_num("retriever.crop_portion");
    rc.epochs = static_cast<std::size_t>(cfg.get_int("retriever.epochs"));
    rc.use_decay = cfg.get_bool("retriever.use_decay");
    rc.use_ccl = cfg.get_bool("retriever.use_ccl");
    rc.adam.learning_rate = cfg.get_num("retriever.learning_rate");
    return rc;
}

FusionConfig fusion_config(const Config& cfg) {
    FusionConfig fc;
    fc.strategy = fusion_strategy_from(cfg.get("fusion.strategy"));
    fc.k = static_cast<std::size_t>(cfg.get_int("fusion.k"));
    fc.epochs = static_cast<std::size_t>(cfg.get_int("fusion.epochs"));
    fc.batch_size = static_cast<std::size_t>(cfg.get_int("fusion.batch_size"));
    fc.adam.learning_rate = cfg.get_num("fusion.learning_rate");
    fc.mlp_prefix = static_cast<std::size_t>(cfg.get_int("fusion.mlp_prefix"));
    fc.mlp_hidden = static_cast<std::size_t>(cfg.get_int("fusion.mlp_hidden"));
    fc.include_demo_outputs = cfg.get_bool("fusion.include_demo_outputs");
    fc.prefix_positional = cfg.get_bool("fusion.prefix_positional");
    return fc;
}

void write_losses(const std::string& path, const TrainStats& stats) {
    std::ofstream out(path, std::ios::trunc);
    char buf[64];
    for (std::size_t i = 0; i < stats.epoch_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu %.9g\n", i, stats.epoch_loss[i]);
        out << buf;
    }
}

// --- stage bodies ------------------------------------------------------------

void run_preprocess(const Config& cfg, const std::string& dir) {
    TemporalGraph g;
    if (cfg.get("data.kind") == "synth") {
        SynthParams p;
        p.communities = static_cast<int>(cfg.get_int("data.communities"));
        p.members = static_cast<int>(cfg.get_int("data.members"));
        p.steps = static_cast<int>(cfg.get_int("data.steps"));
        p.overlap = cfg.get_num("data.overlap");
        p.target_set_size = static_cast<int>(cfg.get_int("data.target_set_size"));
        p.early_partners = static_cast<int>(cfg.get_int("data.early_partners"));
        p.early_targets = static_cast<int>(cfg.get_int("data.early_targets"));
        p.steps_per_era = static_cast<int>(cfg.get_int("data.steps_per_era"));
        p.drift_per_era = static_cast<int>(cfg.get_int("data.drift_per_era"));
        p.stale_per_era = static_cast<int>(cfg.get_int("data.stale_per_era"));
        g = synth_graph(p, static_cast<std::uint64_t>(cfg.get_int("data.seed")));
    } else if (cfg.get("data.kind") == "edgelist") {
        g = parse_edge_list_file(cfg.get("data.path"));
    } else {
        throw std::invalid_argument("preprocess: unknown data.kind " + cfg.get("data.kind"));
    }
    const int steps = static_cast<int>(cfg.get_int("data.steps"));
    bin_time_steps(g, steps);
    const auto spec = SplitSpec::for_steps(steps);
    auto sp = split(g, spec);
    for (const auto& w : sp.warnings) std::cerr << "preprocess: warning: " << w << "\n";

    const auto vocab = build_vocab(g);
    auto built = build_pool(g, vocab, spec,
                            static_cast<std::size_t>(cfg.get_int("data.max_seq_len")));

    {
        std::ofstream events(dir + "/events.txt", std::ios::trunc);
        serialize_edge_list(g, events);
    }
    save_node_map(g, dir + "/nodemap.txt");
    save_split_manifest(spec, dir + "/splits.txt");
    save_samples(vocab, built.pool, dir + "/pool.tsv");
    save_samples(vocab, built.val_queries, dir + "/val.tsv");
    save_samples(vocab, built.test_queries, dir + "/test.tsv");

    auto write_truth = [&](const RetrievalPool& queries, const std::string& path) {
        TruthDump truth;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const auto nodes = node_tokens(vocab, queries[i].y);
            truth[i] = std::set<NodeId>(nodes.begin(), nodes.end());
        }
        save_truth(truth, path);
    };
    write_truth(built.val_queries, dir + "/val_truth.txt");
    write_truth(built.test_queries, dir + "/test_truth.txt");

    std::ofstream meta(dir + "/meta.txt", std::ios::trunc);
    meta << "node_count=" << g.node_count << "\n";
    meta << "steps=" << steps << "\n";
    meta << "pool=" << built.pool.size() << "\n";
    meta << "val=" << built.val_queries.size() << "\n";
    meta << "test=" << built.test_queries.size() << "\n";
    meta << "skipped=" << built.skipped << "\n";
    meta << "events=" << g.events.size() << "\n";
}

void run_pretrain(const Config& cfg, std::uint64_t seed, const std::string& dir) {
    auto data = load_dataset(cfg);
    Rng rng(seed);
    SequenceEncoder model(data.vocab, backbone_config(cfg), rng);
    LmTrainConfig tc;
    tc.epochs = static_cast<std::size_t>(cfg.get_int("backbone.epochs"));
    tc.batch_size = static_cast<std::size_t>(cfg.get_int("backbone.batch_size"));
    tc.adam.learning_rate = cfg.get_num("backbone.learning_rate");
    auto stats = train_lm(model, data.pool, tc, rng);
    model.save(dir + "/backbone.ckpt");
    write_losses(dir + "/losses.txt", stats);
}

void run_annotate(const Config& cfg, const std::string& dir) {
    auto data = load_dataset(cfg);
    auto ann = annotate_pool(data.vocab, data.pool, cfg.get_num("retriever.threshold"));
    save_annotation(ann, dir + "/annotation.txt");
    std::ofstream stats(dir + "/stats.txt", std::ios::trunc);
    stats << "pairs=" << ann.pair_count << "\n";
    stats << "queries_without_positives=" << ann.queries_without_positives << "\n";
}

void run_train_retriever(const Config& cfg, std::uint64_t seed, const std::string& dir) {
    auto data = load_dataset(cfg);
    auto ann = load_annotation(stage_dir(cfg, "annotate", 0) + "/annotation.txt",
                               data.pool.size(), cfg.get_num("retriever.threshold"));
    Rng rng(seed);
    SequenceEncoder encoder(data.vocab, backbone_config(cfg), rng);
    encoder.load(stage_dir(cfg, "pretrain", seed) + "/backbone.ckpt");
    auto stats = train_retriever(encoder, data.pool, ann, retriever_config(cfg), rng);
    encoder.save(dir + "/retriever.ckpt");
    write_losses(dir + "/losses.txt", stats);
}

void run_retrieve(const Config& cfg, std::uint64_t seed, const std::string& dir) {
    auto data = load_dataset(cfg);
    const std::string kind = cfg.get("retriever.kind");
    const std::size_t depth =
        std::max<std::size_t>(16, static_cast<std::size_t>(cfg.get_int("fusion.k")));

    auto rank_all = [&](const RetrievalPool& queries, bool time_filter, bool exclude_self,
                        const std::string& path) {
        std::vector<RankedDemos> out;
        if (kind == "trained") {
            Rng rng(seed);
            SequenceEncoder encoder(data.vocab, backbone_config(cfg), rng);
            encoder.load(stage_dir(cfg, "train-retriever", seed) + "/retriever.ckpt");
            auto pool_emb = embed_pool(encoder, data.pool);
            for (std::size_t i = 0; i < queries.size(); ++i) {
                out.push_back(rank(encoder, queries[i], i, data.pool, pool_emb, depth,
                                   time_filter,
                                   exclude_self ? std::optional<std::size_t>(i) : std::nullopt));
            }
        } else if (kind == "bm25") {
            Bm25Index index(data.vocab, data.pool);
            for (std::size_t i = 0; i < queries.size(); ++i) {
                out.push_back(index.rank(queries[i], i, depth, time_filter,
                                         exclude_self ? std::optional<std::size_t>(i)
                                                      : std::nullopt));
            }
        } else if (kind == "jaccard") {
            for (std::size_t i = 0; i < queries.size(); ++i) {
                out.push_back(jaccard_rank(data.vocab, queries[i], i, data.pool, depth,
                                           time_filter,
                                           exclude_self ? std::optional<std::size_t>(i)
                                                        : std::nullopt));
            }
        } else if (kind == "groundtruth") {
            for (std::size_t i = 0; i < queries.size(); ++i) {
                out.push_back(ground_truth_rank(data.vocab, queries[i], i, data.pool, depth,
                                                time_filter,
                                                exclude_self ? std::optional<std::size_t>(i)
                                                             : std::nullopt));
            }
        } else {
            throw std::invalid_argument("retrieve: unknown retriever.kind " + kind);
        }
        save_ranked(out, path);
    };

    // training queries rank their own pool (self excluded, no time filter:
    // annotated candidates may postdate the query); evaluation queries only
    // see strictly earlier candidates
    rank_all(data.pool, false, true, dir + "/train_ranked.txt");
    rank_all(data.val_queries, true, false, dir + "/val_ranked.txt");
    rank_all(data.test_queries, true, false, dir + "/test_ranked.txt");
}

void run_finetune(const Config& cfg, std::uint64_t seed, const std::string& dir) {
    auto data = load_dataset(cfg);
    Rng rng(seed);
    SequenceEncoder backbone(data.vocab, backbone_config(cfg), rng);
    backbone.load(stage_dir(cfg, "pretrain", seed) + "/backbone.ckpt");
    FusionModel model(backbone, fusion_config(cfg), rng);
    auto ranked = load_ranked(stage_dir(cfg, "retrieve", seed) + "/train_ranked.txt");
    Rng train_rng(seed + 0x9e3779b97f4a7c15ull);
    auto stats = model.finetune(data.pool, ranked, train_rng);
    model.save(dir + "/fusion.ckpt");
    write_losses(dir + "/losses.txt", stats);
    std::ofstream notes(dir + "/stats.txt", std::ios::trunc);
    notes << "concat_truncations=" << model.concat_truncations() << "\n";
}

void run_evaluate(const Config& cfg, std::uint64_t seed, const std::string& dir) {
    auto data = load_dataset(cfg);
    Rng rng(seed);
    SequenceEncoder backbone(data.vocab, backbone_config(cfg), rng);
    FusionModel model(backbone, fusion_config(cfg), rng);
    model.load(stage_dir(cfg, "finetune", seed) + "/fusion.ckpt");

    auto ranked = load_ranked(stage_dir(cfg, "retrieve", seed) + "/test_ranked.txt");
    if (ranked.size() != data.test_queries.size()) {
        throw std::runtime_error("evaluate: ranked lists do not match the test queries");
    }
    const auto max_new = static_cast<std::size_t>(cfg.get_int("eval.max_new"));

    PredictionDump predictions;
    for (std::size_t i = 0; i < data.test_queries.size(); ++i) {
        const auto& q = data.test_queries[i];
        if (ranked[i].no_signal) {
            // the method retrieved nothing; fall back to the plain backbone
            predictions[i] = ranked_nodes(data.vocab,
                                          generate(backbone, q.x, q.prediction_step, max_new));
        } else {
            predictions[i] = model.predict(q, ranked[i], data.pool, max_new);
        }
    }
    save_predictions(predictions, dir + "/predictions.txt");

    auto truth = load_truth(stage_dir(cfg, "preprocess", 0) + "/test_truth.txt");
    auto report = evaluate_run(predictions, truth,
                               static_cast<std::size_t>(cfg.get_int("eval.top_k")));

    // retrieval quality against output-similarity relevance
    const double threshold = cfg.get_num("retriever.threshold");
    std::vector<std::vector<std::size_t>> relevant(data.test_queries.size());
    for (std::size_t i = 0; i < data.test_queries.size(); ++i) {
        for (std::size_t c = 0; c < data.pool.size(); ++c) {
            if (output_jaccard(data.vocab, data.test_queries[i].y, data.pool[c].y) >= threshold) {
                relevant[i].push_back(c);
            }
        }
    }
    char buf[96];
    std::string kv = report.kv();
    for (std::size_t k : {1u, 3u, 7u}) {
        auto agg = hr_over_queries(ranked, relevant, k);
        std::snprintf(buf, sizeof(buf), "hr@%zu=%.6f\n", k, agg.rate);
        kv += buf;
        if (k == 1) {
            std::snprintf(buf, sizeof(buf), "hr_evaluated=%zu\nhr_no_signal=%zu\n",
                          agg.evaluated, agg.skipped_no_signal);
            kv += buf;
        }
    }
    std::ofstream(dir + "/report.txt", std::ios::trunc) << report.text();
    std::ofstream(dir + "/report.kv", std::ios::trunc) << kv;
}

}  // namespace

std::string stage_dir(const Config& cfg, const std::string& stage, std::uint64_t seed) {
    const std::uint64_t h = stage_hash(cfg, stage, stage_is_per_seed(stage) ? seed : 0);
    return cfg.get("pipeline.outdir") + "/" + stage + "-" + hex16(h);
}

std::vector<StageResult> run_stage(const Config& cfg, const std::string& stage) {
    const bool known = std::any_of(std::begin(kStageNames), std::end(kStageNames),
                                   [&](const char* s) { return stage == s; });
    if (!known) throw std::invalid_argument("pipeline: unknown stage '" + stage + "'");

    std::vector<std::uint64_t> seeds =
        stage_is_per_seed(stage) ? cfg.seeds() : std::vector<std::uint64_t>{0};
    const std::string kind = cfg.get("retriever.kind");

    std::vector<StageResult> results;
    for (std::uint64_t seed : seeds) {
        // prerequisites
        if (stage == "pretrain" || stage == "annotate") {
            require_ready(cfg, "preprocess", 0);
        } else if (stage == "train-retriever") {
            require_ready(cfg, "preprocess", 0);
            require_ready(cfg, "annotate", 0);
            require_ready(cfg, "pretrain", seed);
        } else if (stage == "retrieve") {
            require_ready(cfg, "preprocess", 0);
            if (kind == "trained") require_ready(cfg, "train-retriever", seed);
        } else if (stage == "finetune") {
            require_ready(cfg, "pretrain", seed);
            require_ready(cfg, "retrieve", seed);
        } else if (stage == "evaluate") {
            require_ready(cfg, "finetune", seed);
            require_ready(cfg, "retrieve", seed);
        }

        const std::uint64_t hash = stage_hash(cfg, stage, stage_is_per_seed(stage) ? seed : 0);
        const std::string dir = stage_dir(cfg, stage, seed);
        if (artifact_ready(dir, hash)) {
            std::cout << stage << ": cached (" << dir << ")\n";
            results.push_back({dir, true});
            if (!stage_is_per_seed(stage)) break;
            continue;
        }
        fs::create_directories(dir);

        const auto t0 = std::chrono::steady_clock::now();
        if (stage == "preprocess") {
            run_preprocess(cfg, dir);
        } else if (stage == "pretrain") {
            run_pretrain(cfg, seed, dir);
        } else if (stage == "annotate") {
            run_annotate(cfg, dir);
        } else if (stage == "train-retriever") {
            run_train_retriever(cfg, seed, dir);
        } else if (stage == "retrieve") {
            run_retrieve(cfg, seed, dir);
        } else if (stage == "finetune") {
            run_finetune(cfg, seed, dir);
        } else if (stage == "evaluate") {
            run_evaluate(cfg, seed, dir);
        }
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();

        std::vector<std::string> inputs;
        if (stage != "preprocess") inputs.push_back(stage_dir(cfg, "preprocess", 0));
        write_manifest(dir, stage, hash, stage_is_per_seed(stage) ? seed : 0, wall_ms, inputs);
        std::cout << stage << ": done (" << dir << ")\n";
        results.push_back({dir, false});
        if (!stage_is_per_seed(stage)) break;
    }
    return results;
}

std::string emit_report(const Config& cfg) {
    const auto seeds = cfg.seeds();
    std::vector<std::string> eval_dirs;
    for (std::uint64_t seed : seeds) {
        const std::string dir = stage_dir(cfg, "evaluate", seed);
        if (artifact_ready(dir, stage_hash(cfg, "evaluate", seed))) eval_dirs.push_back(dir);
    }
    const std::string report_dir =
        cfg.get("pipeline.outdir") + "/report-" +
        hex16(mix_hashes({stage_hash(cfg, "evaluate", seeds.front()),
                          static_cast<std::uint64_t>(seeds.size())}));
    fs::create_directories(report_dir);
    const std::string path = report_dir + "/final_report.txt";

    if (eval_dirs.empty()) {
        std::ofstream(path, std::ios::trunc) << "nothing to report\n";
        return path;
    }

    // collect metric means per seed
    std::map<std::string, std::vector<double>> metric_values;
    std::string body;
    for (std::size_t i = 0; i < eval_dirs.size(); ++i) {
        std::ifstream kv(eval_dirs[i] + "/report.kv");
        if (!kv) throw std::runtime_error("emit_report: missing report.kv in " + eval_dirs[i]);
        body += "# seed " + std::to_string(seeds[i]) + " artifacts " +
                eval_dirs[i].substr(eval_dirs[i].find_last_of('/') + 1) + "\n";
        std::string line;
        while (std::getline(kv, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            const auto pm = value.find("±");
            if (pm != std::string::npos) value = value.substr(0, pm);
            metric_values[key].push_back(std::stod(value));
            body += "  " + line + "\n";
        }
    }

    std::string agg;
    char buf[128];
    for (const auto& [key, vals] : metric_values) {
        if (key.rfind("hr_", 0) == 0) continue;  // counters, not metrics
        auto s = summarize(vals);
        std::snprintf(buf, sizeof(buf), "%s %.6f ± %.6f over %zu seeds\n", key.c_str(), s.mean,
                      s.stddev, vals.size());
        agg += buf;
    }

    std::ofstream out(path, std::ios::trunc);
    out << "final report\n============\n" << agg << "\nper-seed detail\n" << body;
    std::ofstream kvout(report_dir + "/final_report.kv", std::ios::trunc);
    for (const auto& [key, vals] : metric_values) {
        if (key.rfind("hr_", 0) == 0) continue;
        auto s = summarize(vals);
        std::snprintf(buf, sizeof(buf), "%s=%.6f±%.6f\n", key.c_str(), s.mean, s.stddev);
        kvout << buf;
    }
    return path;
}

std::string run_all(const Config& cfg) {
    run_stage(cfg, "preprocess");
    run_stage(cfg, "pretrain");
    run_stage(cfg, "annotate");
    if (cfg.get("retriever.kind") == "trained") run_stage(cfg, "train-retriever");
    run_stage(cfg, "retrieve");
    run_stage(cfg, "finetune");
    run_stage(cfg, "evaluate");
    return emit_report(cfg);
}

std::string run_matrix(const Config& cfg, const std::vector<std::string>& axes) {
    struct Cell {
        std::string label;
        std::string key;
        std::string value;
        bool flag_decay = true;
        bool flag_ccl = true;
    };
    std::vector<Cell> cells;
    for (const auto& axis : axes) {
        if (axis == "K") {
            for (const char* k : {"1", "3", "5", "7", "9"}) {
                cells.push_back({"K=" + std::string(k), "fusion.k", k});
            }
        } else if (axis == "ablations") {
            cells.push_back({"ablation=full", "", ""});
            cells.push_back({"ablation=no_ccl", "retriever.use_ccl", "false"});
            cells.push_back({"ablation=no_decay", "retriever.use_decay", "false"});
        } else if (axis == "strategies") {
            for (const char* s : {"graph", "concat", "mlp"}) {
                cells.push_back({"strategy=" + std::string(s), "fusion.strategy", s});
            }
        } else if (axis == "retrievers") {
            for (const char* r : {"trained", "bm25", "jaccard", "groundtruth"}) {
                cells.push_back({"retriever=" + std::string(r), "retriever.kind", r});
            }
        } else {
            throw std::invalid_argument("matrix: unknown axis '" + axis + "'");
        }
    }
    if (cells.empty()) throw std::invalid_argument("matrix: no axes requested");

    std::string table = "cell\trecall@k\tndcg@k\tjaccard@k\thr@1\thr@3\n";
    std::vector<std::string> report_paths;
    for (const auto& cell : cells) {
        Config cell_cfg = cfg;
        if (!cell.key.empty()) cell_cfg.set(cell.key, cell.value);
        const std::string report = run_all(cell_cfg);
        report_paths.push_back(report);

        std::ifstream kv(fs::path(report).parent_path() / "final_report.kv");
        std::map<std::string, std::string> metrics;
        std::string line;
        while (std::getline(kv, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) metrics[line.substr(0, eq)] = line.substr(eq + 1);
        }
        table += cell.label;
        for (const char* key : {"recall@k", "ndcg@k", "jaccard@k", "hr@1", "hr@3"}) {
            table += "\t" + (metrics.count(key) ? metrics[key] : std::string("-"));
        }
        table += "\n";
    }

    const std::string dir = cfg.get("pipeline.outdir") + "/matrix-" +
                            hex16(cfg.hash_of({"pipeline.seeds", "data.seed"}));
    fs::create_directories(dir);
    const std::string path = dir + "/matrix.txt";
    std::ofstream out(path, std::ios::trunc);
    out << table;
    for (const auto& r : report_paths) out << "# aggregated " << r << "\n";
    return path;
}

}  // namespace dygrag
