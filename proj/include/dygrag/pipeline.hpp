#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dygrag {

// Flat key-value configuration with one section per stage. Keys are
// addressed as "section.key"; overrides and environment variables
// (DYGRAG_<SECTION>__<KEY>) share that addressing.
class Config {
public:
    static Config defaults();
    static Config from_file(const std::string& path);

    void set(const std::string& dotted_key, const std::string& value);
    void apply_env_overrides();

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_num(const std::string& key) const;
    long long get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::uint64_t> seeds() const;

    // canonical serialization: sections sorted, keys sorted inside
    std::string serialize() const;
    void save(const std::string& path) const;

    // FNV-1a over the canonical "key=value" lines of the given keys
    std::uint64_t hash_of(const std::vector<std::string>& keys) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

inline const char* kStageNames[] = {"preprocess", "pretrain",  "annotate", "train-retriever",
                                    "retrieve",   "finetune", "evaluate"};

struct StageResult {
    std::string dir;      // artifact directory
    bool cached = false;  // inputs unchanged, nothing re-run
};

// Artifact directory for (stage, config) and, for per-seed stages, seed.
// The name embeds the dependency-closure hash.
std::string stage_dir(const Config& cfg, const std::string& stage, std::uint64_t seed);

// Runs one stage for every configured seed (seed-independent stages run
// once). Prerequisite artifacts must exist; a missing one raises an error
// naming the stage to run first. Re-running an up-to-date stage is a
// cached no-op.
std::vector<StageResult> run_stage(const Config& cfg, const std::string& stage);

// Full seven-stage pipeline plus the aggregated report; returns the final
// report path.
std::string run_all(const Config& cfg);

// Aggregate the per-seed evaluation artifacts of `cfg` into a final
// deterministic report; returns its path.
std::string emit_report(const Config& cfg);

// Experiment grid over the requested axes ("K", "ablations", "strategies",
// "retrievers"); one table row per cell, mean ± std over seeds.
std::string run_matrix(const Config& cfg, const std::vector<std::string>& axes);

}  // namespace dygrag
