#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dygrag {

using NodeId = std::uint32_t;

struct TemporalEvent {
    NodeId u = 0;
    NodeId v = 0;
    double t = 0.0;  // raw timestamp, dataset units
};

// Undirected timestamped interaction graph. Events are kept sorted by raw
// time (stable on ties); node ids are dense re-indexings of the original
// opaque string ids, which live in node_names.
struct TemporalGraph {
    std::size_t node_count = 0;
    std::vector<TemporalEvent> events;
    std::vector<std::string> node_names;  // dense id -> original string

    int step_count = 0;  // T; 0 until bin_time_steps runs
    double t_min = 0.0;
    double t_max = 0.0;
    std::vector<int> event_steps;  // aligned with events, values in [1..T]

    std::size_t self_loops_dropped = 0;

    int step_of(double t) const;  // requires binning
};

// Lines are "u v t", '#' starts a comment. Self-loops are dropped;
// duplicate lines are kept (repeat interactions carry signal).
TemporalGraph parse_edge_list(std::istream& in);
TemporalGraph parse_edge_list_file(const std::string& path);

void serialize_edge_list(const TemporalGraph& g, std::ostream& out);

// Partitions [t_min, t_max] into T equal-width intervals and assigns every
// event its 1-indexed interval. Throws when the raw range is degenerate.
void bin_time_steps(TemporalGraph& g, int steps);

struct SplitSpec {
    int train_lo = 1;
    int train_hi = 0;  // T-2
    int val_step = 0;  // T-1
    int test_step = 0;  // T
    static SplitSpec for_steps(int steps);
};

struct Split {
    std::vector<std::size_t> train_events;
    std::vector<std::size_t> val_events;
    std::vector<std::size_t> test_events;
    std::vector<std::string> warnings;  // e.g. empty validation or test subset
};

Split split(const TemporalGraph& g, const SplitSpec& spec);

// Synthetic dynamic graph with planted retrieval structure: members of a
// community share a per-community target set at their final active steps
// (overlap controls how much of it is shared vs. privately drawn), and
// interact with random community partners earlier. Optional era drift
// slides the shared target window over time, which clusters annotated
// positives temporally.
struct SynthParams {
    int communities = 4;
    int members = 10;      // per community
    int steps = 8;         // T
    double overlap = 0.9;  // rho
    int target_set_size = 10;
    int early_partners = 1;   // random context partners per early step
    int early_targets = 2;    // target-set picks per early step (keeps histories
                              // distributionally consistent across the split)
    int steps_per_era = 0;    // 0: single stationary era
    int drift_per_era = 0;    // window slide between eras
    int stale_per_era = 0;    // members whose activity ends one era early, per era level
};

TemporalGraph synth_graph(const SynthParams& p, std::uint64_t seed);

void save_node_map(const TemporalGraph& g, const std::string& path);
void save_split_manifest(const SplitSpec& spec, const std::string& path);

}  // namespace dygrag
