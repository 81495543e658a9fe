#include "dygrag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "dygrag/rng.hpp"

namespace dygrag {

int TemporalGraph::step_of(double t) const {
    if (step_count <= 0) throw std::logic_error("step_of: graph has not been binned");
    const double width = (t_max - t_min) / static_cast<double>(step_count);
    int s = 1 + static_cast<int>(std::floor((t - t_min) / width));
    if (s < 1) s = 1;
    if (s > step_count) s = step_count;
    return s;
}

TemporalGraph parse_edge_list(std::istream& in) {
    TemporalGraph g;
    std::unordered_map<std::string, NodeId> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string u, v, t_str;
        if (!(ls >> u)) continue;  // blank
        if (!(ls >> v >> t_str)) {
            throw std::runtime_error("parse_edge_list: malformed line " + std::to_string(line_no) +
                                     ": expected 'u v t'");
        }
        std::string extra;
        if (ls >> extra) {
            throw std::runtime_error("parse_edge_list: malformed line " + std::to_string(line_no) +
                                     ": trailing token '" + extra + "'");
        }
        double t = 0.0;
        try {
            std::size_t pos = 0;
            t = std::stod(t_str, &pos);
            if (pos != t_str.size()) throw std::invalid_argument(t_str);
        } catch (const std::exception&) {
            throw std::runtime_error("parse_edge_list: malformed line " + std::to_string(line_no) +
                                     ": bad timestamp '" + t_str + "'");
        }
        if (u == v) {
            ++g.self_loops_dropped;
            continue;
        }
        auto intern = [&](const std::string& name) {
            auto it = ids.find(name);
            if (it != ids.end()) return it->second;
            const NodeId id = static_cast<NodeId>(g.node_names.size());
            ids.emplace(name, id);
            g.node_names.push_back(name);
            return id;
        };
        g.events.push_back({intern(u), intern(v), t});
    }
    if (g.events.empty()) throw std::runtime_error("parse_edge_list: no events in input");
    g.node_count = g.node_names.size();
    std::stable_sort(g.events.begin(), g.events.end(),
                     [](const TemporalEvent& a, const TemporalEvent& b) { return a.t < b.t; });
    return g;
}

TemporalGraph parse_edge_list_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_edge_list: cannot open " + path);
    return parse_edge_list(in);
}

void serialize_edge_list(const TemporalGraph& g, std::ostream& out) {
    char buf[64];
    for (const auto& e : g.events) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.t);
        out << g.node_names[e.u] << ' ' << g.node_names[e.v] << ' ' << buf << '\n';
    }
}

void bin_time_steps(TemporalGraph& g, int steps) {
    if (steps < 3) throw std::invalid_argument("bin_time_steps: need T >= 3, got " +
                                               std::to_string(steps));
    if (g.events.empty()) throw std::invalid_argument("bin_time_steps: empty graph");
    g.t_min = g.events.front().t;
    g.t_max = g.events.back().t;
    if (!(g.t_max > g.t_min)) {
        throw std::runtime_error("bin_time_steps: degenerate time range, all events at t=" +
                                 std::to_string(g.t_min));
    }
    g.step_count = steps;
    g.event_steps.resize(g.events.size());
    for (std::size_t i = 0; i < g.events.size(); ++i) {
        g.event_steps[i] = g.step_of(g.events[i].t);
    }
}

SplitSpec SplitSpec::for_steps(int steps) {
    SplitSpec s;
    s.train_lo = 1;
    s.train_hi = steps - 2;
    s.val_step = steps - 1;
    s.test_step = steps;
    return s;
}

Split split(const TemporalGraph& g, const SplitSpec& spec) {
    if (g.step_count <= 0) throw std::logic_error("split: graph has not been binned");
    Split out;
    for (std::size_t i = 0; i < g.events.size(); ++i) {
        const int s = g.event_steps[i];
        if (s >= spec.train_lo && s <= spec.train_hi) {
            out.train_events.push_back(i);
        } else if (s == spec.val_step) {
            out.val_events.push_back(i);
        } else if (s == spec.test_step) {
            out.test_events.push_back(i);
        }
    }
    if (out.val_events.empty()) out.warnings.push_back("validation subset is empty");
    if (out.test_events.empty()) out.warnings.push_back("test subset is empty");
    return out;
}

TemporalGraph synth_graph(const SynthParams& p, std::uint64_t seed) {
    if (p.communities * p.members < 4 || p.steps < 4 || p.overlap < 0.0 || p.overlap > 1.0 ||
        p.target_set_size < 1 || p.members < 2) {
        throw std::invalid_argument("synth_graph: invalid parameters");
    }
    const int s = p.target_set_size;
    const int pool = 2 * s;
    const int eras = p.steps_per_era > 0 ? (p.steps - 1) / p.steps_per_era + 1 : 1;
    if ((eras - 1) * p.drift_per_era + s > pool) {
        throw std::invalid_argument("synth_graph: drift exceeds target pool");
    }
    if (p.stale_per_era > 0) {
        if (2 * p.stale_per_era >= p.members) {
            throw std::invalid_argument("synth_graph: too many stale members");
        }
        if (p.steps_per_era <= 0 || p.steps - 2 * p.steps_per_era < 4) {
            throw std::invalid_argument("synth_graph: stale members need room for eras");
        }
    }

    Rng rng(seed);
    TemporalGraph g;
    const int per_comm = p.members + pool;
    g.node_count = static_cast<std::size_t>(p.communities) * per_comm;
    g.node_names.resize(g.node_count);
    for (int c = 0; c < p.communities; ++c) {
        for (int i = 0; i < p.members; ++i) {
            g.node_names[c * per_comm + i] = "c" + std::to_string(c) + "m" + std::to_string(i);
        }
        for (int j = 0; j < pool; ++j) {
            g.node_names[c * per_comm + p.members + j] =
                "c" + std::to_string(c) + "t" + std::to_string(j);
        }
    }

    const int era_of = p.steps_per_era > 0 ? p.steps_per_era : p.steps;  // steps per era
    const int shared = static_cast<int>(std::lround(p.overlap * s));

    for (int c = 0; c < p.communities; ++c) {
        const NodeId member0 = static_cast<NodeId>(c * per_comm);
        const NodeId target0 = member0 + static_cast<NodeId>(p.members);
        for (int i = 0; i < p.members; ++i) {
            const NodeId me = member0 + static_cast<NodeId>(i);
            int active_end = p.steps;
            if (p.stale_per_era > 0) {
                if (i < p.stale_per_era) {
                    active_end = p.steps - p.steps_per_era;
                } else if (i < 2 * p.stale_per_era) {
                    active_end = p.steps - 2 * p.steps_per_era;
                }
            }
            const int heavy_from = std::max(1, active_end - 2);
            const int era = (active_end - 1) / era_of;
            const int w0 = era * p.drift_per_era;

            // final-step target set: shared window prefix + private picks
            std::vector<NodeId> targets;
            for (int j = 0; j < shared; ++j) {
                targets.push_back(target0 + static_cast<NodeId>(w0 + j));
            }
            std::vector<NodeId> outside;
            for (int j = 0; j < pool; ++j) {
                if (j < w0 || j >= w0 + s) outside.push_back(target0 + static_cast<NodeId>(j));
            }
            rng.shuffle(outside);
            for (int j = 0; j < s - shared && j < static_cast<int>(outside.size()); ++j) {
                targets.push_back(outside[j]);
            }

            for (int k = 1; k <= active_end; ++k) {
                if (k < heavy_from) {
                    for (int e = 0; e < p.early_partners; ++e) {
                        NodeId other = me;
                        while (other == me) {
                            other = member0 + static_cast<NodeId>(rng.below(p.members));
                        }
                        g.events.push_back({me, other, static_cast<double>(k)});
                    }
                    const int picks =
                        std::min<int>(p.early_targets, static_cast<int>(targets.size()));
                    for (std::size_t off : rng.sample_indices(targets.size(), picks)) {
                        g.events.push_back({me, targets[off], static_cast<double>(k)});
                    }
                } else {
                    for (NodeId tgt : targets) {
                        g.events.push_back({me, tgt, static_cast<double>(k)});
                    }
                }
            }
        }
    }
    std::stable_sort(g.events.begin(), g.events.end(),
                     [](const TemporalEvent& a, const TemporalEvent& b) { return a.t < b.t; });
    return g;
}

void save_node_map(const TemporalGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_node_map: cannot open " + path);
    for (std::size_t i = 0; i < g.node_names.size(); ++i) {
        out << g.node_names[i] << ' ' << i << '\n';
    }
}

void save_split_manifest(const SplitSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_split_manifest: cannot open " + path);
    out << "train " << spec.train_lo << ' ' << spec.train_hi << '\n';
    out << "val " << spec.val_step << ' ' << spec.val_step << '\n';
    out << "test " << spec.test_step << ' ' << spec.test_step << '\n';
}

}  // namespace dygrag
