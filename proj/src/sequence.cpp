#include "dygrag/sequence.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dygrag {

namespace {

const char* kSpecialNames[kSpecialCount] = {"[pad]", "[hist]",   "[eohist]", "[pred]",
                                            "[eopred]", "[mask]", "[unk]"};

}  // namespace

Vocab::Vocab(std::size_t node_count, int steps)
    : node_count_(node_count), time_count_(static_cast<std::size_t>(steps) + 1), steps_(steps) {}

TokenId Vocab::time_token(int step) const {
    if (step < 1 || static_cast<std::size_t>(step) > time_count_) {
        throw std::invalid_argument("vocab: time step " + std::to_string(step) +
                                    " outside [1.." + std::to_string(time_count_) + "]");
    }
    return static_cast<TokenId>(kSpecialCount + step - 1);
}

TokenId Vocab::node_token(NodeId node) const {
    if (node >= node_count_) {
        throw std::invalid_argument("vocab: node " + std::to_string(node) + " out of range");
    }
    return static_cast<TokenId>(kSpecialCount + time_count_ + node);
}

int Vocab::time_step(TokenId t) const {
    if (!is_time(t)) throw std::invalid_argument("vocab: token is not a time token");
    return static_cast<int>(t - kSpecialCount) + 1;
}

NodeId Vocab::node_of(TokenId t) const {
    if (!is_node(t)) throw std::invalid_argument("vocab: token is not a node token");
    return static_cast<NodeId>(t - kSpecialCount - time_count_);
}

std::string Vocab::to_string(TokenId t) const {
    if (is_special(t)) return kSpecialNames[t];
    if (is_time(t)) return "[time_" + std::to_string(time_step(t)) + "]";
    if (is_node(t)) return std::to_string(node_of(t));
    throw std::invalid_argument("vocab: token id " + std::to_string(t) + " out of range");
}

TokenId Vocab::parse(const std::string& s) const {
    if (s.empty()) throw std::invalid_argument("vocab: empty token string");
    if (s.front() == '[') {
        for (std::size_t i = 0; i < kSpecialCount; ++i) {
            if (s == kSpecialNames[i]) return static_cast<TokenId>(i);
        }
        if (s.rfind("[time_", 0) == 0 && s.back() == ']') {
            const int step = std::stoi(s.substr(6, s.size() - 7));
            return time_token(step);
        }
        throw std::invalid_argument("vocab: unknown token '" + s + "'");
    }
    return node_token(static_cast<NodeId>(std::stoul(s)));
}

Vocab build_vocab(const TemporalGraph& g) {
    if (g.step_count <= 0) throw std::logic_error("build_vocab: graph has not been binned");
    return Vocab(g.node_count, g.step_count);
}

namespace {

struct Interaction {
    int step;
    double t;
    NodeId partner;
};

// all interactions touching `target`, in event (raw-time) order
std::vector<Interaction> interactions_of(const TemporalGraph& g, NodeId target) {
    std::vector<Interaction> out;
    for (std::size_t i = 0; i < g.events.size(); ++i) {
        const auto& e = g.events[i];
        if (e.u == target) {
            out.push_back({g.event_steps[i], e.t, e.v});
        } else if (e.v == target) {
            out.push_back({g.event_steps[i], e.t, e.u});
        }
    }
    return out;
}

}  // namespace

EgoSample ego_sequence(const TemporalGraph& g, const Vocab& vocab, NodeId target,
                       int prediction_step, std::size_t max_len, bool allow_empty_history) {
    if (g.step_count <= 0) throw std::logic_error("ego_sequence: graph has not been binned");
    if (target >= g.node_count) {
        throw std::runtime_error("ego_sequence: node " + std::to_string(target) +
                                 " out of range");
    }
    const auto inter = interactions_of(g, target);
    if (inter.empty()) {
        throw std::runtime_error("ego_sequence: node " + std::to_string(target) +
                                 " has no interactions");
    }

    EgoSample s;
    s.target = target;
    s.prediction_step = prediction_step;

    // history grouped by step; events are raw-time ordered already
    std::map<int, std::vector<NodeId>> blocks;
    for (const auto& it : inter) {
        if (it.step < prediction_step) {
            blocks[it.step].push_back(it.partner);
            if (it.step > s.last_step) s.last_step = it.step;
            if (it.t >= s.last_raw) s.last_raw = it.t;
        } else if (it.step == prediction_step) {
            if (s.y.empty()) {
                s.y.push_back(vocab.special(SpecialToken::pred));
                s.y.push_back(vocab.time_token(prediction_step));
            }
            s.y.push_back(vocab.node_token(it.partner));
        }
    }
    if (blocks.empty() && !allow_empty_history) {
        throw std::runtime_error("ego_sequence: node " + std::to_string(target) +
                                 " has no history before step " + std::to_string(prediction_step));
    }
    if (!s.y.empty()) s.y.push_back(vocab.special(SpecialToken::eopred));

    s.x.push_back(vocab.special(SpecialToken::hist));
    s.x.push_back(vocab.node_token(target));
    auto begin = blocks.begin();
    if (max_len >= 8) {
        // truncate whole time blocks from the oldest side
        std::size_t len = 3;  // [hist], target, [eohist]
        for (const auto& [step, partners] : blocks) len += 1 + partners.size();
        while (len > max_len && begin != blocks.end()) {
            len -= 1 + begin->second.size();
            ++begin;
        }
    }
    for (auto it = begin; it != blocks.end(); ++it) {
        s.x.push_back(vocab.time_token(it->first));
        for (NodeId p : it->second) s.x.push_back(vocab.node_token(p));
    }
    s.x.push_back(vocab.special(SpecialToken::eohist));
    return s;
}

PoolBuildResult build_pool(const TemporalGraph& g, const Vocab& vocab, const SplitSpec& spec,
                           std::size_t max_len) {
    if (g.step_count <= 0) throw std::logic_error("build_pool: graph has not been binned");
    PoolBuildResult out;

    std::vector<std::vector<int>> active(g.node_count);
    for (std::size_t i = 0; i < g.events.size(); ++i) {
        active[g.events[i].u].push_back(g.event_steps[i]);
        active[g.events[i].v].push_back(g.event_steps[i]);
    }

    for (NodeId n = 0; n < g.node_count; ++n) {
        auto& steps = active[n];
        if (steps.empty()) continue;
        std::sort(steps.begin(), steps.end());
        steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

        // training sample: predict the last train-active step, history before it
        int last_train = 0;
        for (int st : steps) {
            if (st <= spec.train_hi) last_train = st;
        }
        if (last_train > 0 && steps.front() < last_train) {
            out.pool.push_back(ego_sequence(g, vocab, n, last_train, max_len, false));
        } else if (last_train > 0) {
            ++out.skipped;  // one active train step, nothing to supervise
        }

        const bool at_val = std::find(steps.begin(), steps.end(), spec.val_step) != steps.end();
        const bool at_test = std::find(steps.begin(), steps.end(), spec.test_step) != steps.end();
        if (at_val) {
            out.val_queries.push_back(ego_sequence(g, vocab, n, spec.val_step, max_len, true));
        }
        if (at_test) {
            out.test_queries.push_back(ego_sequence(g, vocab, n, spec.test_step, max_len, true));
        }
    }
    return out;
}

std::vector<NodeId> node_tokens(const Vocab& vocab, const std::vector<TokenId>& seq) {
    std::vector<NodeId> out;
    for (TokenId t : seq) {
        if (vocab.is_node(t)) out.push_back(vocab.node_of(t));
    }
    return out;
}

void save_samples(const Vocab& vocab, const RetrievalPool& samples, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_samples: cannot open " + path);
    char buf[64];
    for (const auto& s : samples) {
        out << s.target << '\t';
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) out << ' ';
            out << vocab.to_string(s.x[i]);
        }
        out << '\t';
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (i) out << ' ';
            out << vocab.to_string(s.y[i]);
        }
        out << '\t';
        std::snprintf(buf, sizeof(buf), "%.17g", s.last_raw);
        out << buf << '\n';
    }
}

RetrievalPool load_samples(const Vocab& vocab, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_samples: cannot open " + path);
    RetrievalPool out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 4) {
            throw std::runtime_error("load_samples: malformed line in " + path);
        }
        EgoSample s;
        s.target = static_cast<NodeId>(std::stoul(fields[0]));
        auto parse_tokens = [&](const std::string& f, std::vector<TokenId>& dst) {
            std::istringstream ts(f);
            std::string tok;
            while (ts >> tok) dst.push_back(vocab.parse(tok));
        };
        parse_tokens(fields[1], s.x);
        parse_tokens(fields[2], s.y);
        s.last_raw = std::stod(fields[3]);
        for (TokenId t : s.x) {
            if (vocab.is_time(t)) s.last_step = std::max(s.last_step, vocab.time_step(t));
        }
        for (TokenId t : s.y) {
            if (vocab.is_time(t)) s.prediction_step = vocab.time_step(t);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace dygrag
