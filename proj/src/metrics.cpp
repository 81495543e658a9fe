#include "dygrag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dygrag {

namespace {

std::vector<NodeId> top_k_distinct(const std::vector<NodeId>& ranked, std::size_t k) {
    std::vector<NodeId> out;
    for (NodeId n : ranked) {
        if (out.size() == k) break;
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
    return out;
}

}  // namespace

double recall_at_k(const std::vector<NodeId>& ranked, const std::set<NodeId>& truth,
                   std::size_t k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    if (truth.empty()) throw std::invalid_argument("recall_at_k: empty truth set");
    const auto top = top_k_distinct(ranked, k);
    std::size_t hits = 0;
    for (NodeId n : top) hits += truth.count(n);
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(const std::vector<NodeId>& ranked, const std::set<NodeId>& truth,
                 std::size_t k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    if (truth.empty()) throw std::invalid_argument("ndcg_at_k: empty truth set");
    const auto top = top_k_distinct(ranked, k);
    double dcg = 0.0;
    for (std::size_t pos = 0; pos < top.size(); ++pos) {
        if (truth.count(top[pos])) dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    }
    const std::size_t ideal = std::min(truth.size(), k);
    double idcg = 0.0;
    for (std::size_t pos = 0; pos < ideal; ++pos) {
        idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

double jaccard_metric(const std::vector<NodeId>& ranked, const std::set<NodeId>& truth,
                      std::size_t k) {
    const auto top = top_k_distinct(ranked, k);
    std::set<NodeId> pred(top.begin(), top.end());
    if (pred.empty() && truth.empty()) {
        throw std::invalid_argument("jaccard_metric: both sets empty");
    }
    std::size_t inter = 0;
    for (NodeId n : pred) inter += truth.count(n);
    return static_cast<double>(inter) /
           static_cast<double>(pred.size() + truth.size() - inter);
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

RunReport evaluate_run(const PredictionDump& predictions, const TruthDump& truth, std::size_t k) {
    std::string missing_pred, missing_truth;
    for (const auto& [id, _] : truth) {
        if (!predictions.count(id)) missing_pred += " " + std::to_string(id);
    }
    for (const auto& [id, _] : predictions) {
        if (!truth.count(id)) missing_truth += " " + std::to_string(id);
    }
    if (!missing_pred.empty() || !missing_truth.empty()) {
        throw std::runtime_error("evaluate_run: id mismatch; missing predictions for" +
                                 (missing_pred.empty() ? " none" : missing_pred) +
                                 "; missing truth for" +
                                 (missing_truth.empty() ? " none" : missing_truth));
    }

    RunReport report;
    std::vector<double> recalls, ndcgs, jaccards;
    for (const auto& [id, pred] : predictions) {
        const auto& t = truth.at(id);
        if (t.empty()) {
            ++report.skipped_empty_truth;
            continue;
        }
        EvalRecord rec;
        rec.query_id = id;
        rec.recall = recall_at_k(pred, t, k);
        rec.ndcg = ndcg_at_k(pred, t, k);
        rec.jaccard = jaccard_metric(pred, t, k);
        recalls.push_back(rec.recall);
        ndcgs.push_back(rec.ndcg);
        jaccards.push_back(rec.jaccard);
        report.records.push_back(rec);
    }
    report.recall = summarize(recalls);
    report.ndcg = summarize(ndcgs);
    report.jaccard = summarize(jaccards);
    return report;
}

std::string RunReport::text() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s\n", "query", "recall", "ndcg",
                  "jaccard");
    os << line;
    for (const auto& r : records) {
        std::snprintf(line, sizeof(line), "%-10zu %10.6f %10.6f %10.6f\n", r.query_id, r.recall,
                      r.ndcg, r.jaccard);
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-10s %10.6f %10.6f %10.6f\n", "mean", recall.mean,
                  ndcg.mean, jaccard.mean);
    os << line;
    std::snprintf(line, sizeof(line), "%-10s %10.6f %10.6f %10.6f\n", "std", recall.stddev,
                  ndcg.stddev, jaccard.stddev);
    os << line;
    os << "queries=" << records.size() << " skipped_empty_truth=" << skipped_empty_truth << "\n";
    return os.str();
}

std::string RunReport::kv() const {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof(line), "recall@k=%.6f±%.6f\n", recall.mean, recall.stddev);
    out += line;
    std::snprintf(line, sizeof(line), "ndcg@k=%.6f±%.6f\n", ndcg.mean, ndcg.stddev);
    out += line;
    std::snprintf(line, sizeof(line), "jaccard@k=%.6f±%.6f\n", jaccard.mean, jaccard.stddev);
    out += line;
    return out;
}

namespace {

template <typename Seq>
void save_id_nodes(const std::map<std::size_t, Seq>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("metrics: cannot open " + path);
    for (const auto& [id, nodes] : rows) {
        out << id << ':';
        bool first = true;
        for (NodeId n : nodes) {
            out << (first ? " " : ",") << n;
            first = false;
        }
        out << '\n';
    }
}

std::map<std::size_t, std::vector<NodeId>> load_id_nodes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metrics: cannot open " + path);
    std::map<std::size_t, std::vector<NodeId>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw std::runtime_error("metrics: malformed line in " + path);
        }
        const auto id = static_cast<std::size_t>(std::stoul(line.substr(0, colon)));
        std::string rest = line.substr(colon + 1);
        std::replace(rest.begin(), rest.end(), ',', ' ');
        std::istringstream rs(rest);
        std::vector<NodeId> nodes;
        NodeId n = 0;
        while (rs >> n) nodes.push_back(n);
        out[id] = std::move(nodes);
    }
    return out;
}

}  // namespace

void save_predictions(const PredictionDump& predictions, const std::string& path) {
    save_id_nodes(predictions, path);
}

PredictionDump load_predictions(const std::string& path) { return load_id_nodes(path); }

void save_truth(const TruthDump& truth, const std::string& path) { save_id_nodes(truth, path); }

TruthDump load_truth(const std::string& path) {
    TruthDump out;
    for (auto& [id, nodes] : load_id_nodes(path)) {
        out[id] = std::set<NodeId>(nodes.begin(), nodes.end());
    }
    return out;
}

}  // namespace dygrag
