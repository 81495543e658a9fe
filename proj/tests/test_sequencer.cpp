#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "dygrag/graph.hpp"
#include "dygrag/sequence.hpp"

using namespace dygrag;

namespace {

TemporalGraph tiny_graph() {
    // a meets b at step 1, c at step 2, d at step 3  (T=4 after binning)
    std::istringstream in("a b 1\na c 2\na d 3\ne f 4\n");
    auto g = parse_edge_list(in);
    bin_time_steps(g, 4);
    return g;
}

}  // namespace

TEST_CASE("vocab size is specials + time tokens + node tokens") {
    std::istringstream in("a b 1\nb c 2\nc d 3\nd e 4\n");
    auto g = parse_edge_list(in);
    bin_time_steps(g, 4);
    auto v = build_vocab(g);
    CHECK(g.node_count == 5);
    CHECK(v.size() == 7 + 5 + 5);
}

TEST_CASE("pad maps to index 0") {
    Vocab v(3, 4);
    CHECK(v.special(SpecialToken::pad) == 0);
    CHECK(v.to_string(0) == "[pad]");
}

TEST_CASE("every token round-trips through its string form") {
    Vocab v(6, 5);
    for (TokenId t = 0; t < v.size(); ++t) {
        CHECK(v.parse(v.to_string(t)) == t);
    }
    CHECK_THROWS_AS(v.parse("[bogus]"), std::invalid_argument);
}

TEST_CASE("ego sequence lays out history blocks and the prediction block") {
    auto g = tiny_graph();
    auto v = build_vocab(g);
    auto s = ego_sequence(g, v, 0, 3);  // node a, predict step 3 (meets d)

    std::vector<TokenId> want_x = {v.special(SpecialToken::hist), v.node_token(0),
                                   v.time_token(1),               v.node_token(1),
                                   v.time_token(2),               v.node_token(2),
                                   v.special(SpecialToken::eohist)};
    std::vector<TokenId> want_y = {v.special(SpecialToken::pred), v.time_token(3),
                                   v.node_token(3), v.special(SpecialToken::eopred)};
    CHECK(s.x == want_x);
    CHECK(s.y == want_y);
    CHECK(s.last_step == 2);
    CHECK(s.prediction_step == 3);
}

TEST_CASE("inductive ego sequence has a bare history") {
    auto g = tiny_graph();
    auto v = build_vocab(g);
    // node e only interacts at step 4
    auto s = ego_sequence(g, v, 4, 4, 0, true);
    std::vector<TokenId> want_x = {v.special(SpecialToken::hist), v.node_token(4),
                                   v.special(SpecialToken::eohist)};
    CHECK(s.x == want_x);
    CHECK(s.last_step == 0);
    CHECK_THROWS_AS(ego_sequence(g, v, 4, 4, 0, false), std::runtime_error);
}

TEST_CASE("partners within one step keep raw-time order") {
    std::istringstream in("a b 10\na c 11\na d 12\na e 40\n");
    auto g = parse_edge_list(in);
    bin_time_steps(g, 3);
    auto v = build_vocab(g);
    auto s = ego_sequence(g, v, 0, 3);
    // b,c,d all bin to step 1; order must follow raw timestamps
    std::vector<TokenId> want_x = {v.special(SpecialToken::hist), v.node_token(0),
                                   v.time_token(1),               v.node_token(1),
                                   v.node_token(2),               v.node_token(3),
                                   v.special(SpecialToken::eohist)};
    CHECK(s.x == want_x);
}

TEST_CASE("x node multiset equals the target's partners before the prediction step") {
    auto g = synth_graph(SynthParams{}, 3);
    bin_time_steps(g, 8);
    auto v = build_vocab(g);
    auto s = ego_sequence(g, v, 0, 6);
    std::multiset<NodeId> from_x;
    for (auto n : node_tokens(v, s.x)) {
        if (n != s.target) from_x.insert(n);
    }
    from_x.insert(s.target);  // the leading target token
    std::multiset<NodeId> from_graph{s.target};
    for (std::size_t i = 0; i < g.events.size(); ++i) {
        if (g.event_steps[i] >= 6) continue;
        if (g.events[i].u == 0) from_graph.insert(g.events[i].v);
        if (g.events[i].v == 0) from_graph.insert(g.events[i].u);
    }
    CHECK(from_x == from_graph);
    CHECK(s.last_step < s.prediction_step);
}

TEST_CASE("long histories truncate oldest blocks first") {
    std::ostringstream in;
    for (int t = 1; t <= 30; ++t) in << "a p" << t << " " << t << "\n";
    std::istringstream is(in.str());
    auto g = parse_edge_list(is);
    bin_time_steps(g, 31);
    auto v = build_vocab(g);
    auto full = ego_sequence(g, v, 0, 31);
    auto cut = ego_sequence(g, v, 0, 31, 20);
    CHECK(full.x.size() > 20);
    CHECK(cut.x.size() <= 20);
    // the most recent blocks survive
    CHECK(cut.x[cut.x.size() - 2] == full.x[full.x.size() - 2]);
    CHECK(cut.last_step == full.last_step);
}

TEST_CASE("pool construction on planted data") {
    SynthParams p;
    p.overlap = 1.0;
    auto g = synth_graph(p, 11);
    bin_time_steps(g, p.steps);
    auto v = build_vocab(g);
    auto built = build_pool(g, v, SplitSpec::for_steps(p.steps));

    // every community member yields a pool sample with an identical y node set
    const int per_comm = p.members + 2 * p.target_set_size;
    std::map<int, std::set<NodeId>> y_sets;
    int member_samples = 0;
    for (const auto& s : built.pool) {
        if (static_cast<int>(s.target) % per_comm >= p.members) continue;
        ++member_samples;
        const auto yn = node_tokens(v, s.y);
        std::set<NodeId> ys(yn.begin(), yn.end());
        auto [it, fresh] = y_sets.emplace(s.target / per_comm, ys);
        if (!fresh) CHECK(it->second == ys);
    }
    CHECK(member_samples == p.communities * p.members);

    // leakage guard: no pool sample predicts at or beyond the validation step
    for (const auto& s : built.pool) {
        CHECK(s.prediction_step <= p.steps - 2);
        for (TokenId t : s.y) {
            if (v.is_time(t)) CHECK(v.time_step(t) <= p.steps - 2);
        }
    }
    CHECK(!built.test_queries.empty());
}

TEST_CASE("samples survive a save/load round trip") {
    auto g = tiny_graph();
    auto v = build_vocab(g);
    PoolBuildResult built = build_pool(g, v, SplitSpec::for_steps(4));
    const auto dir = std::filesystem::temp_directory_path() / "dygrag_seq_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "pool.tsv").string();
    save_samples(v, built.pool, path);
    auto loaded = load_samples(v, path);
    REQUIRE(loaded.size() == built.pool.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].target == built.pool[i].target);
        CHECK(loaded[i].x == built.pool[i].x);
        CHECK(loaded[i].y == built.pool[i].y);
        CHECK(loaded[i].last_step == built.pool[i].last_step);
        CHECK(loaded[i].last_raw == built.pool[i].last_raw);
        CHECK(loaded[i].prediction_step == built.pool[i].prediction_step);
    }
    std::filesystem::remove_all(dir);
}
