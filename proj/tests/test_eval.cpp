#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "kgp/error.hpp"
#include "kgp/eval.hpp"
#include "kgp/synthetic.hpp"
#include "naive_rank_oracle.hpp"
#include "test_util.hpp"

using namespace kgp;
using namespace kgp_test;

namespace {

// ~200 train triples over 30 entities, with valid/test splits.
SyntheticKg ranking_fixture(uint64_t seed = 21) {
    SyntheticKgConfig cfg;
    cfg.n_entities = 30;
    cfg.relations = {{RelationSemantics::Random, 4.0},
                     {RelationSemantics::Symmetric, 2.0},
                     {RelationSemantics::InversePair, 1.5}};
    cfg.seed = seed;
    return generate_synthetic_kg(cfg);
}

// Coarsely quantized embeddings produce plenty of exact score ties.
EmbeddingModel quantized_model(const KnowledgeGraph& kg, uint64_t seed) {
    EmbeddingModel m = init_model(ModelKind::DistMult, 2, kg.num_entities(), kg.num_relations(),
                                  seed);
    for (auto& v : m.E) v = std::round(v);
    for (auto& v : m.R) v = std::round(v);
    return m;
}

}  // namespace

TEST_CASE("rank: perfect separation gives rank 1") {
    const auto kg = letter_graph({"a p b", "c p d"});
    EmbeddingModel m = init_model(ModelKind::TransE, 4, kg.num_entities(), kg.num_relations(), 1);
    // Exact translation a + r = b scores 0, the maximum; every corruption has
    // a strictly positive distance.
    const auto a = m.entity(static_cast<size_t>(kg.entity_id("a")));
    const auto b = m.entity(static_cast<size_t>(kg.entity_id("b")));
    for (int i = 0; i < 4; ++i) m.relation(0)[i] = b[i] - a[i];
    const Triple t{kg.entity_id("a"), 0, kg.entity_id("b")};
    CHECK(rank(m, t, kg, Side::Object, false) == 1.0);
    CHECK(rank(m, t, kg, Side::Subject, false) == 1.0);
}

TEST_CASE("rank: all candidates tied gives (|E|+1)/2 under the average policy") {
    const auto kg = letter_graph({"a p b", "c p d", "e p f"});
    EmbeddingModel m = init_model(ModelKind::DistMult, 4, kg.num_entities(), kg.num_relations(), 1);
    for (auto& v : m.R) v = 0.0;  // every score is exactly 0
    const Triple t{kg.entity_id("a"), 0, kg.entity_id("b")};
    const double n = static_cast<double>(kg.num_entities());
    CHECK(rank(m, t, kg, Side::Object, false, TiePolicy::Average) == (n + 1.0) / 2.0);
    CHECK(rank(m, t, kg, Side::Object, false, TiePolicy::Optimistic) == 1.0);
    CHECK(rank(m, t, kg, Side::Object, false, TiePolicy::Pessimistic) == n);
}

TEST_CASE("rank matches the naive full-enumeration oracle on the 30-entity fixture") {
    const auto fixture = ranking_fixture();
    const auto& kg = fixture.graph;
    REQUIRE(kg.train().size() > 150);
    REQUIRE(!kg.test().empty());

    for (int model_case = 0; model_case < 2; ++model_case) {
        const EmbeddingModel m =
            model_case == 0
                ? init_model(ModelKind::ComplEx, 4, kg.num_entities(), kg.num_relations(), 77)
                : quantized_model(kg, 78);
        for (const Triple& t : kg.test()) {
            for (Side side : {Side::Subject, Side::Object}) {
                for (bool filtered : {false, true}) {
                    for (TiePolicy policy :
                         {TiePolicy::Average, TiePolicy::Optimistic, TiePolicy::Pessimistic}) {
                        const double got = rank(m, t, kg, side, filtered, policy);
                        const double want = naive_rank(m, t, kg, side, filtered, policy);
                        CHECK(got == want);
                    }
                }
            }
        }
    }
}

TEST_CASE("rank invariants on the fixture") {
    const auto fixture = ranking_fixture(33);
    const auto& kg = fixture.graph;
    const auto m = quantized_model(kg, 5);
    for (const Triple& t : kg.test()) {
        for (Side side : {Side::Subject, Side::Object}) {
            const double raw = rank(m, t, kg, side, false);
            const double filtered = rank(m, t, kg, side, true);
            CHECK(filtered <= raw);
            const double opt = rank(m, t, kg, side, true, TiePolicy::Optimistic);
            const double avg = rank(m, t, kg, side, true, TiePolicy::Average);
            const double pes = rank(m, t, kg, side, true, TiePolicy::Pessimistic);
            CHECK(opt <= avg);
            CHECK(avg <= pes);
            CHECK(1.0 <= opt);
            CHECK(pes <= static_cast<double>(kg.num_entities()));
        }
    }
}

TEST_CASE("rank is invariant under a positive rescaling of all scores") {
    const auto fixture = ranking_fixture(8);
    const auto& kg = fixture.graph;
    EmbeddingModel m = init_model(ModelKind::DistMult, 6, kg.num_entities(), kg.num_relations(), 3);
    EmbeddingModel scaled = m;
    // Scaling every relation row scales every candidate score by the same
    // positive factor: a strictly monotone transform of the score list.
    for (auto& v : scaled.R) v *= 3.5;
    for (const Triple& t : kg.test()) {
        for (Side side : {Side::Subject, Side::Object}) {
            CHECK(rank(m, t, kg, side, true) == rank(scaled, t, kg, side, true));
        }
    }
}

TEST_CASE("evaluate on a singleton equals rank called directly") {
    const auto fixture = ranking_fixture(13);
    const auto& kg = fixture.graph;
    const auto m = init_model(ModelKind::TransE, 6, kg.num_entities(), kg.num_relations(), 2);
    const Triple t = kg.test().front();
    const auto report = evaluate(m, kg, std::span<const Triple>{&t, 1}, RankOptions{true});
    CHECK(report.entries.size() == 1);
    CHECK(report.entries[0].subject_rank == rank(m, t, kg, Side::Subject, true));
    CHECK(report.entries[0].object_rank == rank(m, t, kg, Side::Object, true));
    CHECK(report.mrr ==
          doctest::Approx(0.5 * (1.0 / report.entries[0].subject_rank +
                                 1.0 / report.entries[0].object_rank)));
}

TEST_CASE("evaluate: parallel workers produce identical reports") {
    const auto fixture = ranking_fixture(55);
    const auto& kg = fixture.graph;
    const auto m = init_model(ModelKind::ComplEx, 4, kg.num_entities(), kg.num_relations(), 6);
    const auto serial = evaluate(m, kg, kg.test(), RankOptions{true, TiePolicy::Average, 1});
    const auto parallel = evaluate(m, kg, kg.test(), RankOptions{true, TiePolicy::Average, 4});
    REQUIRE(serial.entries.size() == parallel.entries.size());
    for (size_t i = 0; i < serial.entries.size(); ++i) {
        CHECK(serial.entries[i].subject_rank == parallel.entries[i].subject_rank);
        CHECK(serial.entries[i].object_rank == parallel.entries[i].object_rank);
    }
    CHECK(serial.mrr == parallel.mrr);
}

TEST_CASE("metric arithmetic: pinned examples") {
    const double ranks[] = {1.0, 2.0, 4.0};
    const auto agg = aggregate_ranks(ranks);
    CHECK(agg.mrr == 7.0 / 12.0);
    CHECK(agg.mr == 7.0 / 3.0);
    CHECK(agg.hits1 == 1.0 / 3.0);
    CHECK(agg.hits3 == 2.0 / 3.0);
    CHECK(agg.hits10 == 1.0);

    const double perfect[] = {1.0, 1.0};
    const auto p = aggregate_ranks(perfect);
    CHECK(p.mrr == 1.0);
    CHECK(p.hits1 == 1.0);
}

TEST_CASE("evaluate: empty input errors") {
    const auto fixture = ranking_fixture(1);
    const auto m = init_model(ModelKind::DistMult, 4, fixture.graph.num_entities(),
                              fixture.graph.num_relations(), 1);
    CHECK_THROWS_AS(evaluate(m, fixture.graph, std::span<const Triple>{}), Error);
}

TEST_CASE("select_targets: threshold, cap and determinism") {
    EvalReport report;
    for (int i = 0; i < 10; ++i) {
        EvalReport::Entry e;
        e.t = {i, 0, i + 1};
        e.subject_rank = i < 3 ? 1.0 : 20.0;
        e.object_rank = i < 5 ? 1.0 : 20.0;
        report.entries.push_back(e);
    }

    SUBCASE("threshold 1, both sides") {
        const auto targets = select_targets(report, 1.0, 100, 7);
        CHECK(targets.size() == 3);
    }
    SUBCASE("configured side") {
        CHECK(select_targets(report, 1.0, 100, 7, TargetSide::Object).size() == 5);
        CHECK(select_targets(report, 1.0, 100, 7, TargetSide::Subject).size() == 3);
    }
    SUBCASE("cap subsamples deterministically") {
        const auto a = select_targets(report, 1.0, 2, 7, TargetSide::Object);
        const auto b = select_targets(report, 1.0, 2, 7, TargetSide::Object);
        CHECK(a.size() == 2);
        CHECK(a == b);
        const auto c = select_targets(report, 1.0, 2, 8, TargetSide::Object);
        CHECK(c.size() == 2);  // different seed may give a different subset
    }
    SUBCASE("no qualifiers errors") {
        CHECK_THROWS_AS(select_targets(report, 0.5, 10, 7), Error);
    }
}

TEST_CASE("delta_mrr: both conventions, pinned values") {
    EvalReport original, poisoned;
    EvalReport::Entry e;
    e.t = {0, 0, 1};
    original.entries = {e};
    poisoned.entries = {e};

    SUBCASE("1.00 -> 0.25 is -75% in the table convention") {
        original.mrr = 1.00;
        poisoned.mrr = 0.25;
        const auto d = delta_mrr(original, poisoned);
        CHECK(d.pois_minus_orig_pct == -75.0);
        CHECK(d.orig_minus_pois_pct == 75.0);
    }
    SUBCASE("identical reports give 0%") {
        original.mrr = 0.8;
        poisoned.mrr = 0.8;
        const auto d = delta_mrr(original, poisoned);
        CHECK(d.pois_minus_orig_pct == 0.0);
    }
    SUBCASE("0.90 -> 0.57 is -36.67%") {
        original.mrr = 0.90;
        poisoned.mrr = 0.57;
        const auto d = delta_mrr(original, poisoned);
        CHECK(d.pois_minus_orig_pct == doctest::Approx(-36.67).epsilon(1e-3));
    }
    SUBCASE("mismatched target sets error") {
        poisoned.entries[0].t = {1, 0, 2};
        original.mrr = poisoned.mrr = 0.5;
        CHECK_THROWS_AS(delta_mrr(original, poisoned), Error);
    }
}

TEST_CASE("ranks TSV and metrics files") {
    const auto kg = letter_graph({"a p b", "b p c"});
    const auto m = init_model(ModelKind::DistMult, 4, kg.num_entities(), kg.num_relations(), 1);
    const auto report = evaluate(m, kg, kg.train(), RankOptions{false});
    TempDir dir("evalfiles");
    write_ranks_tsv(report, kg, dir.path / "ranks.tsv");
    write_metrics(report, dir.path / "metrics.txt");

    std::ifstream ranks(dir.path / "ranks.tsv");
    std::string line;
    size_t rows = 0;
    while (std::getline(ranks, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), '\t') == 4);
    }
    CHECK(rows == report.entries.size());

    std::ifstream metrics(dir.path / "metrics.txt");
    std::getline(metrics, line);
    CHECK(line.rfind("mr=", 0) == 0);
}
