#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kgp/error.hpp"
#include "kgp/eval.hpp"
#include "kgp/synthetic.hpp"
#include "kgp/trainer.hpp"
#include "test_util.hpp"

using namespace kgp;

namespace {

KnowledgeGraph small_fixture(uint64_t seed = 5, size_t entities = 18) {
    SyntheticKgConfig cfg;
    cfg.n_entities = entities;
    cfg.relations = {{RelationSemantics::Symmetric, 1.5}, {RelationSemantics::Random, 1.5}};
    cfg.seed = seed;
    return generate_synthetic_kg(cfg).graph;
}

}  // namespace

TEST_CASE("negsamp_corruptions: n per side, uniform entities") {
    const auto kg = small_fixture();
    Rng rng(1);
    const Triple t = kg.train()[0];
    const auto negs = negsamp_corruptions(kg, t, 2, rng);
    REQUIRE(negs.size() == 4);
    CHECK(negs[0].r == t.r);
    CHECK(negs[0].o == t.o);  // subject-side corruption keeps (r, o)
    CHECK(negs[1].o == t.o);
    CHECK(negs[2].s == t.s);  // object-side corruption keeps (s, r)
    CHECK(negs[3].s == t.s);
}

TEST_CASE("kvsall_labels: ones exactly at observed completions") {
    const auto kg = kgp_test::letter_graph({"a p b", "a p c", "a q d", "b p c"});
    const auto labels = kvsall_labels(kg, kg.entity_id("a"), kg.relation_id("p"), true);
    size_t ones = 0;
    for (double y : labels) ones += y == 1.0 ? 1 : 0;
    CHECK(ones == 2);
    CHECK(labels[static_cast<size_t>(kg.entity_id("b"))] == 1.0);
    CHECK(labels[static_cast<size_t>(kg.entity_id("c"))] == 1.0);

    // Subject-mode key (c, p) observes subjects {a, b}.
    const auto sub = kvsall_labels(kg, kg.entity_id("c"), kg.relation_id("p"), false);
    CHECK(sub[static_cast<size_t>(kg.entity_id("a"))] == 1.0);
    CHECK(sub[static_cast<size_t>(kg.entity_id("b"))] == 1.0);
}

TEST_CASE("1vsAll contract: both sides score all entities") {
    // |E| = 10 → 20 corruption scores per positive (10 per side).
    const auto kg = kgp_test::letter_graph(
        {"a p b", "c p d", "e p f", "g p h", "i p j"});
    CHECK(kg.num_entities() == 10);
    const auto m = init_model(ModelKind::DistMult, 4, kg.num_entities(), kg.num_relations(), 3);
    std::vector<double> obj(m.n_entities), sub(m.n_entities);
    m.score_all_objects(0, 0, obj);
    m.score_all_subjects(0, 1, sub);
    CHECK(obj.size() + sub.size() == 20);
}

TEST_CASE("loss values: pinned examples") {
    SUBCASE("BCE at f=0, y=1 is ln 2") {
        const double scores[] = {0.0};
        const double labels[] = {1.0};
        const auto lg = bce_loss(scores, labels);
        CHECK(lg.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(lg.dscores[0] == doctest::Approx(-0.5));
    }
    SUBCASE("CE with a single candidate is 0 regardless of score") {
        const double scores[] = {123.45};
        const double labels[] = {1.0};
        CHECK(ce_loss(scores, labels).value == doctest::Approx(0.0));
    }
    SUBCASE("MarginRank at margin 9 with equal scores is 9") {
        const double negs[] = {1.5};
        const auto mg = margin_rank_loss(1.5, negs, 9.0);
        CHECK(mg.value == doctest::Approx(9.0));
    }
    SUBCASE("non-finite scores are rejected") {
        const double scores[] = {std::numeric_limits<double>::infinity()};
        const double labels[] = {1.0};
        CHECK_THROWS_AS(bce_loss(scores, labels), Error);
        CHECK_THROWS_AS(ce_loss(scores, labels), Error);
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(99);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores(5), labels(5, 0.0);
        for (auto& s : scores) s = rng.uniform(-3.0, 3.0);
        labels[static_cast<size_t>(rng.below(5))] = 1.0;
        labels[static_cast<size_t>(rng.below(5))] = 1.0;

        for (int which = 0; which < 2; ++which) {
            auto eval_loss = [&](const std::vector<double>& sc) {
                return which == 0 ? bce_loss(sc, labels).value : ce_loss(sc, labels).value;
            };
            const auto lg = which == 0 ? bce_loss(scores, labels) : ce_loss(scores, labels);
            for (size_t i = 0; i < scores.size(); ++i) {
                auto up = scores, down = scores;
                up[i] += h;
                down[i] -= h;
                const double fd = (eval_loss(up) - eval_loss(down)) / (2.0 * h);
                CHECK(lg.dscores[i] == doctest::Approx(fd).epsilon(1e-4));
            }
        }

        // MarginRank: both sign conventions.
        std::vector<double> negs(4);
        for (auto& s : negs) s = rng.uniform(-3.0, 3.0);
        const double pos = rng.uniform(-3.0, 3.0);
        for (bool paper_sign : {false, true}) {
            const auto mg = margin_rank_loss(pos, negs, 1.0, paper_sign);
            const double fd_pos = (margin_rank_loss(pos + h, negs, 1.0, paper_sign).value -
                                   margin_rank_loss(pos - h, negs, 1.0, paper_sign).value) /
                                  (2.0 * h);
            CHECK(mg.dpos == doctest::Approx(fd_pos).epsilon(1e-4));
        }
    }
}

TEST_CASE("config validation enforces loss/strategy pairing") {
    TrainConfig cfg;
    cfg.loss = LossKind::MarginRank;
    cfg.strategy = Strategy::KvsAll;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.strategy = Strategy::NegSamp;
    CHECK_NOTHROW(cfg.validate());
    cfg.loss = LossKind::CrossEntropy;
    cfg.strategy = Strategy::KvsAll;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.strategy = Strategy::OneVsAll;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("train: lr=0 leaves parameters unchanged") {
    const auto kg = small_fixture();
    TrainConfig cfg;
    cfg.strategy = Strategy::NegSamp;
    cfg.loss = LossKind::BCE;
    cfg.lr = 0.0;
    cfg.epochs = 3;
    cfg.seed = 11;
    const auto result = train(kg, ModelSpec{ModelKind::DistMult, 8}, cfg);
    const auto fresh = init_model(ModelKind::DistMult, 8, kg.num_entities(), kg.num_relations(), 11);
    CHECK(result.model.E == fresh.E);
    CHECK(result.model.R == fresh.R);
}

TEST_CASE("train: fixed seed gives bit-identical checkpoints") {
    const auto kg = small_fixture();
    for (Strategy strat : {Strategy::NegSamp, Strategy::OneVsAll, Strategy::KvsAll}) {
        TrainConfig cfg;
        cfg.strategy = strat;
        cfg.loss = strat == Strategy::KvsAll ? LossKind::BCE : LossKind::CrossEntropy;
        cfg.epochs = 5;
        cfg.seed = 23;
        const auto a = train(kg, ModelSpec{ModelKind::DistMult, 8}, cfg);
        const auto b = train(kg, ModelSpec{ModelKind::DistMult, 8}, cfg);
        CHECK(a.model.E == b.model.E);
        CHECK(a.model.R == b.model.R);
        CHECK(a.loss_trace == b.loss_trace);
    }
}

TEST_CASE("train: N3 weight 0 equals unregularized training exactly") {
    const auto kg = small_fixture();
    TrainConfig base;
    base.strategy = Strategy::KvsAll;
    base.loss = LossKind::BCE;
    base.epochs = 4;
    base.seed = 9;
    TrainConfig with_n3 = base;
    with_n3.regularizer = RegKind::N3;
    with_n3.reg_weight = 0.0;
    const auto a = train(kg, ModelSpec{ModelKind::DistMult, 8}, base);
    const auto b = train(kg, ModelSpec{ModelKind::DistMult, 8}, with_n3);
    CHECK(a.model.E == b.model.E);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("train: loss decreases on the fixture across seeds") {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto kg = small_fixture(seed);
        TrainConfig cfg;
        cfg.strategy = Strategy::OneVsAll;
        cfg.loss = LossKind::CrossEntropy;
        cfg.lr = 0.01;
        cfg.epochs = 50;
        cfg.batch_size = 32;
        cfg.seed = seed;
        const auto result = train(kg, ModelSpec{ModelKind::DistMult, 16}, cfg);
        CHECK(result.loss_trace.back() < result.loss_trace.front());
    }
}

TEST_CASE("train: memorizes a 50-triple fixture to train MRR >= 0.9") {
    // ~50 train triples at 18 entities.
    const auto kg = small_fixture(5);
    REQUIRE(kg.train().size() >= 35);
    REQUIRE(kg.train().size() <= 70);
    TrainConfig cfg;
    cfg.strategy = Strategy::OneVsAll;
    cfg.loss = LossKind::CrossEntropy;
    cfg.lr = 0.05;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.seed = 7;
    const auto result = train(kg, ModelSpec{ModelKind::DistMult, 16}, cfg);
    const auto report = evaluate(result.model, kg, kg.train(), RankOptions{true});
    CHECK(report.mrr >= 0.9);
}

TEST_CASE("train: divergence aborts with the epoch index") {
    const auto kg = small_fixture();
    TrainConfig cfg;
    cfg.strategy = Strategy::NegSamp;
    cfg.loss = LossKind::BCE;
    cfg.lr = 1e154;  // drives scores to overflow within a couple of epochs
    cfg.epochs = 20;
    cfg.seed = 1;
    CHECK_THROWS_WITH_AS(train(kg, ModelSpec{ModelKind::DistMult, 8}, cfg),
                         doctest::Contains("epoch"), Error);
}

TEST_CASE("write_loss_trace emits epoch,loss CSV") {
    kgp_test::TempDir dir("trace");
    write_loss_trace({0.5, 0.25}, dir.path / "loss.csv");
    std::ifstream in(dir.path / "loss.csv");
    std::string l0, l1, l2;
    std::getline(in, l0);
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l0 == "epoch,loss");
    CHECK(l1 == "0,0.5");
    CHECK(l2 == "1,0.25");
}
