#include "kgp/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

RelationSemantics relation_semantics_from_string(const std::string& name) {
    if (name == "symmetric") return RelationSemantics::Symmetric;
    if (name == "inverse_pair" || name == "inverse") return RelationSemantics::InversePair;
    if (name == "composition_triple" || name == "composition")
        return RelationSemantics::CompositionTriple;
    if (name == "random") return RelationSemantics::Random;
    fail("unknown relation semantics '", name, "'");
}

namespace {

// A pattern instance: the triples that must stay in the same split.
using Instance = std::vector<Triple>;

struct EntitySampler {
    size_t n_entities;
    size_t blocks;
    Rng* rng;

    int32_t any() { return static_cast<int32_t>(rng->below(n_entities)); }

    // Mostly samples within the same community block as `near`.
    int32_t near_block(int32_t near) {
        if (blocks <= 1 || rng->uniform01() >= 0.9) return any();
        const size_t per = (n_entities + blocks - 1) / blocks;
        const size_t block = static_cast<size_t>(near) / per;
        const size_t lo = block * per;
        const size_t hi = std::min(n_entities, lo + per);
        return static_cast<int32_t>(lo + rng->below(hi - lo));
    }
};

}  // namespace

SyntheticKg generate_synthetic_kg(const SyntheticKgConfig& config) {
    require(config.n_entities >= 3, "need at least 3 entities");
    require(!config.relations.empty(), "no relation specs");
    require(config.noise >= 0.0 && config.noise < 1.0, "noise must be in [0,1)");

    SyntheticKg out;
    Rng rng(config.seed ^ 0x73796e74686b67ull);
    EntitySampler sampler{config.n_entities, std::max<size_t>(1, config.blocks), &rng};

    std::vector<std::string> relation_names;
    auto add_relation = [&relation_names]() {
        relation_names.push_back("r" + std::to_string(relation_names.size()));
        return static_cast<int32_t>(relation_names.size() - 1);
    };

    std::vector<Triple> train, valid, test;
    TripleSet used;

    auto fresh_instance = [&](auto&& make) -> Instance {
        // Regenerate on collision with already-emitted triples.
        for (int attempt = 0; attempt < 200; ++attempt) {
            Instance inst = make();
            bool clash = false;
            for (const Triple& t : inst)
                if (used.count(t)) clash = true;
            if (clash) continue;
            for (const Triple& t : inst) used.insert(t);
            return inst;
        }
        fail("infeasible synthetic config: cannot place new pattern instances (density too high)");
    };

    for (const RelationSpec& spec : config.relations) {
        const size_t count = std::max<size_t>(
            1, static_cast<size_t>(std::llround(spec.density * static_cast<double>(config.n_entities))));
        std::vector<Instance> instances;
        instances.reserve(count);

        switch (spec.semantics) {
            case RelationSemantics::Symmetric: {
                const int32_t r = add_relation();
                out.planted.push_back({Pattern::Symmetry, r, r, -1});
                for (size_t i = 0; i < count; ++i) {
                    instances.push_back(fresh_instance([&]() -> Instance {
                        const int32_t a = sampler.any();
                        int32_t b = sampler.near_block(a);
                        while (b == a) b = sampler.any();
                        if (rng.uniform01() < config.noise) return {{a, r, b}};
                        return {{a, r, b}, {b, r, a}};
                    }));
                }
                break;
            }
            case RelationSemantics::InversePair: {
                const int32_t r = add_relation();
                const int32_t r_inv = add_relation();
                out.planted.push_back({Pattern::Inversion, r, r_inv, -1});
                for (size_t i = 0; i < count; ++i) {
                    instances.push_back(fresh_instance([&]() -> Instance {
                        const int32_t a = sampler.any();
                        int32_t b = sampler.near_block(a);
                        while (b == a) b = sampler.any();
                        if (rng.uniform01() < config.noise) return {{a, r, b}};
                        return {{a, r, b}, {b, r_inv, a}};
                    }));
                }
                break;
            }
            case RelationSemantics::CompositionTriple: {
                const int32_t r1 = add_relation();
                const int32_t r2 = add_relation();
                const int32_t r_head = add_relation();
                out.planted.push_back({Pattern::Composition, r_head, r1, r2});
                for (size_t i = 0; i < count; ++i) {
                    instances.push_back(fresh_instance([&]() -> Instance {
                        const int32_t a = sampler.any();
                        int32_t c = sampler.near_block(a);
                        while (c == a) c = sampler.any();
                        int32_t b = sampler.near_block(a);
                        while (b == a || b == c) b = sampler.any();
                        if (rng.uniform01() < config.noise) return {{a, r1, c}, {c, r2, b}};
                        return {{a, r1, c}, {c, r2, b}, {a, r_head, b}};
                    }));
                }
                break;
            }
            case RelationSemantics::Random: {
                const int32_t r = add_relation();
                for (size_t i = 0; i < count; ++i) {
                    instances.push_back(fresh_instance([&]() -> Instance {
                        const int32_t a = sampler.any();
                        int32_t b = sampler.near_block(a);
                        while (b == a) b = sampler.any();
                        return {{a, r, b}};
                    }));
                }
                break;
            }
        }

        // 80/10/10 split by instance, stratified per relation spec.
        rng.shuffle(instances);
        const size_t n_valid = instances.size() / 10;
        const size_t n_test = instances.size() / 10;
        const size_t n_train = instances.size() - n_valid - n_test;
        for (size_t i = 0; i < instances.size(); ++i) {
            auto& dst = i < n_train ? train : (i < n_train + n_valid ? valid : test);
            for (const Triple& t : instances[i]) dst.push_back(t);
        }
    }

    std::vector<std::string> entity_names;
    entity_names.reserve(config.n_entities);
    for (size_t i = 0; i < config.n_entities; ++i) entity_names.push_back("e" + std::to_string(i));

    out.graph = KnowledgeGraph::from_parts(std::move(entity_names), std::move(relation_names),
                                           std::move(train), std::move(valid), std::move(test),
                                           /*filter_unseen=*/true);
    return out;
}

}  // namespace kgp
