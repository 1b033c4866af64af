#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgp/graph.hpp"
#include "kgp/inference.hpp"

namespace kgp {

// Declared relation semantics for the synthetic generator. A spec may span
// several relation slots: an inverse pair creates (r, r_inv), a composition
// creates (r1, r2, r_head).
enum class RelationSemantics { Symmetric, InversePair, CompositionTriple, Random };

RelationSemantics relation_semantics_from_string(const std::string& name);

struct RelationSpec {
    RelationSemantics semantics = RelationSemantics::Random;
    // Pattern instances generated = max(1, round(density * n_entities)).
    double density = 1.0;
};

struct SyntheticKgConfig {
    size_t n_entities = 60;
    std::vector<RelationSpec> relations;
    double noise = 0.0;  // fraction of instances violating the declared semantics
    size_t blocks = 4;   // community blocks; endpoints are sampled within a block
    uint64_t seed = 0;
};

struct PlantedPattern {
    Pattern pattern = Pattern::Symmetry;
    int32_t r_head = -1;  // the implied relation
    int32_t r_a = -1;     // body relation (inverse / first hop); -1 when unused
    int32_t r_b = -1;     // second hop for composition
};

struct SyntheticKg {
    KnowledgeGraph graph;
    std::vector<PlantedPattern> planted;
};

// Entities are e0..e{n-1}; relations r0..r{m-1} in declaration order. Pattern
// instances keep all their triples in the same split (80/10/10 by instance,
// stratified per relation spec), so the planted semantics hold on the train
// set up to the declared noise fraction. Deterministic per seed.
SyntheticKg generate_synthetic_kg(const SyntheticKgConfig& config);

}  // namespace kgp
