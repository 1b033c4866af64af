#pragma once

// Test-only full-enumeration ranking oracle, independent of the library's
// rank() implementation path. Scores every candidate with model.score and
// counts comparisons directly.

#include <vector>

#include "kgp/eval.hpp"
#include "kgp/graph.hpp"
#include "kgp/model.hpp"

namespace kgp_test {

inline double naive_rank(const kgp::EmbeddingModel& model, const kgp::Triple& t,
                         const kgp::KnowledgeGraph& kg, kgp::Side side, bool filtered,
                         kgp::TiePolicy policy) {
    using namespace kgp;
    const double true_score = model.score(t);
    size_t greater = 0, equal = 0;
    for (size_t e = 0; e < kg.num_entities(); ++e) {
        const int32_t id = static_cast<int32_t>(e);
        Triple cand = t;
        if (side == Side::Object) {
            if (id == t.o) continue;
            cand.o = id;
        } else {
            if (id == t.s) continue;
            cand.s = id;
        }
        if (filtered && kg.exists_anywhere(cand)) continue;
        const double sc = model.score(cand);
        if (sc > true_score) ++greater;
        if (sc == true_score) ++equal;
    }
    switch (policy) {
        case TiePolicy::Optimistic: return 1.0 + static_cast<double>(greater);
        case TiePolicy::Pessimistic: return 1.0 + static_cast<double>(greater + equal);
        case TiePolicy::Average:
            return 1.0 + static_cast<double>(greater) + static_cast<double>(equal) / 2.0;
    }
    return 0.0;
}

}  // namespace kgp_test
