#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgp {

// A (subject, relation, object) fact, stored as vocabulary indexes.
struct Triple {
    int32_t s = 0;
    int32_t r = 0;
    int32_t o = 0;

    auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
    size_t operator()(const Triple& t) const {
        uint64_t z = (static_cast<uint64_t>(static_cast<uint32_t>(t.s)) << 42) ^
                     (static_cast<uint64_t>(static_cast<uint32_t>(t.r)) << 21) ^
                     static_cast<uint64_t>(static_cast<uint32_t>(t.o));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return static_cast<size_t>(z ^ (z >> 31));
    }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

struct Edit {
    enum class Op { Del, Add };
    Op op = Op::Add;
    Triple t;

    auto operator<=>(const Edit&) const = default;
};

// Counters reported by load_dataset / from_parts.
struct LoadStats {
    size_t duplicate_train_lines = 0;
    size_t valid_dropped_unseen = 0;
    size_t test_dropped_unseen = 0;
};

struct ApplyStats {
    size_t deletions_applied = 0;
    size_t additions_applied = 0;
    size_t additions_skipped = 0;  // already present in train or duplicated in the addition set
};

// Train triples that share an entity with the target; the target itself is excluded.
struct Neighbourhood {
    Triple target;
    std::vector<Triple> members;  // sorted by (s, r, o)
};

// Immutable after construction; perturbation produces a new graph.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    // Reads train/valid/test TSV files ("train.txt" or "train", etc.) from a directory.
    // Vocabularies are built from the train file only, in first-appearance order.
    // Duplicate train lines are collapsed; valid/test triples with unseen entities are dropped.
    static KnowledgeGraph load_dataset(const std::filesystem::path& dir);

    // Assembles a graph from already-indexed parts (used by the synthetic generator
    // and by apply_edits). When filter_unseen is set, valid/test triples whose
    // entities never occur in train are dropped.
    static KnowledgeGraph from_parts(std::vector<std::string> entity_names,
                                     std::vector<std::string> relation_names,
                                     std::vector<Triple> train,
                                     std::vector<Triple> valid,
                                     std::vector<Triple> test,
                                     bool filter_unseen = true);

    Neighbourhood neighbourhood(const Triple& target) const;

    // Returns a new graph with train' = (train \ deletions) ∪ (additions \ train).
    // Deleting a triple absent from train is an error listing the offenders.
    KnowledgeGraph apply_edits(const std::vector<Triple>& deletions,
                               const std::vector<Triple>& additions,
                               ApplyStats* stats = nullptr) const;

    KnowledgeGraph apply_edits(const std::vector<Edit>& edits, ApplyStats* stats = nullptr) const;

    void write_dataset(const std::filesystem::path& dir) const;

    size_t num_entities() const { return entity_names_.size(); }
    size_t num_relations() const { return relation_names_.size(); }

    const std::vector<Triple>& train() const { return train_; }
    const std::vector<Triple>& valid() const { return valid_; }
    const std::vector<Triple>& test() const { return test_; }

    const std::vector<std::string>& entity_names() const { return entity_names_; }
    const std::vector<std::string>& relation_names() const { return relation_names_; }

    const std::string& entity_name(int32_t id) const { return entity_names_.at(static_cast<size_t>(id)); }
    const std::string& relation_name(int32_t id) const { return relation_names_.at(static_cast<size_t>(id)); }

    // -1 when the label is unknown.
    int32_t entity_id(const std::string& name) const;
    int32_t relation_id(const std::string& name) const;

    bool in_train(const Triple& t) const { return train_set_.count(t) > 0; }
    // Membership over train ∪ valid ∪ test (the filtered-evaluation index).
    bool exists_anywhere(const Triple& t) const { return existing_.count(t) > 0; }

    // Train triple indexes per entity.
    const std::vector<uint32_t>& by_subject(int32_t entity) const;
    const std::vector<uint32_t>& by_object(int32_t entity) const;

    const LoadStats& load_stats() const { return load_stats_; }

    // Order-insensitive content hash over vocabularies and the three splits.
    uint64_t content_hash() const;

    void check_triple(const Triple& t) const;

private:
    void build_indexes();

    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, int32_t> entity_ids_;
    std::unordered_map<std::string, int32_t> relation_ids_;

    std::vector<Triple> train_;
    std::vector<Triple> valid_;
    std::vector<Triple> test_;

    TripleSet train_set_;
    TripleSet existing_;

    std::vector<std::vector<uint32_t>> by_subject_;
    std::vector<std::vector<uint32_t>> by_object_;

    LoadStats load_stats_;
};

// Edits TSV: `op<TAB>s<TAB>r<TAB>o` with op in {del, add}; labels, not ids.
void write_edits(const std::vector<Edit>& edits, const KnowledgeGraph& kg,
                 const std::filesystem::path& path);
std::vector<Edit> read_edits(const KnowledgeGraph& kg, const std::filesystem::path& path);

}  // namespace kgp
