#include "kgp/graph.hpp"

#include <algorithm>
#include <fstream>

#include "kgp/error.hpp"

namespace kgp {

namespace {

namespace fs = std::filesystem;

fs::path find_split_file(const fs::path& dir, const std::string& stem) {
    for (const auto& name : {stem + ".txt", stem, stem + ".tsv"}) {
        fs::path p = dir / name;
        if (fs::exists(p)) return p;
    }
    fail("dataset file not found: ", (dir / (stem + ".txt")).string());
}

struct RawTriple {
    std::string s, r, o;
};

std::vector<RawTriple> read_tsv_triples(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open ", path.string());
    std::vector<RawTriple> rows;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        size_t t3 = (t2 == std::string::npos) ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos)
            fail("malformed line in ", path.string(), ":", line_no, " (expected 3 tab-separated fields)");
        rows.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    return rows;
}

uint64_t mix(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

uint64_t hash_string(const std::string& s) {
    // FNV-1a
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

KnowledgeGraph KnowledgeGraph::load_dataset(const std::filesystem::path& dir) {
    require(std::filesystem::is_directory(dir), "not a dataset directory: ", dir.string());
    const auto raw_train = read_tsv_triples(find_split_file(dir, "train"));
    const auto raw_valid = read_tsv_triples(find_split_file(dir, "valid"));
    const auto raw_test = read_tsv_triples(find_split_file(dir, "test"));

    KnowledgeGraph kg;
    auto intern = [](std::unordered_map<std::string, int32_t>& ids, std::vector<std::string>& names,
                     const std::string& label) {
        auto it = ids.find(label);
        if (it != ids.end()) return it->second;
        int32_t id = static_cast<int32_t>(names.size());
        names.push_back(label);
        ids.emplace(label, id);
        return id;
    };

    for (const auto& row : raw_train) {
        Triple t;
        t.s = intern(kg.entity_ids_, kg.entity_names_, row.s);
        t.r = intern(kg.relation_ids_, kg.relation_names_, row.r);
        t.o = intern(kg.entity_ids_, kg.entity_names_, row.o);
        if (kg.train_set_.insert(t).second) {
            kg.train_.push_back(t);
        } else {
            ++kg.load_stats_.duplicate_train_lines;
        }
    }

    auto resolve_eval = [&kg](const std::vector<RawTriple>& rows, std::vector<Triple>& out, size_t& dropped) {
        for (const auto& row : rows) {
            int32_t s = kg.entity_id(row.s);
            int32_t r = kg.relation_id(row.r);
            int32_t o = kg.entity_id(row.o);
            if (s < 0 || r < 0 || o < 0) {
                ++dropped;
                continue;
            }
            out.push_back({s, r, o});
        }
    };
    resolve_eval(raw_valid, kg.valid_, kg.load_stats_.valid_dropped_unseen);
    resolve_eval(raw_test, kg.test_, kg.load_stats_.test_dropped_unseen);

    kg.build_indexes();
    return kg;
}

KnowledgeGraph KnowledgeGraph::from_parts(std::vector<std::string> entity_names,
                                          std::vector<std::string> relation_names,
                                          std::vector<Triple> train, std::vector<Triple> valid,
                                          std::vector<Triple> test, bool filter_unseen) {
    KnowledgeGraph kg;
    kg.entity_names_ = std::move(entity_names);
    kg.relation_names_ = std::move(relation_names);
    for (size_t i = 0; i < kg.entity_names_.size(); ++i)
        kg.entity_ids_.emplace(kg.entity_names_[i], static_cast<int32_t>(i));
    for (size_t i = 0; i < kg.relation_names_.size(); ++i)
        kg.relation_ids_.emplace(kg.relation_names_[i], static_cast<int32_t>(i));
    require(kg.entity_ids_.size() == kg.entity_names_.size(), "duplicate entity labels");
    require(kg.relation_ids_.size() == kg.relation_names_.size(), "duplicate relation labels");

    for (const auto& t : train) {
        kg.check_triple(t);
        if (kg.train_set_.insert(t).second) {
            kg.train_.push_back(t);
        } else {
            ++kg.load_stats_.duplicate_train_lines;
        }
    }

    std::vector<char> seen(kg.entity_names_.size(), 0);
    for (const auto& t : kg.train_) {
        seen[static_cast<size_t>(t.s)] = 1;
        seen[static_cast<size_t>(t.o)] = 1;
    }
    auto keep_eval = [&](std::vector<Triple>& src, std::vector<Triple>& dst, size_t& dropped) {
        for (const auto& t : src) {
            kg.check_triple(t);
            if (filter_unseen && (!seen[static_cast<size_t>(t.s)] || !seen[static_cast<size_t>(t.o)])) {
                ++dropped;
                continue;
            }
            dst.push_back(t);
        }
    };
    keep_eval(valid, kg.valid_, kg.load_stats_.valid_dropped_unseen);
    keep_eval(test, kg.test_, kg.load_stats_.test_dropped_unseen);

    kg.build_indexes();
    return kg;
}

void KnowledgeGraph::check_triple(const Triple& t) const {
    require(t.s >= 0 && static_cast<size_t>(t.s) < entity_names_.size() && t.o >= 0 &&
                static_cast<size_t>(t.o) < entity_names_.size() && t.r >= 0 &&
                static_cast<size_t>(t.r) < relation_names_.size(),
            "triple ids out of range: (", t.s, ", ", t.r, ", ", t.o, ")");
}

void KnowledgeGraph::build_indexes() {
    existing_ = train_set_;
    for (const auto& t : valid_) existing_.insert(t);
    for (const auto& t : test_) existing_.insert(t);

    by_subject_.assign(entity_names_.size(), {});
    by_object_.assign(entity_names_.size(), {});
    for (uint32_t i = 0; i < train_.size(); ++i) {
        by_subject_[static_cast<size_t>(train_[i].s)].push_back(i);
        by_object_[static_cast<size_t>(train_[i].o)].push_back(i);
    }
}

int32_t KnowledgeGraph::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    return it == entity_ids_.end() ? -1 : it->second;
}

int32_t KnowledgeGraph::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    return it == relation_ids_.end() ? -1 : it->second;
}

const std::vector<uint32_t>& KnowledgeGraph::by_subject(int32_t entity) const {
    require(entity >= 0 && static_cast<size_t>(entity) < by_subject_.size(), "unknown entity id ", entity);
    return by_subject_[static_cast<size_t>(entity)];
}

const std::vector<uint32_t>& KnowledgeGraph::by_object(int32_t entity) const {
    require(entity >= 0 && static_cast<size_t>(entity) < by_object_.size(), "unknown entity id ", entity);
    return by_object_[static_cast<size_t>(entity)];
}

Neighbourhood KnowledgeGraph::neighbourhood(const Triple& target) const {
    check_triple(target);
    std::vector<uint32_t> idx;
    for (int32_t e : {target.s, target.o}) {
        const auto& sub = by_subject(e);
        const auto& obj = by_object(e);
        idx.insert(idx.end(), sub.begin(), sub.end());
        idx.insert(idx.end(), obj.begin(), obj.end());
        if (target.s == target.o) break;
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

    Neighbourhood n;
    n.target = target;
    n.members.reserve(idx.size());
    for (uint32_t i : idx) {
        if (train_[i] == target) continue;
        n.members.push_back(train_[i]);
    }
    std::sort(n.members.begin(), n.members.end());
    return n;
}

KnowledgeGraph KnowledgeGraph::apply_edits(const std::vector<Triple>& deletions,
                                           const std::vector<Triple>& additions,
                                           ApplyStats* stats) const {
    TripleSet del_set;
    std::string missing;
    for (const auto& t : deletions) {
        check_triple(t);
        if (!in_train(t))
            missing += cat(missing.empty() ? "" : ", ", "(", entity_name(t.s), ", ", relation_name(t.r),
                           ", ", entity_name(t.o), ")");
        del_set.insert(t);
    }
    require(missing.empty(), "cannot delete triples absent from train: ", missing);

    ApplyStats local;
    std::vector<Triple> new_train;
    new_train.reserve(train_.size() + additions.size());
    TripleSet new_set;
    new_set.reserve(train_.size() + additions.size());
    for (const auto& t : train_) {
        if (del_set.count(t)) {
            ++local.deletions_applied;
            continue;
        }
        new_train.push_back(t);
        new_set.insert(t);
    }
    for (const auto& t : additions) {
        check_triple(t);
        if (new_set.insert(t).second) {
            new_train.push_back(t);
            ++local.additions_applied;
        } else {
            ++local.additions_skipped;
        }
    }
    if (stats) *stats = local;
    return from_parts(entity_names_, relation_names_, std::move(new_train), valid_, test_,
                      /*filter_unseen=*/false);
}

KnowledgeGraph KnowledgeGraph::apply_edits(const std::vector<Edit>& edits, ApplyStats* stats) const {
    std::vector<Triple> dels, adds;
    for (const auto& e : edits) {
        (e.op == Edit::Op::Del ? dels : adds).push_back(e.t);
    }
    return apply_edits(dels, adds, stats);
}

void KnowledgeGraph::write_dataset(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto write_split = [this](const std::filesystem::path& path, const std::vector<Triple>& triples) {
        std::ofstream out(path, std::ios::binary);
        require(out.good(), "cannot write ", path.string());
        for (const auto& t : triples)
            out << entity_name(t.s) << '\t' << relation_name(t.r) << '\t' << entity_name(t.o) << '\n';
        require(out.good(), "write failed: ", path.string());
    };
    write_split(dir / "train.txt", train_);
    write_split(dir / "valid.txt", valid_);
    write_split(dir / "test.txt", test_);
}

uint64_t KnowledgeGraph::content_hash() const {
    uint64_t h = 0x243f6a8885a308d3ull;
    h = mix(h, entity_names_.size());
    h = mix(h, relation_names_.size());
    for (const auto& s : entity_names_) h = mix(h, hash_string(s));
    for (const auto& s : relation_names_) h = mix(h, hash_string(s));
    auto mix_split = [&h](const std::vector<Triple>& split) {
        // Order-insensitive within a split so that logically equal graphs match.
        uint64_t acc = 0;
        for (const auto& t : split) {
            uint64_t z = TripleHash{}(t);
            acc += z * 0x9e3779b97f4a7c15ull + 1;
        }
        h = mix(h, split.size());
        h = mix(h, acc);
    };
    mix_split(train_);
    mix_split(valid_);
    mix_split(test_);
    return h;
}

void write_edits(const std::vector<Edit>& edits, const KnowledgeGraph& kg,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    for (const auto& e : edits) {
        out << (e.op == Edit::Op::Del ? "del" : "add") << '\t' << kg.entity_name(e.t.s) << '\t'
            << kg.relation_name(e.t.r) << '\t' << kg.entity_name(e.t.o) << '\n';
    }
    require(out.good(), "write failed: ", path.string());
}

std::vector<Edit> read_edits(const KnowledgeGraph& kg, const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open ", path.string());
    std::vector<Edit> edits;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        size_t t3 = (t2 == std::string::npos) ? std::string::npos : line.find('\t', t2 + 1);
        size_t t4 = (t3 == std::string::npos) ? std::string::npos : line.find('\t', t3 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 == std::string::npos ||
            t4 != std::string::npos)
            fail("malformed line in ", path.string(), ":", line_no, " (expected 4 tab-separated fields)");
        const std::string op = line.substr(0, t1);
        require(op == "del" || op == "add", path.string(), ":", line_no, ": unknown op '", op, "'");
        Edit e;
        e.op = (op == "del") ? Edit::Op::Del : Edit::Op::Add;
        int32_t s = kg.entity_id(line.substr(t1 + 1, t2 - t1 - 1));
        int32_t r = kg.relation_id(line.substr(t2 + 1, t3 - t2 - 1));
        int32_t o = kg.entity_id(line.substr(t3 + 1));
        require(s >= 0 && r >= 0 && o >= 0, path.string(), ":", line_no, ": unknown label");
        e.t = {s, r, o};
        edits.push_back(e);
    }
    return edits;
}

}  // namespace kgp
