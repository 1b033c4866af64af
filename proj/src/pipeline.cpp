#include "kgp/pipeline.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/oracle.hpp"
#include "kgp/trainer.hpp"

namespace kgp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string triple_str(const KnowledgeGraph& kg, const Triple& t) {
    return kg.entity_name(t.s) + " " + kg.relation_name(t.r) + " " + kg.entity_name(t.o);
}

}  // namespace

KnowledgeGraph load_graph(const DatasetConfig& cfg) {
    if (cfg.synthetic) return generate_synthetic_kg(*cfg.synthetic).graph;
    return KnowledgeGraph::load_dataset(cfg.path);
}

AttackOutput generate_edits(const ExperimentConfig& cfg, const EmbeddingModel& model,
                            const KnowledgeGraph& kg, const std::vector<Triple>& targets) {
    AttackOutput out;
    const AttackConfig& atk = cfg.attack;
    if (atk.family == AttackFamily::None) return out;

    // Neighbourhoods are precomputed; timing covers edit selection only.
    std::vector<Neighbourhood> neighbourhoods;
    if (atk.family == AttackFamily::Attribution ||
        (atk.family == AttackFamily::Random && atk.mode == EditMode::Neighbourhood &&
         atk.op == EditOp::Del) ||
        (atk.family == AttackFamily::Direct && atk.op == EditOp::Del)) {
        neighbourhoods.reserve(targets.size());
        for (const Triple& z : targets) neighbourhoods.push_back(kg.neighbourhood(z));
    }

    InferenceContext ctx(model, ClusterConfig{atk.clusters, default_elbow_grid(), atk.seed});
    if (atk.family == AttackFamily::Inference) {
        // Step-1 caches and clustering are shared across targets; build them
        // before the timed selection loop, mirroring the runtime protocol.
        if (atk.pattern == Pattern::Inversion || atk.pattern == Pattern::Composition) {
            TripleSet seen;
            for (const Triple& z : targets) {
                if (!seen.insert({0, z.r, 0}).second) continue;
                if (atk.pattern == Pattern::Inversion) ctx.inverse_of(z.r);
                if (atk.pattern == Pattern::Composition) ctx.composition_of(z.r);
            }
        }
        if (atk.pattern == Pattern::Composition && atk.heuristic == DecoyHeuristic::SoftTruth)
            ctx.clustering();
    }

    TripleSet emitted_del, emitted_add;
    auto emit = [&](const Triple& target, const std::string& method, Edit edit,
                    const std::string& decoy, double score, double ms) {
        auto& seen = edit.op == Edit::Op::Del ? emitted_del : emitted_add;
        if (seen.insert(edit.t).second) out.edits.push_back(edit);
        out.provenance.push_back({target, to_string(atk.family), method, edit, decoy, score, ms});
    };

    const auto attack_start = Clock::now();
    for (size_t i = 0; i < targets.size(); ++i) {
        const Triple& z = targets[i];
        const auto target_start = Clock::now();
        switch (atk.family) {
            case AttackFamily::Attribution: {
                const Neighbourhood& n = neighbourhoods[i];
                require(!n.members.empty(), "target ", triple_str(kg, z),
                        " has no attack surface (empty neighbourhood)");
                const auto scores = influence_scores(atk.method, model, z, n,
                                                     GradConfig{atk.grad_loss}, atk.lissa, &kg);
                const double ms = seconds_since(target_start) * 1e3;
                if (atk.op == EditOp::Del) {
                    emit(z, to_string(atk.method), {Edit::Op::Del, scores[0].candidate}, "",
                         scores[0].value, ms);
                } else {
                    for (size_t b = 0; b < scores.size() && b < atk.budget; ++b) {
                        const Triple add = dissimilar_replacement(model, kg, z, scores[b].candidate);
                        emit(z, to_string(atk.method), {Edit::Op::Add, add}, "", scores[b].value,
                             seconds_since(target_start) * 1e3);
                    }
                }
                break;
            }
            case AttackFamily::Inference: {
                const auto result = inference_attack(model, kg, z, atk.pattern, atk.heuristic, ctx);
                const double ms = seconds_since(target_start) * 1e3;
                const std::string method = to_string(atk.pattern) + "_" + to_string(atk.heuristic);
                for (size_t a = 0; a < result.additions.size(); ++a) {
                    const auto& decoy = result.decoys[result.addition_decoy[a]];
                    const double gscore = result.grounding_scores[result.addition_decoy[a]];
                    emit(z, method, {Edit::Op::Add, result.additions[a]},
                         triple_str(kg, decoy.decoy), gscore, ms);
                }
                break;
            }
            case AttackFamily::Random: {
                const auto edits = random_edit(kg, z, atk.mode,
                                               atk.op == EditOp::Del ? EditOp::Del : EditOp::Add,
                                               atk.budget, atk.seed + i);
                const double ms = seconds_since(target_start) * 1e3;
                for (const Edit& e : edits)
                    emit(z, atk.mode == EditMode::Neighbourhood ? "random_n" : "random_g", e, "",
                         0.0, ms);
                break;
            }
            case AttackFamily::Direct: {
                if (atk.op == EditOp::Del) {
                    const Triple del = direct_del(model, kg, z, atk.direct);
                    emit(z, "direct_del", {Edit::Op::Del, del}, "",
                         direct_score_drop(model, z, del, atk.direct),
                         seconds_since(target_start) * 1e3);
                } else {
                    const Triple add = direct_add(model, kg, z, atk.direct, atk.seed + i);
                    emit(z, "direct_add", {Edit::Op::Add, add}, "",
                         direct_score_drop(model, z, add, atk.direct),
                         seconds_since(target_start) * 1e3);
                }
                break;
            }
            case AttackFamily::None: break;
        }
    }
    out.selection_seconds = seconds_since(attack_start);
    return out;
}

void write_provenance_csv(const std::vector<ProvenanceRow>& rows, const KnowledgeGraph& kg,
                          const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    out << "target,family,method,op,edit,decoy,score,elapsed_ms\n";
    for (const auto& r : rows) {
        out << triple_str(kg, r.target) << ',' << r.family << ',' << r.method << ','
            << (r.edit.op == Edit::Op::Del ? "del" : "add") << ',' << triple_str(kg, r.edit.t)
            << ',' << r.decoy << ',' << r.score << ',' << r.elapsed_ms << '\n';
    }
    require(out.good(), "write failed: ", path.string());
}

RunReport run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    cfg.save(out_dir / "config.json");

    RunReport report;
    auto timed = [&report](const std::string& stage, auto&& fn) {
        const auto start = Clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            report.stage_seconds.emplace_back(stage, seconds_since(start));
        } else {
            auto value = fn();
            report.stage_seconds.emplace_back(stage, seconds_since(start));
            return value;
        }
    };

    const KnowledgeGraph kg = timed("load", [&] { return load_graph(cfg.dataset); });
    const uint64_t kg_hash = kg.content_hash();

    const TrainResult original = timed("train_original", [&] { return train(kg, cfg.model, cfg.train); });
    save_checkpoint(original.model, out_dir / "original.ckpt", kg_hash);
    write_loss_trace(original.loss_trace, out_dir / "loss_original.csv");

    const RankOptions rank_opts{true, TiePolicy::Average, cfg.workers};
    const EvalReport test_report = timed("eval_test", [&] {
        return evaluate(original.model, kg, kg.test(), rank_opts);
    });
    write_ranks_tsv(test_report, kg, out_dir / "ranks_test_original.tsv");
    write_metrics(test_report, out_dir / "metrics_test_original.txt");

    const std::vector<Triple> targets = select_targets(test_report, cfg.targets.rank_threshold,
                                                       cfg.targets.cap, cfg.targets.seed,
                                                       cfg.targets.side);
    write_targets_tsv(targets, kg, out_dir / "targets.tsv");

    report.original_targets = timed("eval_targets_original", [&] {
        return evaluate(original.model, kg, targets, rank_opts);
    });
    write_ranks_tsv(report.original_targets, kg, out_dir / "ranks_targets_original.tsv");
    write_metrics(report.original_targets, out_dir / "metrics_targets_original.txt");

    const AttackOutput attack = generate_edits(cfg, original.model, kg, targets);
    report.stage_seconds.emplace_back("attack_selection", attack.selection_seconds);
    write_edits(attack.edits, kg, out_dir / "edits.tsv");
    write_provenance_csv(attack.provenance, kg, out_dir / "provenance.csv");
    report.edits_emitted = attack.edits.size();

    ApplyStats apply_stats;
    const KnowledgeGraph poisoned_kg = timed("apply_edits", [&] {
        return kg.apply_edits(attack.edits, &apply_stats);
    });
    report.edits_applied = apply_stats.deletions_applied + apply_stats.additions_applied;
    report.edits_skipped = apply_stats.additions_skipped;
    poisoned_kg.write_dataset(out_dir / "poisoned");

    const TrainResult poisoned = timed("train_poisoned", [&] {
        return train(poisoned_kg, cfg.model, cfg.train);
    });
    save_checkpoint(poisoned.model, out_dir / "poisoned.ckpt", poisoned_kg.content_hash());
    write_loss_trace(poisoned.loss_trace, out_dir / "loss_poisoned.csv");

    report.poisoned_targets = timed("eval_targets_poisoned", [&] {
        return evaluate(poisoned.model, poisoned_kg, targets, rank_opts);
    });
    write_ranks_tsv(report.poisoned_targets, kg, out_dir / "ranks_targets_poisoned.tsv");
    write_metrics(report.poisoned_targets, out_dir / "metrics_targets_poisoned.txt");

    report.delta = delta_mrr(report.original_targets, report.poisoned_targets);
    write_run_report(report, out_dir / "run_report.json");
    return report;
}

void write_run_report(const RunReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["original_mrr"] = report.delta.original_mrr;
    j["poisoned_mrr"] = report.delta.poisoned_mrr;
    j["delta_mrr_orig_minus_pois_pct"] = report.delta.orig_minus_pois_pct;
    j["delta_mrr_pois_minus_orig_pct"] = report.delta.pois_minus_orig_pct;
    j["edits_emitted"] = report.edits_emitted;
    j["edits_applied"] = report.edits_applied;
    j["edits_skipped"] = report.edits_skipped;
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& [stage, secs] : report.stage_seconds)
        stages.push_back({{"stage", stage}, {"seconds", secs}});
    j["stage_seconds"] = stages;
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    out << j.dump(2) << "\n";
    require(out.good(), "write failed: ", path.string());
}

}  // namespace kgp
