// kgp: train shallow knowledge-graph embeddings, evaluate filtered link
// prediction, and run data-poisoning attacks with seeded, reproducible runs.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "kgp/config.hpp"
#include "kgp/error.hpp"
#include "kgp/oracle.hpp"
#include "kgp/pipeline.hpp"
#include "kgp/trainer.hpp"

namespace fs = std::filesystem;
using namespace kgp;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out;
    int64_t seed = -1;
    int workers = 0;
};

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg = ExperimentConfig::from_file(opts.config_path);
    if (opts.seed >= 0) {
        cfg.seed = static_cast<uint64_t>(opts.seed);
        cfg.train.seed = cfg.seed;
        cfg.targets.seed = cfg.seed;
        cfg.attack.seed = cfg.seed;
        cfg.attack.lissa.sample_seed = cfg.seed;
        if (cfg.dataset.synthetic) cfg.dataset.synthetic->seed = cfg.seed;
    }
    if (opts.workers > 0) cfg.workers = opts.workers;
    if (!opts.out.empty()) cfg.output = opts.out;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)")
        ->required(config_required);
    cmd->add_option("--out", opts.out, "output directory (overrides config)");
    cmd->add_option("--seed", opts.seed, "seed override for every stage");
    cmd->add_option("--workers", opts.workers, "worker cap override");
}

EmbeddingModel load_compatible_checkpoint(const std::string& path, const KnowledgeGraph& kg) {
    Checkpoint ck = load_checkpoint(path);
    require(ck.dataset_hash == kg.content_hash(),
            "checkpoint was trained on a different dataset (hash mismatch)");
    require(ck.model.n_entities == kg.num_entities() && ck.model.n_relations == kg.num_relations(),
            "checkpoint vocabulary sizes do not match the dataset");
    return std::move(ck.model);
}

int cmd_train(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path out_dir = cfg.output;
    fs::create_directories(out_dir);
    cfg.save(out_dir / "config.json");
    const KnowledgeGraph kg = load_graph(cfg.dataset);
    std::fprintf(stderr, "loaded graph: |E|=%zu |R|=%zu train=%zu valid=%zu test=%zu\n",
                 kg.num_entities(), kg.num_relations(), kg.train().size(), kg.valid().size(),
                 kg.test().size());
    const TrainResult result = train(kg, cfg.model, cfg.train);
    save_checkpoint(result.model, out_dir / "model.ckpt", kg.content_hash());
    write_loss_trace(result.loss_trace, out_dir / "loss.csv");
    if (!result.loss_trace.empty())
        std::fprintf(stderr, "final mean loss: %g\n", result.loss_trace.back());
    std::cout << (out_dir / "model.ckpt").string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint, const std::string& split) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path out_dir = cfg.output;
    fs::create_directories(out_dir);
    const KnowledgeGraph kg = load_graph(cfg.dataset);
    const EmbeddingModel model = load_compatible_checkpoint(checkpoint, kg);
    const std::vector<Triple>& triples =
        split == "train" ? kg.train() : (split == "valid" ? kg.valid() : kg.test());
    require(split == "train" || split == "valid" || split == "test", "unknown split '", split, "'");
    const EvalReport report =
        evaluate(model, kg, triples, RankOptions{true, TiePolicy::Average, cfg.workers});
    write_ranks_tsv(report, kg, out_dir / ("ranks_" + split + ".tsv"));
    write_metrics(report, out_dir / ("metrics_" + split + ".txt"));
    std::printf("mr=%.6f\nmrr=%.6f\nhits1=%.6f\nhits3=%.6f\nhits10=%.6f\n", report.mr, report.mrr,
                report.hits1, report.hits3, report.hits10);
    return 0;
}

int cmd_attack(const CommonOpts& opts, const std::string& checkpoint) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path out_dir = cfg.output;
    fs::create_directories(out_dir);
    const KnowledgeGraph kg = load_graph(cfg.dataset);
    const EmbeddingModel model = load_compatible_checkpoint(checkpoint, kg);
    const EvalReport test_report =
        evaluate(model, kg, kg.test(), RankOptions{true, TiePolicy::Average, cfg.workers});
    const auto targets = select_targets(test_report, cfg.targets.rank_threshold, cfg.targets.cap,
                                        cfg.targets.seed, cfg.targets.side);
    write_targets_tsv(targets, kg, out_dir / "targets.tsv");
    const AttackOutput out = generate_edits(cfg, model, kg, targets);
    write_edits(out.edits, kg, out_dir / "edits.tsv");
    write_provenance_csv(out.provenance, kg, out_dir / "provenance.csv");
    std::fprintf(stderr, "%zu targets, %zu edits, selection %.3fs\n", targets.size(),
                 out.edits.size(), out.selection_seconds);
    std::cout << (out_dir / "edits.tsv").string() << "\n";
    return 0;
}

int cmd_poison(const CommonOpts& opts, const std::string& edits_path) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path out_dir = cfg.output;
    const KnowledgeGraph kg = load_graph(cfg.dataset);
    const auto edits = read_edits(kg, edits_path);
    ApplyStats stats;
    const KnowledgeGraph poisoned = kg.apply_edits(edits, &stats);
    poisoned.write_dataset(out_dir);
    std::fprintf(stderr, "applied %zu deletions, %zu additions (%zu duplicates skipped)\n",
                 stats.deletions_applied, stats.additions_applied, stats.additions_skipped);
    std::cout << out_dir.string() << "\n";
    return 0;
}

int cmd_pipeline(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const RunReport report = run_pipeline(cfg, cfg.output);
    std::printf("original_mrr=%.6f\npoisoned_mrr=%.6f\ndelta_pct=%.2f\n", report.delta.original_mrr,
                report.delta.poisoned_mrr, report.delta.pois_minus_orig_pct);
    return 0;
}

int cmd_oracle(const CommonOpts& opts, const std::string& target_str, size_t max_candidates) {
    const ExperimentConfig cfg = load_config(opts);
    const fs::path out_dir = cfg.output;
    fs::create_directories(out_dir);
    const KnowledgeGraph kg = load_graph(cfg.dataset);

    // target as "s<TAB or space>r<TAB or space>o" labels
    std::vector<std::string> parts;
    std::string token;
    for (char c : target_str) {
        if (c == '\t' || c == ' ') {
            if (!token.empty()) parts.push_back(std::move(token));
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    if (!token.empty()) parts.push_back(std::move(token));
    require(parts.size() == 3, "target must be 's r o' labels, got '", target_str, "'");
    const int32_t s = kg.entity_id(parts[0]);
    const int32_t r = kg.relation_id(parts[1]);
    const int32_t o = kg.entity_id(parts[2]);
    require(s >= 0 && r >= 0 && o >= 0, "unknown label in target '", target_str, "'");
    const Triple target{s, r, o};

    // Leave-one-out over the target's neighbourhood, capped for tractability.
    const Neighbourhood n = kg.neighbourhood(target);
    require(!n.members.empty(), "target has an empty neighbourhood");
    const EmbeddingModel original = train(kg, cfg.model, cfg.train).model;
    std::vector<AdditionOracleEntry> rows;
    for (size_t i = 0; i < n.members.size() && i < max_candidates; ++i) {
        const LooResult res = loo_oracle(kg, cfg.model, cfg.train, target, n.members[i], &original);
        rows.push_back({res.candidate, res.delta_score, res.delta_rank, res.seconds});
    }
    write_oracle_csv(rows, kg, out_dir / "oracle.csv");
    std::cout << (out_dir / "oracle.csv").string() << "\n";
    return 0;
}

int cmd_synth(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    require(cfg.dataset.synthetic.has_value(), "synth needs a dataset.synthetic section");
    const SyntheticKg synth = generate_synthetic_kg(*cfg.dataset.synthetic);
    synth.graph.write_dataset(cfg.output);
    std::fprintf(stderr, "|E|=%zu |R|=%zu train=%zu valid=%zu test=%zu\n",
                 synth.graph.num_entities(), synth.graph.num_relations(), synth.graph.train().size(),
                 synth.graph.valid().size(), synth.graph.test().size());
    std::cout << cfg.output << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-graph embedding poisoning toolkit"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, attack_opts, poison_opts, pipeline_opts, oracle_opts,
        synth_opts;
    std::string checkpoint, split = "test", edits_path, target_str;
    size_t max_candidates = 64;

    auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(c_train, train_opts);

    auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common(c_eval, eval_opts);
    c_eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    c_eval->add_option("--split", split, "train|valid|test (default test)");

    auto* c_attack = app.add_subcommand("attack", "select adversarial edits for targets");
    add_common(c_attack, attack_opts);
    c_attack->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

    auto* c_poison = app.add_subcommand("poison", "apply an edits file to the dataset");
    add_common(c_poison, poison_opts);
    c_poison->add_option("--edits", edits_path, "edits TSV")->required();

    auto* c_pipeline = app.add_subcommand(
        "pipeline", "train → evaluate → attack → perturb → retrain → report");
    add_common(c_pipeline, pipeline_opts);

    auto* c_oracle = app.add_subcommand("oracle",
                                        "leave-one-out retraining over a target's neighbourhood");
    add_common(c_oracle, oracle_opts);
    c_oracle->add_option("--target", target_str, "target triple as 's r o' labels")->required();
    c_oracle->add_option("--max-candidates", max_candidates, "cap on neighbourhood candidates");

    auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(c_synth, synth_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_train->parsed()) return cmd_train(train_opts);
        if (c_eval->parsed()) return cmd_eval(eval_opts, checkpoint, split);
        if (c_attack->parsed()) return cmd_attack(attack_opts, checkpoint);
        if (c_poison->parsed()) return cmd_poison(poison_opts, edits_path);
        if (c_pipeline->parsed()) return cmd_pipeline(pipeline_opts);
        if (c_oracle->parsed()) return cmd_oracle(oracle_opts, target_str, max_candidates);
        if (c_synth->parsed()) return cmd_synth(synth_opts);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
