// verigrag: command-line front end for every pipeline stage.
//
// Exit status: 0 success, 1 a check failed (check-syntax, check-equiv), 2 any
// other error. 126 and 127 are left to the shell so the harness can tell a
// missing checker from a failing one.

#include "verigrag/corpus.hpp"
#include "verigrag/dedup.hpp"
#include "verigrag/errors.hpp"
#include "verigrag/graph_encoder.hpp"
#include "verigrag/harness.hpp"
#include "verigrag/hashing.hpp"
#include "verigrag/language_model.hpp"
#include "verigrag/retriever.hpp"
#include "verigrag/simulate.hpp"
#include "verigrag/toy_corpus.hpp"
#include "verigrag/veriformer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace verigrag;

namespace {

void note(const char* fmt, auto... args) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

/// Defaults overlaid with the `section` object of an optional JSON config file.
nlohmann::json overlay(nlohmann::json defaults, const std::string& config_path, const char* section) {
    if (config_path.empty()) return defaults;
    const auto cfg = nlohmann::json::parse(read_text_file(config_path));
    if (cfg.contains(section)) defaults.update(cfg.at(section));
    return defaults;
}

std::map<std::string, RowVector> embedding_map(const fs::path& path) {
    const auto [ids, rows] = gnn::read_embeddings(path);
    std::map<std::string, RowVector> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = rows.row(static_cast<Eigen::Index>(i));
    return out;
}

/// Embeddings from a precomputed file, or computed from graphs with a GNN checkpoint.
std::map<std::string, RowVector> resolve_embeddings(const std::string& embeddings, const std::string& graphs,
                                                    const std::string& gnn_ckpt) {
    if (!embeddings.empty()) return embedding_map(embeddings);
    if (graphs.empty() || gnn_ckpt.empty()) throw ConfigError("need --embeddings, or --graphs together with --gnn");
    const auto enc = gnn::GraphEncoder::from_checkpoint(load_checkpoint(gnn_ckpt, "graph_encoder"));
    const auto gs = corpus::read_graphs_jsonl(graphs);
    const auto ids = corpus::assign_graph_ids(gs);
    std::map<std::string, RowVector> out;
    for (std::size_t i = 0; i < gs.size(); ++i) out[ids[i]] = enc.encode_graph(gs[i]);
    return out;
}

const RowVector& embedding_for(const std::map<std::string, RowVector>& embs, const std::string& id) {
    const auto it = embs.find(id);
    if (it == embs.end()) throw ConfigError("no graph embedding for graph_id '" + id + "'");
    return it->second;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_ints(const std::string& csv) {
    std::vector<int> out;
    for (double v : parse_doubles(csv)) out.push_back(static_cast<int>(v));
    return out;
}

struct PipelinePaths {
    std::string student;
    std::string index;
    std::string embeddings;
    std::string vf2;
    std::string lm;

    void bind(CLI::App* cmd) {
        cmd->add_option("--student", student, "Student retriever checkpoint (defaults to the one recorded in the index)");
        cmd->add_option("--index", index, "Retrieval index")->required();
        cmd->add_option("--embeddings", embeddings, "Graph embeddings of the indexed ids")->required();
        cmd->add_option("--vf2", vf2, "Stage-2 VeriFormer checkpoint")->required();
        cmd->add_option("--lm", lm, "Language model checkpoint")->required();
    }

    harness::Pipeline load() const {
        harness::Pipeline p;
        p.index = retrieval::load_index(index);
        const std::string student_path = student.empty() ? p.index.student_checkpoint : student;
        if (student_path.empty()) throw ConfigError("no --student given and the index records none");
        p.student = retrieval::DualEncoder::from_checkpoint(load_checkpoint(student_path, "retriever_student"));
        p.graph_embeddings = embedding_map(embeddings);
        p.prompt_model = vf::SoftPromptModel::from_checkpoint(load_checkpoint(vf2, "veriformer_stage2"));
        p.lm = lm::TinyLm::from_checkpoint(load_checkpoint(lm, "language_model"));
        p.validate();
        return p;
    }
};

int cmd_extract(const std::string& in, const std::string& out, const std::string& manifest, const std::string& pairs,
                bool no_dedup, const netlist::DedupSettings& dedup) {
    corpus::ExtractOptions opt;
    opt.dedup = !no_dedup;
    opt.dedup_settings = dedup;
    const auto result = corpus::extract_directory(in, opt);
    for (const auto& s : result.skipped) note("skipped: %s", s.c_str());
    std::vector<netlist::DataPathGraph> graphs;
    std::vector<corpus::PairRecord> records;
    for (const auto& m : result.modules) {
        graphs.push_back(m.graph);
        records.push_back({m.description, m.graph_id, m.code, m.synthesized});
        if (m.synthesized) note("synthesized description for %s", m.graph_id.c_str());
    }
    corpus::write_graphs_jsonl(out, graphs);
    write_text_file(manifest, netlist::serialize_manifest(result.manifest) + "\n");
    if (!pairs.empty()) corpus::write_pairs_jsonl(pairs, records);
    note("%zu graphs, w_max %d", graphs.size(), result.manifest.w_max);
    return 0;
}

int cmd_dedup(const std::string& in, const std::string& out, const netlist::DedupSettings& s) {
    const auto graphs = corpus::read_graphs_jsonl(in);
    std::vector<std::vector<std::uint64_t>> sets;
    for (const auto& g : graphs) sets.push_back(dedup::shingle_set(corpus::graph_structural_text(g)));
    std::vector<netlist::DataPathGraph> kept;
    for (std::size_t i : dedup::retained_indices(sets, s.threshold, s.num_hashes, s.seed)) kept.push_back(graphs[i]);
    corpus::write_graphs_jsonl(out, kept);
    note("kept %zu of %zu graphs", kept.size(), graphs.size());
    return 0;
}

int cmd_train_gnn(const std::string& graphs, const std::string& config, const std::string& out, std::uint64_t seed,
                  int epochs) {
    const auto model = gnn::GraphEncoderConfig::from_json(overlay(gnn::GraphEncoderConfig{}.to_json(), config, "model"));
    auto cfg = gnn::EncoderTrainConfig::from_json(overlay(gnn::EncoderTrainConfig{}.to_json(), config, "train"));
    cfg.seed = seed;
    if (epochs > 0) cfg.epochs = epochs;
    const auto corpus = corpus::read_graphs_jsonl(graphs);
    auto result = gnn::train_encoder(corpus, model, cfg);
    auto ckpt = result.encoder.to_checkpoint(result.epoch_loss);
    ckpt.extra["train"] = cfg.to_json();
    save_checkpoint(out, ckpt);
    note("loss %.4f -> %.4f over %zu epochs", result.epoch_loss.front(), result.epoch_loss.back(),
         result.epoch_loss.size());
    return 0;
}

int cmd_embed(const std::string& graphs, const std::string& ckpt, const std::string& out) {
    const auto enc = gnn::GraphEncoder::from_checkpoint(load_checkpoint(ckpt, "graph_encoder"));
    const auto gs = corpus::read_graphs_jsonl(graphs);
    const auto ids = corpus::assign_graph_ids(gs);
    Matrix rows(static_cast<Eigen::Index>(gs.size()), enc.config().d_g);
    for (std::size_t i = 0; i < gs.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = enc.encode_graph(gs[i]);
    gnn::write_embeddings(out, ids, rows);
    note("%zu embeddings of width %d", gs.size(), enc.config().d_g);
    return 0;
}

std::vector<retrieval::TrainPair> load_train_pairs(const std::string& pairs, const std::map<std::string, RowVector>& embs) {
    std::vector<retrieval::TrainPair> out;
    for (const auto& p : corpus::read_pairs_jsonl(pairs)) out.push_back({p.description, embedding_for(embs, p.graph_id)});
    return out;
}

int cmd_train_retriever(const std::string& mode, const std::string& pairs, const std::string& embeddings,
                        const std::string& teacher_path, double mse_weight, const std::string& config,
                        const std::string& out, std::uint64_t seed, int epochs) {
    const auto train = load_train_pairs(pairs, embedding_map(embeddings));
    if (mode == "teacher") {
        const auto model =
            retrieval::RetrieverConfig::from_json(overlay(retrieval::RetrieverConfig{}.to_json(), config, "model"));
        auto cfg = retrieval::RetrieverTrainConfig::from_json(
            overlay(retrieval::RetrieverTrainConfig::teacher_defaults().to_json(), config, "train"));
        cfg.seed = seed;
        if (epochs > 0) cfg.epochs = epochs;
        auto r = retrieval::train_teacher(train, model, cfg);
        for (const auto& w : r.warnings) note("warning: %s", w.c_str());
        auto ckpt = r.teacher.to_checkpoint(r.epoch_loss);
        ckpt.extra["train"] = cfg.to_json();
        save_checkpoint(out, ckpt);
        note("teacher loss %.4f -> %.4f, recall@1 %.3f", r.epoch_loss.front(), r.epoch_loss.back(),
             retrieval::teacher_recall_at_k(r.teacher, train, 1));
        return 0;
    }
    if (teacher_path.empty()) throw ConfigError("--mode student needs --teacher");
    const auto teacher =
        retrieval::CrossAttentionEncoder::from_checkpoint(load_checkpoint(teacher_path, "retriever_teacher"));
    auto cfg = retrieval::RetrieverTrainConfig::from_json(
        overlay(retrieval::RetrieverTrainConfig::student_defaults().to_json(), config, "train"));
    cfg.seed = seed;
    cfg.mse_weight = mse_weight;
    if (epochs > 0) cfg.epochs = epochs;
    const std::string before = teacher.params().fingerprint();
    auto r = retrieval::distill_student(train, teacher, cfg, seed + 1);
    if (teacher.params().fingerprint() != before) throw Error("teacher parameters changed during distillation");
    auto ckpt = r.student.to_checkpoint(r.epoch_loss);
    ckpt.extra["train"] = cfg.to_json();
    ckpt.extra["initial_mse"] = r.initial_mse;
    ckpt.extra["final_mse"] = r.final_mse;
    save_checkpoint(out, ckpt);
    note("student mse-to-teacher %.4f -> %.4f, recall@5 %.3f", r.initial_mse, r.final_mse,
         retrieval::student_recall_at_k(r.student, train, 5));
    return 0;
}

int cmd_index_build(const std::string& embeddings, const std::string& student_path, const std::string& out) {
    const auto student = retrieval::DualEncoder::from_checkpoint(load_checkpoint(student_path, "retriever_student"));
    const auto [ids, rows] = gnn::read_embeddings(embeddings);
    auto index = retrieval::build_index(ids, rows, student);
    index.student_checkpoint = fs::absolute(student_path).string();
    retrieval::save_index(out, index);
    note("indexed %zu graphs", index.size());
    return 0;
}

int cmd_index_query(const std::string& index_path, const std::string& student_path, const std::string& query, int k) {
    const auto index = retrieval::load_index(index_path);
    const std::string sp = student_path.empty() ? index.student_checkpoint : student_path;
    const auto student = retrieval::DualEncoder::from_checkpoint(load_checkpoint(sp, "retriever_student"));
    nlohmann::ordered_json hits = nlohmann::ordered_json::array();
    for (const auto& h : retrieval::retrieve(index, query, student, k)) hits.push_back({{"id", h.id}, {"score", h.score}});
    std::printf("%s\n", hits.dump().c_str());
    return 0;
}

int cmd_train_lm(const std::string& pairs, const std::string& config, const std::string& out, std::uint64_t seed,
                 int epochs) {
    const auto model = lm::LmConfig::from_json(overlay(lm::LmConfig{}.to_json(), config, "model"));
    auto cfg = lm::LmTrainConfig::from_json(overlay(lm::LmTrainConfig{}.to_json(), config, "train"));
    cfg.seed = seed;
    if (epochs > 0) cfg.epochs = epochs;
    std::vector<lm::Example> examples;
    for (const auto& p : corpus::read_pairs_jsonl(pairs)) examples.push_back({p.description, p.code});
    auto r = lm::train_lm(examples, model, cfg);
    auto ckpt = r.lm.to_checkpoint(r.epoch_loss);
    ckpt.extra["train"] = cfg.to_json();
    save_checkpoint(out, ckpt);
    note("lm loss %.4f -> %.4f, vocabulary %d", r.epoch_loss.front(), r.epoch_loss.back(), r.lm.vocab().size());
    return 0;
}

struct VfArgs {
    int stage = 1;
    std::string pairs, graphs, embeddings, gnn, vf1, lm, config, out;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    int epochs = 0;
};

int cmd_train_veriformer(const VfArgs& a) {
    std::string gnn_before;
    if (!a.gnn.empty()) gnn_before = sha256_hex(read_text_file(a.gnn));
    const auto embs = resolve_embeddings(a.embeddings, a.graphs, a.gnn);
    const auto records = corpus::read_pairs_jsonl(a.pairs);
    if (a.stage == 1) {
        const auto model = vf::VeriFormerConfig::from_json(overlay(vf::VeriFormerConfig{}.to_json(), a.config, "model"));
        auto cfg = vf::Stage1Config::from_json(overlay(vf::Stage1Config{}.to_json(), a.config, "train"));
        cfg.seed = a.seed;
        if (a.epochs > 0) cfg.epochs = a.epochs;
        std::vector<vf::Stage1Pair> pairs;
        for (const auto& p : records) pairs.push_back({embedding_for(embs, p.graph_id), p.code});
        auto r = vf::stage1_train(pairs, model, cfg);
        auto ckpt = r.model.to_checkpoint(r.total);
        ckpt.extra["train"] = cfg.to_json();
        ckpt.extra["gcc"] = r.gcc;
        ckpt.extra["gcm"] = r.gcm;
        ckpt.extra["gcg"] = r.gcg;
        save_checkpoint(a.out, ckpt);
        note("gcc %.4f -> %.4f, gcm %.4f -> %.4f, gcg %.4f -> %.4f, matching accuracy %.3f", r.gcc.front(),
             r.gcc.back(), r.gcm.front(), r.gcm.back(), r.gcg.front(), r.gcg.back(),
             vf::matching_accuracy(r.model, pairs));
    } else if (a.stage == 2) {
        if (a.vf1.empty() || a.lm.empty()) throw ConfigError("--stage 2 needs --vf1 and --lm");
        const auto stage1 = vf::VeriFormer::from_checkpoint(load_checkpoint(a.vf1, "veriformer_stage1"));
        const auto lm = lm::TinyLm::from_checkpoint(load_checkpoint(a.lm, "language_model"));
        auto cfg = vf::Stage2Config::from_json(overlay(vf::Stage2Config{}.to_json(), a.config, "train"));
        cfg.seed = a.seed;
        cfg.alpha = a.alpha;
        if (a.epochs > 0) cfg.epochs = a.epochs;
        std::vector<vf::Stage2Sample> samples;
        for (const auto& p : records) samples.push_back({p.description, embedding_for(embs, p.graph_id), p.code});
        const std::string lm_before = lm.params().fingerprint();
        auto r = vf::stage2_train(samples, stage1, lm, cfg);
        if (lm.params().fingerprint() != lm_before) throw Error("language model parameters changed during stage 2");
        auto ckpt = r.model.to_checkpoint(r.epoch_total);
        ckpt.extra["train"] = cfg.to_json();
        ckpt.extra["initial_dist"] = r.initial_dist;
        ckpt.extra["final_dist"] = r.final_dist;
        ckpt.extra["best_epoch"] = r.best_epoch;
        save_checkpoint(a.out, ckpt);
        note("dist %.5f -> %.5f, best epoch %d%s", r.initial_dist, r.final_dist, r.best_epoch,
             r.stopped_early ? " (stopped early)" : "");
    } else {
        throw ConfigError("--stage must be 1 or 2");
    }
    if (!a.gnn.empty() && sha256_hex(read_text_file(a.gnn)) != gnn_before) {
        throw Error("GNN checkpoint changed during VeriFormer training");
    }
    return 0;
}

int cmd_generate(const PipelinePaths& paths, const std::string& desc_file, int n, const std::string& temps,
                 std::uint64_t seed, const std::string& out, const std::string& task_id) {
    const auto pipeline = paths.load();
    harness::GenerationConfig cfg;
    cfg.n = n;
    cfg.temperatures = parse_doubles(temps);
    cfg.seed = seed;
    std::string description = read_text_file(desc_file);
    while (!description.empty() && (description.back() == '\n' || description.back() == ' ')) description.pop_back();
    const std::string id = task_id.empty() ? fs::path(desc_file).stem().string() : task_id;
    const auto result = harness::generate_samples(id, description, pipeline, cfg);
    for (const auto& w : result.warnings) note("warning: %s", w.c_str());
    std::string text;
    for (const auto& r : result.records) text += r.to_json().dump() + "\n";
    write_text_file(out, text);
    note("%zu samples", result.records.size());
    return 0;
}

int cmd_eval(const PipelinePaths& paths, const std::string& bench, const std::string& ks, int n, const std::string& temps,
             std::uint64_t seed, const std::string& out) {
    const auto pipeline = paths.load();
    harness::EvalConfig cfg;
    cfg.generation.n = n;
    cfg.generation.temperatures = parse_doubles(temps);
    cfg.generation.seed = seed;
    cfg.k_list = parse_ints(ks);
    const auto report = harness::evaluate(bench, pipeline, cfg);
    harness::validate_report(report);
    write_text_file(out, report.dump(2) + "\n");
    note("%s", report.at("metrics").dump().c_str());
    return 0;
}

int cmd_toy_corpus(const std::string& out, std::size_t count, std::uint64_t seed) {
    fs::create_directories(out);
    for (const auto& m : toy::modules(count, seed)) {
        write_text_file(fs::path(out) / (m.name + ".v"), m.code);
        write_text_file(fs::path(out) / (m.name + ".txt"), m.description + "\n");
    }
    note("wrote %zu modules to %s", count, out.c_str());
    return 0;
}

int cmd_check_syntax(const std::string& file) {
    try {
        const auto modules = netlist::parse_verilog(netlist::VerilogSource::from_text(file, read_text_file(file)));
        if (modules.empty()) {
            note("%s: no module", file.c_str());
            return 1;
        }
        return 0;
    } catch (const SyntaxError& e) {
        note("%s: %s", file.c_str(), e.what());
    } catch (const UnsupportedConstruct& e) {
        note("%s: %s", file.c_str(), e.what());
    }
    return 1;
}

std::vector<netlist::ModuleAST> parse_file(const std::string& file) {
    return netlist::parse_verilog(netlist::VerilogSource::from_text(file, read_text_file(file)));
}

int cmd_check_equiv(const std::string& ref, const std::string& cand, const sim::EquivalenceOptions& opt) {
    const auto reference = parse_file(ref);
    std::vector<netlist::ModuleAST> candidate;
    try {
        candidate = parse_file(cand);
    } catch (const Error& e) {
        note("%s: %s", cand.c_str(), e.what());
        return 1;
    }
    try {
        const auto r = sim::check_equivalence(reference, candidate, opt);
        if (!r.equivalent) note("not equivalent: %s", r.message.c_str());
        return r.equivalent ? 0 : 1;
    } catch (const ElaborationError& e) {
        note("%s: %s", cand.c_str(), e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"verigrag: graph-retrieval-augmented Verilog generation"};
    app.require_subcommand(1);
    int rc = 0;

    std::string in, out, manifest, pairs, graphs, ckpt, config, embeddings;
    std::uint64_t seed = 0;
    int epochs = 0;
    bool no_dedup = false;
    netlist::DedupSettings dd;

    auto* extract = app.add_subcommand("extract", "Parse and elaborate every .v file under a directory");
    extract->add_option("--in", in, "Input directory")->required();
    extract->add_option("--out", out, "Graph JSONL output")->required();
    extract->add_option("--manifest", manifest, "Corpus manifest output")->required();
    extract->add_option("--pairs", pairs, "Description/code pair JSONL output");
    extract->add_flag("--no-dedup", no_dedup, "Keep near-duplicate sources");
    extract->add_option("--threshold", dd.threshold, "MinHash Jaccard threshold");
    extract->add_option("--num-hashes", dd.num_hashes, "MinHash signature length");
    extract->add_option("--seed", dd.seed, "MinHash seed");
    extract->callback([&] { rc = cmd_extract(in, out, manifest, pairs, no_dedup, dd); });

    auto* dedup_cmd = app.add_subcommand("dedup", "Drop structurally near-duplicate graphs");
    dedup_cmd->add_option("--in", in, "Graph JSONL input")->required();
    dedup_cmd->add_option("--out", out, "Graph JSONL output")->required();
    dedup_cmd->add_option("--threshold", dd.threshold, "MinHash Jaccard threshold");
    dedup_cmd->add_option("--num-hashes", dd.num_hashes, "MinHash signature length");
    dedup_cmd->add_option("--seed", dd.seed, "MinHash seed");
    dedup_cmd->callback([&] { rc = cmd_dedup(in, out, dd); });

    auto* train_gnn = app.add_subcommand("train-gnn", "Contrastive pre-training of the graph encoder");
    train_gnn->add_option("--graphs", graphs, "Graph JSONL")->required();
    train_gnn->add_option("--config", config, "JSON config with optional model/train sections");
    train_gnn->add_option("--out", out, "Checkpoint output")->required();
    train_gnn->add_option("--seed", seed, "Seed");
    train_gnn->add_option("--epochs", epochs, "Override the epoch count");
    train_gnn->callback([&] { rc = cmd_train_gnn(graphs, config, out, seed, epochs); });

    auto* embed = app.add_subcommand("embed", "Encode graphs with a trained encoder");
    embed->add_option("--graphs", graphs, "Graph JSONL")->required();
    embed->add_option("--ckpt", ckpt, "Graph encoder checkpoint")->required();
    embed->add_option("--out", out, "Embedding file (float32 matrix plus .ids.json sidecar)")->required();
    embed->callback([&] { rc = cmd_embed(graphs, ckpt, out); });

    std::string mode = "teacher", teacher;
    double mse_weight = 1.0;
    auto* train_ret = app.add_subcommand("train-retriever", "Train the retrieval teacher or distill the student");
    train_ret->add_option("--pairs", pairs, "Pair JSONL")->required();
    train_ret->add_option("--embeddings", embeddings, "Graph embeddings keyed by graph_id")->required();
    train_ret->add_option("--mode", mode, "teacher or student")->check(CLI::IsMember({"teacher", "student"}));
    train_ret->add_option("--teacher", teacher, "Teacher checkpoint (student mode)");
    train_ret->add_option("--mse-weight", mse_weight, "Weight of the MSE-to-teacher term (student mode)");
    train_ret->add_option("--config", config, "JSON config with optional model/train sections");
    train_ret->add_option("--out", out, "Checkpoint output")->required();
    train_ret->add_option("--seed", seed, "Seed");
    train_ret->add_option("--epochs", epochs, "Override the epoch count");
    train_ret->callback(
        [&] { rc = cmd_train_retriever(mode, pairs, embeddings, teacher, mse_weight, config, out, seed, epochs); });

    std::string student, index_path, query;
    int k = 5;
    auto* index = app.add_subcommand("index", "Build or query a retrieval index");
    index->require_subcommand(1);
    auto* index_build = index->add_subcommand("build", "Index graph embeddings with the student's graph tower");
    index_build->add_option("--embeddings", embeddings, "Graph embeddings")->required();
    index_build->add_option("--student", student, "Student checkpoint")->required();
    index_build->add_option("--out", out, "Index output")->required();
    index_build->callback([&] { rc = cmd_index_build(embeddings, student, out); });
    auto* index_query = index->add_subcommand("query", "Top-k graphs for a description");
    index_query->add_option("--index", index_path, "Index file")->required();
    index_query->add_option("--student", student, "Student checkpoint (defaults to the one recorded in the index)");
    index_query->add_option("--query", query, "Description text")->required();
    index_query->add_option("--k", k, "Number of results");
    index_query->callback([&] { rc = cmd_index_query(index_path, student, query, k); });

    auto* train_lm = app.add_subcommand("train-lm", "Pretrain the tiny language model on description/code pairs");
    train_lm->add_option("--pairs", pairs, "Pair JSONL with code")->required();
    train_lm->add_option("--config", config, "JSON config with optional model/train sections");
    train_lm->add_option("--out", out, "Checkpoint output")->required();
    train_lm->add_option("--seed", seed, "Seed");
    train_lm->add_option("--epochs", epochs, "Override the epoch count");
    train_lm->callback([&] { rc = cmd_train_lm(pairs, config, out, seed, epochs); });

    VfArgs vfa;
    auto* train_vf = app.add_subcommand("train-veriformer", "Stage 1 alignment or stage 2 soft-prompt training");
    train_vf->add_option("--stage", vfa.stage, "1 or 2")->required();
    train_vf->add_option("--pairs", vfa.pairs, "Pair JSONL with code")->required();
    train_vf->add_option("--embeddings", vfa.embeddings, "Precomputed graph embeddings");
    train_vf->add_option("--graphs", vfa.graphs, "Graph JSONL, encoded with --gnn when --embeddings is absent");
    train_vf->add_option("--gnn", vfa.gnn, "Frozen graph encoder checkpoint");
    train_vf->add_option("--vf1", vfa.vf1, "Stage-1 checkpoint (stage 2)");
    train_vf->add_option("--lm", vfa.lm, "Frozen language model checkpoint (stage 2)");
    train_vf->add_option("--alpha", vfa.alpha, "Weight of the distribution loss (stage 2)");
    train_vf->add_option("--config", vfa.config, "JSON config with optional model/train sections");
    train_vf->add_option("--out", vfa.out, "Checkpoint output")->required();
    train_vf->add_option("--seed", vfa.seed, "Seed");
    train_vf->add_option("--epochs", vfa.epochs, "Override the epoch count");
    train_vf->callback([&] { rc = cmd_train_veriformer(vfa); });

    PipelinePaths gen_paths, eval_paths;
    std::string desc_file, temps = "0.2,0.5,0.8", task_id, bench, ks = "1,5";
    int n = 20;
    auto* generate = app.add_subcommand("generate", "Sample code for one description");
    gen_paths.bind(generate);
    generate->add_option("--desc-file", desc_file, "Description text file")->required();
    generate->add_option("--task-id", task_id, "Id used for seeding (defaults to the file stem)");
    generate->add_option("--n", n, "Number of samples");
    generate->add_option("--temperatures", temps, "Comma-separated temperatures, cycled round-robin");
    generate->add_option("--seed", seed, "Seed");
    generate->add_option("--out", out, "Sample JSONL output")->required();
    generate->callback([&] { rc = cmd_generate(gen_paths, desc_file, n, temps, seed, out, task_id); });

    auto* eval = app.add_subcommand("eval", "Generate, check and score every task of a benchmark directory");
    eval_paths.bind(eval);
    eval->add_option("--benchmark", bench, "Benchmark directory")->required();
    eval->add_option("--k", ks, "Comma-separated k values");
    eval->add_option("--n", n, "Samples per task");
    eval->add_option("--temperatures", temps, "Comma-separated temperatures, cycled round-robin");
    eval->add_option("--seed", seed, "Seed");
    eval->add_option("--out", out, "Report JSON output")->required();
    eval->callback([&] { rc = cmd_eval(eval_paths, bench, ks, n, temps, seed, out); });

    std::size_t count = 64;
    auto* toy_cmd = app.add_subcommand("toy-corpus", "Write the built-in toy corpus as .v/.txt pairs");
    toy_cmd->add_option("--out", out, "Output directory")->required();
    toy_cmd->add_option("--count", count, "Number of modules");
    toy_cmd->add_option("--seed", seed, "Ordering seed");
    toy_cmd->callback([&] { rc = cmd_toy_corpus(out, count, seed); });

    std::string file;
    auto* check_syntax = app.add_subcommand("check-syntax", "Exit 0 when the file parses within the supported subset");
    check_syntax->add_option("file", file, "Verilog file")->required();
    check_syntax->callback([&] { rc = cmd_check_syntax(file); });

    std::string ref, cand;
    sim::EquivalenceOptions eq;
    auto* check_equiv = app.add_subcommand("check-equiv", "Exit 0 when the candidate simulates like the reference");
    check_equiv->add_option("--ref", ref, "Reference Verilog file")->required();
    check_equiv->add_option("--cand", cand, "Candidate Verilog file")->required();
    check_equiv->add_option("--trials", eq.trials, "Random stimulus runs");
    check_equiv->add_option("--cycles", eq.cycles, "Cycles per run");
    check_equiv->add_option("--seed", eq.seed, "Stimulus seed");
    check_equiv->callback([&] { rc = cmd_check_equiv(ref, cand, eq); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        note("error: %s", e.what());
        return 2;
    } catch (const std::exception& e) {
        note("error: %s", e.what());
        return 2;
    }
    return rc;
}
