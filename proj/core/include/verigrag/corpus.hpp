#pragma once

// Corpus-level extraction: Verilog files in, graphs + description/code pairs out.

#include "verigrag/graph.hpp"
#include "verigrag/verilog.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace verigrag::corpus {

struct ExtractOptions {
    bool dedup = true;
    netlist::DedupSettings dedup_settings;
};

struct ExtractedModule {
    std::string graph_id;
    netlist::DataPathGraph graph;
    std::string path;
    std::string code;         // the module's own text span
    std::string description;  // from <stem>.txt, or synthesized
    bool synthesized = false;
};

struct ExtractResult {
    std::vector<ExtractedModule> modules;
    netlist::CorpusManifest manifest;
    std::vector<std::string> skipped;  // one message per skipped file or module
};

/// Sources are processed in the given order. `descriptions[i]` (may be empty)
/// belongs to sources[i]; it is attached to the module named after the file
/// stem, or to the only module when the file has one.
ExtractResult extract_sources(const std::vector<netlist::VerilogSource>& sources,
                              const std::vector<std::string>& descriptions, const ExtractOptions& options = {});

/// Every *.v file under `dir`, sorted by path.
ExtractResult extract_directory(const std::filesystem::path& dir, const ExtractOptions& options = {});

/// module_name; on collision module_name@sha8; on further collision a #k suffix.
std::vector<std::string> assign_graph_ids(const std::vector<netlist::DataPathGraph>& graphs);

std::string synthesize_description(const netlist::ModuleAST& m);

/// Token stream describing a graph's structure (names and hashes excluded).
std::string graph_structural_text(const netlist::DataPathGraph& g);

struct PairRecord {
    std::string description;
    std::string graph_id;
    std::string code;
    bool synthesized = false;
};

std::vector<netlist::DataPathGraph> read_graphs_jsonl(const std::filesystem::path& path);
void write_graphs_jsonl(const std::filesystem::path& path, const std::vector<netlist::DataPathGraph>& graphs);

std::vector<PairRecord> read_pairs_jsonl(const std::filesystem::path& path);
void write_pairs_jsonl(const std::filesystem::path& path, const std::vector<PairRecord>& pairs);

}  // namespace verigrag::corpus
