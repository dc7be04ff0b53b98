#include "verigrag/corpus.hpp"

#include "verigrag/checkpoint.hpp"
#include "verigrag/dedup.hpp"
#include "verigrag/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace verigrag::corpus {

using netlist::DataPathGraph;
using netlist::ModuleAST;
using netlist::VerilogSource;

namespace {

struct ParsedFile {
    std::size_t source_index;
    std::vector<ModuleAST> modules;
};

std::string stem_of(const std::string& path) { return std::filesystem::path(path).stem().string(); }

std::string width_phrase(int w) { return w == 1 ? "1 bit" : std::to_string(w) + " bits"; }

}  // namespace

std::string synthesize_description(const ModuleAST& m) {
    std::vector<std::string> ins, outs;
    for (const auto& p : m.ports) {
        auto& dst = p.direction == netlist::PortDirection::out ? outs : ins;
        dst.push_back(p.name + " (" + width_phrase(p.width) + ")");
    }
    auto join = [](const std::vector<std::string>& xs) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + xs[i];
        return s;
    };
    std::string d = "Module " + m.name;
    if (!ins.empty()) d += " with inputs " + join(ins);
    if (!outs.empty()) d += (ins.empty() ? " with outputs " : " and outputs ") + join(outs);
    return d + ".";
}

std::vector<std::string> assign_graph_ids(const std::vector<DataPathGraph>& graphs) {
    std::unordered_set<std::string> used;
    std::vector<std::string> ids;
    ids.reserve(graphs.size());
    for (const auto& g : graphs) {
        std::string id = g.module_name;
        if (used.count(id)) id = g.module_name + "@" + g.source_sha256.substr(0, 8);
        if (used.count(id)) {
            const std::string base = id;
            for (int k = 2; used.count(id); ++k) id = base + "#" + std::to_string(k);
        }
        used.insert(id);
        ids.push_back(std::move(id));
    }
    return ids;
}

ExtractResult extract_sources(const std::vector<VerilogSource>& sources, const std::vector<std::string>& descriptions,
                              const ExtractOptions& options) {
    ExtractResult result;
    result.manifest.dedup = options.dedup_settings;

    std::vector<std::size_t> order(sources.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (options.dedup && !sources.empty()) {
        std::vector<std::vector<std::uint64_t>> sets;
        for (const auto& s : sources) sets.push_back(dedup::shingle_set(s.text));
        const auto& d = options.dedup_settings;
        order = dedup::retained_indices(sets, d.threshold, d.num_hashes, d.seed);
        std::unordered_set<std::size_t> kept(order.begin(), order.end());
        for (std::size_t i = 0; i < sources.size(); ++i) {
            if (!kept.count(i)) result.skipped.push_back(sources[i].path + ": near-duplicate, dropped");
        }
    }

    std::vector<ParsedFile> parsed;
    for (std::size_t i : order) {
        try {
            parsed.push_back({i, netlist::parse_verilog(sources[i])});
        } catch (const SyntaxError& e) {
            result.skipped.push_back(sources[i].path + ": " + e.what());
        } catch (const UnsupportedConstruct& e) {
            result.skipped.push_back(sources[i].path + ": " + e.what());
        }
    }

    // Instances resolve against their own file first, then the whole corpus.
    netlist::ModuleLibrary global;
    int w_max = 1;
    for (const auto& f : parsed) {
        for (const auto& m : f.modules) {
            global.emplace(m.name, &m);
            w_max = std::max(w_max, netlist::max_width(m));
        }
    }

    std::vector<DataPathGraph> graphs;
    for (const auto& f : parsed) {
        const auto& src = sources[f.source_index];
        netlist::ModuleLibrary local = global;
        for (const auto& m : f.modules) local[m.name] = &m;
        const std::string stem = stem_of(src.path);
        const std::string desc = f.source_index < descriptions.size() ? descriptions[f.source_index] : "";
        for (const auto& m : f.modules) {
            try {
                ExtractedModule em;
                em.graph = netlist::elaborate_to_graph(m, w_max, &local);
                em.path = src.path;
                em.code = src.text.substr(m.source_begin, m.source_end - m.source_begin);
                const bool owns_description = m.name == stem || f.modules.size() == 1;
                if (owns_description && !desc.empty()) {
                    em.description = desc;
                } else {
                    em.description = synthesize_description(m);
                    em.synthesized = true;
                }
                graphs.push_back(em.graph);
                result.modules.push_back(std::move(em));
            } catch (const ElaborationError& e) {
                result.skipped.push_back(src.path + ": module " + m.name + ": " + e.what());
            }
        }
    }
    const auto ids = assign_graph_ids(graphs);
    for (std::size_t i = 0; i < ids.size(); ++i) result.modules[i].graph_id = ids[i];
    result.manifest.w_max = w_max;
    result.manifest.num_graphs = static_cast<int>(result.modules.size());
    return result;
}

ExtractResult extract_directory(const std::filesystem::path& dir, const ExtractOptions& options) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".v") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<VerilogSource> sources;
    std::vector<std::string> descriptions;
    for (const auto& f : files) {
        sources.push_back(VerilogSource::from_text(f.string(), read_text_file(f)));
        auto txt = f;
        txt.replace_extension(".txt");
        std::string desc;
        if (std::filesystem::exists(txt)) {
            desc = read_text_file(txt);
            while (!desc.empty() && std::isspace(static_cast<unsigned char>(desc.back()))) desc.pop_back();
        }
        descriptions.push_back(std::move(desc));
    }
    return extract_sources(sources, descriptions, options);
}

std::string graph_structural_text(const DataPathGraph& g) {
    std::ostringstream os;
    for (const auto& n : g.nodes) {
        os << "node " << netlist::to_string(n.kind) << ' ' << n.op_type << ' ' << n.io_type.value_or("-");
        for (const auto& p : n.port_names) os << ' ' << p;
        for (const auto& [k, v] : n.params) os << ' ' << k << '=' << v;
        os << '\n';
    }
    for (const auto& e : g.edges) os << "edge " << e.src << ' ' << e.dst << ' ' << e.width << '\n';
    return os.str();
}

std::vector<DataPathGraph> read_graphs_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<DataPathGraph> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(netlist::load_graph(line));
        } catch (const SchemaError& e) {
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_graphs_jsonl(const std::filesystem::path& path, const std::vector<DataPathGraph>& graphs) {
    std::string text;
    for (const auto& g : graphs) text += netlist::serialize_graph(g) + "\n";
    write_text_file(path, text);
}

std::vector<PairRecord> read_pairs_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<PairRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PairRecord p;
            p.description = j.at("description").get<std::string>();
            p.graph_id = j.at("graph_id").get<std::string>();
            p.code = j.value("code", std::string());
            p.synthesized = j.value("synthesized", false);
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string() + ": bad pair record: " + e.what());
        }
    }
    return out;
}

void write_pairs_jsonl(const std::filesystem::path& path, const std::vector<PairRecord>& pairs) {
    std::string text;
    for (const auto& p : pairs) {
        nlohmann::ordered_json j;
        j["description"] = p.description;
        j["graph_id"] = p.graph_id;
        j["code"] = p.code;
        j["synthesized"] = p.synthesized;
        text += j.dump() + "\n";
    }
    write_text_file(path, text);
}

}  // namespace verigrag::corpus
