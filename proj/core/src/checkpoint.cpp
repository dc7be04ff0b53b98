#include "verigrag/checkpoint.hpp"

#include "verigrag/errors.hpp"

#include <fstream>
#include <sstream>

namespace verigrag {

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::ordered_json j;
    j["schema_version"] = kCheckpointSchemaVersion;
    j["kind"] = ckpt.kind;
    j["config"] = ckpt.config;
    j["parameters"] = ckpt.parameters;
    j["loss_trace"] = ckpt.loss_trace;
    j["extra"] = ckpt.extra;
    return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j, const std::string& expected_kind) {
    for (const char* key : {"schema_version", "kind", "config", "parameters", "loss_trace"}) {
        if (!j.contains(key)) throw SchemaError(std::string("checkpoint: missing field '") + key + "'");
    }
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
        throw SchemaError("checkpoint: unsupported schema_version " + j.at("schema_version").dump());
    }
    Checkpoint c;
    c.kind = j.at("kind").get<std::string>();
    if (!expected_kind.empty() && c.kind != expected_kind) {
        throw SchemaError("checkpoint: expected kind '" + expected_kind + "', found '" + c.kind + "'");
    }
    c.config = j.at("config");
    c.parameters = j.at("parameters");
    c.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    if (j.contains("extra")) c.extra = j.at("extra");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_text_file(path, checkpoint_to_json(ckpt).dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j, expected_kind);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace verigrag
