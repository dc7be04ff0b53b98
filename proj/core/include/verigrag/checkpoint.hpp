#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace verigrag {

inline constexpr int kCheckpointSchemaVersion = 1;

/// JSON-of-tensors container shared by every trained component.
struct Checkpoint {
    std::string kind;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
    std::vector<double> loss_trace;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt);
/// Throws SchemaError on a version or kind mismatch (empty `expected_kind` accepts any).
Checkpoint checkpoint_from_json(const nlohmann::json& j, const std::string& expected_kind = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = {});

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace verigrag
