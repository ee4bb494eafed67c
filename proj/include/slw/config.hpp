#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slw/training.hpp"

namespace slw {

using json = nlohmann::json;

/// Full JSON form of a config; the key set doubles as the schema.
json to_json(const ExperimentConfig& config);
json default_config_json();

/// Reads a fully resolved document (every key present, types already checked).
ExperimentConfig config_from_json(const json& resolved);

struct ResolvedConfig {
  json document;
  ExperimentConfig config;
};

/// Defaults <- user document <- "dotted.key=value" overrides, then every module's
/// invariants. All problems are collected into one ConfigError.
ResolvedConfig resolve_config(const json& user, std::span<const std::string> overrides = {});

/// Loads a config file; a run manifest is accepted and its resolved config reused.
ResolvedConfig load_config_file(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// 64-bit FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const json& document);

json to_json(const RunSummary& summary);
json to_json(const InstabilitySummary& s);

}  // namespace slw
