#pragma once

// Config-file support for subcommands. CLI11 only reads config files for the
// top-level app, so each subcommand merges its own file after parsing: a value
// from the file is applied only when the flag was not given on the command line.

#include <string>
#include <vector>

#include <CLI11.hpp>

namespace corpgnn::cli {

/// Reads a flat JSON object or a TOML/INI file into CLI11 config items.
/// JSON is detected by a leading '{'.
class JsonOrTomlConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

/// Applies `path` to the options of `app`. Unknown keys are a usage error.
void merge_config_file(CLI::App& app, const std::string& path);

}  // namespace corpgnn::cli
