#include "cli/config_file.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace corpgnn::cli {

namespace {

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

}  // namespace

std::vector<CLI::ConfigItem> JsonOrTomlConfig::from_config(std::istream& input) const {
  std::stringstream buf;
  buf << input.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') {
    std::istringstream again(text);
    return CLI::ConfigTOML::from_config(again);
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CLI::ConversionError("config", std::string("invalid JSON: ") + e.what());
  }
  std::vector<CLI::ConfigItem> items;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.value().is_null()) continue;
    if (it.value().is_object()) throw CLI::ConversionError(it.key(), "nested config objects are not supported");
    CLI::ConfigItem item;
    item.name = it.key();
    if (it.value().is_array()) {
      for (const auto& v : it.value()) item.inputs.push_back(scalar_text(v));
    } else {
      item.inputs.push_back(scalar_text(it.value()));
    }
    items.push_back(std::move(item));
  }
  return items;
}

void merge_config_file(CLI::App& app, const std::string& path) {
  const auto items = JsonOrTomlConfig{}.from_file(path);
  for (const auto& item : items) {
    // TOML section markers come back as "++"/"--" pseudo items.
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) {
      throw CLI::ConversionError(item.fullname(), "config sections are not supported; use flat keys");
    }
    std::string name = item.name;
    for (char& c : name)
      if (c == '_') c = '-';
    CLI::Option* opt = app.get_option_no_throw("--" + name);
    if (opt == nullptr || name == "config") {
      throw CLI::ValidationError(item.name, "unknown key in config file " + path);
    }
    if (opt->count() > 0) continue;  // command-line flag wins
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

}  // namespace corpgnn::cli
