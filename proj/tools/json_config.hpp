#pragma once

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace onsetsurv::cli {

/// Reads and writes CLI11 configuration as JSON. Nested objects map to subcommands.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return to_json(app, default_also).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, "", {}, items);
    return items;
  }

  static nlohmann::json to_json(const CLI::App* app, bool default_also) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->get_type_size() != 0) {
        if (opt->count() == 1) {
          j[name] = typed(opt->results().at(0));
        } else if (opt->count() > 1) {
          nlohmann::json arr = nlohmann::json::array();
          for (const auto& r : opt->results()) arr.push_back(typed(r));
          j[name] = arr;
        } else if (default_also && !opt->get_default_str().empty()) {
          j[name] = typed(opt->get_default_str());
        }
      } else if (opt->count() > 0) {
        j[name] = true;
      } else if (default_also) {
        j[name] = false;
      }
    }
    return j;
  }

 private:
  // Numbers and booleans keep their JSON type; everything else stays a string.
  static nlohmann::json typed(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (!s.empty() && end == s.c_str() + s.size() && s.find_first_not_of("0123456789-+.eE") == std::string::npos) {
      if (s.find_first_of(".eE+") == std::string::npos) return std::strtoll(s.c_str(), nullptr, 10);
      return v;
    }
    return s;
  }

  static std::string scalar(const nlohmann::json& v, const std::string& name) {
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    if (v.is_string()) return v.get<std::string>();
    throw CLI::ConversionError("config key '" + name + "' must be a string, number, boolean or array of those");
  }

  static void collect(const nlohmann::json& j, const std::string& name, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) collect(*it, it.key(), parents, out);
      return;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = std::move(parents);
    if (j.is_array())
      for (const auto& v : j) item.inputs.push_back(scalar(v, name));
    else
      item.inputs.push_back(scalar(j, name));
    out.push_back(std::move(item));
  }
};

}  // namespace onsetsurv::cli
