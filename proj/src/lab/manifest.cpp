#include "gdlab/lab/manifest.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace gdlab::lab {

const char* version() { return GDLAB_VERSION; }

std::string manifest_json(const ExperimentOutput& out, const ExperimentSpec& spec,
                          const RunContext& ctx) {
  nlohmann::ordered_json j;
  j["tool"] = "gdlab";
  j["version"] = version();
  j["experiment"] = out.experiment;
  j["spec_sha256"] = spec.hash();
  j["spec"] = spec.canonical();
  j["master_seed"] = ctx.master_seed;
  j["seeds"] = out.seeds;
  j["threads"] = ctx.threads;
  j["wall_seconds"] = ctx.wall_seconds;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& t : out.tables) {
    const std::string body = t.table.to_csv();
    files.push_back({{"file", t.file}, {"rows", t.table.rows()}, {"sha256", sha256_hex(body)}});
  }
  j["files"] = files;
  j["warnings"] = out.warnings;
  return j.dump(2) + "\n";
}

void write_outputs(const std::string& dir, const ExperimentOutput& out, const ExperimentSpec& spec,
                   const RunContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& t : out.tables) t.table.write((fs::path(dir) / t.file).string());
  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << manifest_json(out, spec, ctx);
}

}  // namespace gdlab::lab
