#include "embgeo/io.hpp"

#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using nlohmann::json;
using embgeo::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string output;
};

Result run(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string(EMBGEO_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = embgeo::io::read_file(log);
  return r;
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2); }

std::string slurp(const fs::path& p) { return embgeo::io::read_file(p); }

double csv_mean_column(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::vector<std::string> h, v;
  std::string cell;
  for (std::istringstream hs(header); std::getline(hs, cell, ',');) h.push_back(cell);
  for (std::istringstream rs(row); std::getline(rs, cell, ',');) v.push_back(cell);
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] == "mean") return std::stod(v.at(i));
  return std::nan("");
}

}  // namespace

TEST(Cli, UnknownSubcommandPrintsUsage) {
  TempDir tmp("cli_unknown");
  const auto r = run("frobnicate", tmp.path());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("synth"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsUsageError) {
  TempDir tmp("cli_key");
  write_json(tmp / "c.json", {{"out", "o"}, {"synth", {{"manifold", {{"n", 100}}}, {"plantd", 2}}}});
  const auto r = run("synth --config " + (tmp / "c.json").string(), tmp.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("synth.plantd"), std::string::npos);
}

TEST(Cli, MissingDatasetIsDataError) {
  TempDir tmp("cli_missing");
  const auto r = run("intrinsic-dim --dataset " + (tmp / "nope").string() + " --out " + (tmp / "o").string(), tmp.path());
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, SynthThenIntrinsicDimRecoversFlatDimension) {
  TempDir tmp("cli_id");
  write_json(tmp / "c.json", {{"out", "synth_out"},
                              {"seed", 5},
                              {"synth", {{"manifold", {{"kind", "flat_subspace"}, {"d", 10}, {"D", 64}, {"n", 20000}}}}},
                              {"intrinsic-dim", {{"k_list", {20}}, {"probes", 1000}}}});
  auto r = run("synth --config " + (tmp / "c.json").string(), tmp.path());
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("intrinsic-dim --config " + (tmp / "c.json").string() + " --dataset " + (tmp / "synth_out" / "dataset").string() +
              " --out " + (tmp / "id_out").string(),
          tmp.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const double mean = csv_mean_column(tmp / "id_out" / "id_summary.csv");
  EXPECT_GE(mean, 9.0);
  EXPECT_LE(mean, 11.0);
  const auto manifest = json::parse(slurp(tmp / "id_out" / "manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "intrinsic-dim");
  EXPECT_EQ(manifest["parameters"]["probes"], 1000);
}

TEST(Cli, ThreadCountDoesNotChangeOutputs) {
  TempDir tmp("cli_threads");
  write_json(tmp / "c.json", {{"seed", 9},
                              {"synth", {{"manifold", {{"kind", "heterogeneous_patchwork"}, {"D", 16}, {"n", 3000},
                                                       {"center_spread", 0.5},
                                                       {"patches", {{{"dim", 2}}, {{"dim", 4}}, {{"dim", 3}}}}}},
                                         {"patch_properties", 3}}},
                              {"shift", {{"sources", 40}, {"methods", {"local_pc", "probe_local", "random"}}}},
                              {"local-geometry", {{"probes", 200}, {"baseline_draws", 1000}}}});
  const auto cfg = (tmp / "c.json").string();
  ASSERT_EQ(run("synth --config " + cfg + " --out " + (tmp / "s").string(), tmp.path()).code, 0);
  const auto ds = (tmp / "s" / "dataset").string();
  for (const std::string sub : {"shift", "local-geometry"}) {
    const auto a = run(sub + " --config " + cfg + " --dataset " + ds + " --threads 1 --out " + (tmp / (sub + "1")).string(), tmp.path());
    const auto b = run(sub + " --config " + cfg + " --dataset " + ds + " --threads 3 --out " + (tmp / (sub + "3")).string(), tmp.path());
    ASSERT_EQ(a.code, 0) << a.output;
    ASSERT_EQ(b.code, 0) << b.output;
    EXPECT_EQ(slurp(tmp / (sub + "1") / "manifest.json"), slurp(tmp / (sub + "3") / "manifest.json")) << sub;
  }
}
