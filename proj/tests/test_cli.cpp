#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using std::string;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "onsetsurv_cli_test";

string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Runs the CLI with stdout and stderr captured; returns the exit status.
int cli(const string& args, string* output = nullptr) {
  const fs::path log = kRoot / "last.log";
  const string cmd = string(ONSETSURV_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

string at(const string& rel) { return (kRoot / rel).string(); }

bool contains(const string& hay, const string& needle) { return hay.find(needle) != string::npos; }

// One shared dataset and model, built once for every case below.
struct Fixture {
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    REQUIRE(cli("synth --out " + at("data") + " --clips 5 --duration 3 --density 2 --seed 3") == 0);
    REQUIRE(cli("synth --out " + at("silence") + " --clips 1 --duration 2 --density 0") == 0);
    REQUIRE(cli("train --data " + at("data") + " --out " + at("model") +
                " --epochs 2 --frames-per-epoch 200 --batch-size 32 --val-fraction 0.2 --val-frames 100 --seed 5") == 0);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth writes paired audio and annotations deterministically") {
    fixture();
    CHECK(fs::exists(at("data/audio/synth_000.wav")));
    CHECK(fs::exists(at("data/annotations/synth_000.onsets.txt")));
    CHECK(fs::exists(at("data/manifest.json")));
    REQUIRE(cli("synth --out " + at("again") + " --clips 5 --duration 3 --density 2 --seed 3") == 0);
    for (const char* f : {"audio/synth_004.wav", "annotations/synth_004.onsets.txt", "manifest.json"}) {
      const string a = slurp(kRoot / "data" / f), b = slurp(kRoot / "again" / f);
      // manifests record their own root, so only compare clip listings there
      if (string(f) == "manifest.json")
        CHECK(nlohmann::json::parse(a)["clips"] == nlohmann::json::parse(b)["clips"]);
      else
        CHECK(a == b);
    }
  }

  TEST_CASE("errors exit non-zero with a message") {
    fixture();
    string out;
    CHECK(cli("synth --out " + at("bad") + " --duration 1 --density 40 --min-gap 0.05", &out) != 0);
    CHECK(contains(out, "error"));
    CHECK(cli("train --data " + at("missing") + " --out " + at("m2"), &out) != 0);
    CHECK(contains(out, "does not exist"));
    CHECK(cli("train --data " + at("data") + " --out " + at("m2") + " --lr -1", &out) != 0);
    CHECK(cli("detect --model " + at("nope.ckpt") + " --audio " + at("silence/audio/synth_000.wav") + " --out " +
              at("x.txt")) != 0);
    CHECK(cli("frobnicate") != 0);
    CHECK(cli("eval --data " + at("data") + " --out " + at("e0")) != 0);
  }

  TEST_CASE("train writes checkpoint, trace and config") {
    fixture();
    CHECK(fs::file_size(at("model/model.ckpt")) > 294644 * 8);
    const string trace = slurp(at("model/loss.csv"));
    CHECK(trace.rfind("epoch,train_loss,val_loss,momentum\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 3);
    const auto cfg = nlohmann::json::parse(slurp(at("model/config.json")));
    CHECK(cfg["epochs"] == 2);
    CHECK(cfg["batch_size"] == 32);
  }

  TEST_CASE("detect on silence and on events") {
    fixture();
    REQUIRE(cli("detect --model " + at("model/model.ckpt") + " --audio " + at("silence/audio/synth_000.wav") +
                " --out " + at("silence.txt") + " --delta 0.2") == 0);
    CHECK(slurp(at("silence.txt")).empty());

    string log;
    REQUIRE(cli("detect --model " + at("model/model.ckpt") + " --audio " + at("data/audio/synth_000.wav") +
                    " --out " + at("events.txt") + " --delta 0.0 --smooth --odf-out " + at("odf.csv"),
                &log) == 0);
    CHECK(contains(log, "smoothed"));
    std::istringstream in(slurp(at("events.txt")));
    double prev = -1.0, t;
    while (in >> t) {
      CHECK(t > prev);
      CHECK(t >= 0.0);
      prev = t;
    }
    const string odf = slurp(at("odf.csv"));
    CHECK(odf.rfind("frame,time,odf\n", 0) == 0);
    CHECK(std::count(odf.begin(), odf.end(), '\n') == 1 + 301);
  }

  TEST_CASE("eval scores a checkpoint and echoes the grid") {
    fixture();
    string out;
    REQUIRE(cli("eval --model " + at("model/model.ckpt") + " --data " + at("data") + " --out " + at("eval") +
                    " --delta-grid 0.1,0.3,0.5",
                &out) == 0);
    const string summary = slurp(at("eval/summary.txt"));
    CHECK(contains(summary, "Threshold"));
    CHECK(contains(summary, "F1(S)"));
    CHECK(contains(summary, "delta grid: 0.1,0.3,0.5"));
    CHECK(contains(out, "delta grid: 0.1,0.3,0.5"));
    const string csv = slurp(at("eval/report.csv"));
    CHECK(csv.rfind("model,threshold,fold,smoothing,delta,tp,fp,fn,precision,recall,f1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
    const auto j = nlohmann::json::parse(slurp(at("eval/report.json")));
    CHECK(j[0]["model"] == "loglogistic");
    CHECK(j[0]["threshold"] == 10);
  }

  TEST_CASE("eval cross-validates with --folds") {
    fixture();
    string out;
    REQUIRE(cli("eval --data " + at("data") + " --out " + at("cv") + " --cache " + at("model/features") +
                    " --folds 2 --epochs 1 --frames-per-epoch 100 --batch-size 32 --val-frames 50 --delta-grid 0.2,0.4"
                    " --variant baseline",
                &out) == 0);
    CHECK(contains(out, "fold 0:"));
    CHECK(contains(out, "fold 1:"));
    const auto j = nlohmann::json::parse(slurp(at("cv/report.json")));
    CHECK(j[0]["model"] == "baseline");
    CHECK(j[0]["folds"].size() == 2);
  }

  TEST_CASE("json config merges under flags and rejects unknown keys") {
    fixture();
    {
      std::ofstream cfg(kRoot / "cfg.json");
      cfg << R"({"train": {"epochs": 1, "batch-size": 16, "frames-per-epoch": 64, "val-fraction": 0.2}})";
    }
    string out;
    REQUIRE(cli("train --config " + at("cfg.json") + " --data " + at("data") + " --out " + at("cfgmodel") +
                    " --batch-size 8 --val-frames 50 --cache " + at("model/features"),
                &out) == 0);
    CHECK(contains(out, "resolved config"));
    const auto j = nlohmann::json::parse(slurp(at("cfgmodel/config.json")));
    CHECK(j["epochs"] == 1);
    CHECK(j["batch_size"] == 8);
    {
      std::ofstream cfg(kRoot / "bad.json");
      cfg << R"({"train": {"epochz": 1}})";
    }
    CHECK(cli("train --config " + at("bad.json") + " --data " + at("data") + " --out " + at("badmodel"), &out) != 0);
  }
}
