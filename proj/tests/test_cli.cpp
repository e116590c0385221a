#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ceae/common.hpp"
#include "ceae/runconfig.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace ceae;
namespace fs = std::filesystem;

#ifndef CEAE_BINARY_PATH
#define CEAE_BINARY_PATH "./ceae"
#endif

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string output;
};

RunOutput run_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_out.txt";
  const std::string cmd =
      std::string(CEAE_BINARY_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunOutput out;
  out.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream f(log);
  out.output.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Mini config: tiny nets and tiny corpus so CLI runs finish in seconds.
std::string write_mini_config(const fs::path& dir) {
  const fs::path path = dir / "mini.ini";
  std::ofstream f(path);
  f << "[corpus]\n"
       "speakers = 2\n"
       "utterances_per_speaker = 3\n"
       "min_utterance_ms = 1700\n"
       "probe_pairs = 4\n"
       "[encoder]\n"
       "conv_layers = 1\n"
       "conv_channels = 8\n"
       "recurrent_layers = 1\n"
       "recurrent_hidden = 4\n"
       "code_dim = 4\n"
       "[decoder]\n"
       "code_dim = 4\n"
       "pre_recurrent_channels = 8\n"
       "conv_layers = 1\n"
       "conv_channels = 8\n"
       "post_recurrent_channels = 8\n"
       "post_recurrent_layers = 1\n"
       "[train]\n"
       "steps_stage1 = 4\n"
       "steps_stage2 = 4\n"
       "steps_stage3 = 4\n"
       "[frontend]\n"
       "griffin_lim_iterations = 4\n";
  return path.string();
}

}  // namespace

TEST_CASE("run config: defaults, parsing, unknown keys, overrides") {
  RunConfig def;
  def.validate();
  CHECK(def.train.alpha == 10.0);
  CHECK(def.corpus.speakers == 4);

  RunConfig cfg = RunConfig::from_text("[train]\nalpha = 5.5\nvariant = data_cycle\n");
  CHECK(cfg.train.alpha == 5.5);
  CHECK(cfg.train.variant == Variant::DataCycle);

  CHECK_THROWS_WITH_AS(RunConfig::from_text("[train]\nbogus = 1\n"),
                       doctest::Contains("unknown key"), ValueError);
  CHECK_THROWS_AS(RunConfig::from_text("alpha = 1\n"), ValueError);  // key outside section
  CHECK_THROWS_AS(RunConfig::from_text("[train]\nalpha = abc\n"), ValueError);

  cfg.apply_override("train.alpha=2.25");
  CHECK(cfg.train.alpha == 2.25);
  CHECK_THROWS_AS(cfg.apply_override("nope.key=1"), ValueError);

  // Presets expand and later keys override them.
  RunConfig paper = RunConfig::from_text("[encoder]\npreset = paper\ncode_stride = 8\n");
  CHECK(paper.encoder.conv_channels == 512);
  CHECK(paper.encoder.code_stride == 8);

  // Provenance JSON is parseable and complete.
  const std::string j = def.to_json();
  CHECK(j.find("\"alpha\"") != std::string::npos);
  CHECK(j.find("\"window\"") != std::string::npos);
}

TEST_CASE("cli: verify passes and the injected bug is caught") {
  const auto dir = scratch("ceae_cli_verify");
  const RunOutput ok = run_cli("verify --seed 7", dir);
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("grad_check_rec") != std::string::npos);
  CHECK(ok.output.find("all checks passed") != std::string::npos);

  const RunOutput bad = run_cli("verify --seed 7 --inject-gradient-bug", dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("FAIL  grad_check") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: corpus generation is deterministic and honors --speakers") {
  const auto dir = scratch("ceae_cli_corpus");
  const std::string cfg = write_mini_config(dir);
  const auto c1 = (dir / "c1").string();
  const auto c2 = (dir / "c2").string();

  CHECK(run_cli("--config " + cfg + " make-corpus --out " + c1, dir).exit_code == 0);
  CHECK(run_cli("--config " + cfg + " make-corpus --out " + c2, dir).exit_code == 0);
  CHECK(read_file_bytes(c1 + "/manifest.tsv") == read_file_bytes(c2 + "/manifest.tsv"));

  const auto c3 = (dir / "c3").string();
  CHECK(run_cli("--config " + cfg + " make-corpus --speakers 1 --out " + c3, dir).exit_code == 0);
  int speaker_dirs = 0;
  for (const auto& e : fs::directory_iterator(c3))
    if (e.is_directory()) ++speaker_dirs;
  CHECK(speaker_dirs == 1);

  // Provenance written next to the corpus.
  CHECK(fs::exists(fs::path(c1) / "run_config.json"));
  fs::remove_all(dir);
}

TEST_CASE("cli: staged training and conversion pipeline") {
  const auto dir = scratch("ceae_cli_train");
  const std::string cfg = write_mini_config(dir);
  const auto corpus = (dir / "corpus").string();
  const auto runs = (dir / "runs").string();
  REQUIRE(run_cli("--config " + cfg + " make-corpus --out " + corpus, dir).exit_code == 0);

  SUBCASE("stage 2 without stage-1 checkpoints exits 2 naming the stage") {
    const RunOutput r =
        run_cli("--config " + cfg + " train --corpus " + corpus + " --stage 2 --out " + runs,
                dir);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("stage-1") != std::string::npos);
  }

  SUBCASE("stage 3 without --new-corpus exits 2") {
    const RunOutput r =
        run_cli("--config " + cfg + " train --corpus " + corpus + " --stage 3 --out " + runs,
                dir);
    CHECK(r.exit_code == 2);
  }

  SUBCASE("full pipeline: train all stages, then convert") {
    const RunOutput tr = run_cli(
        "--config " + cfg + " train --corpus " + corpus + " --stage all --out " + runs, dir);
    REQUIRE(tr.exit_code == 0);
    CHECK(fs::exists(fs::path(runs) / "stage1_spk_high_a.ckpt"));
    CHECK(fs::exists(fs::path(runs) / "stage1_spk_low_a.ckpt"));
    CHECK(fs::exists(fs::path(runs) / "vanilla.ckpt"));
    CHECK(fs::exists(fs::path(runs) / "stage2_cycle.ckpt"));
    CHECK(fs::exists(fs::path(runs) / "loss_stage2_cycle.csv"));
    CHECK(fs::exists(fs::path(runs) / "run_config.json"));

    // Pick an input wav from the corpus.
    std::string wav;
    for (const auto& e : fs::recursive_directory_iterator(corpus))
      if (e.path().extension() == ".wav") {
        wav = e.path().string();
        break;
      }
    REQUIRE(!wav.empty());

    const auto conv = (dir / "conv").string();
    const std::string ckpt = (fs::path(runs) / "stage2_cycle.ckpt").string();

    // Unknown target exits 2.
    CHECK(run_cli("--config " + cfg + " convert --checkpoint " + ckpt + " --input " + wav +
                      " --target nobody --out " + conv,
                  dir)
              .exit_code == 2);

    // Without --emit-audio: mel + sidecar, no wav.
    REQUIRE(run_cli("--config " + cfg + " convert --checkpoint " + ckpt + " --input " + wav +
                        " --target spk_high_a --out " + conv,
                    dir)
                .exit_code == 0);
    int mels = 0, wavs = 0, sidecars = 0;
    for (const auto& e : fs::directory_iterator(conv)) {
      mels += e.path().extension() == ".mel";
      wavs += e.path().extension() == ".wav";
      sidecars += e.path().extension() == ".json";
    }
    CHECK(mels == 1);
    CHECK(wavs == 0);
    CHECK(sidecars == 1);

    // With --emit-audio a wav appears.
    const auto conv2 = (dir / "conv2").string();
    REQUIRE(run_cli("--config " + cfg + " convert --checkpoint " + ckpt + " --input " + wav +
                        " --target spk_high_a --emit-audio --out " + conv2,
                    dir)
                .exit_code == 0);
    bool has_wav = false;
    for (const auto& e : fs::directory_iterator(conv2))
      has_wav = has_wav || e.path().extension() == ".wav";
    CHECK(has_wav);

    // Batch mode over the speaker directory is order-stable.
    const auto batch1 = (dir / "b1").string();
    const auto batch2 = (dir / "b2").string();
    const std::string spk_dir = (fs::path(corpus) / "spk_low_a").string();
    REQUIRE(run_cli("--config " + cfg + " convert --checkpoint " + ckpt + " --input " + spk_dir +
                        " --target spk_high_a --out " + batch1,
                    dir)
                .exit_code == 0);
    REQUIRE(run_cli("--config " + cfg + " convert --checkpoint " + ckpt + " --input " + spk_dir +
                        " --target spk_high_a --out " + batch2,
                    dir)
                .exit_code == 0);
    std::vector<std::string> n1, n2;
    for (const auto& e : fs::directory_iterator(batch1))
      if (e.path().extension() == ".mel") n1.push_back(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(batch2))
      if (e.path().extension() == ".mel") n2.push_back(e.path().filename().string());
    std::sort(n1.begin(), n1.end());
    std::sort(n2.begin(), n2.end());
    CHECK(n1 == n2);
    CHECK(n1.size() == 3);
  }

  fs::remove_all(dir);
}

TEST_CASE("cli: unknown flags and missing subcommand exit 2") {
  const auto dir = scratch("ceae_cli_usage");
  CHECK(run_cli("--definitely-not-a-flag", dir).exit_code == 2);
  CHECK(run_cli("train", dir).exit_code == 2);  // missing required --corpus
  fs::remove_all(dir);
}
