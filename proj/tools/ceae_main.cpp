#include "ceae/pipeline.hpp"
#include "ceae/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

ceae::RunConfig build_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  ceae::RunConfig cfg =
      config_path.empty() ? ceae::RunConfig{} : ceae::RunConfig::from_file(config_path);
  for (const auto& o : overrides) cfg.apply_override(o);  // flags win over the file
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-consistency-enhanced exemplar autoencoder for any-to-one voice conversion"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "configuration file (sectioned key=value)");
  app.add_option("--set", overrides, "override a config key, e.g. --set train.alpha=5")
      ->take_all();

  // make-corpus
  auto* mk = app.add_subcommand("make-corpus", "generate the synthetic speaker corpus");
  std::string mk_out = "corpus";
  int mk_speakers = -1;
  long long mk_seed = -1;
  mk->add_option("--out", mk_out, "output directory");
  mk->add_option("--speakers", mk_speakers, "number of speakers (1..4)");
  mk->add_option("--seed", mk_seed, "corpus base seed");

  // train
  auto* tr = app.add_subcommand("train", "run the staged training protocol");
  std::string tr_corpus, tr_out = "runs", tr_stage = "all", tr_new_corpus, tr_variant,
              tr_init = "fresh";
  long long tr_seed = -1;
  tr->add_option("--corpus", tr_corpus, "corpus directory")->required();
  tr->add_option("--out", tr_out, "output directory for checkpoints and logs");
  tr->add_option("--stage", tr_stage, "1, 2, 3 or all");
  tr->add_option("--variant", tr_variant, "vanilla | cycle | encoder_share_only | data_cycle");
  tr->add_option("--new-corpus", tr_new_corpus, "new-speaker corpus for stage 3");
  tr->add_option("--stage3-init", tr_init, "fresh | finetune");
  tr->add_option("--seed", tr_seed, "training seed");

  // convert
  auto* cv = app.add_subcommand("convert", "any-to-one conversion of wav or mel inputs");
  std::string cv_ckpt, cv_input, cv_target, cv_out = "converted";
  bool cv_audio = false, cv_chunked = false;
  cv->add_option("--checkpoint", cv_ckpt, "model checkpoint")->required();
  cv->add_option("--input", cv_input, "wav file, mel archive, or directory of wavs")->required();
  cv->add_option("--target", cv_target, "target speaker id")->required();
  cv->add_option("--out", cv_out, "output directory");
  cv->add_flag("--emit-audio", cv_audio, "also write Griffin-Lim audio");
  cv->add_flag("--chunked", cv_chunked, "convert in fixed 128-frame chunks");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "disentanglement and conversion metrics");
  std::string ev_ckpt, ev_corpus, ev_compare, ev_out = "eval_report.json";
  int ev_seeds = -1;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--compare", ev_compare, "second checkpoint for a paired report");
  ev->add_option("--seeds", ev_seeds, "number of probe seeds");
  ev->add_option("--out", ev_out, "report path (JSON)");

  // verify
  auto* vf = app.add_subcommand("verify", "fast self-verification suite");
  long long vf_seed = 42;
  bool vf_bug = false;
  vf->add_option("--seed", vf_seed, "verification seed");
  vf->add_flag("--inject-gradient-bug", vf_bug, "corrupt one gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (mk->parsed()) {
      if (mk_speakers > 0) overrides.push_back("corpus.speakers=" + std::to_string(mk_speakers));
      if (mk_seed >= 0) overrides.push_back("corpus.base_seed=" + std::to_string(mk_seed));
      const auto cfg = build_config(config_path, overrides);
      const auto result = ceae::run_make_corpus(cfg, mk_out);
      std::fprintf(stderr, "corpus: %zu speakers, %zu utterances -> %s\n",
                   result.manifest.speakers.size(), result.manifest.entries.size(),
                   mk_out.c_str());
      if (result.manifest.speakers.size() >= 2)
        std::fprintf(stderr,
                     "content domination: same-word %.4f / cross-word %.4f -> ratio %.4f %s\n",
                     result.domination.same_word_cross_speaker,
                     result.domination.cross_word_same_speaker, result.domination.ratio,
                     result.domination.ratio < 1.0 ? "(< 1, assumption holds)" : "(>= 1!)");
      return 0;
    }

    if (tr->parsed()) {
      if (!tr_variant.empty()) overrides.push_back("train.variant=" + tr_variant);
      if (tr_seed >= 0) overrides.push_back("train.seed=" + std::to_string(tr_seed));
      const auto cfg = build_config(config_path, overrides);
      const auto result =
          ceae::run_training(cfg, tr_corpus, tr_out, tr_stage, tr_new_corpus, tr_init);
      for (const auto& c : result.checkpoints) std::fprintf(stderr, "checkpoint: %s\n", c.c_str());
      return 0;
    }

    if (cv->parsed()) {
      const auto cfg = build_config(config_path, overrides);
      const auto result =
          ceae::run_convert(cfg, cv_ckpt, cv_input, cv_target, cv_audio, cv_out, cv_chunked);
      for (const auto& o : result.outputs) std::fprintf(stderr, "wrote: %s\n", o.c_str());
      return 0;
    }

    if (ev->parsed()) {
      if (ev_seeds > 0) overrides.push_back("eval.seeds=" + std::to_string(ev_seeds));
      const auto cfg = build_config(config_path, overrides);
      const auto result = ceae::run_evaluate(cfg, ev_ckpt, ev_corpus, ev_compare, ev_out);
      std::fprintf(stderr, "report: %s\n", result.report_path.c_str());
      return 0;
    }

    if (vf->parsed()) {
      const auto results =
          ceae::run_verification(static_cast<uint64_t>(vf_seed), vf_bug);
      const bool ok = ceae::print_verification(results);
      return ok ? 0 : 1;
    }
  } catch (const ceae::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 1;
  } catch (const ceae::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 2;
}
