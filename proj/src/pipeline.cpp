#include "ceae/pipeline.hpp"

#include "ceae/convert.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ceae {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

void write_provenance(const RunConfig& cfg, const std::string& dir) {
  write_text(fs::path(dir) / "run_config.json", cfg.to_json());
}

}  // namespace

CorpusResult run_make_corpus(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  CorpusResult result;
  result.manifest =
      make_corpus(default_speakers(cfg.corpus.speakers), cfg.corpus.utterances_per_speaker,
                  cfg.corpus.base_seed, out_dir, cfg.corpus.min_utterance_ms);
  write_provenance(cfg, out_dir);
  if (result.manifest.speakers.size() >= 2)
    result.domination =
        content_domination_ratio(result.manifest, cfg.corpus.probe_pairs, cfg.corpus.base_seed);
  return result;
}

TrainResult run_training(const RunConfig& cfg, const std::string& corpus_dir,
                         const std::string& out_dir, const std::string& stage,
                         const std::string& new_corpus_dir, const std::string& stage3_init) {
  cfg.validate();
  require(stage == "1" || stage == "2" || stage == "3" || stage == "all",
          "stage must be 1, 2, 3 or all");
  const bool do1 = stage == "1" || stage == "all";
  const bool do2 = (stage == "2" || stage == "all") && cfg.train.variant != Variant::Vanilla;
  const bool do3 = stage == "3" || (stage == "all" && !new_corpus_dir.empty());
  if (stage == "3") require(!new_corpus_dir.empty(), "stage 3 requires a new-speaker corpus");

  const CorpusManifest manifest = load_manifest(corpus_dir);
  const MelDataset ds = load_dataset(manifest, cfg.frontend, cfg.eval.holdout_fraction);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);
  write_provenance(cfg, out_dir);
  const std::string run_json = cfg.to_json();

  TrainResult result;
  const std::string variant = variant_name(cfg.train.variant);

  if (do1) {
    VanillaBundle bundle;
    for (const auto& spk : ds.speakers) {
      Stage1Trainer tr(&spk, cfg.encoder, cfg.decoder, cfg.train);
      LossLogger log((fs::path(out_dir) / ("loss_stage1_" + spk.id + ".csv")).string());
      tr.run(cfg.train.steps_per_stage[0], &log);
      const std::string path = (fs::path(out_dir) / ("stage1_" + spk.id + ".ckpt")).string();
      save_checkpoint(path, CheckpointCodec::from_stage1(tr, run_json));
      result.checkpoints.push_back(path);
      bundle.encoders.emplace(spk.id, tr.encoder);
      bundle.decoders.emplace(spk.id, tr.decoder);
    }
    const std::string vpath = (fs::path(out_dir) / "vanilla.ckpt").string();
    save_checkpoint(vpath,
                    bundle_checkpoint(bundle, cfg.train.steps_per_stage[0], run_json));
    result.checkpoints.push_back(vpath);
  }

  if (do2) {
    std::map<std::string, nn::DecoderNet> decoders;
    for (const auto& spk : ds.speakers) {
      const fs::path path = fs::path(out_dir) / ("stage1_" + spk.id + ".ckpt");
      if (!fs::exists(path))
        throw ValueError("stage 2 requires stage-1 checkpoints; missing " + path.string());
      const Checkpoint ck = load_checkpoint(path.string());
      require(ck.nets.size() == 2 && ck.nets[1].kind == "decoder",
              "unexpected stage-1 checkpoint layout: " + path.string());
      decoders.emplace(spk.id, decoder_from_blob(ck.nets[1]));
    }
    Stage2Trainer tr(&ds, std::move(decoders), cfg.encoder, cfg.train);
    LossLogger log((fs::path(out_dir) / ("loss_stage2_" + variant + ".csv")).string());
    tr.run(cfg.train.steps_per_stage[1], &log);
    const std::string path = (fs::path(out_dir) / ("stage2_" + variant + ".ckpt")).string();
    save_checkpoint(path, CheckpointCodec::from_stage2(tr, run_json));
    result.checkpoints.push_back(path);
  }

  if (do3) {
    const fs::path s2path = fs::path(out_dir) / ("stage2_" + variant + ".ckpt");
    if (!fs::exists(s2path))
      throw ValueError("stage 3 requires a stage-2 checkpoint; missing " + s2path.string());
    LoadedModel stage2 = model_from_checkpoint(load_checkpoint(s2path.string()));
    require(stage2.is_multi, "stage-2 checkpoint did not contain a multi-head model");

    const MelDataset new_ds = load_dataset(load_manifest(new_corpus_dir), cfg.frontend,
                                           cfg.eval.holdout_fraction);
    MultiHeadModel final_model = stage2.multi;
    for (const auto& spk : new_ds.speakers) {
      const bool finetune =
          stage3_init == "finetune" && final_model.decoders.count(spk.id) == 1;
      const nn::DecoderNet* base = finetune ? &final_model.decoders.at(spk.id) : nullptr;
      Stage3Trainer tr(&spk, stage2.multi.encoder, cfg.decoder, cfg.train,
                       finetune ? Stage3Init::Finetune : Stage3Init::Fresh, base);
      LossLogger log((fs::path(out_dir) / ("loss_stage3_" + spk.id + ".csv")).string());
      tr.run(cfg.train.steps_per_stage[2], &log);
      final_model.decoders.insert_or_assign(spk.id, tr.decoder);
    }
    const std::string path = (fs::path(out_dir) / "stage3.ckpt").string();
    save_checkpoint(path, model_checkpoint(final_model, "stage3", variant,
                                           cfg.train.steps_per_stage[2], run_json));
    result.checkpoints.push_back(path);
  }

  return result;
}

namespace {

json conversion_sidecar(const std::string& source, const std::string& target,
                        const std::string& checkpoint_path, uint32_t crc,
                        const std::string& model_hash, const RunConfig& cfg) {
  return json{{"source", source},
              {"target_speaker", target},
              {"checkpoint", checkpoint_path},
              {"checkpoint_crc32", crc},
              {"model_hash", model_hash},
              {"run_config", json::parse(cfg.to_json())}};
}

}  // namespace

ConvertResult run_convert(const RunConfig& cfg, const std::string& checkpoint_path,
                          const std::string& input_path, const std::string& target,
                          bool emit_audio, const std::string& out_dir, bool chunked) {
  cfg.validate();
  LoadedModel loaded = model_from_checkpoint(load_checkpoint(checkpoint_path));
  EvalModel view = loaded.view();
  require(view.decoders.count(target) == 1, "unknown target speaker: " + target);
  const uint32_t crc = checkpoint_crc(checkpoint_path);
  const MelFilterbank fb =
      make_mel_filterbank(cfg.frontend.n_mels, cfg.frontend.fft_size, cfg.frontend.fmin,
                          cfg.frontend.fmax);

  std::vector<std::string> inputs;
  if (fs::is_directory(input_path)) {
    for (const auto& e : fs::directory_iterator(input_path))
      if (e.path().extension() == ".wav") inputs.push_back(e.path().string());
    std::sort(inputs.begin(), inputs.end());  // order-stable batch mode
    require(!inputs.empty(), "no .wav inputs in " + input_path);
  } else {
    inputs.push_back(input_path);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);

  ConvertResult result;
  for (const auto& in : inputs) {
    MelSpectrogram source;
    if (fs::path(in).extension() == ".mel") {
      source = read_mel_archive(in);
    } else {
      source = mel_spectrogram(load_wav(in), fb, cfg.frontend);
    }

    ConversionOutput out;
    if (loaded.is_multi) {
      ConversionRequest req;
      req.source_mel = source;
      req.target_speaker = target;
      req.emit_audio = emit_audio;
      req.chunked = chunked;
      out = convert_utterance(req, loaded.multi, cfg.frontend);
    } else {
      // Vanilla bundle: the target's own exemplar autoencoder.
      out.mel = MelSpectrogram{convert_for_eval(view, source.values, target), source.frame_hop};
      if (emit_audio) {
        AudioClip audio = griffin_lim(out.mel, fb, cfg.frontend.griffin_lim_iterations,
                                      cfg.frontend.window, cfg.frontend.fft_size);
        double peak = 1e-12;
        for (double x : audio.samples) peak = std::max(peak, std::abs(x));
        for (auto& x : audio.samples) x = std::clamp(x * 0.9 / peak, -1.0, 1.0);
        out.audio = std::move(audio);
      }
    }

    const std::string stem = fs::path(in).stem().string() + "_to_" + target;
    const std::string mel_path = (fs::path(out_dir) / (stem + ".mel")).string();
    write_mel_archive(mel_path, out.mel);
    result.outputs.push_back(mel_path);
    if (out.audio.has_value()) {
      const std::string wav_path = (fs::path(out_dir) / (stem + ".wav")).string();
      write_wav(wav_path, *out.audio);
      result.outputs.push_back(wav_path);
    }
    const std::string sidecar_path = (fs::path(out_dir) / (stem + ".json")).string();
    write_text(sidecar_path,
               conversion_sidecar(in, target, checkpoint_path, crc, to_hex(view.model_hash), cfg)
                   .dump(2));
    result.outputs.push_back(sidecar_path);
  }
  return result;
}

namespace {

json evaluate_one(const RunConfig& cfg, LoadedModel& loaded, const MelDataset& ds,
                  std::vector<EvalReport>* reports_out) {
  EvalModel view = loaded.view();
  const auto conversions =
      make_cross_conversions(view, ds, cfg.eval.conversions_per_speaker);
  json reports = json::array();
  std::vector<double> leakages;
  json summary;
  std::vector<EvalReport> all;
  for (int i = 0; i < cfg.eval.seeds; ++i) {
    EvalReport r = full_report(view, ds, conversions, cfg.eval.seed + static_cast<uint64_t>(i),
                               cfg.eval.residual_pairs);
    reports.push_back(json::parse(report_to_json(r)));
    all.push_back(std::move(r));
  }
  if (reports_out) *reports_out = all;

  auto median_of = [&](auto getter) {
    std::vector<double> v;
    for (const auto& r : all) v.push_back(getter(r));
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  summary["probe_leakage"] = median_of([](const EvalReport& r) { return r.probe_leakage; });
  summary["sca_proxy"] = median_of([](const EvalReport& r) { return r.sca_proxy; });
  summary["recon_mse"] = median_of([](const EvalReport& r) { return r.recon_mse; });
  summary["cycle_residual"] = median_of([](const EvalReport& r) { return r.cycle_residual; });
  summary["content_preservation"] =
      median_of([](const EvalReport& r) { return r.content_preservation; });
  summary["chance_level"] = all[0].chance_level;

  return json{{"reports", reports}, {"summary", summary}};
}

}  // namespace

EvaluateResult run_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& corpus_dir, const std::string& compare_path,
                            const std::string& out_path) {
  cfg.validate();
  const MelDataset ds = load_dataset(load_manifest(corpus_dir), cfg.frontend,
                                     cfg.eval.holdout_fraction);
  LoadedModel primary = model_from_checkpoint(load_checkpoint(checkpoint_path));
  json out = evaluate_one(cfg, primary, ds, nullptr);

  if (!compare_path.empty()) {
    LoadedModel other = model_from_checkpoint(load_checkpoint(compare_path));
    json other_out = evaluate_one(cfg, other, ds, nullptr);
    json delta;
    for (const auto& key : {"probe_leakage", "sca_proxy", "recon_mse", "cycle_residual",
                            "content_preservation"})
      delta[key] = out["summary"][key].get<double>() - other_out["summary"][key].get<double>();
    out = json{{"primary", out}, {"compare", other_out}, {"delta", delta}};
  }

  EvaluateResult result;
  result.report_json = out.dump(2);
  result.report_path = out_path;
  if (!out_path.empty()) write_text(out_path, result.report_json);
  return result;
}

}  // namespace ceae
