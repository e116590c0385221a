#include "ceae/convert.hpp"

#include <algorithm>
#include <cmath>

namespace ceae {

namespace {

Mat convert_values(const Mat& values, MultiHeadModel& model, const std::string& target) {
  auto it = model.decoders.find(target);
  require(it != model.decoders.end(), "unknown target speaker: " + target);
  const int stride = model.encoder.config().code_stride;
  const long orig_t = values.cols();
  const Mat padded = nn::pad_frames_to_stride(values, stride);
  nn::ContentCode code = model.encoder.forward(padded, nn::Mode::Eval);
  MelSpectrogram out = it->second.forward(code, nn::Mode::Eval);
  return out.values.leftCols(orig_t);
}

}  // namespace

MelSpectrogram convert_mel(const MelSpectrogram& mel, MultiHeadModel& model,
                           const std::string& target, bool chunked) {
  require(mel.values.rows() == model.encoder.config().in_mels,
          "convert_mel: wrong mel band count");
  MelSpectrogram out;
  out.frame_hop = mel.frame_hop;
  if (!chunked) {
    out.values = convert_values(mel.values, model, target);
    return out;
  }

  // Memory-constrained mode: fixed 128-frame chunks, concatenated.
  const long chunk = 128;
  out.values.resize(mel.values.rows(), mel.values.cols());
  for (long start = 0; start < mel.values.cols(); start += chunk) {
    const long n = std::min(chunk, mel.values.cols() - start);
    out.values.middleCols(start, n) =
        convert_values(mel.values.middleCols(start, n), model, target);
  }
  return out;
}

ConversionOutput convert_utterance(const ConversionRequest& request, MultiHeadModel& model,
                                   const FrontendConfig& cfg) {
  require(request.source_audio.has_value() || request.source_mel.has_value(),
          "conversion request has no source");
  const MelFilterbank fb = make_mel_filterbank(cfg.n_mels, cfg.fft_size, cfg.fmin, cfg.fmax);

  MelSpectrogram source;
  if (request.source_audio.has_value())
    source = mel_spectrogram(*request.source_audio, fb, cfg);
  else
    source = *request.source_mel;

  ConversionOutput out;
  out.mel = convert_mel(source, model, request.target_speaker, request.chunked);
  if (request.emit_audio) {
    AudioClip audio = griffin_lim(out.mel, fb, cfg.griffin_lim_iterations, cfg.window,
                                  cfg.fft_size);
    double peak = 1e-12;
    for (double x : audio.samples) peak = std::max(peak, std::abs(x));
    const double gain = 0.9 / peak;
    for (auto& x : audio.samples) x = std::clamp(x * gain, -1.0, 1.0);
    out.audio = std::move(audio);
  }
  return out;
}

}  // namespace ceae
