#include "ceae/probes.hpp"

#include "ceae/optim.hpp"
#include "ceae/tape.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using json = nlohmann::json;

namespace ceae {

using nn::Tape;
using nn::Var;

namespace {

Vec probe_logits(const ProbeClassifier& p, const Vec& x) {
  const Vec h = ((p.w1 * x + p.b1.col(0)).array().max(0.0)).matrix();
  return p.w2 * h + p.b2.col(0);
}

}  // namespace

int ProbeClassifier::predict(const Vec& x) const {
  int best = 0;
  probe_logits(*this, x).maxCoeff(&best);
  return best;
}

const std::string& ProbeClassifier::predict_label(const Vec& x) const {
  return classes.at(static_cast<size_t>(predict(x)));
}

ProbeClassifier train_speaker_probe(const std::vector<std::pair<Vec, std::string>>& samples,
                                    uint64_t seed, int hidden, int steps, double lr) {
  require(!samples.empty(), "probe: no samples");
  std::map<std::string, std::vector<size_t>> by_class;
  for (size_t i = 0; i < samples.size(); ++i) by_class[samples[i].second].push_back(i);
  require(by_class.size() >= 2, "probe: need at least 2 classes");
  for (const auto& [label, idx] : by_class)
    require(idx.size() >= 20,
            "probe: class " + label + " has " + std::to_string(idx.size()) + " samples (< 20)");

  ProbeClassifier probe;
  probe.seed = seed;
  for (const auto& [label, _] : by_class) probe.classes.push_back(label);
  const int n_classes = static_cast<int>(probe.classes.size());
  const int dim = static_cast<int>(samples[0].first.size());

  // Stratified 80/20 split.
  Rng split_rng(derive_seed(seed, "probe-split"));
  std::vector<size_t> train_idx, test_idx;
  for (auto& [label, idx] : by_class) {
    std::vector<size_t> shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
    const size_t n_train = (shuffled.size() * 8) / 10;
    train_idx.insert(train_idx.end(), shuffled.begin(), shuffled.begin() + n_train);
    test_idx.insert(test_idx.end(), shuffled.begin() + n_train, shuffled.end());
  }

  auto class_index = [&](const std::string& label) {
    return static_cast<int>(std::lower_bound(probe.classes.begin(), probe.classes.end(), label) -
                            probe.classes.begin());
  };

  Mat x_train(dim, train_idx.size());
  std::vector<int> y_train(train_idx.size());
  for (size_t i = 0; i < train_idx.size(); ++i) {
    x_train.col(i) = samples[train_idx[i]].first;
    y_train[i] = class_index(samples[train_idx[i]].second);
  }

  nn::ParamStore store;
  Rng init_rng(derive_seed(seed, "probe-init"));
  Mat w1(hidden, dim), w2(n_classes, hidden);
  nn::init_xavier_uniform(w1, dim, hidden, init_rng);
  nn::init_xavier_uniform(w2, hidden, n_classes, init_rng);
  const int iw1 = store.add("w1", std::move(w1));
  const int ib1 = store.add("b1", Mat::Zero(hidden, 1));
  const int iw2 = store.add("w2", std::move(w2));
  const int ib2 = store.add("b2", Mat::Zero(n_classes, 1));

  nn::Adam opt(nn::AdamConfig{lr, 0.9, 0.999, 1e-8}, store);
  for (int s = 0; s < steps; ++s) {
    Tape t;
    std::vector<Var> p;
    for (const auto& v : store.values) p.push_back(t.param(&v));
    Var x = t.constant(x_train);
    Var h = t.relu(t.add_bias(t.matmul(p[iw1], x), p[ib1]));
    Var logits = t.add_bias(t.matmul(p[iw2], h), p[ib2]);
    Var loss = t.softmax_xent(logits, y_train);
    t.backward(loss);
    std::vector<Mat> grads;
    for (auto v : p) grads.push_back(t.grad(v));
    opt.step(store, grads);
  }

  probe.w1 = store.values[iw1];
  probe.b1 = store.values[ib1];
  probe.w2 = store.values[iw2];
  probe.b2 = store.values[ib2];

  int correct = 0;
  for (size_t i : test_idx)
    if (probe.predict_label(samples[i].first) == samples[i].second) ++correct;
  probe.heldout_accuracy = test_idx.empty() ? 0.0 : static_cast<double>(correct) / test_idx.size();
  return probe;
}

Vec code_feature(const EvalModel& model, const std::string& speaker, const Mat& segment) {
  const Mat code = model.encode_for(speaker, segment);
  return code.rowwise().mean();
}

Vec mel_stats_feature(const Mat& mel) {
  const long bands = mel.rows();
  Vec f(2 * bands);
  const Vec mean = mel.rowwise().mean();
  f.head(bands) = mean;
  f.tail(bands) = (mel.colwise() - mean).array().square().rowwise().mean();
  return f;
}

double probe_leakage(const EvalModel& model, const MelDataset& data, uint64_t seed) {
  require(data.speakers.size() >= 2, "probe_leakage: need >= 2 speakers for contrast");
  std::vector<std::pair<Vec, std::string>> samples;
  for (const auto& spk : data.speakers)
    for (const auto& seg : spk.train_segments)
      samples.emplace_back(code_feature(model, spk.id, seg), spk.id);
  return train_speaker_probe(samples, seed).heldout_accuracy;
}

double sca_proxy(const std::vector<std::pair<Mat, std::string>>& conversions,
                 const MelDataset& reference, uint64_t seed) {
  require(!conversions.empty(), "sca_proxy: no conversions");
  std::vector<std::pair<Vec, std::string>> samples;
  for (const auto& spk : reference.speakers)
    for (const auto& seg : spk.train_segments)
      samples.emplace_back(mel_stats_feature(seg), spk.id);
  const ProbeClassifier clf = train_speaker_probe(samples, seed);

  int hits = 0;
  for (const auto& [mel, target] : conversions)
    if (clf.predict_label(mel_stats_feature(mel)) == target) ++hits;
  return static_cast<double>(hits) / conversions.size();
}

double cycle_residual(const CodeModel& model, const MelDataset& data, int pairs, uint64_t seed) {
  const auto ids = model.speaker_list();
  require(ids.size() >= 2, "cycle_residual: need >= 2 decoders");
  require(pairs >= 1, "cycle_residual: pairs must be >= 1");
  Rng rng(derive_seed(seed, "residual"));

  double sum = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const int i = uniform_int(rng, 0, static_cast<int>(data.speakers.size()) - 1);
    const auto& spk = data.speakers[i];
    const Mat& seg = spk.train_segments[uniform_int(
        rng, 0, static_cast<int>(spk.train_segments.size()) - 1)];
    std::vector<std::string> others;
    for (const auto& id : ids)
      if (id != spk.id) others.push_back(id);
    const std::string& tgt = others[uniform_int(rng, 0, static_cast<int>(others.size()) - 1)];

    const Mat z = model.encode(seg);
    const Mat zc = model.encode(model.decode(tgt, z));
    const double denom = z.squaredNorm();
    sum += denom > 0.0 ? (zc - z).squaredNorm() / denom : 0.0;
  }
  return sum / pairs;
}

double recon_mse(const EvalModel& model, const MelDataset& data) {
  double sum = 0.0;
  long count = 0;
  for (const auto& spk : data.speakers) {
    const auto& segs = spk.heldout_segments.empty() ? spk.train_segments : spk.heldout_segments;
    const size_t cap = std::min<size_t>(segs.size(), 20);
    for (size_t i = 0; i < cap; ++i) {
      const Mat z = model.encode_for(spk.id, segs[i]);
      const Mat rec = model.decode(spk.id, z);
      sum += (rec - segs[i]).squaredNorm() / static_cast<double>(segs[i].size());
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

std::vector<double> formant_track(const Mat& mel) {
  // Bands ~10..64 cover the F1/F2 range at 80 mels over 0..8 kHz; the
  // fundamental lives below band 10.
  const long lo = 10, hi = std::min<long>(mel.rows(), 65);
  std::vector<double> track(mel.cols());
  for (long t = 0; t < mel.cols(); ++t) {
    double wsum = 0.0, bsum = 0.0;
    for (long b = lo; b < hi; ++b) {
      const double w = std::exp(mel(b, t));
      wsum += w;
      bsum += w * static_cast<double>(b);
    }
    track[static_cast<size_t>(t)] = wsum > 0.0 ? bsum / wsum : 0.0;
  }
  return track;
}

std::vector<double> formant_argmax_track(const Mat& mel) {
  std::vector<double> track(mel.cols());
  for (long t = 0; t < mel.cols(); ++t) {
    long best = 0;
    mel.col(t).maxCoeff(&best);
    track[static_cast<size_t>(t)] = static_cast<double>(best);
  }
  return track;
}

double track_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && !a.empty(), "track_correlation: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  const double denom = std::sqrt(va * vb);
  return denom > 1e-12 ? cov / denom : 0.0;
}

Mat convert_for_eval(const EvalModel& model, const Mat& mel, const std::string& target) {
  auto eit = model.encoders.find(target);
  auto dit = model.decoders.find(target);
  require(eit != model.encoders.end() && dit != model.decoders.end(),
          "convert_for_eval: unknown target " + target);
  const int stride = eit->second->config().code_stride;
  const Mat padded = nn::pad_frames_to_stride(mel, stride);
  const nn::ContentCode code = eit->second->forward(padded, nn::Mode::Eval);
  Mat out = dit->second->forward(code, nn::Mode::Eval).values;
  return out.leftCols(mel.cols());
}

std::vector<Conversion> make_cross_conversions(const EvalModel& model, const MelDataset& data,
                                               int per_speaker) {
  std::vector<Conversion> out;
  for (const auto& src : data.speakers) {
    const auto& fulls = src.heldout_full;
    const size_t cap = std::min<size_t>(fulls.size(), static_cast<size_t>(per_speaker));
    for (size_t i = 0; i < cap; ++i) {
      for (const auto& [target, _] : model.decoders) {
        if (target == src.id) continue;
        Conversion c;
        c.source = fulls[i];
        c.source_speaker = src.id;
        c.target = target;
        c.converted = convert_for_eval(model, fulls[i], target);
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

double content_preservation(const std::vector<Conversion>& conversions) {
  require(!conversions.empty(), "content_preservation: no conversions");
  double sum = 0.0;
  for (const auto& c : conversions)
    sum += track_correlation(formant_track(c.source), formant_track(c.converted));
  return sum / conversions.size();
}

EvalReport full_report(const EvalModel& model, const MelDataset& data,
                       const std::vector<Conversion>& conversions, uint64_t seed,
                       int residual_pairs) {
  EvalReport r;
  r.probe_leakage = probe_leakage(model, data, seed);
  std::vector<std::pair<Mat, std::string>> sca_pairs;
  for (const auto& c : conversions) sca_pairs.emplace_back(c.converted, c.target);
  r.sca_proxy = sca_pairs.empty() ? 0.0 : sca_proxy(sca_pairs, data, seed);
  r.recon_mse = recon_mse(model, data);
  r.cycle_residual = cycle_residual(model, data, residual_pairs, seed);
  r.chance_level = 1.0 / static_cast<double>(data.speakers.size());
  r.content_preservation = conversions.empty() ? 0.0 : content_preservation(conversions);
  r.seeds = {seed};
  r.model_hash = to_hex(model.model_hash);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  return json{{"probe_leakage", r.probe_leakage},
              {"sca_proxy", r.sca_proxy},
              {"recon_mse", r.recon_mse},
              {"cycle_residual", r.cycle_residual},
              {"chance_level", r.chance_level},
              {"content_preservation", r.content_preservation},
              {"seeds", r.seeds},
              {"model_hash", r.model_hash}}
      .dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.probe_leakage = j.at("probe_leakage").get<double>();
  r.sca_proxy = j.at("sca_proxy").get<double>();
  r.recon_mse = j.at("recon_mse").get<double>();
  r.cycle_residual = j.at("cycle_residual").get<double>();
  r.chance_level = j.at("chance_level").get<double>();
  r.content_preservation = j.at("content_preservation").get<double>();
  r.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  r.model_hash = j.at("model_hash").get<std::string>();
  return r;
}

}  // namespace ceae
