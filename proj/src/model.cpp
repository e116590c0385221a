#include "ceae/model.hpp"

#include <algorithm>

namespace ceae {

std::vector<std::string> MultiHeadModel::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : decoders) ids.push_back(id);
  return ids;
}

uint64_t MultiHeadModel::state_hash() const {
  uint64_t h = encoder.state_hash();
  for (const auto& [id, d] : decoders) {
    h = fnv1a64_bytes(id.data(), id.size(), h);
    h = splitmix64(h ^ d.state_hash());
  }
  return h;
}

std::vector<std::string> VanillaBundle::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : decoders) ids.push_back(id);
  return ids;
}

uint64_t VanillaBundle::state_hash() const {
  uint64_t h = 0x9e3779b97f4a7c15ull;
  for (const auto& [id, e] : encoders) {
    h = fnv1a64_bytes(id.data(), id.size(), h);
    h = splitmix64(h ^ e.state_hash());
  }
  for (const auto& [id, d] : decoders) h = splitmix64(h ^ d.state_hash());
  return h;
}

std::vector<std::string> EvalModel::speaker_list() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : decoders) ids.push_back(id);
  return ids;
}

Mat EvalModel::encode(const Mat& mel) const {
  require(shared != nullptr, "EvalModel: no shared encoder");
  return shared->forward(mel, mode).values;
}

Mat EvalModel::encode_for(const std::string& speaker, const Mat& mel) const {
  auto it = encoders.find(speaker);
  require(it != encoders.end(), "EvalModel: unknown speaker " + speaker);
  return it->second->forward(mel, mode).values;
}

Mat EvalModel::decode(const std::string& speaker, const Mat& code) const {
  auto it = decoders.find(speaker);
  require(it != decoders.end(), "EvalModel: unknown speaker " + speaker);
  nn::ContentCode z{code, stride()};
  return it->second->forward(z, mode).values;
}

int EvalModel::stride() const {
  require(shared != nullptr, "EvalModel: no shared encoder");
  return shared->config().code_stride;
}

EvalModel eval_view(MultiHeadModel& model) {
  EvalModel v;
  v.shared = &model.encoder;
  for (auto& [id, d] : model.decoders) {
    v.decoders[id] = &d;
    v.encoders[id] = &model.encoder;
  }
  v.model_hash = model.state_hash();
  return v;
}

EvalModel eval_view(VanillaBundle& bundle) {
  EvalModel v;
  require(!bundle.encoders.empty(), "empty vanilla bundle");
  v.shared = &bundle.encoders.begin()->second;  // first speaker id in sorted order
  for (auto& [id, e] : bundle.encoders) v.encoders[id] = &e;
  for (auto& [id, d] : bundle.decoders) v.decoders[id] = &d;
  v.model_hash = bundle.state_hash();
  return v;
}

LinearStubModel LinearStubModel::make(int mels, int code_dim, int stride_factor,
                                      const std::vector<std::string>& speakers, uint64_t seed,
                                      bool zero_offsets, double decode_scale) {
  require(code_dim >= 1 && code_dim <= mels, "stub: code_dim must be in [1, mels]");
  require(stride_factor >= 1, "stub: stride must be >= 1");
  LinearStubModel m;
  m.stride_ = stride_factor;
  m.decode_scale_ = decode_scale;

  Rng rng(derive_seed(seed, "stub"));
  std::vector<int> perm(mels);
  for (int i = 0; i < mels; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);

  m.q_ = Mat::Zero(code_dim, mels);
  for (int r = 0; r < code_dim; ++r)
    m.q_(r, perm[r]) = uniform_int(rng, 0, 1) == 0 ? 1.0 : -1.0;

  for (const auto& id : speakers) {
    Vec n = Vec::Zero(mels);
    if (!zero_offsets) {
      // Only coordinates outside the selected rows, so Q * n == 0 exactly.
      for (int i = code_dim; i < mels; ++i) n(perm[i]) = uniform(rng, -1.0, 1.0);
    }
    m.offsets_[id] = std::move(n);
  }
  return m;
}

std::vector<std::string> LinearStubModel::speaker_list() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : offsets_) ids.push_back(id);
  return ids;
}

Mat LinearStubModel::encode(const Mat& mel) const {
  require(mel.rows() == q_.cols(), "stub encode: wrong mel rows");
  require(mel.cols() % stride_ == 0, "stub encode: frames not divisible by stride");
  Mat proj = q_ * mel;
  Mat code(q_.rows(), mel.cols() / stride_);
  for (long c = 0; c < code.cols(); ++c) code.col(c) = proj.col(c * stride_);
  return code;
}

Mat LinearStubModel::decode(const std::string& speaker, const Mat& code) const {
  auto it = offsets_.find(speaker);
  require(it != offsets_.end(), "stub decode: unknown speaker " + speaker);
  Mat up(code.rows(), code.cols() * stride_);
  for (long c = 0; c < code.cols(); ++c)
    for (int k = 0; k < stride_; ++k) up.col(c * stride_ + k) = code.col(c);
  Mat mel = decode_scale_ * (q_.transpose() * up);
  mel.colwise() += it->second.col(0);
  return mel;
}

double data_cycle_penalty(const CodeModel& model, const Mat& mel, const std::string& i,
                          const std::string& j) {
  const Mat cycled = model.decode(i, model.encode(model.decode(j, model.encode(mel))));
  return (cycled - mel).squaredNorm() / static_cast<double>(mel.size());
}

}  // namespace ceae
