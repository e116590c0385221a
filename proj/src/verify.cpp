#include "ceae/verify.hpp"

#include "ceae/checkpoint.hpp"
#include "ceae/gradcheck.hpp"
#include "ceae/losses.hpp"
#include "ceae/probes.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace ceae {

namespace {

nn::EncoderConfig mini_encoder() {
  nn::EncoderConfig c;
  c.conv_layers = 1;
  c.conv_channels = 8;
  c.recurrent_layers = 1;
  c.recurrent_hidden = 4;
  c.code_dim = 4;
  c.code_stride = 4;
  return c;
}

nn::DecoderConfig mini_decoder() {
  nn::DecoderConfig c;
  c.code_dim = 4;
  c.pre_recurrent_channels = 8;
  c.conv_layers = 1;
  c.conv_channels = 8;
  c.post_recurrent_channels = 8;
  c.post_recurrent_layers = 1;
  return c;
}

MelDataset random_mini_dataset(uint64_t seed, int frames = 32, int segments = 4) {
  MelDataset ds;
  ds.segment_frames = frames;
  Rng rng(derive_seed(seed, "verify-data"));
  std::normal_distribution<double> normal(0.0, 1.5);
  for (const std::string id : {"a", "b"}) {
    SpeakerData spk;
    spk.id = id;
    for (int s = 0; s < segments; ++s) {
      Mat m(80, frames);
      for (long c = 0; c < m.cols(); ++c)
        for (long r = 0; r < m.rows(); ++r) m(r, c) = normal(rng);
      spk.train_segments.push_back(std::move(m));
    }
    ds.speakers.push_back(std::move(spk));
  }
  return ds;
}

VerifyResult check_grad(const std::string& name, nn::LossPath path, uint64_t seed,
                        bool inject_bug) {
  const auto report = nn::grad_check(nn::EncoderConfig::desk(), nn::DecoderConfig::desk(), path,
                                     seed, 200, 1e-5, inject_bug ? 1.0 : 0.0);
  VerifyResult r;
  r.name = name;
  r.pass = report.max_rel_err < 1e-4;
  std::ostringstream os;
  os << "max_rel_err=" << report.max_rel_err << " over " << report.coords_checked << " coords";
  r.detail = os.str();
  return r;
}

VerifyResult check_loss_identities(uint64_t seed) {
  VerifyResult r;
  r.name = "loss_identity";
  Rng rng(derive_seed(seed, "loss-id"));
  bool ok = true;
  for (int k = 0; k < 1000 && ok; ++k) {
    const double l_rec = uniform(rng, 0.0, 100.0);
    const double l_cyc = uniform(rng, 0.0, 100.0);
    const double alpha = uniform(rng, 0.0, 20.0);
    const double total = nn::loss_total(l_rec, l_cyc, alpha);
    ok = std::abs(total - (l_rec + alpha * l_cyc)) <= 1e-12 * std::max(1.0, std::abs(total));
  }
  // Worked examples on 2x2 matrices.
  Mat zero = Mat::Zero(2, 2);
  Mat rec_hat(1, 2);
  rec_hat << 1.0, 2.0;
  ok = ok && nn::loss_rec({rec_hat}, {Mat::Zero(1, 2)}) == 2.5;
  Mat cyc_diff(2, 2);
  cyc_diff << 1.0, 1.0, 2.0, 2.0;
  ok = ok && nn::loss_cyc({cyc_diff}, {zero}) == 2.5;
  ok = ok && nn::loss_total(2.5, 2.5, 10.0) == 27.5;
  ok = ok && nn::loss_total(2.5, 0.0, 10.0) == 2.5;
  r.pass = ok;
  r.detail = ok ? "1000 random inputs + worked examples" : "identity violated";
  return r;
}

VerifyResult check_stub_optimum(uint64_t seed) {
  VerifyResult r;
  r.name = "stub_cycle_optimum";
  auto stub = LinearStubModel::make(16, 4, 2, {"a", "b"}, seed);
  Rng rng(derive_seed(seed, "stub-data"));
  std::normal_distribution<double> normal(0.0, 1.0);
  MelDataset ds;
  ds.segment_frames = 8;
  for (const std::string id : {"a", "b"}) {
    SpeakerData spk;
    spk.id = id;
    for (int s = 0; s < 3; ++s) {
      Mat m(16, 8);
      for (long c = 0; c < m.cols(); ++c)
        for (long rr = 0; rr < m.rows(); ++rr) m(rr, c) = normal(rng);
      spk.train_segments.push_back(std::move(m));
    }
    ds.speakers.push_back(std::move(spk));
  }

  const double residual = cycle_residual(stub, ds, 32, seed);
  // Both cross directions explicitly.
  const Mat m = ds.speakers[0].train_segments[0];
  const Mat z = stub.encode(m);
  const Mat zh_ab = stub.encode(stub.decode("b", z));
  const Mat zh_ba = stub.encode(stub.decode("a", z));
  const double l_cyc = nn::loss_cyc({zh_ab, zh_ba}, {z, z});

  r.pass = residual < 1e-12 && l_cyc == 0.0;
  std::ostringstream os;
  os << "residual=" << residual << " l_cyc=" << l_cyc;
  r.detail = os.str();
  return r;
}

VerifyResult check_frame_law(uint64_t seed) {
  VerifyResult r;
  r.name = "stft_frame_law";
  Rng rng(derive_seed(seed, "frame-law"));
  bool ok = true;
  long bad_len = -1;
  std::vector<long> lengths = {1, 199, 200, 201, 25599, 25600, 25601};
  for (int k = 0; k < 60; ++k) lengths.push_back(uniform_int(rng, 1, 100000));
  for (long len : lengths) {
    AudioClip clip;
    clip.samples.resize(len);
    for (auto& s : clip.samples) s = uniform(rng, -0.5, 0.5);
    const auto spec = stft(clip);
    const long expected = (len + 199) / 200;
    if (spec.frames() != expected) {
      ok = false;
      bad_len = len;
      break;
    }
  }
  r.pass = ok;
  r.detail = ok ? "T == ceil(len/hop) over randomized lengths"
               : "violated at len=" + std::to_string(bad_len);
  return r;
}

VerifyResult check_checkpoint_roundtrip(uint64_t seed) {
  VerifyResult r;
  r.name = "checkpoint_roundtrip";
  const auto dir = std::filesystem::temp_directory_path() / "ceae_verify";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "mini.ckpt").string();

  MelDataset ds = random_mini_dataset(seed);
  TrainConfig tc;
  tc.seed = derive_seed(seed, "verify-train");
  tc.variant = Variant::Vanilla;

  // Straight run.
  Stage1Trainer straight(&ds.speakers[0], mini_encoder(), mini_decoder(), tc);
  std::vector<LossReport> full_trace;
  straight.run(10, nullptr, &full_trace);

  // Interrupted run: 5 steps, checkpoint, resume, 5 more.
  Stage1Trainer part(&ds.speakers[0], mini_encoder(), mini_decoder(), tc);
  part.run(5);
  save_checkpoint(path, CheckpointCodec::from_stage1(part, "{}"));
  Checkpoint loaded = load_checkpoint(path);
  Stage1Trainer resumed = CheckpointCodec::to_stage1(loaded, &ds.speakers[0]);

  bool ok = resumed.encoder.state_hash() == part.encoder.state_hash() &&
            resumed.decoder.state_hash() == part.decoder.state_hash();
  std::vector<LossReport> tail;
  resumed.run(5, nullptr, &tail);
  for (int i = 0; i < 5 && ok; ++i)
    ok = tail[i].l_total == full_trace[5 + i].l_total && tail[i].l_rec == full_trace[5 + i].l_rec;

  r.pass = ok;
  r.detail = ok ? "save/load bit-equal, resume trace identical" : "round trip mismatch";
  std::filesystem::remove(path);
  return r;
}

}  // namespace

std::vector<VerifyResult> run_verification(uint64_t seed, bool inject_gradient_bug) {
  std::vector<VerifyResult> results;
  results.push_back(
      check_grad("grad_check_rec", nn::LossPath::Reconstruction, seed, inject_gradient_bug));
  results.push_back(check_grad("grad_check_cyc", nn::LossPath::Cycle, seed, inject_gradient_bug));
  results.push_back(check_loss_identities(seed));
  results.push_back(check_stub_optimum(seed));
  results.push_back(check_frame_law(seed));
  results.push_back(check_checkpoint_roundtrip(seed));
  return results;
}

bool print_verification(const std::vector<VerifyResult>& results, std::string* out) {
  std::ostringstream os;
  bool all = true;
  for (const auto& r : results) {
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name;
    for (size_t i = r.name.size(); i < 26; ++i) os << ' ';
    os << r.detail << '\n';
    all = all && r.pass;
  }
  os << (all ? "verification: all checks passed" : "verification: FAILURES present") << '\n';
  if (out)
    *out = os.str();
  else
    std::fputs(os.str().c_str(), stdout);
  return all;
}

}  // namespace ceae
