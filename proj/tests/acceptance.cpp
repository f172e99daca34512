// Copyright 2026 The LangDA Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance checks. Each criterion prints one PASS/FAIL line; arguments
// select criteria by number (all when none are given).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "langda/caption_pipeline.hpp"
#include "langda/eval_metrics.hpp"
#include "langda/experiment.hpp"
#include "langda/losses.hpp"
#include "langda/seg_network.hpp"
#include "langda/text_embedding.hpp"
#include "langda/tokenizer.hpp"
#include "langda/uda_engine.hpp"

namespace fs = std::filesystem;

namespace langda {
namespace {

using VecD = Vector<double>;
using MatD = Matrix<double>;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures; the first few are kept for the report line.
class Checker {
 public:
  void require(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    Outcome o{failures_ == 0, summary};
    if (failures_) {
      o.detail += "; " + std::to_string(failures_) + "/" + std::to_string(checks_) + " checks failed:";
      for (const auto& n : notes_) o.detail += " [" + n + "]";
    }
    return o;
  }
  long checks() const { return checks_; }

 private:
  long checks_ = 0;
  long failures_ = 0;
  std::vector<std::string> notes_;
};

fs::path g_work = "acceptance_work";

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = g_work / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string fixed_clock() { return "2026-01-01T00:00:00Z"; }

MatD random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

VecD random_normal(Rng& rng, Eigen::Index n) {
  VecD v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// ---------------------------------------------------------------------------
// 1. Loss formulas against loop oracles.

double oracle_ce(const MatD& logits, const LabelVector& y, int ignore) {
  double sum = 0;
  int n = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (y[j] == ignore) continue;
    double z = 0;
    for (Eigen::Index c = 0; c < logits.rows(); ++c) z += std::exp(logits(c, j));
    sum -= std::log(std::exp(logits(y[j], j)) / z);
    ++n;
  }
  return sum / n;
}

MatD oracle_softmax(const MatD& logits) {
  MatD p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double z = 0;
    for (Eigen::Index c = 0; c < logits.rows(); ++c) z += std::exp(logits(c, j));
    for (Eigen::Index c = 0; c < logits.rows(); ++c) p(c, j) = std::exp(logits(c, j)) / z;
  }
  return p;
}

Outcome criterion_loss_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  Rng rng(20260101);
  const double tol = 1e-10;
  double worst = 0;
  const int instances = 200;
  for (int inst = 0; inst < instances; ++inst) {
    const int k = static_cast<int>(rng.uniform_int(2, 6));
    const int p = static_cast<int>(rng.uniform_int(1, 16));
    const MatD logits = random_matrix(rng, k, p, 4.0);
    LabelVector y(p);
    for (int j = 0; j < p; ++j) y[j] = static_cast<int>(rng.uniform_int(0, k));  // k is ignore
    y[static_cast<Eigen::Index>(rng.uniform_int(0, p - 1))] = static_cast<int>(rng.uniform_int(0, k - 1));

    const double ls = supervised_loss<double>(logits, y, k).value;
    const double ls_o = oracle_ce(logits, y, k);
    worst = std::max(worst, std::abs(ls - ls_o));
    ck.require(std::abs(ls - ls_o) <= tol, "L_S instance " + std::to_string(inst));

    const MatD probs = oracle_softmax(logits);
    const LabelVector pl = pseudo_labels<double>(probs);
    for (int j = 0; j < p; ++j) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (probs(c, j) > probs(best, j)) best = c;
      ck.require(pl[j] == best, "pseudo-label instance " + std::to_string(inst));
    }

    const double tau = rng.uniform(0.3, 0.99);
    int above = 0;
    for (int j = 0; j < p; ++j) {
      double m = probs(0, j);
      for (int c = 1; c < k; ++c) m = std::max(m, probs(c, j));
      above += m > tau;
    }
    ck.require(quality_estimate<double>(probs, tau) == static_cast<double>(above) / p,
               "q_T instance " + std::to_string(inst));

    const int batch = static_cast<int>(rng.uniform_int(1, 3));
    std::vector<MatD> tl;
    PseudoLabelBatch pb;
    double lt_o = 0;
    for (int b = 0; b < batch; ++b) {
      tl.push_back(random_matrix(rng, k, p, 4.0));
      LabelVector lab(p);
      for (int j = 0; j < p; ++j) lab[j] = static_cast<int>(rng.uniform_int(0, k - 1));
      const double q = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      pb.labels.push_back(lab);
      pb.quality.push_back(q);
      lt_o += q * oracle_ce(tl.back(), lab, -1) / batch;
    }
    const double lt = target_loss<double>(tl, pb);
    worst = std::max(worst, std::abs(lt - lt_o));
    ck.require(std::abs(lt - lt_o) <= tol, "L_T instance " + std::to_string(inst));

    const int dim = static_cast<int>(rng.uniform_int(1, 8));
    const VecD f = random_normal(rng, dim), v = random_normal(rng, dim);
    double dot = 0, nf = 0, nv = 0;
    for (int i = 0; i < dim; ++i) {
      dot += f[i] * v[i];
      nf += f[i] * f[i];
      nv += v[i] * v[i];
    }
    const double lp_o = 1 - dot / (std::sqrt(nf) * std::sqrt(nv));
    const double lp = language_consistency_loss<double>(f, v).value;
    worst = std::max(worst, std::abs(lp - lp_o));
    ck.require(std::abs(lp - lp_o) <= tol, "L_p instance " + std::to_string(inst));

    const double lambda = rng.uniform(0, 2);
    const double tot = total_loss(ls, lt, lp, lambda);
    const double tot_o = ls_o + lt_o + lambda * lp_o;
    worst = std::max(worst, std::abs(tot - tot_o));
    ck.require(std::abs(tot - tot_o) <= tol, "total instance " + std::to_string(inst));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ck.require(secs < 10.0, "runtime " + fmt(secs) + " s");
  return ck.outcome(std::to_string(instances) + " instances, max |err| " + fmt(worst) + ", " +
                    fmt(secs, "%.2f") + " s");
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients against central finite differences.

NetworkConfig grad_config() {
  NetworkConfig c;
  c.num_classes = 3;
  c.widths = {3, 4};
  c.decoder_dim = 3;
  c.embed_dim = 5;
  c.pool_heads = 2;
  c.max_tokens = 16;
  c.adapter_on_text = true;
  return c;
}

Tensor3<double> random_image(Rng& rng, int h, int w) {
  Tensor3<double> img(3, h, w);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = rng.uniform();
  return img;
}

StepInputs<double> grad_inputs(const SegNetwork<double>& net, std::uint64_t seed) {
  Rng rng(seed);
  const int k = net.config().num_classes;
  StepInputs<double> in;
  in.ignore_index = k;
  for (int b = 0; b < 2; ++b) {
    in.source_images.push_back(random_image(rng, 6, 6));
    LabelVector y(36);
    for (int j = 0; j < 36; ++j) y[j] = static_cast<int>(rng.uniform_int(0, k));
    y[0] = 0;
    in.source_labels.push_back(y);
    in.source_text.push_back(random_normal(rng, net.config().embed_dim));
    in.target_images.push_back(random_image(rng, 6, 6));
    in.target_text.push_back(random_normal(rng, net.config().embed_dim));
  }
  const VecD teacher = net.init_params(seed + 1000);
  in.pseudo = teacher_pseudo_labels(net, teacher, in.target_images, 0.5);
  for (int b = 0; b < 2; ++b) {
    const std::vector<int> classes = select_mix_classes(in.source_labels[b], k, rng);
    MixedSample<double> m = classmix(in.source_images[b], in.source_labels[b], in.target_images[b],
                                     in.pseudo.labels[b], classes);
    for (Eigen::Index j = 0; j < m.labels.size(); ++j)
      if (m.labels[j] == k) m.labels[j] = in.pseudo.labels[b][j];
    in.student_target_images.push_back(m.image);
    in.pseudo.labels[b] = m.labels;
  }
  in.pseudo.quality = {0.625, 0.25};
  return in;
}

TrainConfig grad_train_config(double lambda_p, double lambda_target) {
  TrainConfig c;
  c.lambda_p = lambda_p;
  c.lambda_target = lambda_target;
  c.caption_mode = CaptionMode::kSourceAndTarget;
  return c;
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  const SegNetwork<double> net(grad_config());
  const Eigen::Index n = net.num_params();
  ck.require(n <= 1000, "network has " + std::to_string(n) + " parameters");
  const char* names[4] = {"L_S", "L_T", "L_p", "total"};
  const std::vector<std::pair<ParamGroup, const char*>> groups = {
      {ParamGroup::kEncoder, "encoder"}, {ParamGroup::kDecoder, "decoder"}, {ParamGroup::kLanguage, "language"}};
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const VecD params = net.init_params(seed);
    const StepInputs<double> in = grad_inputs(net, seed);

    VecD g_s, g_st, g_sp, g_total;
    student_step_losses(net, params, in, grad_train_config(0, 0), &g_s);
    student_step_losses(net, params, in, grad_train_config(0, 1), &g_st);
    student_step_losses(net, params, in, grad_train_config(1, 0), &g_sp);
    const TrainConfig full = grad_train_config(0.1, 1);
    const StepLosses base = student_step_losses(net, params, in, full, &g_total);
    ck.require(base.l_t > 0 && base.l_p > 0, "degenerate losses at seed " + std::to_string(seed));
    const std::vector<VecD> analytic = {g_s, g_st - g_s, g_sp - g_s, g_total};

    std::vector<VecD> fd(4, VecD::Zero(n));
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < n; ++i) {
      VecD hi = params, lo = params;
      hi[i] += h;
      lo[i] -= h;
      const StepLosses a = student_step_losses<double>(net, hi, in, full, nullptr);
      const StepLosses b = student_step_losses<double>(net, lo, in, full, nullptr);
      fd[0][i] = (a.l_s - b.l_s) / (2 * h);
      fd[1][i] = (a.l_t - b.l_t) / (2 * h);
      fd[2][i] = (a.l_p - b.l_p) / (2 * h);
      fd[3][i] = (a.total - b.total) / (2 * h);
    }
    for (int q = 0; q < 4; ++q)
      for (const auto& [group, gname] : groups) {
        double diff = 0, na = 0, nf = 0;
        for (const ParamInfo& p : net.layout().params()) {
          if (p.group != group) continue;
          const auto a = analytic[q].segment(p.offset, p.size());
          const auto f = fd[q].segment(p.offset, p.size());
          diff += (a - f).squaredNorm();
          na += a.squaredNorm();
          nf += f.squaredNorm();
        }
        const double scale = std::sqrt(std::max(na, nf));
        const double rel = scale < 1e-9 ? 0.0 : std::sqrt(diff) / scale;
        worst = std::max(worst, rel);
        ck.require(rel < 1e-4, std::string(names[q]) + "/" + gname + " seed " + std::to_string(seed) +
                                   " rel " + fmt(rel));
      }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ck.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  return ck.outcome(std::to_string(n) + " parameters, 5 seeds x 4 losses x 3 groups, max rel err " +
                    fmt(worst) + ", " + fmt(secs, "%.1f") + " s");
}

// ---------------------------------------------------------------------------
// 3. EMA update.

Outcome criterion_ema() {
  Checker ck;
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = rng.uniform_int(1, 64);
    ModelPair<double> pair{random_normal(rng, n), random_normal(rng, n)};
    const VecD old = pair.teacher;
    const double alpha = rng.uniform();
    ema_update(pair, alpha);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double want = alpha * old[i] + (1 - alpha) * pair.student[i];
      ck.require(pair.teacher[i] == want, "blend trial " + std::to_string(trial));
      ck.require(pair.teacher[i] >= std::min(old[i], pair.student[i]) &&
                     pair.teacher[i] <= std::max(old[i], pair.student[i]),
                 "convex hull trial " + std::to_string(trial));
    }
    ModelPair<double> copy{pair.student, old};
    ema_update(copy, 0.0);
    ck.require(copy.teacher == copy.student, "alpha=0 copies student");
    ModelPair<double> keep{pair.student, old};
    ema_update(keep, 1.0);
    ck.require(keep.teacher == old, "alpha=1 keeps teacher");
  }
  double worst = 0;
  for (double alpha : {0.5, 0.9, 0.99, 0.999}) {
    ModelPair<double> pair{random_normal(rng, 16), random_normal(rng, 16)};
    const VecD gap0 = (pair.teacher - pair.student).cwiseAbs();
    for (int t = 1; t <= 100; ++t) {
      ema_update(pair, alpha);
      const VecD gap = (pair.teacher - pair.student).cwiseAbs();
      const double err = (gap - std::pow(alpha, t) * gap0).cwiseAbs().maxCoeff();
      worst = std::max(worst, err);
      ck.require(err <= 1e-9, "geometric convergence alpha " + fmt(alpha) + " step " + std::to_string(t));
    }
  }
  bool threw = false;
  try {
    ModelPair<double> bad{VecD::Zero(2), VecD::Zero(2)};
    ema_update(bad, 1.5);
  } catch (const InvalidArgument&) {
    threw = true;
  }
  ck.require(threw, "alpha outside [0,1] rejected");
  return ck.outcome("blend, convex hull, boundaries; geometric law max err " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 4. Stop-gradient isolation of the teacher.

PreparedData prepare(const std::string& preset_name, const fs::path& dir) {
  ExperimentOptions opts;
  opts.out_dir = dir;
  opts.clock = fixed_clock;
  return prepare_data(builtin_preset(preset_name), opts);
}

// Threshold midway through the widest gap between the teacher's per-pixel
// top probabilities, so q lies strictly inside (0,1) and no pixel sits near tau.
double gap_threshold(const SegNetwork<double>& net, const VecD& teacher,
                     const std::vector<Tensor3<double>>& images, double* margin) {
  std::vector<double> tops;
  for (const auto& img : images) {
    const MatD p = softmax_columns<double>(net.forward(teacher, img).logits.data);
    for (Eigen::Index j = 0; j < p.cols(); ++j) tops.push_back(p.col(j).maxCoeff());
  }
  std::sort(tops.begin(), tops.end());
  std::size_t best = 0;
  for (std::size_t i = 1; i + 1 < tops.size(); ++i)
    if (tops[i + 1] - tops[i] > tops[best + 1] - tops[best]) best = i;
  *margin = (tops[best + 1] - tops[best]) / 2;
  return (tops[best] + tops[best + 1]) / 2;
}

Outcome criterion_stop_gradient() {
  Checker ck;
  const SegNetwork<double> net(grad_config());
  const VecD student = net.init_params(11);
  const VecD teacher = net.init_params(12);
  const StepInputs<double> in = grad_inputs(net, 13);
  double margin = 0;
  TrainConfig cfg = grad_train_config(0.1, 1);
  cfg.tau = gap_threshold(net, teacher, in.student_target_images, &margin);
  auto losses_with = [&](const VecD& t) {
    StepInputs<double> x = in;
    x.pseudo = teacher_pseudo_labels(net, t, x.student_target_images, cfg.tau);
    return student_step_losses<double>(net, student, x, cfg, nullptr);
  };
  const StepLosses base = losses_with(teacher);
  ck.require(base.q_mean > 0 && base.q_mean < 1 && base.l_t > 0, "degenerate pseudo-label quality");
  double max_delta = 0;
  for (Eigen::Index i = 0; i < teacher.size(); ++i)
    for (double d : {1e-3, -1e-3}) {
      VecD t = teacher;
      t[i] += d;
      const StepLosses l = losses_with(t);
      max_delta = std::max({max_delta, std::abs(l.l_s - base.l_s), std::abs(l.l_t - base.l_t),
                            std::abs(l.l_p - base.l_p), std::abs(l.total - base.total)});
    }
  ck.require(max_delta == 0.0, "max |dloss| " + fmt(max_delta));

  const PreparedData data = prepare("smoke", fresh_dir("stop_gradient"));
  ExperimentPreset preset = builtin_preset("smoke");
  TrainConfig tc = preset.train;
  tc.total_steps = 50;
  TrainData td;
  td.dataset = &data.dataset;
  td.source_bank = &data.source_bank;
  Trainer<float> trainer(tc, preset.network, td);
  int student_moves = 0;
  for (int s = 0; s < 50; ++s) {
    const ModelPair<float> before = trainer.models();
    trainer.step();
    ModelPair<float> expected{trainer.models().student, before.teacher};
    ema_update(expected, tc.alpha);
    ck.require(trainer.models().teacher == expected.teacher, "teacher moved outside EMA at step " + std::to_string(s + 1));
    student_moves += trainer.models().student != before.student;
  }
  ck.require(student_moves == 50, "student updated in every step");
  return ck.outcome(std::to_string(2 * teacher.size()) + " teacher perturbations, max |dloss| " + fmt(max_delta) +
                    " (tau " + fmt(cfg.tau, "%.4f") + ", top-prob margin " + fmt(margin, "%.2g") + ", q " +
                    fmt(base.q_mean, "%.3f") + ", L_T " + fmt(base.l_t, "%.4f") + "); 50-step run teacher == EMA each step");
}

// ---------------------------------------------------------------------------
// 5. Caption pipeline on grounded mock records.

Outcome criterion_captions() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  const SceneSpec spec = default_street_spec();
  const Dataset ds = build_dataset(spec, 200, 1, DomainShift{}, 5);
  std::map<std::string, LabelMap> masks;
  for (const auto& s : ds.source) masks.emplace(s.id, *s.mask);
  auto tok = BpeTokenizer::builtin();
  CaptionPipelineOptions opts;
  opts.clock = fixed_clock;
  CaptionPipeline pipe(std::make_shared<TemplateMockVlm>(spec.class_set, masks),
                       std::make_shared<GroundedMockLlm>(spec.class_set), tok, opts);
  auto records = pipe.generate_all(ds.source, spec.class_set);
  pipe.refine_all(records);
  ck.require(records.size() == 200, "record count " + std::to_string(records.size()));
  for (const CaptionRecord& r : records) {
    ck.require(r.refined_tokens <= kCaptionTokenBudget && tok->count(r.refined_caption) <= kCaptionTokenBudget,
               r.image_id + " has " + std::to_string(r.refined_tokens) + " refined tokens");
    const std::set<std::string> allowed = [&] {
      std::set<std::string> s;
      for (const std::string& c : class_names_from_mask(masks.at(r.image_id), spec.class_set)) s.insert(c);
      return s;
    }();
    for (const std::string& c : mentioned_classes(r.refined_caption, spec.class_set))
      ck.require(allowed.count(c) > 0, r.image_id + " mentions '" + c + "'");
  }
  const CaptionStats st = caption_stats(records);
  ck.require(st.mean_raw_tokens > kCaptionTokenBudget, "mean_raw " + fmt(st.mean_raw_tokens));
  ck.require(st.mean_refined_tokens <= kCaptionTokenBudget, "mean_refined " + fmt(st.mean_refined_tokens));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ck.require(secs < 30.0, "runtime " + fmt(secs) + " s");
  return ck.outcome("200 records, mean_raw " + fmt(st.mean_raw_tokens, "%.1f") + " > 77 >= mean_refined " +
                    fmt(st.mean_refined_tokens, "%.1f") + ", " + fmt(secs, "%.2f") + " s");
}

// ---------------------------------------------------------------------------
// 6. mIoU against set-based oracles.

Outcome criterion_miou() {
  Checker ck;
  ConfusionMatrix::Counts c(2, 2);
  c << 3, 1, 2, 4;
  const auto worked = iou_per_class(ConfusionMatrix::from_counts(c));
  ck.require(worked[0] && *worked[0] == 0.5, "IoU_0 of worked example");
  ck.require(worked[1] && *worked[1] == 4.0 / 7.0, "IoU_1 of worked example");
  const double m = miou(ConfusionMatrix::from_counts(c));
  ck.require(std::abs(m - 100 * (0.5 + 4.0 / 7.0) / 2) < 1e-12, "mIoU of worked example");

  Rng rng(6);
  for (int pair = 0; pair < 100; ++pair) {
    const int k = static_cast<int>(rng.uniform_int(2, 6));
    const int h = static_cast<int>(rng.uniform_int(1, 8)), w = static_cast<int>(rng.uniform_int(1, 8));
    LabelMap gt(h, w), pred(h, w);
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
      gt.labels[i] = static_cast<int>(rng.uniform_int(0, k));
      pred.labels[i] = static_cast<int>(rng.uniform_int(0, k - 1));
    }
    ConfusionMatrix cm(k);
    cm.accumulate(pred, gt, k);
    const auto iou = iou_per_class(cm);
    double sum = 0;
    int defined = 0;
    for (int cls = 0; cls < k; ++cls) {
      std::set<Eigen::Index> g, p, uni;
      for (Eigen::Index i = 0; i < gt.size(); ++i) {
        if (gt.labels[i] == k) continue;
        if (gt.labels[i] == cls) g.insert(i);
        if (pred.labels[i] == cls) p.insert(i);
      }
      std::set_union(g.begin(), g.end(), p.begin(), p.end(), std::inserter(uni, uni.end()));
      std::size_t inter = 0;
      for (Eigen::Index i : g) inter += p.count(i);
      if (uni.empty()) {
        ck.require(!iou[cls], "undefined class pair " + std::to_string(pair));
        continue;
      }
      const double want = static_cast<double>(inter) / static_cast<double>(uni.size());
      ck.require(iou[cls] && *iou[cls] == want, "IoU pair " + std::to_string(pair) + " class " + std::to_string(cls));
      sum += want;
      ++defined;
    }
    if (defined) ck.require(miou(cm) == 100 * sum / defined, "mIoU pair " + std::to_string(pair));
  }
  return ck.outcome("worked cm IoUs (0.5, 4/7), mIoU " + fmt(m, "%.4f") + "; 100 random pairs exact");
}

// ---------------------------------------------------------------------------
// 7. Directional adaptation experiment on the default preset.

Outcome criterion_directional() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  const ExperimentPreset preset = builtin_preset("default");
  ExperimentOptions opts;
  opts.out_dir = fresh_dir("default");
  opts.clock = fixed_clock;
  const ExperimentSummary summary = run_experiment(preset, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::cout << summary.table();
  const PairedComparison* cmp = nullptr;
  for (const auto& c : summary.comparisons)
    if (c.baseline == "no-lang" && c.treatment == "langda") cmp = &c;
  ck.require(cmp != nullptr, "langda vs no-lang comparison present");
  std::string deltas;
  if (cmp) {
    for (double d : cmp->deltas) deltas += (deltas.empty() ? "" : ", ") + fmt(d, "%+.2f");
    ck.require(cmp->deltas.size() == 5, "five paired seeds");
    ck.require(cmp->mean_delta > 0, "mean mIoU delta " + fmt(cmp->mean_delta, "%+.3f"));
  }
  std::string lp;
  for (const auto& v : summary.variants) {
    ck.require(v.runs.size() == 5, v.variant.name + " completed " + std::to_string(v.runs.size()) + " seeds");
    if (v.variant.name != "langda") continue;
    for (const SeedResult& r : v.runs) {
      lp += (lp.empty() ? "" : ", ") + fmt(r.lp_first, "%.4f") + "->" + fmt(r.lp_last, "%.4f");
      ck.require(r.lp_last < r.lp_first, "L_p did not fall in seed " + std::to_string(r.seed));
    }
  }
  ck.require(fs::exists(opts.out_dir / "summary.json") && fs::exists(opts.out_dir / "summary.txt"),
             "comparison report written");
  ck.require(secs < 1200.0, "runtime " + fmt(secs) + " s");
  return ck.outcome("mean delta " + (cmp ? fmt(cmp->mean_delta, "%+.3f") : std::string("n/a")) + " (" + deltas +
                    "); L_p first->last 10%: " + lp + "; " + fmt(secs, "%.0f") + " s");
}

// ---------------------------------------------------------------------------
// 8. Determinism of `experiment run`.

std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name == "metrics.csv" || e.path().extension() == ".ldck")
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

Outcome criterion_determinism() {
  Checker ck;
  const fs::path root = fresh_dir("determinism");
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string("\"") + LANGDA_CLI + "\" experiment run smoke --quiet --out \"" +
                            (root / run).string() + "\"";
    ck.require(std::system(cmd.c_str()) == 0, std::string("run ") + run + " exited non-zero");
  }
  const auto a = artifacts(root / "a"), b = artifacts(root / "b");
  std::size_t csv = 0, ckpt = 0;
  for (const auto& [k, v] : a) (k.ends_with(".csv") ? csv : ckpt) += 1;
  ck.require(csv > 0 && ckpt > 0, "artifacts produced");
  ck.require(a.size() == b.size(), "same artifact set");
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    ck.require(it != b.end() && it->second == bytes, name + " differs");
  }
  return ck.outcome(std::to_string(csv) + " metric CSVs and " + std::to_string(ckpt) +
                    " checkpoints byte-identical across two runs");
}

// ---------------------------------------------------------------------------
// 9. File formats.

template <typename E, typename F>
bool throws_as(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome criterion_formats() {
  Checker ck;
  const fs::path dir = fresh_dir("formats");
  const PreparedData data = prepare("smoke", dir / "data");

  caption_bank_store(dir / "bank.jsonl", data.source_captions);
  ck.require(caption_bank_load(dir / "bank.jsonl") == data.source_captions, "caption bank round trip");
  std::string text = slurp(dir / "bank.jsonl");
  text.insert(text.find('\n') + 3, "{{");
  spit(dir / "bad.jsonl", text);
  std::size_t bad_line = 0;
  try {
    caption_bank_load(dir / "bad.jsonl");
  } catch (const FormatError& e) {
    bad_line = e.line();
  }
  ck.require(bad_line == 2, "corrupt caption line reported as " + std::to_string(bad_line));

  const EmbeddingBank& bank = data.source_bank;
  bank_store(dir / "bank.ldeb", bank);
  std::uintmax_t law = kBankHeaderBytes;
  for (const auto& [id, v] : bank.entries()) law += 2 + id.size() + 4 * static_cast<std::uintmax_t>(bank.dimension());
  ck.require(fs::file_size(dir / "bank.ldeb") == law && bank_file_size(bank) == law, "embedding size law");
  const EmbeddingBank back = bank_load(dir / "bank.ldeb");
  bool same = back.size() == bank.size() && back.dimension() == bank.dimension() &&
              back.backend_id() == bank.backend_id();
  for (const auto& [id, v] : bank.entries()) {
    const EmbeddingVector* w = back.find(id);
    same = same && w && w->values == v.values;
  }
  ck.require(same, "embedding bank round trip");
  const std::string ldeb = slurp(dir / "bank.ldeb");
  for (const auto& [name, bytes] : std::vector<std::pair<std::string, std::string>>{
           {"truncated", ldeb.substr(0, ldeb.size() - 3)},
           {"trailing", ldeb + "x"},
           {"magic", "XDEB" + ldeb.substr(4)},
           {"tiny", ldeb.substr(0, 10)}}) {
    spit(dir / "c.ldeb", bytes);
    ck.require(throws_as<FormatError>([&] { bank_load(dir / "c.ldeb"); }), "embedding corruption '" + name + "'");
  }

  const ExperimentPreset preset = builtin_preset("smoke");
  const SegNetwork<float> net(preset.network);
  ModelPair<float> pair{net.init_params(1), net.init_params(2)};
  save_checkpoint((dir / "a.ldck").string(), make_checkpoint(net, pair, {{"step", 3}}));
  const Checkpoint c = load_checkpoint((dir / "a.ldck").string());
  ck.require(c.student == pair.student && c.teacher == pair.teacher && c.config == preset.network &&
                 c.metadata.at("step") == 3,
             "checkpoint round trip");
  save_checkpoint((dir / "b.ldck").string(), c);
  const std::string ldck = slurp(dir / "a.ldck");
  ck.require(slurp(dir / "b.ldck") == ldck, "checkpoint re-save byte-identical");
  for (const auto& [name, bytes] : std::vector<std::pair<std::string, std::string>>{
           {"truncated", ldck.substr(0, ldck.size() - 1)},
           {"trailing", ldck + "x"},
           {"magic", "Z" + ldck.substr(1)},
           {"empty", ""}}) {
    spit(dir / "c.ldck", bytes);
    ck.require(throws_as<FormatError>([&] { load_checkpoint((dir / "c.ldck").string()); }),
               "checkpoint corruption '" + name + "'");
  }
  return ck.outcome("caption JSONL, embedding bank (" + std::to_string(law) + " bytes = size law), checkpoint; " +
                    std::to_string(ck.checks()) + " checks");
}

}  // namespace
}  // namespace langda

int main(int argc, char** argv) {
  using namespace langda;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss formula oracles", criterion_loss_oracles},
      {"gradient suite", criterion_gradients},
      {"EMA suite", criterion_ema},
      {"stop-gradient isolation", criterion_stop_gradient},
      {"caption pipeline", criterion_captions},
      {"mIoU oracle equivalence", criterion_miou},
      {"directional adaptation experiment", criterion_directional},
      {"determinism", criterion_determinism},
      {"format round trips", criterion_formats},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      selected.push_back(std::atoi(a.c_str()));
    }
  }
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cout << "FAIL criterion " << id << ": no such criterion\n";
      ++failed;
      continue;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail
              << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
